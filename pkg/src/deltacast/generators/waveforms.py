"""Procedural waveform generators: sawtooth, step, anomaly, spikes and sine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..timeseries import Frequency, TimeSeries
from ._common import make_series

# ---------------------------------------------------------------------------
# sawtooth


@dataclass(frozen=True)
class SawtoothParams:
    amplitude: float = 1.0
    period: float = 32.0
    phase: float = 0.0
    upward: bool = True
    trend_slope: float = 0.0
    season_amplitude: float = 0.0
    season_period: float = 50.0


def render_sawtooth(p: SawtoothParams, length: int) -> np.ndarray:
    t = np.arange(length, dtype=float)
    ramp = np.mod(t / p.period + p.phase, 1.0)
    y = p.amplitude * (ramp if p.upward else 1.0 - ramp)
    return y + p.trend_slope * t + p.season_amplitude * np.sin(2 * np.pi * t / p.season_period)


def gen_sawtooth(rng: np.random.Generator, length: int, freq: Frequency) -> TimeSeries:
    if length < 2:
        raise ValueError("sawtooth needs length >= 2")
    amp = float(rng.uniform(0.5, 5.0))
    p = SawtoothParams(
        amplitude=amp,
        period=float(rng.uniform(max(2.0, length / 20), max(2.0, length / 2))),
        phase=float(rng.uniform(0, 1)),
        upward=bool(rng.random() < 0.5),
        trend_slope=float(rng.uniform(-0.1, 0.1) * amp / length),
        season_amplitude=float(rng.uniform(0.0, 0.05) * amp),
        season_period=float(rng.uniform(4, max(5.0, length / 4))),
    )
    return make_series(render_sawtooth(p, length), rng, freq, "sawtooth")


# ---------------------------------------------------------------------------
# step function

STEP_PATTERNS = ("stable", "gradual_trend", "spike", "oscillation", "random_walk")


@dataclass(frozen=True)
class StepSegment:
    pattern: str
    length: int
    level: float
    param: float = 0.0  # trend delta, spike height, oscillation amplitude or walk std


@dataclass(frozen=True)
class StepParams:
    segments: tuple[StepSegment, ...]
    smoothing_sigma: float = 0.0
    noise_std: float = 0.0
    season_amplitude: float = 0.0
    season_period: float = 24.0
    trend_slope: float = 0.0
    anomaly_positions: tuple[int, ...] = ()
    anomaly_height: float = 0.0


def _segment(seg: StepSegment, rng: np.random.Generator) -> np.ndarray:
    n = seg.length
    base = np.full(n, seg.level)
    if seg.pattern == "stable":
        return base
    if seg.pattern == "gradual_trend":
        return base + seg.param * np.linspace(0.0, 1.0, n)
    if seg.pattern == "spike":
        out = base.copy()
        out[n // 2] += seg.param
        return out
    if seg.pattern == "oscillation":
        return base + seg.param * np.sin(2 * np.pi * np.arange(n) / max(n / 3.0, 2.0))
    if seg.pattern == "random_walk":
        return base + np.cumsum(rng.normal(0.0, seg.param, size=n))
    raise ValueError(f"unknown step pattern {seg.pattern!r}")


def render_step(p: StepParams, rng: np.random.Generator) -> np.ndarray:
    y = np.concatenate([_segment(s, rng) for s in p.segments])
    if p.smoothing_sigma > 0:
        y = gaussian_filter1d(y, p.smoothing_sigma, mode="nearest")
    t = np.arange(y.size, dtype=float)
    y = y + p.trend_slope * t + p.season_amplitude * np.sin(2 * np.pi * t / p.season_period)
    if p.noise_std > 0:
        y = y + rng.normal(0.0, p.noise_std, size=y.size)
    if p.anomaly_positions:
        y = y.copy()
        y[list(p.anomaly_positions)] += p.anomaly_height
    return y


def split_lengths(rng: np.random.Generator, total: int, k: int, min_len: int = 2) -> list[int]:
    """Random composition of ``total`` into ``k`` parts each >= ``min_len``."""
    k = max(1, min(k, total // min_len))
    free = total - (min_len - 1) * k
    cuts = np.sort(rng.choice(np.arange(1, free), size=k - 1, replace=False)) if k > 1 else np.array([], int)
    parts = np.diff(np.concatenate([[0], cuts, [free]])) + (min_len - 1)
    return [int(x) for x in parts]


def sample_step_params(rng: np.random.Generator, length: int, pattern_weights=None) -> StepParams:
    weights = np.array(pattern_weights or [0.4, 0.15, 0.15, 0.15, 0.15], float)
    n_changes = int(rng.integers(1, max(2, min(10, length // 16)) + 1))
    lengths = split_lengths(rng, length, n_changes + 1, min_len=4)
    level = float(rng.normal())
    segments = []
    for i, n in enumerate(lengths):
        if i:
            level += float(rng.choice([-1, 1]) * rng.uniform(0.5, 3.0))
        pattern = STEP_PATTERNS[int(rng.choice(len(STEP_PATTERNS), p=weights / weights.sum()))]
        param = {"stable": 0.0, "gradual_trend": rng.normal(0, 1.0), "spike": rng.normal(0, 3.0),
                 "oscillation": rng.uniform(0.1, 0.5), "random_walk": rng.uniform(0.01, 0.1)}[pattern]
        segments.append(StepSegment(pattern, n, level, float(param)))
    n_anom = int(rng.integers(0, 3)) if rng.random() < 0.3 else 0
    return StepParams(
        segments=tuple(segments),
        smoothing_sigma=float(rng.uniform(0.5, 3.0)) if rng.random() < 0.5 else 0.0,
        noise_std=float(rng.uniform(0.0, 0.1)) if rng.random() < 0.7 else 0.0,
        season_amplitude=float(rng.uniform(0.0, 0.3)) if rng.random() < 0.3 else 0.0,
        season_period=float(rng.uniform(4, max(5.0, length / 4))),
        trend_slope=float(rng.normal(0, 1.0) / length) if rng.random() < 0.3 else 0.0,
        anomaly_positions=tuple(int(x) for x in rng.choice(length, size=n_anom, replace=False)),
        anomaly_height=float(rng.choice([-1, 1]) * rng.uniform(2.0, 5.0)),
    )


def gen_step(rng: np.random.Generator, length: int, freq: Frequency) -> TimeSeries:
    if length < 8:
        raise ValueError("step generator needs length >= 8")
    p = sample_step_params(rng, length)
    return make_series(render_step(p, rng), rng, freq, "step", n_segments=len(p.segments))


# ---------------------------------------------------------------------------
# anomaly

TIMING_PATTERNS = ("single", "clustered", "mixed")
MAGNITUDE_REGIMES = ("constant", "trending", "cyclical", "correlated_random")


@dataclass(frozen=True)
class AnomalyParams:
    baseline: float = 0.0
    sign: float = 1.0
    n_spikes: int = 5
    period: float = 20.0
    period_std: float = 0.0
    jitter: int = 0
    timing: str = "single"
    cluster_size: int = 3
    magnitude: float = 3.0
    regime: str = "constant"
    regime_param: float = 0.0


def anomaly_positions(p: AnomalyParams, length: int, rng: np.random.Generator) -> np.ndarray:
    pos, t = [], float(rng.uniform(0, p.period)) if p.period_std > 0 else p.period / 2
    k = 0
    while t < length and k < p.n_spikes:
        clustered = p.timing == "clustered" or (p.timing == "mixed" and rng.random() < 0.5)
        group = p.cluster_size if clustered else 1
        for j in range(group):
            c = int(round(t)) + 2 * j
            if p.jitter:
                c += int(rng.integers(-p.jitter, p.jitter + 1))
            if 0 <= c < length:
                pos.append(c)
        k += 1
        t += max(1.0, p.period + (rng.normal(0, p.period_std) if p.period_std > 0 else 0.0))
    return np.unique(np.asarray(pos, dtype=int))


def anomaly_magnitudes(p: AnomalyParams, n: int, rng: np.random.Generator) -> np.ndarray:
    i = np.arange(n, dtype=float)
    if p.regime == "constant":
        m = np.full(n, p.magnitude)
    elif p.regime == "trending":
        m = p.magnitude * (1.0 + p.regime_param * i / max(n, 1))
    elif p.regime == "cyclical":
        m = p.magnitude * (1.0 + 0.5 * np.sin(2 * np.pi * i / max(p.regime_param, 2.0)))
    else:
        z = np.zeros(n)
        for j in range(n):
            z[j] = (0.8 * z[j - 1] if j else 0.0) + rng.normal(0, 0.6)
        m = p.magnitude * np.exp(0.5 * z)
    return np.abs(m)


def render_anomaly(p: AnomalyParams, length: int, rng: np.random.Generator) -> np.ndarray:
    y = np.full(length, p.baseline, dtype=float)
    if p.n_spikes <= 0:
        return y
    pos = anomaly_positions(p, length, rng)
    y[pos] += p.sign * anomaly_magnitudes(p, pos.size, rng)
    return y


def gen_anomaly(rng: np.random.Generator, length: int, freq: Frequency) -> TimeSeries:
    if length < 8:
        raise ValueError("anomaly generator needs length >= 8")
    period = float(rng.uniform(max(4.0, length / 40), max(5.0, length / 4)))
    p = AnomalyParams(
        baseline=float(rng.normal()),
        sign=1.0 if rng.random() < 0.5 else -1.0,
        n_spikes=int(rng.integers(1, max(2, int(length / period)) + 1)),
        period=period,
        period_std=float(rng.uniform(0, 0.2) * period),
        jitter=int(rng.integers(0, 3)),
        timing=TIMING_PATTERNS[int(rng.integers(3))],
        cluster_size=int(rng.integers(2, 6)),
        magnitude=float(rng.uniform(1.0, 10.0)),
        regime=MAGNITUDE_REGIMES[int(rng.integers(4))],
        regime_param=float(rng.uniform(-0.8, 2.0)),
    )
    y = render_anomaly(p, length, rng)
    return make_series(y, rng, freq, "anomaly", timing=p.timing, regime=p.regime, sign=p.sign)


# ---------------------------------------------------------------------------
# spikes

SPIKE_SHAPES = ("v", "inverted_v", "plateau_v", "plateau_inverted_v")


@dataclass(frozen=True)
class SpikeParams:
    baseline: float = 0.0
    shape: str = "inverted_v"
    amplitude: float = 1.0
    half_width: int = 3
    plateau: int = 0
    n_spikes: int = 4
    mode: str = "spread"  # spread | burst
    edge_margin: int = 8
    burst_gap: int = 10
    noise: str = "none"  # none | brown | pink
    noise_std: float = 0.0


def spike_profile(p: SpikeParams) -> np.ndarray:
    """One spike: linear flanks of ``half_width`` steps around an extreme of width ``plateau`` (>=1)."""
    top = max(1, p.plateau) if p.shape.startswith("plateau") else 1
    ramp = (np.arange(1, p.half_width + 1) / (p.half_width + 1)) * p.amplitude
    prof = np.concatenate([ramp, np.full(top, p.amplitude), ramp[::-1]])
    return -prof if p.shape in ("v", "plateau_v") else prof


def spike_centers(p: SpikeParams, length: int, rng: np.random.Generator) -> np.ndarray:
    if p.mode == "spread":
        eff = length - 2 * p.edge_margin
        return np.round(p.edge_margin + (np.arange(p.n_spikes) + 0.5) * eff / p.n_spikes).astype(int)
    span = (p.n_spikes - 1) * p.burst_gap
    lo = p.edge_margin
    hi = max(lo, length - p.edge_margin - span - 1)
    first = int(rng.integers(lo, hi + 1))
    return first + np.arange(p.n_spikes) * p.burst_gap


def colored_noise(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.normal(size=n)
    if kind == "brown":
        x = np.cumsum(white)
        x = x - np.linspace(x[0], x[-1], n)
    else:
        spec = np.fft.rfft(white)
        f = np.arange(spec.size, dtype=float)
        f[0] = 1.0
        x = np.fft.irfft(spec / np.sqrt(f), n)
    sd = x.std()
    return x / sd if sd > 0 else x


def render_spikes(p: SpikeParams, length: int, rng: np.random.Generator) -> np.ndarray:
    y = np.full(length, p.baseline, dtype=float)
    prof = spike_profile(p)
    half = prof.size // 2
    for c in spike_centers(p, length, rng):
        lo = c - half
        for i, v in enumerate(prof):
            if 0 <= lo + i < length:
                y[lo + i] = p.baseline + v
    if p.noise != "none" and p.noise_std > 0:
        y = y + p.noise_std * colored_noise(p.noise, length, rng)
    return y


def gen_spikes(rng: np.random.Generator, length: int, freq: Frequency, noise_prob: float = 0.5) -> TimeSeries:
    if length < 8:
        raise ValueError("spike generator needs length >= 8")
    half = int(rng.integers(1, max(2, length // 64) + 1))
    n_spikes = int(rng.integers(1, max(2, length // (4 * (2 * half + 4))) + 1))
    noisy = rng.random() < noise_prob
    p = SpikeParams(
        baseline=0.0,
        shape=SPIKE_SHAPES[int(rng.integers(4))],
        amplitude=float(rng.uniform(1.0, 5.0)),
        half_width=half,
        plateau=int(rng.integers(2, 2 + half + 1)),
        n_spikes=n_spikes,
        mode="spread" if rng.random() < 0.5 else "burst",
        edge_margin=int(max(2 * half + 2, length // 20)),
        burst_gap=int(2 * half + 2 + rng.integers(0, 2 * half + 3)),
        noise=("brown" if rng.random() < 0.5 else "pink") if noisy else "none",
        noise_std=float(rng.uniform(0.02, 0.2)) if noisy else 0.0,
    )
    y = render_spikes(p, length, rng)
    return make_series(y, rng, freq, "spikes", shape=p.shape, mode=p.mode)


# ---------------------------------------------------------------------------
# sine


@dataclass(frozen=True)
class SineComponent:
    amplitude: float = 1.0
    period: float = 24.0
    phase: float = 0.0
    am_depth: float = 0.0
    am_period: float = 500.0
    am_phase: float = 0.0
    fm_depth: float = 0.0
    fm_period: float = 500.0
    fm_phase: float = 0.0


@dataclass(frozen=True)
class SineParams:
    components: tuple[SineComponent, ...] = field(default_factory=lambda: (SineComponent(),))
    slope: float = 0.0
    intercept: float = 0.0
    noise_std: float = 0.0


def instantaneous_phase(c: SineComponent, t: np.ndarray) -> np.ndarray:
    """Integral of ``2 pi f(s)`` with ``f(s) = (1 + m sin(2 pi s / P_fm + psi)) / P``."""
    base = 2 * np.pi * t / c.period
    if c.fm_depth == 0.0:
        return c.phase + base
    w = 2 * np.pi / c.fm_period
    integral = -(np.cos(w * t + c.fm_phase) - np.cos(c.fm_phase)) / w
    return c.phase + base + 2 * np.pi * c.fm_depth * integral / c.period


def render_sine(p: SineParams, length: int, rng: np.random.Generator | None = None) -> np.ndarray:
    t = np.arange(length, dtype=float)
    y = np.zeros(length)
    for c in p.components:
        amp = c.amplitude * (1.0 + c.am_depth * np.sin(2 * np.pi * t / c.am_period + c.am_phase))
        y += amp * np.sin(instantaneous_phase(c, t))
    y += p.slope * t + p.intercept
    if p.noise_std > 0:
        y += rng.normal(0.0, p.noise_std, size=length)
    return y


def sample_sine_params(rng: np.random.Generator, length: int, modulation: bool = True,
                       noise: bool = True, trend: bool = True, max_components: int = 3,
                       period_range: tuple[float, float] | None = None) -> SineParams:
    lo, hi = period_range or (4.0, max(5.0, length / 3))
    comps = []
    for _ in range(int(rng.integers(1, max_components + 1))):
        comps.append(SineComponent(
            amplitude=float(rng.uniform(0.3, 2.0)),
            period=float(rng.uniform(lo, hi)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            am_depth=float(rng.uniform(0.0, 0.3)) if modulation else 0.0,
            am_period=float(rng.uniform(length / 2, 3 * length)),
            am_phase=float(rng.uniform(0, 2 * np.pi)),
            fm_depth=float(rng.uniform(0.0, 0.2)) if modulation else 0.0,
            fm_period=float(rng.uniform(length / 2, 3 * length)),
            fm_phase=float(rng.uniform(0, 2 * np.pi)),
        ))
    return SineParams(
        components=tuple(comps),
        slope=float(rng.normal(0, 1.0) / length) if trend else 0.0,
        intercept=float(rng.normal(0, 1.0)) if trend else 0.0,
        noise_std=float(rng.uniform(0.0, 0.1)) if noise else 0.0,
    )


def gen_sine(rng: np.random.Generator, length: int, freq: Frequency, **kwargs) -> TimeSeries:
    if length < 4:
        raise ValueError("sine generator needs length >= 4")
    p = sample_sine_params(rng, length, **kwargs)
    return make_series(render_sine(p, length, rng), rng, freq, "sine_wave", n_components=len(p.components))
