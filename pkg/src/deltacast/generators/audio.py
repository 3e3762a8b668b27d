"""Audio-style synthesis rendered on an oversampled grid and decimated to the series length.

Times inside the renderers are measured in output steps; the internal grid has
``OVERSAMPLE`` samples per step and is reduced by block averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..timeseries import Frequency, TimeSeries
from ._common import make_series

OVERSAMPLE = 8
AUDIO_KINDS = ("stochastic_rhythm", "financial_volatility", "network_topology", "multi_scale_fractal")


def fine_grid(length: int) -> np.ndarray:
    return np.arange(length * OVERSAMPLE, dtype=float) / OVERSAMPLE


def decimate(x: np.ndarray, length: int) -> np.ndarray:
    return x.reshape(length, OVERSAMPLE).mean(axis=1)


def brown_noise(n: int, rng: np.random.Generator, step_std: float = 1.0) -> np.ndarray:
    return np.cumsum(rng.normal(0.0, step_std, size=n))


def bandpass_coefficients(center: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """RBJ cookbook band-pass (0 dB peak); ``center`` in cycles per sample, below 0.5."""
    w0 = 2 * np.pi * center
    alpha = np.sin(w0) / (2 * q)
    b = np.array([alpha, 0.0, -alpha])
    a = np.array([1 + alpha, -2 * np.cos(w0), 1 - alpha])
    return b / a[0], a / a[0]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RhythmLayer:
    interval: float  # output steps between onsets
    offset: float = 0.0
    decay: float = 1.0
    carrier: float = 0.0  # cycles per output step
    gain: float = 1.0


@dataclass(frozen=True)
class RhythmParams:
    layers: tuple[RhythmLayer, ...]
    noise_std: float = 0.0


def render_rhythm(p: RhythmParams, length: int, rng: np.random.Generator | None = None) -> np.ndarray:
    t = fine_grid(length)
    y = np.zeros_like(t)
    for layer in p.layers:
        # time since the most recent onset; carrier phase restarts at every hit
        since = np.mod(t - layer.offset, layer.interval)
        active = t >= layer.offset
        env = np.exp(-since / layer.decay) * np.cos(2 * np.pi * layer.carrier * since)
        y += layer.gain * np.where(active, env, 0.0)
    if p.noise_std > 0:
        y += rng.normal(0.0, p.noise_std, size=y.size)
    return decimate(y, length)


def sample_rhythm(rng: np.random.Generator, length: int) -> RhythmParams:
    tempo = float(rng.uniform(4.0, max(5.0, length / 8)))
    layers = [RhythmLayer(tempo, 0.0, float(rng.uniform(0.2, 0.5) * tempo), float(rng.uniform(0.0, 0.4)), 1.0)]
    for _ in range(int(rng.integers(2, 5))):
        sub = int(rng.choice([2, 3, 4]))
        interval = tempo / sub
        layers.append(RhythmLayer(
            interval=interval,
            offset=float(rng.integers(0, sub) * interval),
            decay=float(rng.uniform(0.1, 0.5) * interval),
            carrier=float(rng.uniform(0.0, 0.45)),
            gain=float(rng.uniform(0.2, 0.8)),
        ))
    return RhythmParams(tuple(layers), noise_std=float(rng.uniform(0.0, 0.05)))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilityParams:
    lfo_amplitude: float = 0.0
    lfo_period: float = 100.0
    noise_std: float = 1.0
    vol_depth: float = 0.0  # 0 switches off volatility modulation
    vol_period: float = 50.0
    jump_rate: float = 0.0  # expected jumps per output step
    jump_scale: float = 3.0
    jump_decay: float = 5.0


def render_volatility(p: VolatilityParams, length: int, rng: np.random.Generator) -> np.ndarray:
    t = fine_grid(length)
    n = t.size
    vol = np.exp(p.vol_depth * np.sin(2 * np.pi * t / p.vol_period))
    if p.vol_depth:
        # a slow random component makes the clustering irregular
        vol *= np.exp(p.vol_depth * 0.5 * np.tanh(brown_noise(n, rng, 1.0 / np.sqrt(n))))
    steps = rng.normal(0.0, p.noise_std / np.sqrt(OVERSAMPLE), size=n) * vol
    y = np.cumsum(steps) + p.lfo_amplitude * np.sin(2 * np.pi * t / p.lfo_period)
    if p.jump_rate > 0:
        k = rng.poisson(p.jump_rate * length)
        for onset in rng.uniform(0, length, size=k):
            sign = 1.0 if rng.random() < 0.5 else -1.0
            mag = rng.exponential(p.jump_scale)
            after = t >= onset
            y[after] += sign * mag * np.exp(-(t[after] - onset) / p.jump_decay)
    return decimate(y, length)


def sample_volatility(rng: np.random.Generator, length: int) -> VolatilityParams:
    return VolatilityParams(
        lfo_amplitude=float(rng.uniform(0.0, 3.0) * np.sqrt(length) / 4),
        lfo_period=float(rng.uniform(length / 4, 2 * length)),
        noise_std=1.0,
        vol_depth=float(rng.uniform(0.3, 1.2)),
        vol_period=float(rng.uniform(length / 10, length / 2)),
        jump_rate=float(rng.uniform(0.0, 10.0) / length),
        jump_scale=float(rng.uniform(2.0, 6.0)),
        jump_decay=float(rng.uniform(2.0, 20.0)),
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkParams:
    lfo_amplitude: float = 1.0
    lfo_period: float = 200.0
    burst_rate: float = 0.02
    burst_length: float = 5.0
    burst_std: float = 0.5
    dip_period: float = 50.0
    dip_depth: float = 1.0
    dip_width: float = 3.0
    overhead_amplitude: float = 0.1
    overhead_freq: float = 0.35
    spike_rate: float = 0.005
    spike_height: float = 4.0


def render_network(p: NetworkParams, length: int, rng: np.random.Generator) -> np.ndarray:
    t = fine_grid(length)
    n = t.size
    lfo = p.lfo_amplitude * np.sin(2 * np.pi * t / p.lfo_period)
    gate = np.zeros(n)
    for start in rng.uniform(0, length, size=rng.poisson(p.burst_rate * length)):
        gate[(t >= start) & (t < start + p.burst_length)] = 1.0
    bursts = gate * rng.normal(0.0, p.burst_std, size=n)
    phase = np.mod(t, p.dip_period)
    dips = -p.dip_depth * np.exp(-0.5 * ((phase - p.dip_period / 2) / p.dip_width) ** 2)
    overhead = p.overhead_amplitude * np.sin(2 * np.pi * p.overhead_freq * t)
    spikes = np.zeros(n)
    idx = rng.integers(0, n, size=rng.poisson(p.spike_rate * length))
    spikes[idx] = p.spike_height * OVERSAMPLE  # survives block averaging at full height
    return decimate(lfo + bursts + dips + overhead + spikes, length)


def sample_network(rng: np.random.Generator, length: int) -> NetworkParams:
    dip_period = float(rng.uniform(8.0, max(9.0, length / 4)))
    return NetworkParams(
        lfo_amplitude=float(rng.uniform(0.2, 2.0)),
        lfo_period=float(rng.uniform(length / 4, 2 * length)),
        burst_rate=float(rng.uniform(0.005, 0.05)),
        burst_length=float(rng.uniform(2.0, 20.0)),
        burst_std=float(rng.uniform(0.1, 1.0)),
        dip_period=dip_period,
        dip_depth=float(rng.uniform(0.2, 1.5)),
        dip_width=float(rng.uniform(0.02, 0.15) * dip_period),
        overhead_amplitude=float(rng.uniform(0.0, 0.3)),
        overhead_freq=float(rng.uniform(0.2, 0.45)),
        spike_rate=float(rng.uniform(0.0, 0.01)),
        spike_height=float(rng.uniform(2.0, 6.0)),
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FractalParams:
    centers: tuple[float, ...] = (0.05,)  # cycles per output step
    q: float = 4.0
    attenuation: float = 0.6  # gain ratio between consecutive bands
    order: int = 2  # biquad passes per band


def render_fractal(p: FractalParams, length: int, rng: np.random.Generator) -> np.ndarray:
    noise = brown_noise(length * OVERSAMPLE, rng)
    y = np.zeros_like(noise)
    for i, c in enumerate(p.centers):
        b, a = bandpass_coefficients(c / OVERSAMPLE, p.q)
        band = noise
        for _ in range(p.order):
            band = lfilter(b, a, band)
        y += p.attenuation**i * band
    return decimate(y, length)


def sample_fractal(rng: np.random.Generator, length: int) -> FractalParams:
    k = int(rng.integers(3, 7))
    lo = max(2.0 / length, 1e-3)
    hi = float(rng.uniform(0.15, 0.35))
    centers = np.geomspace(lo * rng.uniform(1.0, 3.0), hi, k)
    return FractalParams(tuple(float(c) for c in centers), q=float(rng.uniform(1.5, 6.0)),
                         attenuation=float(rng.uniform(0.3, 0.8)))


# ---------------------------------------------------------------------------

_RENDER = {
    "stochastic_rhythm": (sample_rhythm, render_rhythm),
    "financial_volatility": (sample_volatility, render_volatility),
    "network_topology": (sample_network, render_network),
    "multi_scale_fractal": (sample_fractal, render_fractal),
}


def render_audio(kind: str, params, length: int, rng: np.random.Generator) -> np.ndarray:
    return _RENDER[kind][1](params, length, rng)


def gen_audio(kind: str, rng: np.random.Generator, length: int, freq: Frequency) -> TimeSeries:
    if kind not in _RENDER:
        raise ValueError(f"unknown audio kind {kind!r}; expected one of {AUDIO_KINDS}")
    if length < 32:
        raise ValueError("audio generators need length >= 32")
    sample, render = _RENDER[kind]
    params = sample(rng, length)
    return make_series(render(params, length, rng), rng, freq, f"audio_{kind}")
