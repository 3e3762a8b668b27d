"""Regime-switching, time-inhomogeneous Ornstein-Uhlenbeck generator.

    dy = theta(t, r) (mu(t, r) - y) dt + sigma(t, r) dW

with a two-state Markov regime ``r`` and optional fractional Brownian noise,
discretised by Euler-Maruyama on the step grid ``t_k = k * dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .generators._common import make_series
from .timeseries import Frequency, TimeSeries

TREND_KINDS = ("none", "linear", "polynomial", "sinusoidal", "logistic", "piecewise_linear")


@dataclass(frozen=True)
class RegimeParams:
    theta: tuple[float, float] = (1.0, 1.0)
    mu: tuple[float, float] = (0.0, 0.0)
    sigma: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if min(self.theta) < 0 or min(self.sigma) < 0:
            raise ValueError("theta and sigma must be nonnegative in both regimes")


@dataclass(frozen=True)
class TrendSpec:
    """Smooth function of raw time ``t``.

    ``coefs`` by kind: linear ``(slope[, intercept])``; polynomial ``(c0, c1, ..)``
    meaning ``sum c_i t^i`` (degree <= 3); sinusoidal ``(amp, period, phase)``;
    logistic ``(height, rate, midpoint)``; piecewise_linear ``(t0, v0, t1, v1, ..)``.
    """

    kind: str = "none"
    coefs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in TREND_KINDS:
            raise ValueError(f"unknown trend kind {self.kind!r}")
        if self.kind == "polynomial" and len(self.coefs) > 4:
            raise ValueError("polynomial trends have degree <= 3")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        c = self.coefs
        if self.kind == "none":
            return np.zeros_like(t)
        if self.kind == "linear":
            return c[0] * t + (c[1] if len(c) > 1 else 0.0)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(t, c)
        if self.kind == "sinusoidal":
            return c[0] * np.sin(2 * np.pi * t / c[1] + c[2])
        if self.kind == "logistic":
            return c[0] / (1.0 + np.exp(-c[1] * (t - c[2])))
        return np.interp(t, c[0::2], c[1::2])


@dataclass(frozen=True)
class SeasonalSpec:
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    amplitude_drift: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("seasonal period must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return (self.amplitude + self.amplitude_drift * t) * np.sin(2 * np.pi * t / self.period + self.phase)


@dataclass(frozen=True)
class OUConfig:
    regime: RegimeParams = field(default_factory=RegimeParams)
    theta_trend: TrendSpec = field(default_factory=TrendSpec)
    mu_trend: TrendSpec = field(default_factory=TrendSpec)
    sigma_trend: TrendSpec = field(default_factory=TrendSpec)
    mu_seasons: tuple[SeasonalSpec, ...] = ()
    sigma_seasons: tuple[SeasonalSpec, ...] = ()
    p00: float = 0.95
    p11: float = 0.95
    use_fbm: bool = False
    hurst: float = 0.5
    dt: float = 0.01
    length: int = 256
    scale: float = 1.0
    shift: float = 0.0
    noise_sigma: float = 0.0
    burn_in: float = 0.1
    initial_value: float | None = None  # overrides the N(mu, sigma^2) initial draw
    max_fbm_length: int = 2**16

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.length < 1:
            raise ValueError("length must be positive")
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("Hurst exponent must lie in (0, 1)")
        if not (0.0 <= self.p00 <= 1.0 and 0.0 <= self.p11 <= 1.0):
            raise ValueError("regime stay probabilities must lie in [0, 1]")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in is a fraction in [0, 1)")

    @property
    def burn_steps(self) -> int:
        return int(round(self.burn_in * self.length))

    @property
    def total_steps(self) -> int:
        return self.length + self.burn_steps


# ---------------------------------------------------------------------------


def simulate_regime_chain(rng: np.random.Generator, length: int, p00: float, p11: float) -> np.ndarray:
    """Two-state Markov chain with uniform ``r_0``, built from geometric holding times."""
    out = np.empty(length, dtype=np.int8)
    r = int(rng.integers(2))
    pos = 0
    while pos < length:
        stay = p00 if r == 0 else p11
        if stay >= 1.0:
            run = length - pos
        else:
            run = int(rng.geometric(1.0 - stay))  # steps spent before switching
        out[pos:pos + run] = r
        pos += run
        r = 1 - r
    return out


def fgn_autocovariance(n: int, hurst: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    h2 = 2 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


def fbm_increments(rng: np.random.Generator, length: int, hurst: float, dt: float,
                   max_length: int = 2**16) -> np.ndarray:
    """Fractional Gaussian noise on the ``dt`` grid by circulant embedding (Davies-Harte)."""
    if not 0.0 < hurst < 1.0:
        raise ValueError("Hurst exponent must lie in (0, 1)")
    if length > max_length:
        raise ValueError(f"fBm length {length} exceeds the configured bound {max_length}")
    if length < 1:
        return np.zeros(0)
    gamma = fgn_autocovariance(length, hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    m = row.size
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * lam.max():
        raise np.linalg.LinAlgError("circulant embedding is not nonnegative definite")
    lam = np.clip(lam, 0.0, None)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    x = np.fft.fft(np.sqrt(lam / m) * z).real[:length]
    return x * dt**hurst


def evaluate_params(t, r, config: OUConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(theta, mu, sigma)`` at times ``t`` under regimes ``r`` (broadcastable)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=int)
    rp = config.regime
    theta = np.asarray(rp.theta)[r] * (1.0 + config.theta_trend(t))
    mu = np.asarray(rp.mu)[r] + config.mu_trend(t) + sum((s(t) for s in config.mu_seasons), np.zeros_like(t))
    sig_mult = 1.0 + config.sigma_trend(t) + sum((s(t) for s in config.sigma_seasons), np.zeros_like(t))
    sigma = np.asarray(rp.sigma)[r] * sig_mult
    return theta, mu, sigma


def positivity_holds(config: OUConfig, t: np.ndarray) -> bool:
    theta_ok = np.all(1.0 + config.theta_trend(t) > 0)
    sig = 1.0 + config.sigma_trend(t) + sum((s(t) for s in config.sigma_seasons), np.zeros_like(t))
    return bool(theta_ok and np.all(sig > 0))


def simulate_ou_path(config: OUConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama path after burn-in; returns ``(y, regimes)`` of length ``config.length``."""
    n = config.total_steps
    regimes = simulate_regime_chain(rng, n, config.p00, config.p11)
    t = np.arange(n, dtype=float) * config.dt
    theta, mu, sigma = evaluate_params(t, regimes, config)
    if np.any(theta < 0) or np.any(sigma < 0):
        raise ValueError("trend specification makes theta or sigma negative")
    if float(theta.max(initial=0.0)) * config.dt >= 2.0:
        raise ValueError("Euler-Maruyama stability guard violated: theta * dt >= 2")
    if config.use_fbm:
        dw = fbm_increments(rng, n - 1, config.hurst, config.dt, config.max_fbm_length)
    else:
        dw = rng.standard_normal(n - 1) * math.sqrt(config.dt)
    r0 = int(regimes[0])
    if config.initial_value is None:
        y0 = rng.normal(config.regime.mu[r0], config.regime.sigma[r0])
    else:
        y0 = float(config.initial_value)
    drift = (theta * config.dt).tolist()
    target = mu.tolist()
    shock = (sigma[:-1] * dw).tolist()
    y = [0.0] * n
    y[0] = prev = float(y0)
    for k in range(n - 1):
        prev = prev + drift[k] * (target[k] - prev) + shock[k]
        y[k + 1] = prev
    out = np.asarray(y)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("OU state became non-finite")
    b = config.burn_steps
    return out[b:], regimes[b:]


def postprocess(y: np.ndarray, scale: float, shift: float, noise_sigma: float,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """``scale * y + shift + eps`` with ``eps ~ N(0, noise_sigma^2)``."""
    out = scale * np.asarray(y, dtype=float) + shift
    if noise_sigma > 0:
        out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return out


def simulate_ou(config: OUConfig, rng: np.random.Generator, freq: Frequency | None = None,
                apply_postprocess: bool = True) -> TimeSeries:
    y, regimes = simulate_ou_path(config, rng)
    if apply_postprocess:
        y = postprocess(y, config.scale, config.shift, config.noise_sigma, rng)
    return make_series(y, rng, freq or Frequency.parse("D"), "sde", standardize=False,
                       fbm=config.use_fbm, switches=int(np.count_nonzero(np.diff(regimes))))


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SDERanges:
    theta: tuple[float, float] = (0.5, 5.0)
    mu: tuple[float, float] = (-2.0, 2.0)
    sigma: tuple[float, float] = (0.1, 1.0)
    p_stay: tuple[float, float] = (0.85, 0.999)
    hurst: tuple[float, float] = (0.3, 0.8)
    dt: tuple[float, float] = (1e-3, 1e-1)  # log-uniform
    scale: tuple[float, float] = (0.1, 50.0)
    shift: tuple[float, float] = (-100.0, 100.0)
    noise_sigma: tuple[float, float] = (0.0, 0.1)
    fbm_prob: float = 0.3
    trend_prob: float = 0.5
    season_prob: float = 0.5
    max_retries: int = 50


def sample_trend(rng: np.random.Generator, horizon: float, magnitude: float) -> TrendSpec:
    """Random trend whose values stay within roughly ``+-magnitude`` over ``[0, horizon]``."""
    kind = TREND_KINDS[int(rng.integers(1, len(TREND_KINDS)))]
    m = magnitude
    if kind == "linear":
        return TrendSpec(kind, (float(rng.uniform(-m, m) / horizon),))
    if kind == "polynomial":
        deg = int(rng.integers(1, 4))
        c = rng.uniform(-m, m, size=deg + 1) / (deg + 1) / horizon ** np.arange(deg + 1)
        c[0] = 0.0
        return TrendSpec(kind, tuple(float(x) for x in c))
    if kind == "sinusoidal":
        return TrendSpec(kind, (float(rng.uniform(-m, m)), float(rng.uniform(horizon / 4, 2 * horizon)),
                                float(rng.uniform(0, 2 * np.pi))))
    if kind == "logistic":
        return TrendSpec(kind, (float(rng.uniform(-m, m)), float(rng.uniform(4, 20) / horizon),
                                float(rng.uniform(0, horizon))))
    k = int(rng.integers(2, 6))
    knots = np.sort(np.concatenate([[0.0, horizon], rng.uniform(0, horizon, size=k - 2)]))
    vals = rng.uniform(-m, m, size=k)
    return TrendSpec(kind, tuple(float(x) for pair in zip(knots, vals) for x in pair))


def sample_seasons(rng: np.random.Generator, dt: float, length: int, horizon: float,
                   amp_range: tuple[float, float]) -> tuple[SeasonalSpec, ...]:
    out = []
    for _ in range(int(rng.integers(1, 3))):
        amp = float(rng.uniform(*amp_range))
        out.append(SeasonalSpec(
            amplitude=amp,
            period=float(rng.uniform(4.0, max(5.0, length / 2)) * dt),
            phase=float(rng.uniform(0, 2 * np.pi)),
            amplitude_drift=float(amp * rng.uniform(-0.5, 0.5) / horizon),
        ))
    return tuple(out)


def sample_ou_config(rng: np.random.Generator, length: int, ranges: SDERanges | None = None) -> OUConfig:
    g = ranges or SDERanges()
    dt = float(math.exp(rng.uniform(math.log(g.dt[0]), math.log(g.dt[1]))))
    base = OUConfig(
        regime=RegimeParams(
            theta=tuple(float(x) for x in rng.uniform(*g.theta, size=2)),
            mu=tuple(float(x) for x in rng.uniform(*g.mu, size=2)),
            sigma=tuple(float(x) for x in rng.uniform(*g.sigma, size=2)),
        ),
        p00=float(rng.uniform(*g.p_stay)),
        p11=float(rng.uniform(*g.p_stay)),
        use_fbm=bool(rng.random() < g.fbm_prob),
        hurst=float(rng.uniform(*g.hurst)),
        dt=dt,
        length=length,
        scale=float(rng.uniform(*g.scale)),
        shift=float(rng.uniform(*g.shift)),
        noise_sigma=float(rng.uniform(*g.noise_sigma)),
    )
    horizon = max(base.total_steps - 1, 1) * dt
    t = np.arange(base.total_steps, dtype=float) * dt
    for _ in range(g.max_retries):
        cand = replace(
            base,
            theta_trend=sample_trend(rng, horizon, 0.5) if rng.random() < g.trend_prob else TrendSpec(),
            mu_trend=sample_trend(rng, horizon, 2.0) if rng.random() < g.trend_prob else TrendSpec(),
            sigma_trend=sample_trend(rng, horizon, 0.5) if rng.random() < g.trend_prob else TrendSpec(),
            mu_seasons=sample_seasons(rng, dt, length, horizon, (0.0, 2.0)) if rng.random() < g.season_prob else (),
            sigma_seasons=(sample_seasons(rng, dt, length, horizon, (0.0, 0.3))
                           if rng.random() < g.season_prob else ()),
        )
        theta_max = max(cand.regime.theta) * float(np.max(1.0 + cand.theta_trend(t)))
        if positivity_holds(cand, t) and theta_max * dt < 2.0:
            return cand
    return base


def gen_sde(rng: np.random.Generator, length: int, freq: Frequency, ranges: SDERanges | None = None) -> TimeSeries:
    if length < 16:
        raise ValueError("SDE generator needs length >= 16")
    return simulate_ou(sample_ou_config(rng, length, ranges), rng, freq)
