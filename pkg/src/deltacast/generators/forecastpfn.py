"""Multiplicative trend x seasonality x Weibull-noise generator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..timeseries import Frequency, Unit, seasonal_period
from ._common import GenerationError, make_series


@dataclass(frozen=True)
class ForecastPFNParams:
    base: float = 1.0
    linear_slope: float = 0.0
    linear_offset: float = 0.0
    exp_base: float = 1.0
    exp_offset: float = 0.0
    periods: tuple[float, ...] = ()
    strengths: tuple[float, ...] = ()
    sin_coefs: tuple[tuple[float, ...], ...] = ()
    cos_coefs: tuple[tuple[float, ...], ...] = ()
    phase_offsets: tuple[float, ...] = ()
    noise_shape: float = 2.0
    noise_scale: float = 0.0


@dataclass(frozen=True)
class ForecastPFNConfig:
    time_warp_prob: float = 0.2
    magnitude_scale_prob: float = 0.2
    damping_prob: float = 0.2
    spike_prob: float = 0.2
    max_ratio: float = 1e3
    max_abs: float = 1e6
    max_retries: int = 20
    augment: bool = True


def candidate_periods(freq: Frequency, length: int) -> list[float]:
    u = freq.unit
    m = freq.multiple
    if u <= Unit.HOURS:
        day = seasonal_period(freq)
        periods = [float(day), 7.0 * day] if day > 1 else []
    elif u == Unit.DAYS:
        periods = [7.0 / m, 30.4375 / m, 365.25 / m]
    elif u == Unit.WEEKS:
        periods = [4.348 / m, 52.18 / m]
    elif u == Unit.MONTHS:
        periods = [12.0 / m]
    elif u == Unit.QUARTERS:
        periods = [4.0 / m]
    else:
        periods = []
    return [p for p in periods if 2.0 <= p <= length]


def trend(p: ForecastPFNParams, t: np.ndarray) -> np.ndarray:
    return (p.base + p.linear_slope * (t + p.linear_offset)) * p.exp_base ** (t + p.exp_offset)


def seasonality(p: ForecastPFNParams, t: np.ndarray) -> np.ndarray:
    out = np.ones_like(t, dtype=float)
    for f, period in enumerate(p.periods):
        acc = np.zeros_like(out)
        for h, (c, d) in enumerate(zip(p.sin_coefs[f], p.cos_coefs[f]), start=1):
            arg = 2.0 * np.pi * h * (t + p.phase_offsets[f]) / period
            acc += c * np.sin(arg) + d * np.cos(arg)
        out *= 1.0 + p.strengths[f] * acc
    return out


def weibull_noise(p: ForecastPFNParams, n: int, rng: np.random.Generator) -> np.ndarray:
    if p.noise_scale == 0.0:
        return np.zeros(n)
    w = rng.weibull(p.noise_shape, size=n)
    return p.noise_scale * (w - math.gamma(1.0 + 1.0 / p.noise_shape))


def render(p: ForecastPFNParams, length: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``trend(t) * seasonality(t) * (1 + noise(t))`` on ``t = 0..length-1``."""
    t = np.arange(length, dtype=float)
    noise = weibull_noise(p, length, rng) if p.noise_scale else 0.0
    return trend(p, t) * seasonality(p, t) * (1.0 + noise)


def sample_params(rng: np.random.Generator, length: int, freq: Frequency) -> ForecastPFNParams:
    L = float(length)
    periods = [p for p in candidate_periods(freq, length) if rng.random() < 0.7]
    if not periods and rng.random() < 0.5:
        periods = [float(rng.uniform(L / 8, L / 2))]
    strengths, sins, coss, offs = [], [], [], []
    for _ in periods:
        n_h = int(rng.integers(1, 4))
        h = np.arange(1, n_h + 1)
        c = rng.normal(size=n_h) / h
        d = rng.normal(size=n_h) / h
        norm = np.sum(np.hypot(c, d))
        strengths.append(float(rng.uniform(0.0, 0.6)))
        sins.append(tuple((c / norm).tolist()))
        coss.append(tuple((d / norm).tolist()))
        offs.append(float(rng.uniform(0, L)))
    u = rng.uniform(-math.log(1000.0), math.log(1000.0))
    return ForecastPFNParams(
        base=float(rng.uniform(0.5, 2.0)),
        linear_slope=float(rng.uniform(-1.0, 1.0) / L),
        linear_offset=float(rng.uniform(-0.5 * L, 0.5 * L)),
        exp_base=math.exp(u / L),
        exp_offset=float(rng.uniform(-0.5 * L, 0.5 * L)),
        periods=tuple(periods),
        strengths=tuple(strengths),
        sin_coefs=tuple(sins),
        cos_coefs=tuple(coss),
        phase_offsets=tuple(offs),
        noise_shape=float(rng.uniform(1.0, 3.0)),
        noise_scale=float(rng.uniform(0.0, 0.15)),
    )


def augment(y: np.ndarray, rng: np.random.Generator, cfg: ForecastPFNConfig) -> np.ndarray:
    n = y.shape[0]
    t = np.arange(n, dtype=float)
    if rng.random() < cfg.time_warp_prob and n > 2:
        gamma = rng.uniform(0.8, 1.25)
        warped = (n - 1) * (t / (n - 1)) ** gamma
        y = np.interp(warped, t, y)
    if rng.random() < cfg.magnitude_scale_prob:
        a = rng.uniform(0.05, 0.3)
        period = rng.uniform(n / 4, 2 * n)
        y = y * (1.0 + a * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi)))
    if rng.random() < cfg.damping_prob:
        lam = rng.uniform(0.5, 3.0)
        mu = y.mean()
        y = mu + (y - mu) * np.exp(-lam * t / n)
    if rng.random() < cfg.spike_prob:
        k = int(rng.integers(1, 6))
        pos = rng.choice(n, size=min(k, n), replace=False)
        sd = y.std() if y.std() > 0 else 1.0
        y = y.copy()
        y[pos] += rng.choice([-1.0, 1.0], size=pos.size) * rng.uniform(2.0, 5.0, size=pos.size) * sd
    return y


def spread_ratio(y: np.ndarray) -> float:
    a = np.abs(y)
    return float(a.max() / (np.median(a) + 1e-8))


def passes_filter(y: np.ndarray, cfg: ForecastPFNConfig) -> bool:
    return (bool(np.all(np.isfinite(y))) and float(np.ptp(y)) > 0.0
            and float(np.abs(y).max()) <= cfg.max_abs and spread_ratio(y) <= cfg.max_ratio)


def sample_raw(rng: np.random.Generator, length: int, freq: Frequency,
               cfg: ForecastPFNConfig | None = None) -> tuple[np.ndarray, ForecastPFNParams, int]:
    """Sample until the spread/extreme-value filter passes; returns (values, params, attempts)."""
    if length < 8:
        raise ValueError("ForecastPFN series need length >= 8")
    cfg = cfg or ForecastPFNConfig()
    for attempt in range(1, cfg.max_retries + 1):
        params = sample_params(rng, length, freq)
        with np.errstate(over="ignore", invalid="ignore"):
            y = render(params, length, rng)
            if cfg.augment:
                y = augment(y, rng, cfg)
        if passes_filter(y, cfg):
            return y, params, attempt
    raise GenerationError(f"ForecastPFN filter rejected {cfg.max_retries} consecutive draws")


def gen_forecastpfn(rng: np.random.Generator, length: int, freq: Frequency,
                    cfg: ForecastPFNConfig | None = None):
    y, _, attempts = sample_raw(rng, length, freq, cfg)
    return make_series(y, rng, freq, "forecast_pfn", attempts=attempts)
