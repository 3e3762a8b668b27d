"""Per-category series transforms and random convolution filtering.

Each transform maps ``(values, rng, ctx)`` to a new value array of the same
length. ``ctx`` carries the series (timestamps, frequency) for calendar effects.
Transforms act on the raw value array; offline sources are fully observed so the
mask only matters for reversal, which flips it along with the values.
"""

from __future__ import annotations

import enum
import warnings

import numpy as np
from scipy.interpolate import interp1d
from scipy.ndimage import gaussian_filter1d
from scipy.stats import qmc

from ..timeseries import TimeSeries, append_provenance, calendar_fields


class CategoryKind(str, enum.Enum):
    INVARIANCES = "invariances"
    STRUCTURE = "structure"
    SEASONALITY = "seasonality"
    SIGNAL_PROCESSING = "signal_processing"
    DISCRETE_EFFECTS = "discrete_effects"
    MEASUREMENT_ARTIFACTS = "measurement_artifacts"


# fixed global application order
CATEGORY_ORDER = tuple(CategoryKind)


def _spread(x: np.ndarray) -> float:
    q25, q75 = np.quantile(x, [0.25, 0.75])
    s = q75 - q25
    if s <= 1e-12:
        s = float(np.std(x))
    return float(s) if s > 1e-12 else 1.0


def rescale_to_range(y: np.ndarray, lo: float, hi: float) -> np.ndarray | None:
    """Affine map of ``y`` onto ``[lo, hi]``; ``None`` when ``y`` is constant."""
    ymin, ymax = float(y.min()), float(y.max())
    if ymax - ymin <= 1e-12 * max(1.0, abs(ymax)):
        return None
    return lo + (y - ymin) * (hi - lo) / (ymax - ymin)


# ---------------------------------------------------------------------------
# invariances


def reversal(x, rng=None, ctx=None):
    return x[::-1].copy()


def negation(x, rng=None, ctx=None):
    return -x


# ---------------------------------------------------------------------------
# structure


def regime_change(x, rng, ctx=None, n_changes: int | None = None):
    """Piecewise affine map: after each random change-point the series is rescaled and offset."""
    n = x.size
    k = n_changes if n_changes is not None else int(rng.integers(1, 4))
    cps = np.sort(rng.choice(np.arange(1, n), size=min(k, n - 1), replace=False))
    out = x.copy()
    spread = _spread(x)
    for cp in cps:
        a = rng.uniform(0.5, 1.5)
        b = rng.normal(0.0, 0.5 * spread)
        center = np.median(out[cp:])
        out[cp:] = center + a * (out[cp:] - center) + b
    return out


def shock(x, rng, ctx=None, amplitude: float | None = None, t0: int | None = None, tau: float | None = None):
    """Add ``A * exp(-(t - t0) / tau)`` for ``t >= t0``."""
    n = x.size
    amplitude = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 5.0) * _spread(x) if amplitude is None else amplitude
    t0 = int(rng.integers(0, n)) if t0 is None else t0
    tau = rng.uniform(2.0, max(3.0, n / 5)) if tau is None else tau
    t = np.arange(n, dtype=float)
    impulse = np.where(t >= t0, amplitude * np.exp(-(t - t0) / tau), 0.0)
    return x + impulse


# ---------------------------------------------------------------------------
# seasonality


def calendar_effects(x, rng, ctx: TimeSeries | None = None):
    """Weekend dips and month-end spikes on timestamps from start + freq."""
    if ctx is None or ctx.freq.coarser_than_daily:
        return x.copy()
    f = calendar_fields(ctx.timestamps())
    spread = _spread(x)
    out = x.copy()
    weekend = f["dayofweek"] >= 5
    out[weekend] -= rng.uniform(0.2, 1.0) * spread
    days = ctx.timestamps().astype("datetime64[D]")
    month_end = (days + np.timedelta64(1, "D")).astype("datetime64[M]") != days.astype("datetime64[M]")
    out[month_end] += rng.uniform(0.5, 2.0) * spread
    return out


def segment_scaling(x, rng, ctx=None):
    """Scale the deviation from the median inside one random segment."""
    n = x.size
    width = int(rng.integers(max(2, n // 10), max(3, n // 2) + 1))
    lo = int(rng.integers(0, max(1, n - width + 1)))
    out = x.copy()
    med = np.median(x)
    out[lo:lo + width] = med + rng.uniform(0.3, 2.0) * (x[lo:lo + width] - med)
    return out


# ---------------------------------------------------------------------------
# signal processing

STENCILS = {
    "sobel": np.array([-0.5, 0.0, 0.5]),
    "laplacian": np.array([1.0, -2.0, 1.0]),
    "third_difference": np.array([-1.0, 3.0, -3.0, 1.0]),
    "fourth_difference": np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _stencil(x: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    pad = stencil.size // 2
    xp = np.pad(x, (pad, stencil.size - 1 - pad), mode="edge")
    # correlate so that [-1/2, 0, 1/2] is a forward-looking central difference
    return np.correlate(xp, stencil, mode="valid")


def derivative(x, rng, ctx=None, operator: str | None = None, sigma: float | None = None):
    op = operator or list(STENCILS)[int(rng.integers(len(STENCILS)))]
    sigma = rng.uniform(0.5, 2.0) if sigma is None else sigma
    smooth = gaussian_filter1d(x, sigma, mode="nearest") if sigma > 0 else x
    out = rescale_to_range(_stencil(smooth, STENCILS[op]), float(x.min()), float(x.max()))
    return x.copy() if out is None else out


def integration(x, rng=None, ctx=None):
    out = rescale_to_range(np.cumsum(x - np.mean(x)), float(x.min()), float(x.max()))
    return x.copy() if out is None else out


# ---------------------------------------------------------------------------
# discrete effects


def censor(x, rng, ctx=None, q: float | None = None):
    """Clip from above at the empirical ``q``-quantile."""
    if np.ptp(x) == 0:
        return x.copy()
    q = rng.uniform(0.7, 0.99) if q is None else q
    return np.minimum(x, np.quantile(x, q))


def sobol_levels(n_levels: int, rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    sampler = qmc.Sobol(d=1, scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance warning for non powers of two
        u = sampler.random(n_levels)[:, 0]
    return np.sort(lo + u * (hi - lo))


def quantize(x, rng, ctx=None, n_levels: int | None = None):
    """Snap every value to the nearest of ``n_levels`` Sobol-placed levels in ``[min, max]``."""
    if np.ptp(x) == 0:
        return x.copy()
    n_levels = int(rng.integers(4, 33)) if n_levels is None else n_levels
    levels = sobol_levels(n_levels, rng, float(x.min()), float(x.max()))
    idx = np.abs(x[:, None] - levels[None, :]).argmin(axis=1)
    return levels[idx]


# ---------------------------------------------------------------------------
# measurement artifacts


def resample(x, rng, ctx=None, factor: int | None = None, kind: str | None = None):
    """Downsample by ``factor`` and interpolate back onto the original grid."""
    n = x.size
    factor = int(rng.integers(2, max(3, min(8, n // 4) + 1))) if factor is None else factor
    kind = ["linear", "nearest", "cubic"][int(rng.integers(3))] if kind is None else kind
    idx = np.arange(0, n, factor)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    if idx.size < 4 and kind == "cubic":
        kind = "linear"
    if idx.size < 2:
        return x.copy()
    return interp1d(idx, x[idx], kind=kind)(np.arange(n, dtype=float))


# ---------------------------------------------------------------------------

TRANSFORMS: dict[CategoryKind, dict] = {
    CategoryKind.INVARIANCES: {"reversal": reversal, "negation": negation},
    CategoryKind.STRUCTURE: {"regime_change": regime_change, "shock": shock},
    CategoryKind.SEASONALITY: {"calendar_effects": calendar_effects, "segment_scaling": segment_scaling},
    CategoryKind.SIGNAL_PROCESSING: {"derivative": derivative, "integration": integration},
    CategoryKind.DISCRETE_EFFECTS: {"censor": censor, "quantize": quantize},
    CategoryKind.MEASUREMENT_ARTIFACTS: {"resample": resample},
}


def apply_transform(name: str, series: TimeSeries, rng: np.random.Generator) -> TimeSeries:
    for table in TRANSFORMS.values():
        if name in table:
            values = table[name](series.values.copy(), rng, series)
            mask = series.mask[::-1] if name == "reversal" else series.mask
            return series.with_values(values, mask)
    raise KeyError(f"unknown transform {name!r}")


def apply_category(series: TimeSeries, kind: CategoryKind | str, rng: np.random.Generator) -> TimeSeries:
    """Pick one transform of ``kind`` uniformly and apply it."""
    if len(series) < 4:
        raise ValueError("category transforms need length >= 4")
    kind = CategoryKind(kind)
    names = list(TRANSFORMS[kind])
    name = names[int(rng.integers(len(names)))]
    out = apply_transform(name, series, rng)
    return out.with_values(out.values, provenance=append_provenance(
        series.provenance, {"op": "augment_category", "category": kind.value, "transform": name}))


# ---------------------------------------------------------------------------
# random convolution


def conv1d_same(x: np.ndarray, kernel, dilation: int = 1) -> np.ndarray:
    """Centered dilated 1D convolution with edge-replicated padding; output length = input length."""
    k = np.asarray(kernel, dtype=float)
    span = (k.size - 1) * dilation
    left = span // 2
    xp = np.pad(np.asarray(x, float), (left, span - left), mode="edge")
    out = np.zeros(x.shape[0])
    for j, w in enumerate(k[::-1]):
        out += w * xp[j * dilation: j * dilation + x.shape[0]]
    return out


def sample_conv_kernel(rng: np.random.Generator) -> tuple[np.ndarray, int]:
    size = int(rng.integers(3, 16))
    w = rng.normal(size=size)
    return w / np.abs(w).sum(), int(rng.integers(1, 4))


def random_conv_filter(x: np.ndarray, rng: np.random.Generator, n_filters: int | None = None) -> np.ndarray:
    """1-3 sequential random convolutions; passes through when the series is too short."""
    n_filters = int(rng.integers(1, 4)) if n_filters is None else n_filters
    out = np.asarray(x, float)
    for _ in range(n_filters):
        kernel, dilation = sample_conv_kernel(rng)
        if (kernel.size - 1) * dilation + 1 > out.size:
            continue
        out = conv1d_same(out, kernel, dilation)
    return out
