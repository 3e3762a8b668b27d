"""Offline augmentation cascade with replayable provenance.

Every stage is logged as a small record (what ran, on which sources, with which
seed). ``run_stage`` executes a record deterministically, and the pipeline itself
goes through ``run_stage``, so ``replay`` on a logged record list reproduces the
output bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from ..seeding import child_seed
from ..timeseries import ScalerKind, TimeSeries, append_provenance, fit_scaler, provenance_stages
from . import transforms
from .mixup import ts_mixup
from .transforms import CATEGORY_ORDER, CategoryKind

DEFAULT_CATEGORY_WEIGHTS = {
    CategoryKind.INVARIANCES.value: 0.6,
    CategoryKind.STRUCTURE.value: 0.6,
    CategoryKind.SEASONALITY.value: 0.5,
    CategoryKind.SIGNAL_PROCESSING.value: 0.4,
    CategoryKind.DISCRETE_EFFECTS.value: 0.6,
    CategoryKind.MEASUREMENT_ARTIFACTS.value: 0.3,
}


@dataclass(frozen=True)
class AugmentationConfig:
    normalize_prob: float = 0.8
    early_mixup_prob: float = 0.5
    late_mixup_prob: float = 0.25
    mixup_sources: tuple[int, int] = (2, 10)
    dirichlet_alpha: float = 1.0
    time_varying_prob: float = 0.5
    category_weights: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORY_WEIGHTS))
    categories_per_series: tuple[int, int] = (2, 5)
    conv_filter_prob: float = 0.3
    finish_scale: tuple[float, float] = (0.9, 1.1)
    finish_noise: float = 0.01  # std as a fraction of the IQR
    change_threshold: float = 0.05
    max_retries: int = 10

    def __post_init__(self):
        for name in ("normalize_prob", "early_mixup_prob", "late_mixup_prob", "time_varying_prob",
                     "conv_filter_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.categories_per_series
        if not 1 <= lo <= hi <= len(CATEGORY_ORDER):
            raise ValueError("categories_per_series must satisfy 1 <= lo <= hi <= 6")
        unknown = set(self.category_weights) - {c.value for c in CategoryKind}
        if unknown:
            raise ValueError(f"unknown categories {sorted(unknown)}")
        if any(w < 0 for w in self.category_weights.values()):
            raise ValueError("category weights must be nonnegative")
        if not 2 <= self.mixup_sources[0] <= self.mixup_sources[1] <= 10:
            raise ValueError("mixup_sources must lie within [2, 10]")


# ---------------------------------------------------------------------------
# category sampling


def sample_categories(rng: np.random.Generator, weights: dict, k_range: tuple[int, int]) -> list[str]:
    """Draw ``k ~ U{lo..hi}`` categories by weight without replacement; return them in global order."""
    names = [c.value for c in CATEGORY_ORDER if weights.get(c.value, 0.0) > 0]
    k = min(int(rng.integers(k_range[0], k_range[1] + 1)), len(names))
    w = np.array([weights[n] for n in names], dtype=float)
    chosen = []
    for _ in range(k):
        p = w / w.sum()
        i = int(rng.choice(len(names), p=p))
        chosen.append(names[i])
        w[i] = 0.0
    return [c.value for c in CATEGORY_ORDER if c.value in chosen]


def inclusion_probability(weights: dict, k_range: tuple[int, int], category: str) -> float:
    """Exact probability that ``category`` is drawn, by enumerating ordered draws."""
    names = [n for n, w in weights.items() if w > 0]
    w = {n: float(weights[n]) for n in names}
    ks = range(k_range[0], k_range[1] + 1)
    total = 0.0
    for k in ks:
        k = min(k, len(names))
        p_in = 0.0
        for seq in permutations(names, k):
            if category not in seq:
                continue
            p, left = 1.0, sum(w.values())
            for n in seq:
                p *= w[n] / left
                left -= w[n]
            p_in += p
        total += p_in
    return total / len(ks)


# ---------------------------------------------------------------------------
# stage execution


def change_score(source: np.ndarray, output: np.ndarray) -> float:
    """``0.5 (1 - |corr|) + 0.5 min(1, rms(output - source) / std(source))``."""
    source = np.asarray(source, float)
    output = np.asarray(output, float)
    sx, sy = source.std(), output.std()
    if sx > 1e-12 and sy > 1e-12:
        corr = float(np.corrcoef(source, output)[0, 1])
    else:
        corr = 1.0 if np.allclose(source, output) else 0.0
    rms = float(np.sqrt(np.mean((output - source) ** 2)))
    denom = sx if sx > 1e-12 else max(float(np.abs(source).max()), 1.0)
    return 0.5 * (1.0 - abs(corr)) + 0.5 * min(1.0, rms / denom)


def _normalized(series: TimeSeries, scaler: str | None) -> TimeSeries:
    if scaler is None:
        return series
    return fit_scaler(scaler, series).apply(series)


def _iqr(x: np.ndarray) -> float:
    q25, q75 = np.quantile(x, [0.25, 0.75])
    return float(q75 - q25)


def run_stage(record: dict, series: TimeSeries | None, pool) -> TimeSeries:
    stage = record["stage"]
    if stage == "source":
        return pool[record["index"]]
    if stage == "normalize":
        return _normalized(series, record["scaler"])
    rng = np.random.default_rng(record["seed"]) if "seed" in record else None
    if stage == "mixup":
        others = [_normalized(pool[i], record.get("scaler")) for i in record["indices"]]
        mixed = ts_mixup([series, *others], rng, record["alpha"], record["time_varying"])
        return series.with_values(mixed.values, mixed.mask)
    if stage == "category":
        return transforms.apply_transform(record["transform"], series, rng)
    if stage == "conv_filter":
        return series.with_values(transforms.random_conv_filter(series.values, rng))
    if stage == "finish":
        x = series.values
        scale = rng.uniform(*record["scale_range"])
        spread = _iqr(x[series.mask]) if series.mask.any() else 0.0
        noise = rng.normal(0.0, record["noise"] * spread, size=x.size) if spread > 0 else 0.0
        return series.with_values(scale * x + noise)
    raise ValueError(f"unknown stage {stage!r}")


def run_stages(stages: list[dict], pool) -> TimeSeries:
    series = None
    for record in stages:
        series = run_stage(record, series, pool)
    return series


def _mixup_record(rng, pool, lengths, current_index, n, cfg, phase, scaler) -> dict | None:
    same = np.flatnonzero(lengths == n)
    same = same[same != current_index]
    if same.size == 0:
        return None
    k = int(rng.integers(cfg.mixup_sources[0], cfg.mixup_sources[1] + 1)) - 1
    picks = rng.choice(same, size=min(k, same.size), replace=False)
    return {"stage": "mixup", "phase": phase, "indices": [int(i) for i in picks], "scaler": scaler,
            "alpha": cfg.dirichlet_alpha, "time_varying": bool(rng.random() < cfg.time_varying_prob),
            "seed": child_seed(rng)}


def plan_stages(pool, rng: np.random.Generator, cfg: AugmentationConfig, lengths: np.ndarray) -> list[dict]:
    """Draw one attempt's stage list from the master rng."""
    idx = int(rng.integers(len(pool)))
    n = len(pool[idx])
    stages: list[dict] = [{"stage": "source", "index": idx}]
    scaler = None
    if rng.random() < cfg.normalize_prob:
        scaler = list(ScalerKind)[int(rng.integers(len(ScalerKind)))].value
        stages.append({"stage": "normalize", "scaler": scaler})
    if rng.random() < cfg.early_mixup_prob:
        rec = _mixup_record(rng, pool, lengths, idx, n, cfg, "early", scaler)
        if rec:
            stages.append(rec)
    if n >= 4:
        for cat in sample_categories(rng, cfg.category_weights, cfg.categories_per_series):
            names = list(transforms.TRANSFORMS[CategoryKind(cat)])
            name = names[int(rng.integers(len(names)))]
            stages.append({"stage": "category", "category": cat, "transform": name, "seed": child_seed(rng)})
    if rng.random() < cfg.conv_filter_prob:
        stages.append({"stage": "conv_filter", "seed": child_seed(rng)})
    if rng.random() < cfg.late_mixup_prob:
        rec = _mixup_record(rng, pool, lengths, idx, n, cfg, "late", scaler)
        if rec:
            stages.append(rec)
    stages.append({"stage": "finish", "scale_range": list(cfg.finish_scale), "noise": cfg.finish_noise,
                   "seed": child_seed(rng)})
    return stages


def augment_pipeline(pool, rng: np.random.Generator, cfg: AugmentationConfig | None = None) -> TimeSeries:
    """One augmented series drawn from ``pool`` (a sequence of TimeSeries)."""
    if len(pool) == 0:
        raise ValueError("source pool is empty")
    cfg = cfg or AugmentationConfig()
    lengths = np.array([len(s) for s in pool])
    source = None
    for attempt in range(1, cfg.max_retries + 1):
        stages = plan_stages(pool, rng, cfg, lengths)
        source = pool[stages[0]["index"]]
        reference = run_stages(stages[:2] if stages[1:2] and stages[1]["stage"] == "normalize" else stages[:1], pool)
        out = run_stages(stages, pool)
        score = change_score(reference.values, out.values)
        if np.all(np.isfinite(out.values)) and score >= cfg.change_threshold:
            record = {"op": "augment", "stages": stages, "attempt": attempt, "change_score": round(score, 6)}
            return out.with_values(out.values, provenance=append_provenance(source.provenance, record))
    return source.with_values(source.values, provenance=append_provenance(
        source.provenance, {"op": "unaugmented", "attempts": cfg.max_retries}))


def replay(provenance: str, pool) -> TimeSeries:
    """Re-execute the last augmentation record in ``provenance`` against ``pool``."""
    records = [r for r in provenance_stages(provenance) if r.get("op") == "augment"]
    if not records:
        raise ValueError("provenance holds no augmentation record")
    return run_stages(records[-1]["stages"], pool)
