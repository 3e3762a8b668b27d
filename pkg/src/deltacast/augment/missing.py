"""Online missing-value injection for training histories."""

from __future__ import annotations

import numpy as np

from ..timeseries import TimeSeries, append_provenance


def missing_mask(rng: np.random.Generator, n: int, point_rate: float, block_rate: float,
                 block_mean_len: float) -> np.ndarray:
    """``True`` where a value is dropped: i.i.d. points plus geometric-length blocks."""
    for name, rate in (("point_rate", point_rate), ("block_rate", block_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    drop = rng.random(n) < point_rate if point_rate > 0 else np.zeros(n, bool)
    if block_rate > 0 and n:
        if block_mean_len < 1:
            raise ValueError("block_mean_len must be >= 1")
        starts = np.flatnonzero(rng.random(n) < block_rate)
        lengths = rng.geometric(1.0 / block_mean_len, size=starts.size)
        cover = np.zeros(n + 1, dtype=np.int64)
        np.add.at(cover, starts, 1)
        np.add.at(cover, np.minimum(starts + lengths, n), -1)
        drop |= np.cumsum(cover[:n]) > 0
    return drop


def nan_inject(series: TimeSeries, rng: np.random.Generator, point_rate: float = 0.0, block_rate: float = 0.0,
               block_mean_len: float = 5.0, history_len: int | None = None) -> TimeSeries:
    """Mark positions missing inside the first ``history_len`` steps (whole series by default)."""
    n = len(series) if history_len is None else min(int(history_len), len(series))
    drop = missing_mask(rng, n, point_rate, block_rate, block_mean_len)
    mask = series.mask.copy()
    mask[:n] &= ~drop
    fraction = float(1.0 - mask[:n].mean()) if n else 0.0
    record = {"op": "nan_inject", "point_rate": point_rate, "block_rate": block_rate,
              "block_mean_len": block_mean_len, "region": n, "missing_fraction": round(fraction, 6)}
    return series.with_values(series.values, mask, provenance=append_provenance(series.provenance, record))


def missing_runs(mask: np.ndarray) -> np.ndarray:
    """Lengths of maximal runs of missing (``False``) entries."""
    miss = np.concatenate([[0], (~np.asarray(mask, bool)).astype(np.int8), [0]])
    edges = np.diff(miss)
    return np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)
