from __future__ import annotations

import numpy as np

from ..timeseries import Frequency, TimeSeries, append_provenance


class GenerationError(RuntimeError):
    pass


def robust_standardize(x: np.ndarray) -> np.ndarray:
    """Zero median, unit IQR; falls back to unit std, then to centring only."""
    x = np.asarray(x, dtype=float)
    q25, med, q75 = np.quantile(x, [0.25, 0.5, 0.75])
    scale = q75 - q25
    if not scale > 1e-10:
        scale = float(np.std(x))
    if not scale > 1e-10:
        return x - med
    return (x - med) / scale


def random_start(rng: np.random.Generator) -> np.datetime64:
    return np.datetime64("1995-01-01T00:00:00", "s") + np.timedelta64(int(rng.integers(0, 25 * 365)), "D")


def make_series(values, rng: np.random.Generator, freq: Frequency, kind: str, standardize: bool = True,
                **info) -> TimeSeries:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise GenerationError(f"{kind} produced non-finite values")
    if standardize:
        values = robust_standardize(values)
    record = {"op": "generate", "kind": kind}
    record.update(info)
    return TimeSeries(values, np.ones(values.shape, bool), start=random_start(rng), freq=freq,
                      provenance=append_provenance("", record))


def as_length(values: np.ndarray, length: int) -> np.ndarray:
    if values.shape[0] != length:
        raise GenerationError(f"generator produced length {values.shape[0]} != {length}")
    return values
