"""Convex combinations of source series with Dirichlet weights."""

from __future__ import annotations

import numpy as np

from ..timeseries import TimeSeries, append_provenance


def simplex_path(w0: np.ndarray, w1: np.ndarray, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Weights of shape ``(n, k)`` moving smoothly from ``w0`` to ``w1``.

    The blend factor is a raised-cosine ramp over a random window, so each row is
    a convex combination of two simplex points and stays on the simplex.
    """
    t = np.arange(n, dtype=float) / max(n - 1, 1)
    if rng is None:
        a, b = 0.0, 1.0
    else:
        a, b = np.sort(rng.uniform(0.0, 1.0, size=2))
        b = max(b, a + 1e-3)
    s = np.clip((t - a) / (b - a), 0.0, 1.0)
    s = 0.5 - 0.5 * np.cos(np.pi * s)
    return (1.0 - s)[:, None] * w0[None, :] + s[:, None] * w1[None, :]


def mix_values(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``values`` is ``(k, n)``; ``weights`` is ``(k,)`` or ``(n, k)``."""
    if weights.ndim == 1:
        return weights @ values
    return np.einsum("nk,kn->n", weights, values)


def ts_mixup(sources, rng: np.random.Generator, alpha: float = 1.0, time_varying: bool = False,
             weights=None) -> TimeSeries:
    if not 2 <= len(sources) <= 10:
        raise ValueError("TS-Mixup combines 2 to 10 sources")
    lengths = {len(s) for s in sources}
    if len(lengths) != 1:
        raise ValueError(f"TS-Mixup sources differ in length: {sorted(lengths)}")
    k = len(sources)
    values = np.stack([s.values for s in sources])
    if weights is not None:
        w = np.asarray(weights, dtype=float)
    elif time_varying:
        w = simplex_path(rng.dirichlet(np.full(k, alpha)), rng.dirichlet(np.full(k, alpha)), values.shape[1], rng)
    else:
        w = rng.dirichlet(np.full(k, alpha))
    mask = np.logical_and.reduce([s.mask for s in sources])
    first = sources[0]
    record = {"op": "mixup", "n_sources": k, "time_varying": bool(w.ndim == 2)}
    return first.with_values(mix_values(values, w), mask, provenance=append_provenance(first.provenance, record))
