"""Composite covariance kernels and Gaussian-process path sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, jitter: float):
        super().__init__(f"gram matrix not positive definite even with jitter {jitter:g}")
        self.jitter = jitter


def _require_positive(kernel, *names):
    for n in names:
        v = getattr(kernel, n)
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{type(kernel).__name__}.{n} must be positive, got {v}")


def _diff(t1, t2):
    return np.subtract.outer(np.asarray(t1, float), np.asarray(t2, float))


@dataclass(frozen=True)
class RBF:
    lengthscale: float = 1.0

    def __post_init__(self):
        _require_positive(self, "lengthscale")

    def __call__(self, t1, t2):
        d = _diff(t1, t2)
        return np.exp(-0.5 * (d / self.lengthscale) ** 2)


@dataclass(frozen=True)
class RationalQuadratic:
    lengthscale: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        _require_positive(self, "lengthscale", "alpha")

    def __call__(self, t1, t2):
        d = _diff(t1, t2)
        return (1.0 + d**2 / (2.0 * self.alpha * self.lengthscale**2)) ** (-self.alpha)


@dataclass(frozen=True)
class Periodic:
    """ExpSineSquared: ``exp(-2 sin^2(pi |d| / period) / lengthscale^2)``."""

    lengthscale: float = 1.0
    period: float = 1.0

    def __post_init__(self):
        _require_positive(self, "lengthscale", "period")

    def __call__(self, t1, t2):
        d = _diff(t1, t2)
        return np.exp(-2.0 * np.sin(np.pi * np.abs(d) / self.period) ** 2 / self.lengthscale**2)


@dataclass(frozen=True)
class White:
    variance: float = 1.0

    def __post_init__(self):
        _require_positive(self, "variance")

    def __call__(self, t1, t2):
        return self.variance * (_diff(t1, t2) == 0.0).astype(float)


@dataclass(frozen=True)
class Linear:
    variance: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        _require_positive(self, "variance")

    def __call__(self, t1, t2):
        a = np.asarray(t1, float) - self.offset
        b = np.asarray(t2, float) - self.offset
        return self.variance * np.multiply.outer(a, b)


@dataclass(frozen=True)
class Matern:
    lengthscale: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        _require_positive(self, "lengthscale")
        if self.nu not in (0.5, 1.5, 2.5):
            raise ValueError("Matern nu must be one of 0.5, 1.5, 2.5")

    def __call__(self, t1, t2):
        r = np.abs(_diff(t1, t2)) / self.lengthscale
        if self.nu == 0.5:
            return np.exp(-r)
        if self.nu == 1.5:
            s = math.sqrt(3.0) * r
            return (1.0 + s) * np.exp(-s)
        s = math.sqrt(5.0) * r
        return (1.0 + s + s**2 / 3.0) * np.exp(-s)


@dataclass(frozen=True)
class Polynomial:
    degree: int = 2
    variance: float = 1.0

    def __post_init__(self):
        _require_positive(self, "variance")
        if not 1 <= self.degree <= 4:
            raise ValueError("polynomial degree must be in 1..4")

    def __call__(self, t1, t2):
        return (self.variance * np.multiply.outer(np.asarray(t1, float), np.asarray(t2, float)) + 1.0) ** self.degree


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __post_init__(self):
        _require_positive(self, "value")

    def __call__(self, t1, t2):
        return np.full((np.size(t1), np.size(t2)), float(self.value))


BaseKernel = Union[RBF, RationalQuadratic, Periodic, White, Linear, Matern, Polynomial, Constant]
BASE_KERNEL_TYPES: tuple[type, ...] = (RBF, RationalQuadratic, Periodic, White, Linear, Matern, Polynomial, Constant)


@dataclass(frozen=True)
class Sum:
    children: tuple

    def __call__(self, t1, t2):
        out = self.children[0](t1, t2)
        for c in self.children[1:]:
            out = out + c(t1, t2)
        return out


@dataclass(frozen=True)
class Product:
    children: tuple

    def __call__(self, t1, t2):
        out = self.children[0](t1, t2)
        for c in self.children[1:]:
            out = out * c(t1, t2)
        return out


CompositeKernel = Union[BaseKernel, Sum, Product]


def leaves(kernel) -> list:
    if isinstance(kernel, (Sum, Product)):
        return [leaf for c in kernel.children for leaf in leaves(c)]
    return [kernel]


def describe(kernel) -> str:
    if isinstance(kernel, Sum):
        return "(" + " + ".join(describe(c) for c in kernel.children) + ")"
    if isinstance(kernel, Product):
        return "(" + " * ".join(describe(c) for c in kernel.children) + ")"
    fields = ",".join(f"{k}={v:.4g}" for k, v in kernel.__dict__.items())
    return f"{type(kernel).__name__}({fields})"


def gram(kernel, times) -> np.ndarray:
    """Covariance matrix on ``times``; symmetric to the last bit."""
    t = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("times must be finite")
    k = np.asarray(kernel(t, t), dtype=float)
    upper = np.triu(k)
    return upper + np.triu(k, 1).T


# ---------------------------------------------------------------------------
# random kernels

# Draws a base kernel given (rng, series_length_in_time_units, period_sampler).
KernelFactory = Callable[[np.random.Generator, float, Callable], BaseKernel]


def log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def default_period_sampler(length: float) -> Callable[[np.random.Generator], float]:
    """Log-uniform period over ``[length/64, length/2]``."""
    return lambda rng: log_uniform(rng, length / 64.0, length / 2.0)


def _ls(rng, span):
    return log_uniform(rng, span / 50.0, span)


BANK: dict[str, KernelFactory] = {
    "rbf": lambda rng, span, per: RBF(_ls(rng, span)),
    "rational_quadratic": lambda rng, span, per: RationalQuadratic(_ls(rng, span), log_uniform(rng, 0.1, 10.0)),
    "periodic": lambda rng, span, per: Periodic(log_uniform(rng, 0.5, 3.0), per(rng)),
    "white": lambda rng, span, per: White(log_uniform(rng, 1e-3, 0.1)),
    "linear": lambda rng, span, per: Linear(log_uniform(rng, 0.1, 1.0) / span**2, rng.uniform(0, span)),
    "matern": lambda rng, span, per: Matern(_ls(rng, span), float(rng.choice([0.5, 1.5, 2.5]))),
    "polynomial": lambda rng, span, per: Polynomial(int(rng.integers(1, 5)), log_uniform(rng, 0.1, 1.0) / span**2),
    "constant": lambda rng, span, per: Constant(log_uniform(rng, 0.1, 1.0)),
}
DEFAULT_BANK_WEIGHTS = {name: 1.0 for name in BANK}


def sample_composite_kernel(
    rng: np.random.Generator,
    bank_weights: dict[str, float] | None = None,
    max_kernels: int = 6,
    period_sampler: Callable[[np.random.Generator], float] | None = None,
    span: float = 1.0,
):
    """Random kernel tree with 1..``max_kernels`` leaves.

    Leaves come from the weighted bank; they are folded left to right with an
    operator drawn uniformly from {Sum, Product}.
    """
    if not 1 <= max_kernels <= 6:
        raise ValueError("max_kernels must be in 1..6")
    bank_weights = DEFAULT_BANK_WEIGHTS if bank_weights is None else bank_weights
    names = list(bank_weights)
    w = np.array([bank_weights[n] for n in names], dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("bank weights must be nonnegative and not all zero")
    period_sampler = period_sampler or default_period_sampler(span)
    n_leaves = int(rng.integers(1, max_kernels + 1))
    picks = rng.choice(len(names), size=n_leaves, p=w / w.sum())
    kernel = None
    for idx in picks:
        leaf = BANK[names[idx]](rng, span, period_sampler)
        if kernel is None:
            kernel = leaf
        else:
            op = Sum if rng.random() < 0.5 else Product
            kernel = op((kernel, leaf))
    return kernel


def _is_diagonal(k: np.ndarray) -> bool:
    return not np.any(k - np.diag(np.diag(k)))


def sample_gp(kernel, times, rng: np.random.Generator, jitter_start: float = 1e-8,
              jitter_max: float = 1e-2, n_samples: int | None = None) -> np.ndarray:
    """Zero-mean GP path(s) via Cholesky of ``gram + jitter * I``.

    Jitter grows by a factor 10 on each factorisation failure up to
    ``jitter_max``; beyond that ``NotPositiveDefiniteError`` is raised.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 1:
        raise ValueError("need at least one time point")
    shape = (t.size,) if n_samples is None else (t.size, n_samples)
    if isinstance(kernel, White):  # i.i.d.; skip the dense gram
        return math.sqrt(kernel.variance) * rng.standard_normal(shape)
    k = gram(kernel, t)
    z = rng.standard_normal(shape)
    if _is_diagonal(k):
        d = np.diag(k)
        if np.all(d >= 0):
            out = np.sqrt(d)[:, None] * z.reshape(t.size, -1)
            return out.reshape(shape) if n_samples is not None else out[:, 0]
    jitter = jitter_start
    eye = np.eye(t.size)
    while True:
        try:
            chol = np.linalg.cholesky(k + jitter * eye)
            break
        except np.linalg.LinAlgError:
            if jitter * 10 > jitter_max * (1 + 1e-9):
                raise NotPositiveDefiniteError(jitter) from None
            jitter *= 10
    return chol @ z
