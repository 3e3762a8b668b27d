import math

import numpy as np
import pytest

from deltacast.gp import (BANK, RBF, Constant, Linear, Matern, NotPositiveDefiniteError, Periodic, Polynomial,
                          Product, RationalQuadratic, Sum, White, gram, leaves, sample_composite_kernel, sample_gp)

GRID = np.linspace(0.0, 3.0, 9)

ALL_BASE = [RBF(0.7), RationalQuadratic(0.5, 2.0), Periodic(1.0, 1.3), White(0.3), Linear(0.4, 0.2),
            Matern(0.6, 0.5), Matern(0.6, 1.5), Matern(0.6, 2.5), Polynomial(3, 0.5), Constant(1.7)]


def brute(kernel, t1, t2):
    """Per-entry scalar evaluation written independently of the vectorised kernels."""
    if isinstance(kernel, Sum):
        return sum(brute(c, t1, t2) for c in kernel.children)
    if isinstance(kernel, Product):
        return math.prod(brute(c, t1, t2) for c in kernel.children)
    r = abs(t1 - t2)
    if isinstance(kernel, RBF):
        return math.exp(-0.5 * r * r / kernel.lengthscale**2)
    if isinstance(kernel, RationalQuadratic):
        return (1 + r * r / (2 * kernel.alpha * kernel.lengthscale**2)) ** -kernel.alpha
    if isinstance(kernel, Periodic):
        return math.exp(-2 * math.sin(math.pi * r / kernel.period) ** 2 / kernel.lengthscale**2)
    if isinstance(kernel, White):
        return kernel.variance if t1 == t2 else 0.0
    if isinstance(kernel, Linear):
        return kernel.variance * (t1 - kernel.offset) * (t2 - kernel.offset)
    if isinstance(kernel, Matern):
        s = r / kernel.lengthscale
        if kernel.nu == 0.5:
            return math.exp(-s)
        if kernel.nu == 1.5:
            return (1 + math.sqrt(3) * s) * math.exp(-math.sqrt(3) * s)
        return (1 + math.sqrt(5) * s + 5 * s * s / 3) * math.exp(-math.sqrt(5) * s)
    if isinstance(kernel, Polynomial):
        return (kernel.variance * t1 * t2 + 1.0) ** kernel.degree
    if isinstance(kernel, Constant):
        return kernel.value
    raise TypeError(kernel)


def brute_gram(kernel, t):
    return np.array([[brute(kernel, a, b) for b in t] for a in t])


@pytest.mark.parametrize("kernel", ALL_BASE, ids=lambda k: type(k).__name__)
def test_base_kernels_match_closed_forms(kernel):
    assert np.allclose(gram(kernel, GRID), brute_gram(kernel, GRID), rtol=1e-12, atol=1e-12)


def test_rbf_values():
    k = gram(RBF(1.0), np.array([0.0, 1.0]))
    assert k[0, 0] == 1.0
    assert k[0, 1] == pytest.approx(0.60653, abs=1e-5)


def test_white_is_identity():
    assert np.array_equal(gram(White(1.0), np.linspace(0, 1, 7)), np.eye(7))


def test_composite_equals_elementwise_children():
    k = Sum((Product((RBF(0.5), Periodic(1.0, 0.8))), Linear(0.3, 0.1), White(0.01)))
    assert np.allclose(gram(k, GRID), brute_gram(k, GRID), rtol=1e-12, atol=1e-12)


def test_gram_symmetric_to_the_bit():
    rng = np.random.default_rng(3)
    for _ in range(20):
        k = sample_composite_kernel(rng, span=10.0)
        g = gram(k, np.sort(rng.uniform(0, 10, 30)))
        assert np.array_equal(g, g.T)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        RBF(0.0)
    with pytest.raises(ValueError):
        Matern(1.0, 1.0)
    with pytest.raises(ValueError):
        Polynomial(5, 1.0)
    with pytest.raises(ValueError):
        Periodic(1.0, -1.0)


def test_single_leaf_bound():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = sample_composite_kernel(rng, max_kernels=1)
        assert not isinstance(k, (Sum, Product))


def test_leaf_count_range_and_determinism():
    rng = np.random.default_rng(1)
    counts = {len(leaves(sample_composite_kernel(rng, max_kernels=6))) for _ in range(300)}
    assert counts == set(range(1, 7))
    a = sample_composite_kernel(np.random.default_rng(9))
    b = sample_composite_kernel(np.random.default_rng(9))
    assert repr(a) == repr(b)


def test_bank_frequencies_match_weights():
    rng = np.random.default_rng(2)
    names = {type(BANK[n](np.random.default_rng(0), 1.0, lambda r: 0.5)).__name__: n for n in BANK}
    counts = dict.fromkeys(BANK, 0)
    total = 0
    for _ in range(10_000):
        for leaf in leaves(sample_composite_kernel(rng, max_kernels=1)):
            counts[names[type(leaf).__name__]] += 1
            total += 1
    p = 1 / len(BANK)
    sigma = math.sqrt(total * p * (1 - p))
    for n, c in counts.items():
        assert abs(c - total * p) <= 3 * sigma, n


def test_zero_weights_excluded():
    rng = np.random.default_rng(4)
    w = {"rbf": 1.0, "white": 0.0, "periodic": 0.0}
    for _ in range(100):
        assert all(isinstance(leaf, RBF) for leaf in leaves(sample_composite_kernel(rng, w)))
    with pytest.raises(ValueError):
        sample_composite_kernel(rng, {"rbf": 0.0})


def test_white_sample_variance():
    x = sample_gp(White(1.0), np.arange(50_000.0), np.random.default_rng(5))
    assert abs(x.var() - 1.0) < 0.02


def test_constant_kernel_path_is_flat():
    x = sample_gp(Constant(2.0), np.linspace(0, 1, 40), np.random.default_rng(6))
    assert np.ptp(x) < 1e-3


def test_sample_deterministic():
    k = Sum((RBF(0.3), Periodic(1.0, 0.5)))
    t = np.linspace(0, 2, 64)
    assert np.array_equal(sample_gp(k, t, np.random.default_rng(7)), sample_gp(k, t, np.random.default_rng(7)))


def test_empirical_covariance_converges():
    k = Sum((RBF(0.8), White(0.05)))
    t = np.linspace(0, 2, 8)
    paths = sample_gp(k, t, np.random.default_rng(8), n_samples=20_000)
    emp = paths @ paths.T / paths.shape[1]
    g = gram(k, t)
    assert np.linalg.norm(emp - g) / np.linalg.norm(g) < 0.05


def test_jitter_escalation_gives_up_with_final_jitter():
    class Broken:
        def __call__(self, t1, t2):
            return -np.ones((np.size(t1), np.size(t2))) - np.eye(np.size(t1))

    with pytest.raises(NotPositiveDefiniteError) as exc:
        sample_gp(Broken(), np.arange(4.0), np.random.default_rng(0))
    assert exc.value.jitter == pytest.approx(1e-2)


def test_near_singular_long_lengthscale_is_repaired():
    x = sample_gp(RBF(50.0), np.linspace(0, 1, 200), np.random.default_rng(1))
    assert np.all(np.isfinite(x))
