"""Gaussian-process based generators: KernelSynth, GP with periodic spikes, CauKer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import gp
from ..timeseries import Frequency, TimeSeries, seasonal_period
from ._common import make_series

KERNEL_SYNTH_BANK = {"periodic": 2.0, "rbf": 1.0, "rational_quadratic": 1.0, "white": 1.0}


def zscore(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)
    sd = x.std()
    x = x - x.mean()
    return x / sd if sd > 1e-12 else x


def render_kernel_synth(kernel, length: int, rng: np.random.Generator) -> np.ndarray:
    path = gp.sample_gp(kernel, np.arange(length, dtype=float), rng)
    return zscore(path)


def gen_kernel_synth(rng: np.random.Generator, length: int, freq: Frequency, max_kernels: int = 5) -> TimeSeries:
    if length < 2:
        raise ValueError("KernelSynth needs length >= 2")
    kernel = gp.sample_composite_kernel(rng, KERNEL_SYNTH_BANK, max_kernels,
                                        gp.default_period_sampler(length), span=float(length))
    y = render_kernel_synth(kernel, length, rng)
    return make_series(y, rng, freq, "kernel_synth", standardize=False, kernel=gp.describe(kernel))


# ---------------------------------------------------------------------------


def frequency_period_sampler(freq: Frequency, length: int):
    """Half the time use a multiple of the frequency's natural season, else log-uniform."""
    fallback = gp.default_period_sampler(length)
    season = seasonal_period(freq)
    options = [season * m for m in (1, 2, 4, 7) if season > 1 and 2 <= season * m <= length / 2]

    def sample(rng: np.random.Generator) -> float:
        if options and rng.random() < 0.5:
            return float(options[int(rng.integers(len(options)))])
        return fallback(rng)

    return sample


def dominant_period(kernel) -> float | None:
    periods = [leaf.period for leaf in gp.leaves(kernel) if isinstance(leaf, gp.Periodic)]
    if not periods:
        return None
    return max(periods)


def inject_periodic_spikes(y: np.ndarray, period: float, rng: np.random.Generator, jitter: int = 1,
                           height: float | None = None, sign: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Add single-step spikes at ``round(k * period) + U{-jitter..jitter}``."""
    n = y.shape[0]
    centers = np.round(np.arange(0.0, n, period)).astype(int)
    offsets = rng.integers(-jitter, jitter + 1, size=centers.size) if jitter > 0 else np.zeros(centers.size, int)
    pos = np.unique(np.clip(centers + offsets, 0, n - 1))
    sd = y.std() if y.std() > 0 else 1.0
    height = rng.uniform(2.0, 5.0) * sd if height is None else height
    sign = (1.0 if rng.random() < 0.5 else -1.0) if sign is None else sign
    out = y.copy()
    out[pos] += sign * height
    return out, pos


def render_gp(kernel, length: int, rng: np.random.Generator, spike_prob: float = 0.3,
              period_sampler=None, jitter: int = 1) -> tuple[np.ndarray, np.ndarray | None]:
    y = gp.sample_gp(kernel, np.arange(length, dtype=float), rng)
    if rng.random() >= spike_prob:
        return y, None
    period = dominant_period(kernel)
    if period is None or period > length / 2:
        period = (period_sampler or gp.default_period_sampler(length))(rng)
    period = max(period, 2.0)
    return inject_periodic_spikes(y, period, rng, jitter=jitter)


def gen_gp(rng: np.random.Generator, length: int, freq: Frequency, spike_prob: float = 0.3,
           bank_weights: dict | None = None, max_kernels: int = 6) -> TimeSeries:
    if length < 2:
        raise ValueError("GP generator needs length >= 2")
    sampler = frequency_period_sampler(freq, length)
    kernel = gp.sample_composite_kernel(rng, bank_weights, max_kernels, sampler, span=float(length))
    y, spikes = render_gp(kernel, length, rng, spike_prob, sampler)
    return make_series(y, rng, freq, "gp", kernel=gp.describe(kernel), spikes=spikes is not None)


# ---------------------------------------------------------------------------
# CauKer: structural causal model over GP roots

ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "sin": np.sin,
    "tanh": np.tanh,
    "identity": lambda x: x,
}
N_CHANNELS = 21
N_HIDDEN = 7
MAX_PARENTS = 3


@dataclass(frozen=True)
class MeanSpec:
    kind: str = "zero"  # zero | linear | exponential | impulses
    a: float = 0.0
    b: float = 0.0
    impulses: tuple[tuple[int, float], ...] = ()

    def __call__(self, t: np.ndarray) -> np.ndarray:
        u = t / max(t[-1], 1.0)
        if self.kind == "linear":
            return self.a * u + self.b
        if self.kind == "exponential":
            return self.a * np.exp(self.b * u)
        out = np.zeros_like(t, dtype=float)
        for pos, height in self.impulses:
            if 0 <= pos < out.size:
                out[pos] += height
        return out


@dataclass(frozen=True)
class ScmGraph:
    """Nodes are in topological order; node ``i`` may only have parents ``< i``."""

    parents: tuple[tuple[int, ...], ...]
    weights: tuple[tuple[float, ...], ...]
    biases: tuple[float, ...]
    activations: tuple[str, ...]
    kernels: tuple  # per node; None for non-root nodes
    means: tuple  # per node MeanSpec; ignored for non-root nodes
    n_channels: int = N_CHANNELS

    def __post_init__(self):
        for i, ps in enumerate(self.parents):
            if any(p >= i or p < 0 for p in ps):
                raise ValueError(f"node {i} has a parent that breaks topological order")
            if len(ps) > MAX_PARENTS:
                raise ValueError(f"node {i} exceeds the in-degree cap")
            if not ps and self.kernels[i] is None:
                raise ValueError(f"root node {i} needs a kernel")

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    @property
    def channel_nodes(self) -> range:
        return range(self.n_nodes - self.n_channels, self.n_nodes)


def sample_mean(rng: np.random.Generator, length: int) -> MeanSpec:
    kind = ["zero", "linear", "exponential", "impulses"][int(rng.integers(4))]
    if kind == "linear":
        return MeanSpec("linear", float(rng.normal(0, 1.0)), float(rng.normal(0, 0.5)))
    if kind == "exponential":
        return MeanSpec("exponential", float(rng.normal(0, 0.5)), float(rng.uniform(-2, 2)))
    if kind == "impulses":
        k = int(rng.integers(1, 4))
        pos = rng.integers(0, length, size=k)
        return MeanSpec("impulses", impulses=tuple((int(p), float(rng.normal(0, 3.0))) for p in pos))
    return MeanSpec()


def sample_scm(rng: np.random.Generator, length: int, n_hidden: int = N_HIDDEN,
               n_channels: int = N_CHANNELS, root_prob: float = 0.3) -> ScmGraph:
    n = n_hidden + n_channels
    parents, weights, biases, acts, kernels, means = [], [], [], [], [], []
    names = list(ACTIVATIONS)
    for i in range(n):
        if i == 0 or rng.random() < root_prob:
            ps = ()
        else:
            k = int(rng.integers(1, min(MAX_PARENTS, i) + 1))
            ps = tuple(sorted(int(p) for p in rng.choice(i, size=k, replace=False)))
        parents.append(ps)
        weights.append(tuple(float(w) for w in rng.normal(0, 1.0, size=len(ps))))
        biases.append(float(rng.normal(0, 0.5)) if ps else 0.0)
        acts.append(names[int(rng.integers(len(names)))])
        if ps:
            kernels.append(None)
            means.append(MeanSpec())
        else:
            kernels.append(gp.sample_composite_kernel(rng, None, 4, gp.default_period_sampler(length),
                                                      span=float(length)))
            means.append(sample_mean(rng, length))
    return ScmGraph(tuple(parents), tuple(weights), tuple(biases), tuple(acts), tuple(kernels),
                    tuple(means), n_channels)


def render_scm(graph: ScmGraph, length: int, rng: np.random.Generator) -> np.ndarray:
    """Raw node values, shape ``(n_nodes, length)``."""
    t = np.arange(length, dtype=float)
    nodes = np.zeros((graph.n_nodes, length))
    for i in range(graph.n_nodes):
        ps = graph.parents[i]
        if not ps:
            nodes[i] = gp.sample_gp(graph.kernels[i], t, rng) + graph.means[i](t)
        else:
            z = graph.biases[i] + sum(w * nodes[p] for p, w in zip(ps, graph.weights[i]))
            with np.errstate(over="ignore"):
                nodes[i] = ACTIVATIONS[graph.activations[i]](z)
    return nodes


def gen_cauker(rng: np.random.Generator, length: int, freq: Frequency) -> list[TimeSeries]:
    if length < 2:
        raise ValueError("CauKer needs length >= 2")
    graph = sample_scm(rng, length)
    nodes = render_scm(graph, length, rng)
    out = []
    for c, node in enumerate(graph.channel_nodes):
        out.append(make_series(nodes[node], rng, freq, "cauker", channel=c,
                               activation=graph.activations[node], n_parents=len(graph.parents[node])))
    return out
