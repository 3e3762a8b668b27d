"""Pretraining loop: dynamic structure sampling, batch composition, AdamW and LR schedules."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment.missing import nan_inject
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.forecaster import Forecaster, TokenBatch, make_batch, pinball_loss
from .seeding import derive_rng
from .timeseries import EPS, Scaler, ScalerKind, TimeSeries, fit_scaler

log = logging.getLogger(__name__)

DEFAULT_LENGTHS = {128: 0.05, 256: 0.10, 512: 0.10, 1024: 0.10, 1536: 0.15, 2048: 0.50}
ALT_SCALERS = (ScalerKind.MINMAX, ScalerKind.MEDIAN, ScalerKind.MEAN)


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 2e-4
    min_lr_ratio: float = 0.01
    warmup_ratio: float = 0.003
    schedule: str = "cosine"  # cosine | wsd | cosine_restarts | constant
    stable_ratio: float = 0.9  # wsd plateau fraction
    restarts: int = 4
    betas: tuple[float, float] = (0.9, 0.98)
    weight_decay: float = 0.01
    adam_eps: float = 1e-6
    grad_clip: float = 100.0
    iterations: int = 1000
    batch_size: int = 40
    accumulation: int = 5
    length_distribution: dict = field(default_factory=lambda: dict(DEFAULT_LENGTHS))
    cut_vs_subsample: float = 0.5
    horizon_range: tuple[int, int] = (1, 900)
    scaler_aug_prob: float = 0.5
    nan_prob: float = 0.3  # share of slots that get missing values injected
    nan_point_rate: tuple[float, float] = (0.0, 0.2)
    nan_block_rate: tuple[float, float] = (0.0, 0.02)
    nan_block_mean_len: float = 5.0
    # source name -> weight; unlisted names weigh 1
    mixture_weights: dict = field(default_factory=lambda: {"cauker": 2.0, "augmented": 3.0})
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 0  # 0 = only at the end
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "length_distribution",
                           {int(k): float(v) for k, v in self.length_distribution.items()})
        total = sum(self.length_distribution.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"length_distribution must sum to 1 (got {total})")
        if min(self.length_distribution) < 2:
            raise ValueError("total lengths must be >= 2")
        lo, hi = self.horizon_range
        if not 1 <= lo <= hi:
            raise ValueError("horizon_range must satisfy 1 <= lo <= hi")
        if self.schedule not in ("cosine", "wsd", "cosine_restarts", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        for name in ("cut_vs_subsample", "scaler_aug_prob", "nan_prob", "warmup_ratio", "min_lr_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.batch_size < 1 or self.accumulation < 1 or self.iterations < 0:
            raise ValueError("batch_size and accumulation must be >= 1, iterations >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["length_distribution"] = {str(k): v for k, v in self.length_distribution.items()}
        return d


# ---------------------------------------------------------------------------
# structure sampling


@dataclass(frozen=True)
class Structure:
    total_len: int
    history_len: int
    horizon: int
    mode: str  # cut | subsample | none


def sample_structure(rng: np.random.Generator, cfg: TrainConfig, source_len: int | None = None) -> Structure:
    lengths = list(cfg.length_distribution)
    probs = np.array([cfg.length_distribution[k] for k in lengths])
    total = int(lengths[int(rng.choice(len(lengths), p=probs))])
    mode = "cut" if rng.random() < cfg.cut_vs_subsample else "subsample"
    if source_len is not None and source_len <= total:
        total, mode = int(source_len), "none"
    hi = min(cfg.horizon_range[1], total // 2)
    lo = min(cfg.horizon_range[0], hi)
    horizon = int(rng.integers(max(lo, 1), max(hi, 1) + 1))
    return Structure(total, total - horizon, horizon, mode)


def shorten(series: TimeSeries, st: Structure, rng: np.random.Generator) -> TimeSeries:
    n = len(series)
    if st.mode == "none" or n <= st.total_len:
        return series
    if st.mode == "cut":
        lo = int(rng.integers(0, n - st.total_len + 1))
        return series.slice(lo, lo + st.total_len)
    stride = n // st.total_len
    phase = int(rng.integers(0, n - stride * (st.total_len - 1)))
    idx = phase + stride * np.arange(st.total_len)
    start = series.timestamps()[phase]
    return TimeSeries(series.values[idx], series.mask[idx], start=start, freq=series.freq.scaled(stride),
                      id=series.id, provenance=series.provenance)


def safe_scaler(kind: ScalerKind | str, history: TimeSeries) -> Scaler:
    """Scaler fitted on the observed history; degenerate scales fall back to ``max(|shift|, 1)``."""
    if not history.mask.any():
        return Scaler(ScalerKind(kind), 0.0, 1.0)
    sc = fit_scaler(kind, history)
    if sc.scale <= 1e3 * EPS:
        sc = Scaler(sc.kind, sc.shift, max(abs(sc.shift), 1.0))
    return sc


# ---------------------------------------------------------------------------
# batch composition


@dataclass
class Batch:
    tokens: TokenBatch
    target: torch.Tensor  # (B, max_horizon) scaled future values
    target_mask: torch.Tensor
    scalers: list
    provenance: list


def source_weights(sources: dict, cfg: TrainConfig) -> tuple[list[str], np.ndarray]:
    names = [n for n in sources if len(sources[n])]
    if not names:
        raise ValueError("no non-empty source available")
    w = np.array([float(cfg.mixture_weights.get(n, 1.0)) for n in names])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("mixture weights must be nonnegative and not all zero")
    return names, w / w.sum()


def compose_batch(sources: dict, rng: np.random.Generator, cfg: TrainConfig, size: int | None = None,
                  dtype=torch.float32) -> Batch:
    names, probs = source_weights(sources, cfg)
    histories, horizons, scalers, futures, provenance = [], [], [], [], []
    for _ in range(size or cfg.batch_size):
        name = names[int(rng.choice(len(names), p=probs))]
        pool = sources[name]
        series = pool[int(rng.integers(len(pool)))]
        st = sample_structure(rng, cfg, len(series))
        series = shorten(series, st, rng)
        hist = series.slice(0, st.history_len)
        future = series.slice(st.history_len, st.total_len)
        if rng.random() < cfg.nan_prob:
            injected = nan_inject(hist, rng, float(rng.uniform(*cfg.nan_point_rate)),
                                  float(rng.uniform(*cfg.nan_block_rate)), cfg.nan_block_mean_len)
            if injected.mask.any():
                hist = injected
        kind = ALT_SCALERS[int(rng.integers(len(ALT_SCALERS)))] if rng.random() < cfg.scaler_aug_prob \
            else ScalerKind.ROBUST
        sc = safe_scaler(kind, hist)
        histories.append(hist)
        horizons.append(st.horizon)
        scalers.append(sc)
        futures.append(future)
        provenance.append({"source": name, "id": series.id, "total": st.total_len, "horizon": st.horizon,
                           "mode": st.mode, "scaler": sc.kind.value})
    tokens = make_batch(histories, horizons, scalers, dtype=dtype)
    hmax = max(horizons)
    target = np.zeros((len(futures), hmax))
    tmask = np.zeros((len(futures), hmax), bool)
    for i, (f, sc) in enumerate(zip(futures, scalers)):
        target[i, :len(f)] = np.where(f.mask, sc.apply(f.values), 0.0)
        tmask[i, :len(f)] = f.mask
    return Batch(tokens, torch.as_tensor(target, dtype=dtype), torch.as_tensor(tmask), scalers, provenance)


def quantile_loss(pred: torch.Tensor, target: torch.Tensor, quantiles, mask: torch.Tensor) -> torch.Tensor:
    if not bool(mask.any()):
        raise ValueError("quantile loss needs at least one valid target")
    return pinball_loss(pred, target, mask, quantiles)


# ---------------------------------------------------------------------------
# schedule and optimizer


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError("step must lie in [0, total_steps]")
    peak, floor = cfg.peak_lr, cfg.peak_lr * cfg.min_lr_ratio
    if cfg.schedule == "constant" or total_steps == 0:
        return peak
    warm = cfg.warmup_ratio * total_steps
    if step < warm:
        return peak * step / warm
    if cfg.schedule == "wsd":
        stable_end = warm + cfg.stable_ratio * total_steps
        if step <= stable_end:
            return peak
        frac = (step - stable_end) / max(total_steps - stable_end, 1e-12)
    elif cfg.schedule == "cosine_restarts":
        span = (total_steps - warm) / cfg.restarts
        if step >= total_steps:
            frac = 1.0
        else:
            frac = ((step - warm) % span) / span if span > 0 else 1.0
    else:
        frac = (step - warm) / max(total_steps - warm, 1e-12)
    frac = min(max(frac, 0.0), 1.0)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * frac))


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimizerState":
        return cls({k: torch.zeros_like(p) for k, p in params.items()},
                   {k: torch.zeros_like(p) for k, p in params.items()}, 0)


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    total = math.sqrt(sum(float(torch.sum(g.double() ** 2)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        c = max_norm / total
        return {k: g * c for k, g in grads.items()}, total
    return grads, total


def decays(name: str) -> bool:
    """Decoupled weight decay skips norm gains, biases, the NaN embedding and initial states."""
    return not ("norm" in name or name.endswith("bias") or "nan_embedding" in name or name.endswith("h0"))


@torch.no_grad()
def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float, cfg: TrainConfig) -> float:
    """In-place AdamW update; returns the pre-clip global gradient norm."""
    grads, norm = clip_by_global_norm(grads, cfg.grad_clip)
    state.step += 1
    b1, b2 = cfg.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        update = (m / c1) / (torch.sqrt(v / c2) + cfg.adam_eps)
        if cfg.weight_decay and decays(name):
            p.mul_(1.0 - lr * cfg.weight_decay)
        p.sub_(lr * update)
        if not torch.all(torch.isfinite(p)):
            raise FloatingPointError(f"non-finite parameter after update: {name}")
    return norm


# ---------------------------------------------------------------------------
# loop


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    trace: list  # (step, lr, loss)
    checkpoints: list


def _save(out_dir: Path, model, state: OptimizerState, step: int, cfg: TrainConfig) -> Path:
    extra = {}
    for k in state.m:
        extra[f"opt.m.{k}"] = state.m[k].detach().cpu().numpy()
        extra[f"opt.v.{k}"] = state.v[k].detach().cpu().numpy()
    path = out_dir / f"step_{step:07d}.ckpt"
    save_checkpoint(path, model, extra, {"step": step, "train": cfg.to_dict()})
    return path


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "lr", "loss"])
        for step, lr, loss in trace:
            w.writerow([step, repr(float(lr)), repr(float(loss))])


def batch_loss(model: Forecaster, sources: dict, cfg: TrainConfig, steps) -> float:
    """Mean loss of the current weights on the training batches of ``steps``, without updating."""
    dtype = getattr(torch, cfg.dtype)
    model.to(dtype)
    total = 0.0
    with torch.no_grad():
        for step in steps:
            for micro in range(cfg.accumulation):
                batch = compose_batch(sources, derive_rng(cfg.seed, "train-batch", step, micro), cfg, dtype=dtype)
                pred = model(batch.tokens)
                total += float(quantile_loss(pred, batch.target, model.config.quantiles, batch.target_mask))
    return total / (len(steps) * cfg.accumulation)


def train(model: Forecaster, sources: dict, cfg: TrainConfig, out_dir=None, resume=None,
          stop_after: int | None = None) -> TrainResult:
    """Run (or resume) training; ``stop_after`` ends early at that step, e.g. to test resumption."""
    torch.manual_seed(cfg.seed)
    dtype = getattr(torch, cfg.dtype)
    model.to(dtype)
    params = dict(model.named_parameters())
    state = OptimizerState.zeros_like({k: p.detach() for k, p in params.items()})
    start = 0
    if resume is not None:
        loaded, extra, meta = load_checkpoint(resume)
        model.load_state_dict(loaded.state_dict())
        model.to(dtype)
        params = dict(model.named_parameters())
        for k in params:
            state.m[k] = torch.as_tensor(extra[f"opt.m.{k}"].copy(), dtype=dtype)
            state.v[k] = torch.as_tensor(extra[f"opt.v.{k}"].copy(), dtype=dtype)
        start = state.step = int(meta["step"])
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    trace, checkpoints = [], []
    if out_dir is not None and cfg.iterations == 0:
        checkpoints.append(_save(out_dir, model, state, 0, cfg))
    end = cfg.iterations if stop_after is None else min(stop_after, cfg.iterations)
    model.train()
    for step in range(start, end):
        lr = lr_at(step + 1, cfg.iterations, cfg)
        total_loss = 0.0
        grads = {k: torch.zeros_like(p) for k, p in params.items()}
        for micro in range(cfg.accumulation):
            batch = compose_batch(sources, derive_rng(cfg.seed, "train-batch", step, micro), cfg, dtype=dtype)
            model.zero_grad(set_to_none=True)
            pred = model(batch.tokens)
            loss = quantile_loss(pred, batch.target, model.config.quantiles, batch.target_mask) / cfg.accumulation
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}, micro-batch {micro}: {batch.provenance}")
            loss.backward()
            for k, p in params.items():
                if p.grad is not None:
                    grads[k] += p.grad
            total_loss += float(loss.detach())
        for k, g in grads.items():
            if not torch.all(torch.isfinite(g)):
                raise TrainingError(f"non-finite gradient in {k} at step {step}")
        adamw_step({k: p.data for k, p in params.items()}, grads, state, lr, cfg)
        trace.append((step, lr, total_loss))
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d lr %.3g loss %.5f", step, lr, total_loss)
        done = step + 1
        if out_dir is not None and ((cfg.checkpoint_every and done % cfg.checkpoint_every == 0)
                                    or done == end):
            checkpoints.append(_save(out_dir, model, state, done, cfg))
    if out_dir is not None:
        write_trace(out_dir / "loss.csv", trace)
    return TrainResult(trace, checkpoints)
