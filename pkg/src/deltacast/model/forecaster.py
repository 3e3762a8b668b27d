"""Quantile forecaster: token embedding, stacked DeltaProduct blocks with state weaving, quantile head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..timeseries import N_TIME_FEATURES, Scaler, TimeSeries, fit_scaler, padded_time_features
from .layers import Block, RMSNorm

DEFAULT_QUANTILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 512
    layers: int = 10
    heads: int = 4
    householders: int = 4
    conv_kernel: int = 16
    allow_negative_eigenvalues: bool = True
    state_weaving: bool = True
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    mlp_hidden: int | None = None  # defaults to embed_dim
    chunk_len: int = 32
    mode: str = "chunk"  # chunk | sequential

    def __post_init__(self):
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.householders < 1 or self.layers < 1:
            raise ValueError("householders and layers must be >= 1")
        q = np.asarray(self.quantiles)
        if q.size == 0 or np.any(q <= 0) or np.any(q >= 1) or np.any(np.diff(q) <= 0):
            raise ValueError("quantiles must be strictly increasing inside (0, 1)")
        if self.mode not in ("chunk", "sequential"):
            raise ValueError("mode must be 'chunk' or 'sequential'")

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or self.embed_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "quantiles": tuple(d.get("quantiles", DEFAULT_QUANTILES))})


@dataclass
class TokenBatch:
    """Right-padded batch.

    values/mask: (B, Hmax) history values and observation mask (scaled domain).
    features: (B, Tmax, 6) time features for history followed by future.
    hist_len, horizon: (B,) int tensors.
    shift, scale: (B,) scaler parameters used to return to the original domain.
    """

    values: torch.Tensor
    mask: torch.Tensor
    features: torch.Tensor
    hist_len: torch.Tensor
    horizon: torch.Tensor
    shift: torch.Tensor = field(default=None)
    scale: torch.Tensor = field(default=None)

    def __post_init__(self):
        B = self.values.shape[0]
        if self.shift is None:
            self.shift = torch.zeros(B, dtype=self.values.dtype)
        if self.scale is None:
            self.scale = torch.ones(B, dtype=self.values.dtype)

    @property
    def n_tokens(self) -> int:
        return self.features.shape[1]

    def positions(self):
        pos = torch.arange(self.n_tokens)
        is_hist = pos[None, :] < self.hist_len[:, None]
        end = self.hist_len + self.horizon
        is_fut = (~is_hist) & (pos[None, :] < end[:, None])
        return is_hist, is_fut

    def to(self, dtype) -> "TokenBatch":
        cast = lambda x: x.to(dtype)
        return TokenBatch(cast(self.values), self.mask, cast(self.features), self.hist_len, self.horizon,
                          cast(self.shift), cast(self.scale))

    def select(self, idx) -> "TokenBatch":
        return TokenBatch(self.values[idx], self.mask[idx], self.features[idx], self.hist_len[idx],
                          self.horizon[idx], self.shift[idx], self.scale[idx])


def make_batch(histories: list[TimeSeries], horizons, scalers: list[Scaler] | None = None,
               dtype=torch.float32) -> TokenBatch:
    """Scale each history (robust by default) and lay the batch out with right padding."""
    horizons = [int(h) for h in np.broadcast_to(np.asarray(horizons), (len(histories),))]
    if scalers is None:
        scalers = [fit_scaler("robust", s) if s.mask.any() else Scaler("robust", 0.0, 1.0) for s in histories]
    hist = [len(s) for s in histories]
    hmax = max(hist) if hist else 0
    tmax = max((a + b for a, b in zip(hist, horizons)), default=0)
    B = len(histories)
    values = np.zeros((B, hmax))
    mask = np.zeros((B, hmax), bool)
    feats = np.zeros((B, tmax, N_TIME_FEATURES))
    for i, (s, h, sc) in enumerate(zip(histories, horizons, scalers)):
        n = len(s)
        values[i, :n] = np.where(s.mask, sc.apply(s.values), 0.0)
        mask[i, :n] = s.mask
        feats[i, :n + h] = padded_time_features(s.start, s.freq, n, h)
    return TokenBatch(
        torch.as_tensor(values, dtype=dtype), torch.as_tensor(mask), torch.as_tensor(feats, dtype=dtype),
        torch.as_tensor(hist, dtype=torch.long), torch.as_tensor(horizons, dtype=torch.long),
        torch.as_tensor([sc.shift for sc in scalers], dtype=dtype),
        torch.as_tensor([sc.scale for sc in scalers], dtype=dtype),
    )


class Forecaster(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.value_proj = nn.Linear(1, d, bias=False)
        self.time_proj = nn.Linear(N_TIME_FEATURES, d, bias=False)
        self.nan_embedding = nn.Parameter(torch.randn(d) * 0.02)
        self.blocks = nn.ModuleList(
            Block(d, config.heads, config.householders, config.conv_kernel, config.hidden,
                  config.allow_negative_eigenvalues)
            for _ in range(config.layers)
        )
        self.final_norm = RMSNorm(d)
        self.head = nn.Linear(d, len(config.quantiles))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def embed(self, batch: TokenBatch) -> torch.Tensor:
        is_hist, _ = batch.positions()
        T = batch.n_tokens
        B = batch.values.shape[0]
        dtype = self.time_proj.weight.dtype
        vals = torch.zeros(B, T, dtype=dtype)
        obs = torch.zeros(B, T, dtype=torch.bool)
        h = min(batch.values.shape[1], T)
        vals[:, :h] = batch.values[:, :h].to(dtype)
        obs[:, :h] = batch.mask[:, :h]
        observed = (is_hist & obs)[..., None]
        missing = (is_hist & ~obs)[..., None]
        emb = self.time_proj(batch.features.to(dtype))
        emb = emb + torch.where(observed, self.value_proj(vals[..., None]), torch.zeros((), dtype=dtype))
        return emb + missing.to(dtype) * self.nan_embedding

    def hidden_states(self, batch: TokenBatch):
        x = self.embed(batch)
        is_hist, is_fut = batch.positions()
        valid = is_hist | is_fut
        B = x.shape[0]
        carry = None
        for block in self.blocks:
            h0 = block.h0.expand(B, *block.h0.shape)
            if self.config.state_weaving and carry is not None:
                h0 = h0 + carry
            x, carry = block(x, valid, h0, self.config.mode, self.config.chunk_len)
        return self.final_norm(x), is_fut

    def forward(self, batch: TokenBatch) -> torch.Tensor:
        """Scaled-domain quantiles, shape (B, max_horizon, |Q|); rows past a sequence's horizon are 0."""
        x, _ = self.hidden_states(batch)
        hmax = int(batch.horizon.max()) if batch.horizon.numel() else 0
        B = x.shape[0]
        if hmax == 0:
            return x.new_zeros(B, 0, len(self.config.quantiles))
        j = torch.arange(hmax)
        idx = (batch.hist_len[:, None] + j[None, :]).clamp(max=x.shape[1] - 1)
        feats = torch.gather(x, 1, idx[..., None].expand(B, hmax, x.shape[-1]))
        out = self.head(feats)
        keep = (j[None, :] < batch.horizon[:, None])[..., None]
        return torch.where(keep, out, torch.zeros((), dtype=out.dtype))

    @torch.no_grad()
    def forecast(self, batch: TokenBatch) -> tuple[np.ndarray, int]:
        """Original-domain quantiles with crossings repaired by sorting; returns (preds, n_crossings)."""
        self.eval()
        pred = self.forward(batch.to(self.time_proj.weight.dtype))
        crossings = int((pred.diff(dim=-1) < 0).any(-1).sum())
        pred = torch.sort(pred, dim=-1).values
        pred = pred * batch.scale[:, None, None].to(pred.dtype) + batch.shift[:, None, None].to(pred.dtype)
        return pred.cpu().numpy().astype(np.float64), crossings


def pinball_loss(pred: torch.Tensor, target: torch.Tensor, target_mask: torch.Tensor, quantiles) -> torch.Tensor:
    """Mean pinball loss over observed target positions and all quantiles.

    At zero residual the subgradient uses the ``q`` branch.
    """
    q = torch.as_tensor(quantiles, dtype=pred.dtype)
    e = target[..., None] - pred
    loss = torch.where(e >= 0, q * e, (q - 1) * e)
    w = target_mask[..., None].to(pred.dtype)
    denom = w.sum() * q.numel()
    return (loss * w).sum() / torch.clamp(denom, min=1.0)


class NonFiniteGradientError(FloatingPointError):
    pass


def gradients(model: Forecaster, batch: TokenBatch, target: torch.Tensor, target_mask: torch.Tensor,
              scale: float = 1.0) -> tuple[float, dict[str, torch.Tensor]]:
    """Loss and reverse-mode gradients for every parameter."""
    model.zero_grad(set_to_none=True)
    pred = model(batch)
    loss = scale * pinball_loss(pred, target, target_mask, model.config.quantiles)
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.all(torch.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
        grads[name] = g.detach().clone()
    return float(loss.detach()), grads
