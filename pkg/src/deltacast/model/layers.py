"""Building blocks: RMS pre-norm, causal short convolution, DeltaProduct token mixer, gated MLP."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .recurrence import recurrence_chunkwise, recurrence_sequential


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.weight


class ShortConv(nn.Module):
    """Causal depthwise convolution (zero left padding) followed by SiLU."""

    def __init__(self, channels: int, kernel_size: int):
        super().__init__()
        if not 1 <= kernel_size <= 32:
            raise ValueError("short convolution kernel must have length 1..32")
        self.kernel_size = kernel_size
        self.weight = nn.Parameter(torch.zeros(channels, 1, kernel_size))
        with torch.no_grad():
            self.weight[:, 0, -1] = 1.0  # start close to a pass-through
            self.weight.add_(torch.randn_like(self.weight) * 0.02)

    def forward(self, x):  # x: (B, T, C)
        xt = F.pad(x.transpose(1, 2), (self.kernel_size - 1, 0))
        return F.silu(F.conv1d(xt, self.weight, groups=x.shape[-1]).transpose(1, 2))


class DeltaProductMixer(nn.Module):
    def __init__(self, dim: int, heads: int, householders: int, conv_kernel: int,
                 allow_negative_eigenvalues: bool = True):
        super().__init__()
        if dim % heads:
            raise ValueError("embed_dim must be divisible by heads")
        self.dim, self.heads, self.n = dim, heads, householders
        self.head_dim = dim // heads
        self.neg_eig = allow_negative_eigenvalues
        self.q_proj = nn.Linear(dim, dim, bias=False)
        self.k_proj = nn.Linear(dim, householders * dim, bias=False)
        self.v_proj = nn.Linear(dim, householders * dim, bias=False)
        self.b_proj = nn.Linear(dim, householders * heads, bias=False)
        self.a_proj = nn.Linear(dim, heads, bias=True)
        self.q_conv = ShortConv(dim, conv_kernel)
        self.k_conv = ShortConv(householders * dim, conv_kernel)
        self.v_conv = ShortConv(householders * dim, conv_kernel)
        self.o_proj = nn.Linear(dim, dim, bias=False)

    def streams(self, u, valid):
        """Per-head recurrence inputs; padded tokens get beta = 0 and no decay."""
        B, T, _ = u.shape
        h, n, dh = self.heads, self.n, self.head_dim
        q = self.q_conv(self.q_proj(u)).view(B, T, h, dh).transpose(1, 2)
        k = self.k_conv(self.k_proj(u)).view(B, T, n, h, dh).permute(0, 3, 1, 2, 4)
        v = self.v_conv(self.v_proj(u)).view(B, T, n, h, dh).permute(0, 3, 1, 2, 4)
        q = F.normalize(q, dim=-1, eps=1e-6)
        k = F.normalize(k, dim=-1, eps=1e-6)
        gate = torch.sigmoid(self.b_proj(u)).view(B, T, n, h).permute(0, 3, 1, 2)
        beta = 2.0 * gate if self.neg_eig else gate
        log_alpha = -F.softplus(self.a_proj(u)).transpose(1, 2)
        keep = valid[:, None, :].to(u.dtype)
        return q, k, v, beta * keep[..., None], log_alpha * keep

    def forward(self, u, valid, h0, mode: str = "chunk", chunk_len: int = 32):
        q, k, v, beta, log_alpha = self.streams(u, valid)
        if mode == "chunk":
            o, state = recurrence_chunkwise(q, k, v, beta, log_alpha, h0, chunk_len)
        else:
            o, state = recurrence_sequential(q, k, v, beta, log_alpha, h0)
        B, _, T, _ = o.shape
        return self.o_proj(o.transpose(1, 2).reshape(B, T, self.dim)), state


class GatedMLP(nn.Module):
    """``Wo(SiLU(W1 u) * W2 u)``."""

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.w1 = nn.Linear(dim, hidden, bias=False)
        self.w2 = nn.Linear(dim, hidden, bias=False)
        self.wo = nn.Linear(hidden, dim, bias=False)

    def forward(self, u):
        return self.wo(F.silu(self.w1(u)) * self.w2(u))


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, householders: int, conv_kernel: int, mlp_hidden: int,
                 allow_negative_eigenvalues: bool = True):
        super().__init__()
        self.norm1 = RMSNorm(dim)
        self.mixer = DeltaProductMixer(dim, heads, householders, conv_kernel, allow_negative_eigenvalues)
        self.norm2 = RMSNorm(dim)
        self.mlp = GatedMLP(dim, mlp_hidden)
        dh = dim // heads
        self.h0 = nn.Parameter(torch.zeros(heads, dh, dh))

    def forward(self, x, valid, h0, mode: str = "chunk", chunk_len: int = 32):
        mixed, state = self.mixer(self.norm1(x), valid, h0, mode, chunk_len)
        x = x + mixed
        return x + self.mlp(self.norm2(x)), state
