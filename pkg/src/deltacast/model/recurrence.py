"""Gated DeltaProduct recurrence: sequential reference and chunkwise parallel form.

Shapes (B batch, H heads, T tokens, n householder factors per token):

    q          (B, H, T, dk)
    k          (B, H, T, n, dk)   unit-norm keys (or zero)
    v          (B, H, T, n, dv)
    beta       (B, H, T, n)
    log_alpha  (B, H, T)          log forget gate, <= 0
    h0         (B, H, dk, dv)

Per token: ``S <- alpha S``; then for each factor ``S <- (I - b k k^T) S + b k v^T``;
the token output is ``S^T q``.
"""

from __future__ import annotations

import torch


def householder_step(state: torch.Tensor, k: torch.Tensor, v: torch.Tensor, beta) -> torch.Tensor:
    """``(I - beta k k^T) S + beta k v^T`` for a single (dk, dv) state or a batch of them."""
    beta = torch.as_tensor(beta, dtype=state.dtype)
    proj = torch.einsum("...k,...kv->...v", k, state)
    return state + beta[..., None, None] * k[..., :, None] * (v - proj)[..., None, :]


def recurrence_sequential(q, k, v, beta, log_alpha, h0):
    """Token-by-token reference; returns ``(outputs (B,H,T,dv), final state)``."""
    state = h0
    outs = []
    n = k.shape[3]
    for t in range(q.shape[2]):
        state = state * torch.exp(log_alpha[:, :, t])[..., None, None]
        for j in range(n):
            state = householder_step(state, k[:, :, t, j], v[:, :, t, j], beta[:, :, t, j])
        outs.append(torch.einsum("bhk,bhkv->bhv", q[:, :, t], state))
    if outs:
        return torch.stack(outs, dim=2), state
    return q.new_zeros(q.shape[:3] + (v.shape[-1],)), state


def _flatten_subtokens(k, v, beta, log_alpha):
    """Spread each token into ``n`` sub-tokens; the gate sits on the first one."""
    B, H, T, n, dk = k.shape
    g = torch.zeros(B, H, T, n, dtype=k.dtype, device=k.device)
    g[..., 0] = log_alpha
    return (k.reshape(B, H, T * n, dk), v.reshape(B, H, T * n, v.shape[-1]),
            beta.reshape(B, H, T * n), g.reshape(B, H, T * n))


def recurrence_chunkwise(q, k, v, beta, log_alpha, h0, chunk_len: int = 32):
    """Chunk-parallel form of ``recurrence_sequential`` (WY representation within chunks).

    Inside a chunk with start state ``S0`` and cumulative log gate ``g``, the
    per-sub-token pseudo-values ``U`` solve the unit lower-triangular system

        (I + tril(beta * D * K K^T, -1)) U = beta V - (beta e^g K) S0,
        D[t, s] = exp(g_t - g_s)  (s <= t),

    after which ``S_t = e^{g_t} S0 + sum_{s<=t} D[t, s] k_s u_s^T``.
    """
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    B, H, T, n, dk = k.shape
    dv = v.shape[-1]
    if T == 0:
        return q.new_zeros(B, H, 0, dv), h0
    pad = (-T) % chunk_len
    if pad:
        z = lambda x: torch.nn.functional.pad(x, (0, 0) * (x.dim() - 3) + (0, pad))
        q, k, v = z(q), z(k), z(v)
        beta = torch.nn.functional.pad(beta, (0, 0, 0, pad))
        log_alpha = torch.nn.functional.pad(log_alpha, (0, pad))
    Tp = T + pad
    nc = Tp // chunk_len
    m = chunk_len * n
    kf, vf, bf, gf = _flatten_subtokens(k, v, beta, log_alpha)
    K = kf.reshape(B, H, nc, m, dk)
    V = vf.reshape(B, H, nc, m, dv)
    Bt = bf.reshape(B, H, nc, m)
    G = gf.reshape(B, H, nc, m).cumsum(-1)
    Q = q.reshape(B, H, nc, chunk_len, dk)

    idx = torch.arange(m, device=k.device)
    lower_incl = idx[:, None] >= idx[None, :]
    diff = G[..., :, None] - G[..., None, :]
    D = torch.exp(diff.masked_fill(~lower_incl, float("-inf")))  # (.., m, m), zero above diagonal
    kk = K @ K.transpose(-1, -2)
    strict = torch.tril(Bt[..., :, None] * D * kk, diagonal=-1)
    A = torch.eye(m, dtype=k.dtype, device=k.device) + strict
    rhs = torch.cat([Bt[..., None] * V, (Bt * torch.exp(G))[..., None] * K], dim=-1)
    sol = torch.linalg.solve_triangular(A, rhs, upper=False, unitriangular=True)
    Uv, W = sol[..., :dv], sol[..., dv:]

    last = (torch.arange(chunk_len, device=k.device) + 1) * n - 1  # each token's final sub-token
    Gf = G[..., last]  # (B,H,nc,C)
    Df = D[..., last, :]  # (B,H,nc,C,m)
    qk = (Q @ K.transpose(-1, -2)) * Df
    decay_to_end = torch.exp(G[..., -1:] - G)  # (B,H,nc,m)

    outs = []
    state = h0
    for c in range(nc):
        U = Uv[:, :, c] - W[:, :, c] @ state
        o = torch.exp(Gf[:, :, c])[..., None] * (Q[:, :, c] @ state) + qk[:, :, c] @ U
        outs.append(o)
        state = (torch.exp(G[:, :, c, -1])[..., None, None] * state
                 + K[:, :, c].transpose(-1, -2) @ (decay_to_end[:, :, c, :, None] * U))
    out = torch.cat(outs, dim=2)[:, :, :T]
    return out, state


def transition_operator(k: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Composed ``prod_j (I - beta_j k_j k_j^T)`` for one token (k: (n, dk), beta: (n,))."""
    dk = k.shape[-1]
    a = torch.eye(dk, dtype=k.dtype)
    for j in range(k.shape[0]):
        a = (torch.eye(dk, dtype=k.dtype) - beta[j] * torch.outer(k[j], k[j])) @ a
    return a
