"""Linear attention with positive feature maps, in three equivalent modes.

``linear_attention`` computes masked attention in O(L) by accumulating the
running sums S = Σ φ(k) vᵀ and z = Σ φ(k) blockwise (never materializing the
L×L score matrix beyond a block).  ``attention_step`` advances the same
recurrence one token at a time for autoregressive decoding; a prefix
processed in parallel and then continued step-by-step matches an
uninterrupted pass.  Anti-causal masking (used by the encoder) is the causal
computation on the reversed sequence.

Feature maps are applied by the caller, so gradients here are with respect
to the mapped tensors; ``feature_map``/``feature_map_grad`` provide the
1 + elu(x) map and its derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-6  # attention normalizer guard, shared by every mode


def feature_map(x: np.ndarray) -> np.ndarray:
    """1 + elu(x): identity + 1 above zero, exp below; strictly positive."""
    return np.where(x >= 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


def feature_map_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class AttentionState:
    """Per-layer recurrent attention state: S (H, D, Dv) and z (H, D)."""

    s: np.ndarray
    z: np.ndarray

    @classmethod
    def zeros(cls, n_heads: int, head_dim: int, dtype=np.float32) -> "AttentionState":
        return cls(np.zeros((n_heads, head_dim, head_dim), dtype=dtype),
                   np.zeros((n_heads, head_dim), dtype=dtype))

    def copy(self) -> "AttentionState":
        return AttentionState(self.s.copy(), self.z.copy())


def attention_step(state: AttentionState, qf: np.ndarray, kf: np.ndarray,
                   v: np.ndarray) -> np.ndarray:
    """One recurrent update: fold (kf, v) into the state, read out with qf.

    qf, kf, v: (H, D) feature-mapped query/key and value for one token.
    Mutates ``state`` in place and returns the (H, D) output.
    """
    state.s += kf[:, :, None] * v[:, None, :]
    state.z += kf
    num = np.einsum("hd,hde->he", qf, state.s)
    den = np.einsum("hd,hd->h", qf, state.z) + EPS
    return num / den[:, None]


def _flip(x):
    return np.flip(x, axis=-2)


def linear_attention(qf: np.ndarray, kf: np.ndarray, v: np.ndarray, *,
                     anticausal: bool = False, block: int = 64,
                     return_state: bool = False, need_cache: bool = False):
    """Masked linear attention over (..., L, D) tensors.

    out_t = Σ_{s∈allowed(t)} (qf_t · kf_s) v_s / (Σ_{s∈allowed(t)} qf_t · kf_s + EPS)
    with allowed(t) = {s ≤ t} (causal) or {s ≥ t} (anti-causal).

    Returns ``out`` plus, when requested, the final (S, z) accumulators and
    an opaque cache for :func:`linear_attention_backward`.
    """
    if anticausal:
        qf, kf, v = _flip(qf), _flip(kf), _flip(v)

    lead = qf.shape[:-2]
    L, d = qf.shape[-2:]
    dv = v.shape[-1]
    dtype = qf.dtype
    out = np.empty(lead + (L, dv), dtype=dtype)
    s_acc = np.zeros(lead + (d, dv), dtype=dtype)
    z_acc = np.zeros(lead + (d,), dtype=dtype)
    blocks = []
    for lo in range(0, L, block):
        sl = slice(lo, min(lo + block, L))
        qb, kb, vb = qf[..., sl, :], kf[..., sl, :], v[..., sl, :]
        n = qb.shape[-2]
        mask = np.tril(np.ones((n, n), dtype=dtype))
        scores = (qb @ kb.swapaxes(-1, -2)) * mask
        num = scores @ vb + qb @ s_acc
        den = scores.sum(-1) + (qb @ z_acc[..., None])[..., 0] + EPS
        out[..., sl, :] = num / den[..., None]
        if need_cache:
            blocks.append((s_acc.copy(), z_acc.copy(), den))
        s_acc = s_acc + kb.swapaxes(-1, -2) @ vb
        z_acc = z_acc + kb.sum(-2)

    cache = (qf, kf, v, out, blocks, block, anticausal) if need_cache else None
    result = [out if not anticausal else _flip(out)]
    if return_state:
        result.append((s_acc, z_acc))
    if need_cache:
        result.append(cache)
    return result[0] if len(result) == 1 else tuple(result)


def linear_attention_backward(dout: np.ndarray, cache):
    """Gradients of linear_attention w.r.t. (qf, kf, v); zero initial state."""
    qf, kf, v, out, blocks, block, anticausal = cache
    if anticausal:
        dout = _flip(dout)

    L, d = qf.shape[-2:]
    dv = v.shape[-1]
    dtype = qf.dtype
    dqf = np.empty_like(qf)
    dkf = np.empty_like(kf)
    dvv = np.empty_like(v)

    # forward pass for dqf, reusing the cached per-block incoming states
    gs, hs = [], []
    for bi, lo in enumerate(range(0, L, block)):
        sl = slice(lo, min(lo + block, L))
        s_in, z_in, den = blocks[bi]
        db, ob = dout[..., sl, :], out[..., sl, :]
        g = db / den[..., None]
        h = -(db * ob).sum(-1) / den
        gs.append(g)
        hs.append(h)
        qb, kb, vb = qf[..., sl, :], kf[..., sl, :], v[..., sl, :]
        n = qb.shape[-2]
        mask = np.tril(np.ones((n, n), dtype=dtype))
        intra = ((g @ vb.swapaxes(-1, -2) + h[..., None]) * mask) @ kb
        dqf[..., sl, :] = g @ s_in.swapaxes(-1, -2) + h[..., None] * z_in[..., None, :] + intra

    # reverse pass for dkf, dv with suffix accumulators
    r_acc = np.zeros(qf.shape[:-2] + (d, dv), dtype=dtype)
    rvec = np.zeros(qf.shape[:-2] + (d,), dtype=dtype)
    starts = list(range(0, L, block))
    for bi in range(len(starts) - 1, -1, -1):
        lo = starts[bi]
        sl = slice(lo, min(lo + block, L))
        qb, kb, vb = qf[..., sl, :], kf[..., sl, :], v[..., sl, :]
        g, h = gs[bi], hs[bi]
        n = qb.shape[-2]
        mask_t = np.triu(np.ones((n, n), dtype=dtype))  # rows s, cols t, t >= s
        dvv[..., sl, :] = ((kb @ qb.swapaxes(-1, -2)) * mask_t) @ g + kb @ r_acc
        w = vb @ g.swapaxes(-1, -2) + h[..., None, :]
        dkf[..., sl, :] = ((w * mask_t) @ qb
                           + vb @ r_acc.swapaxes(-1, -2) + rvec[..., None, :])
        r_acc = r_acc + qb.swapaxes(-1, -2) @ g
        rvec = rvec + (h[..., None] * qb).sum(-2)

    if anticausal:
        dqf, dkf, dvv = _flip(dqf), _flip(dkf), _flip(dvv)
    return dqf, dkf, dvv
