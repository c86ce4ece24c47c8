"""Factorized positional features for the structured token stream.

A token at flat position ``t`` carries three concatenated parts:

- a trainable embedding of its channel ``t mod 4``,
- a sinusoidal embedding of its note index ``t // 4``,
- a sinusoidal embedding of the elapsed time (seconds scaled by
  ``elapsed_pos_scale``) accumulated from preceding time-shift tokens.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig


def sinusoid(pos: np.ndarray, dim: int, dtype=np.float32) -> np.ndarray:
    """Interleaved sin/cos embedding; ``dim`` must be even (dim/2 frequencies).

    out[..., 2i] = sin(pos / 10000^(2i/d)), out[..., 2i+1] = cos(...), d = dim/2.
    """
    pos = np.asarray(pos, dtype=np.float64)
    d = dim // 2
    inv_freq = 10000.0 ** (-2.0 * np.arange(d) / d)
    angles = pos[..., None] * inv_freq
    out = np.empty(pos.shape + (dim,), dtype=dtype)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def positional_features(token_positions: np.ndarray, elapsed_s: np.ndarray,
                        channel_embed: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Assemble the concatenated positional vectors.

    token_positions: (..., L) int flat positions; elapsed_s: (..., L) seconds
    (per token); channel_embed: (4, channel_embed_dim) trainable rows.
    Returns (..., L, positional_total).
    """
    t = np.asarray(token_positions)
    dtype = channel_embed.dtype
    chan = channel_embed[t % 4]
    note_pos = sinusoid(t // 4, cfg.token_pos_dim, dtype)
    elapsed = sinusoid(np.asarray(elapsed_s) * cfg.elapsed_pos_scale,
                       cfg.elapsed_dim, dtype)
    return np.concatenate([chan, note_pos, elapsed], axis=-1)
