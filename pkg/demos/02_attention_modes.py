#!/usr/bin/env python3
"""Show that the three linear-attention computations are the same function.

The O(L) blockwise form, the token-at-a-time recurrence, and a brute-force
masked O(L^2) reference all agree; the recurrent state (S, z) is what lets
the sampler resume mid-sequence without reprocessing the prefix.
"""

import numpy as np

from pianofill.model.attention import (
    AttentionState,
    attention_step,
    feature_map,
    linear_attention,
)

rng = np.random.default_rng(0)
H, L, D = 2, 48, 8
qf = feature_map(rng.normal(size=(H, L, D))).astype(np.float32)
kf = feature_map(rng.normal(size=(H, L, D))).astype(np.float32)
v = rng.normal(size=(H, L, D)).astype(np.float32)

# brute force: materialize the masked score matrix
scores = np.einsum("htd,hsd->hts", qf, kf) * np.tril(np.ones((L, L), np.float32))
brute = np.einsum("hts,hse->hte", scores, v) / (scores.sum(-1) + 1e-6)[..., None]

fast = linear_attention(qf, kf, v)
print("blockwise O(L) vs brute force:",
      np.abs(fast - brute).max(), "(max abs difference)")

state = AttentionState.zeros(H, D)
stepped = np.stack([attention_step(state, qf[:, t], kf[:, t], v[:, t])
                    for t in range(L)], axis=1)
print("recurrent stepping vs blockwise:", np.abs(stepped - fast).max())

# split anywhere: a parallel prefix hands its state to the recurrence
cut = 20
_, (s_acc, z_acc) = linear_attention(qf[:, :cut], kf[:, :cut], v[:, :cut],
                                     return_state=True)
resumed = AttentionState(s_acc.copy(), z_acc.copy())
out = attention_step(resumed, qf[:, cut], kf[:, cut], v[:, cut])
print(f"resume at t={cut} vs uninterrupted:", np.abs(out - stepped[:, cut]).max())

print("\nanti-causal (encoder) masking is the causal pass on the reversed axis:")
anti = linear_attention(qf, kf, v, anticausal=True)
flipped = np.flip(linear_attention(np.flip(qf, 1), np.flip(kf, 1), np.flip(v, 1)), 1)
print("  max abs difference:", np.abs(anti - flipped).max())
