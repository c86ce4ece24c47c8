"""Masked linear-attention encoder-decoder over structured token streams.

The anti-causal encoder summarizes the constraint sequence from the right;
the causal decoder predicts each target token from the generated prefix plus
exactly the one encoder vector at its own position (diagonal cross-attention,
realized as a learned per-layer injection).  Residual branches are pre-normed
and merged through GRU-style gates.

Everything runs on flat ``{name: ndarray}`` parameter dicts; the training
path returns explicit caches consumed by :func:`training_backward`, which
implements the full reverse-mode gradient by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec import ALPHABET_SIZES, CHANNELS, NC
from .attention import (
    AttentionState,
    attention_step,
    feature_map,
    feature_map_grad,
    linear_attention,
    linear_attention_backward,
)
from .config import ModelConfig
from .embeddings import positional_features
from .layers import (
    GATE_BIAS_INIT,
    GATE_PARAM_NAMES,
    dropout_bwd,
    dropout_fwd,
    gelu_bwd,
    gelu_fwd,
    gru_gate_bwd,
    gru_gate_fwd,
    layer_norm_bwd,
    layer_norm_fwd,
    linear_bwd,
    linear_fwd,
)

N_EXTRA_ROWS = 3  # NC, PAD, START rows appended to each alphabet's table


def vocab_rows(idx: np.ndarray, alphabet_size: int) -> np.ndarray:
    """Map payload indices and sentinels (NC=-1, PAD=-2, START=-3) to table rows."""
    idx = np.asarray(idx)
    return np.where(idx >= 0, idx, alphabet_size + (-idx - 1))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _gate_shapes(dm):
    return {"wz": (dm, dm), "uz": (dm, dm), "bz": (dm,),
            "wr": (dm, dm), "ur": (dm, dm), "br": (dm,),
            "wn": (dm, dm), "un": (dm, dm), "bn": (dm,)}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    dm, ff, pt = cfg.model_dim, cfg.ff_dim, cfg.positional_total
    shapes: dict[str, tuple] = {
        "channel_embed": (4, cfg.channel_embed_dim),
        "pos_proj.w": (pt, dm),
        "pos_proj.b": (dm,),
    }
    for side in ("enc", "dec"):
        for ch, size in zip(CHANNELS, ALPHABET_SIZES):
            shapes[f"{side}_embed.{ch}"] = (size + N_EXTRA_ROWS, dm)

    def block(prefix, cross):
        shapes[prefix + "ln1.g"] = (dm,)
        shapes[prefix + "ln1.b"] = (dm,)
        for n in ("wq", "wk", "wv", "wo"):
            shapes[prefix + f"attn.{n}"] = (dm, dm)
        for n in ("bq", "bk", "bv", "bo"):
            shapes[prefix + f"attn.{n}"] = (dm,)
        for name, shp in _gate_shapes(dm).items():
            shapes[prefix + "gate1." + name] = shp
        if cross:
            shapes[prefix + "cross.w"] = (dm, dm)
            shapes[prefix + "cross.b"] = (dm,)
            for name, shp in _gate_shapes(dm).items():
                shapes[prefix + "gatex." + name] = shp
        shapes[prefix + "ln2.g"] = (dm,)
        shapes[prefix + "ln2.b"] = (dm,)
        shapes[prefix + "ff.w1"] = (dm, ff)
        shapes[prefix + "ff.b1"] = (ff,)
        shapes[prefix + "ff.w2"] = (ff, dm)
        shapes[prefix + "ff.b2"] = (dm,)
        for name, shp in _gate_shapes(dm).items():
            shapes[prefix + "gate2." + name] = shp

    for i in range(cfg.encoder_layers):
        block(f"enc.{i}.", cross=False)
    shapes["enc.ln_f.g"] = (dm,)
    shapes["enc.ln_f.b"] = (dm,)
    for i in range(cfg.decoder_layers):
        block(f"dec.{i}.", cross=True)
    shapes["dec.ln_f.g"] = (dm,)
    shapes["dec.ln_f.b"] = (dm,)
    for ch, size in zip(CHANNELS, ALPHABET_SIZES):
        shapes[f"head.{ch}.w"] = (dm, size)
        shapes[f"head.{ch}.b"] = (size,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """Scaled-uniform fan-in init; gate keep-bias positive for near-identity."""
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("g",) or name.endswith("ln1.g") or name.endswith("ln2.g"):
            arr = np.ones(shape)
        elif leaf == "bz":
            arr = np.full(shape, GATE_BIAS_INIT)
        elif "embed" in name:
            arr = rng.normal(0.0, 0.02, size=shape)
        elif len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[0])
            arr = rng.uniform(-bound, bound, size=shape)
        else:
            arr = np.zeros(shape)
        params[name] = np.ascontiguousarray(arr, dtype=dtype)
    return params


def zero_grads(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def _acc(grads: dict, frag: dict):
    for k, v in frag.items():
        if k in grads:
            grads[k] += v
        else:
            grads[k] = v


# ---------------------------------------------------------------------------
# Input embeddings
# ---------------------------------------------------------------------------

def _split_heads(x, h, d):
    b, l, _ = x.shape
    return x.reshape(b, l, h, d).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * d)


def positional_stream(params, cfg, elapsed_notes):
    """Projected positional vectors for every flat position. (B, 4T, dm)"""
    b, t_notes = elapsed_notes.shape
    flat_t = np.broadcast_to(np.arange(4 * t_notes), (b, 4 * t_notes))
    elapsed_tok = np.repeat(elapsed_notes, 4, axis=1)
    feats = positional_features(flat_t, elapsed_tok, params["channel_embed"], cfg)
    proj, _ = linear_fwd(feats, params["pos_proj.w"], params["pos_proj.b"])
    return proj, feats, flat_t


def positional_stream_bwd(params, dproj, feats, flat_t):
    dfeat, dw, db = linear_bwd(dproj, feats, params["pos_proj.w"])
    cdim = params["channel_embed"].shape[1]
    dchan = np.zeros_like(params["channel_embed"])
    np.add.at(dchan, flat_t % 4, dfeat[..., :cdim])
    return {"pos_proj.w": dw, "pos_proj.b": db, "channel_embed": dchan}


def token_embedding(params, side, idx_flat, channel_of_pos):
    """Gather per-channel table rows for a flat token stream.

    idx_flat: (B, L) payload/sentinel indices; channel_of_pos: (L,) channel of
    each position.  Returns (B, L, dm) plus the row arrays for backward.
    """
    b, l = idx_flat.shape
    dm = params[f"{side}_embed.pitch"].shape[1]
    out = np.empty((b, l, dm), dtype=params[f"{side}_embed.pitch"].dtype)
    rows_by_channel = []
    for c, (ch, size) in enumerate(zip(CHANNELS, ALPHABET_SIZES)):
        cols = np.flatnonzero(channel_of_pos == c)
        rows = vocab_rows(idx_flat[:, cols], size)
        out[:, cols, :] = params[f"{side}_embed.{ch}"][rows]
        rows_by_channel.append((cols, rows))
    return out, rows_by_channel


def token_embedding_bwd(params, side, dout, rows_by_channel):
    grads = {}
    for c, (ch, _size) in enumerate(zip(CHANNELS, ALPHABET_SIZES)):
        cols, rows = rows_by_channel[c]
        g = np.zeros_like(params[f"{side}_embed.{ch}"])
        np.add.at(g, rows.ravel(), dout[:, cols, :].reshape(-1, dout.shape[-1]))
        grads[f"{side}_embed.{ch}"] = g
    return grads


def decoder_input_indices(merged_flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shift the target stream right and prepend START.

    Returns (input indices (B, L), channel per position (L,)): position t
    consumes target token t-1, whose channel is (t-1) mod 4; START lives in
    the time-shift table.
    """
    b, l = merged_flat.shape
    inp = np.empty((b, l), dtype=np.int64)
    inp[:, 0] = -3  # START sentinel
    inp[:, 1:] = merged_flat[:, :-1]
    channels = (np.arange(l) - 1) % 4
    return inp, channels


# ---------------------------------------------------------------------------
# Sublayers
# ---------------------------------------------------------------------------

def _attn_sublayer_fwd(params, cfg, x, prefix, *, anticausal, train, rng,
                       need_cache=False, collect_state=False):
    p = params
    h, d = cfg.n_heads, cfg.head_dim
    u, lnc = layer_norm_fwd(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"])
    q, _ = linear_fwd(u, p[prefix + "attn.wq"], p[prefix + "attn.bq"])
    k, _ = linear_fwd(u, p[prefix + "attn.wk"], p[prefix + "attn.bk"])
    v, _ = linear_fwd(u, p[prefix + "attn.wv"], p[prefix + "attn.bv"])
    qh, kh, vh = _split_heads(q, h, d), _split_heads(k, h, d), _split_heads(v, h, d)
    qf, kf = feature_map(qh), feature_map(kh)
    att_cache = state = None
    if need_cache:
        att, att_cache = linear_attention(qf, kf, vh, anticausal=anticausal,
                                          need_cache=True)
    elif collect_state:
        att, state = linear_attention(qf, kf, vh, anticausal=anticausal,
                                      return_state=True)
    else:
        att = linear_attention(qf, kf, vh, anticausal=anticausal)
    merged = _merge_heads(att)
    o, _ = linear_fwd(merged, p[prefix + "attn.wo"], p[prefix + "attn.bo"])
    o, dmask = dropout_fwd(o, cfg.dropout, rng, train)
    out, gatec = gru_gate_fwd(x, o, p, prefix + "gate1.")
    cache = (lnc, u, qh, kh, qf, kf, att_cache, merged, dmask, gatec)
    return out, cache, state


def _attn_sublayer_bwd(params, cfg, dout, cache, prefix):
    p = params
    lnc, u, qh, kh, qf, kf, att_cache, merged, dmask, gatec = cache
    dx, do, grads = gru_gate_bwd(dout, gatec, p, prefix + "gate1.")
    do = dropout_bwd(do, dmask)
    dmerged, dwo, dbo = linear_bwd(do, merged, p[prefix + "attn.wo"])
    grads[prefix + "attn.wo"] = dwo
    grads[prefix + "attn.bo"] = dbo
    datt = _split_heads(dmerged, cfg.n_heads, cfg.head_dim)
    dqf, dkf, dvh = linear_attention_backward(datt, att_cache)
    dq = _merge_heads(dqf * feature_map_grad(qh))
    dk = _merge_heads(dkf * feature_map_grad(kh))
    dv = _merge_heads(dvh)
    du = np.zeros_like(u)
    for name, darr in (("wq", dq), ("wk", dk), ("wv", dv)):
        dui, dw, db = linear_bwd(darr, u, p[prefix + f"attn.{name}"])
        du += dui
        grads[prefix + f"attn.{name}"] = dw
        grads[prefix + f"attn.b{name[1]}"] = db
    dxl, dg, dbeta = layer_norm_bwd(du, lnc)
    grads[prefix + "ln1.g"] = dg
    grads[prefix + "ln1.b"] = dbeta
    return dx + dxl, grads


def _ff_sublayer_fwd(params, cfg, x, prefix, *, train, rng):
    p = params
    u, lnc = layer_norm_fwd(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"])
    a, _ = linear_fwd(u, p[prefix + "ff.w1"], p[prefix + "ff.b1"])
    g, gc = gelu_fwd(a)
    f, _ = linear_fwd(g, p[prefix + "ff.w2"], p[prefix + "ff.b2"])
    f, dmask = dropout_fwd(f, cfg.dropout, rng, train)
    out, gatec = gru_gate_fwd(x, f, p, prefix + "gate2.")
    return out, (lnc, u, gc, g, dmask, gatec)


def _ff_sublayer_bwd(params, cfg, dout, cache, prefix):
    p = params
    lnc, u, gc, g, dmask, gatec = cache
    dx, df, grads = gru_gate_bwd(dout, gatec, p, prefix + "gate2.")
    df = dropout_bwd(df, dmask)
    dg, dw2, db2 = linear_bwd(df, g, p[prefix + "ff.w2"])
    grads[prefix + "ff.w2"] = dw2
    grads[prefix + "ff.b2"] = db2
    da = gelu_bwd(dg, gc)
    du, dw1, db1 = linear_bwd(da, u, p[prefix + "ff.w1"])
    grads[prefix + "ff.w1"] = dw1
    grads[prefix + "ff.b1"] = db1
    dxl, dgamma, dbeta = layer_norm_bwd(du, lnc)
    grads[prefix + "ln2.g"] = dgamma
    grads[prefix + "ln2.b"] = dbeta
    return dx + dxl, grads


def _cross_sublayer_fwd(params, x, enc_out, prefix):
    y, _ = linear_fwd(enc_out, params[prefix + "cross.w"], params[prefix + "cross.b"])
    out, gatec = gru_gate_fwd(x, y, params, prefix + "gatex.")
    return out, gatec


def _cross_sublayer_bwd(params, dout, gatec, enc_out, prefix):
    dx, dy, grads = gru_gate_bwd(dout, gatec, params, prefix + "gatex.")
    denc, dw, db = linear_bwd(dy, enc_out, params[prefix + "cross.w"])
    grads[prefix + "cross.w"] = dw
    grads[prefix + "cross.b"] = db
    return dx, denc, grads


# ---------------------------------------------------------------------------
# Stacks
# ---------------------------------------------------------------------------

def encoder_apply(params, cfg, x, *, train=False, rng=None, need_cache=False):
    caches = []
    for i in range(cfg.encoder_layers):
        prefix = f"enc.{i}."
        x, ac, _ = _attn_sublayer_fwd(params, cfg, x, prefix, anticausal=True,
                                      train=train, rng=rng, need_cache=need_cache)
        x, fc = _ff_sublayer_fwd(params, cfg, x, prefix, train=train, rng=rng)
        caches.append((ac, fc))
    out, lnc = layer_norm_fwd(x, params["enc.ln_f.g"], params["enc.ln_f.b"])
    return out, (caches, lnc) if need_cache else None


def encoder_apply_bwd(params, cfg, dout, cache):
    caches, lnc = cache
    grads: dict[str, np.ndarray] = {}
    dx, dg, db = layer_norm_bwd(dout, lnc)
    grads["enc.ln_f.g"] = dg
    grads["enc.ln_f.b"] = db
    for i in range(cfg.encoder_layers - 1, -1, -1):
        prefix = f"enc.{i}."
        ac, fc = caches[i]
        dx, frag = _ff_sublayer_bwd(params, cfg, dx, fc, prefix)
        _acc(grads, frag)
        dx, frag = _attn_sublayer_bwd(params, cfg, dx, ac, prefix)
        _acc(grads, frag)
    return dx, grads


def decoder_apply(params, cfg, x, enc_out, *, train=False, rng=None,
                  need_cache=False, collect_states=False):
    """Causal trunk over the token stream, then position-local fusion.

    The encoder vectors must enter strictly after the last self-attention:
    injecting them inside the trunk would let attention carry enc_s into
    positions t > s and break the diagonal cross-attention contract.  The
    fusion stack applies one gated injection of enc_t per decoder layer,
    entirely per position.
    """
    caches = []
    states = []
    for i in range(cfg.decoder_layers):
        prefix = f"dec.{i}."
        x, ac, st = _attn_sublayer_fwd(params, cfg, x, prefix, anticausal=False,
                                       train=train, rng=rng, need_cache=need_cache,
                                       collect_state=collect_states)
        if collect_states:
            states.append(st)
        x, fc = _ff_sublayer_fwd(params, cfg, x, prefix, train=train, rng=rng)
        caches.append((ac, fc))
    fusion_caches = []
    for i in range(cfg.decoder_layers):
        x, xc = _cross_sublayer_fwd(params, x, enc_out, f"dec.{i}.")
        fusion_caches.append(xc)
    out, lnc = layer_norm_fwd(x, params["dec.ln_f.g"], params["dec.ln_f.b"])
    cache = (caches, fusion_caches, lnc) if need_cache else None
    return out, cache, states


def decoder_apply_bwd(params, cfg, dout, enc_out, cache):
    caches, fusion_caches, lnc = cache
    grads: dict[str, np.ndarray] = {}
    denc = np.zeros_like(enc_out)
    dx, dg, db = layer_norm_bwd(dout, lnc)
    grads["dec.ln_f.g"] = dg
    grads["dec.ln_f.b"] = db
    for i in range(cfg.decoder_layers - 1, -1, -1):
        dx, denc_i, frag = _cross_sublayer_bwd(params, dx, fusion_caches[i],
                                               enc_out, f"dec.{i}.")
        denc += denc_i
        _acc(grads, frag)
    for i in range(cfg.decoder_layers - 1, -1, -1):
        prefix = f"dec.{i}."
        ac, fc = caches[i]
        dx, frag = _ff_sublayer_bwd(params, cfg, dx, fc, prefix)
        _acc(grads, frag)
        dx, frag = _attn_sublayer_bwd(params, cfg, dx, ac, prefix)
        _acc(grads, frag)
    return dx, denc, grads


# ---------------------------------------------------------------------------
# Heads and loss
# ---------------------------------------------------------------------------

def apply_heads(params, h):
    """Final hidden states (B, 4T, dm) -> per-channel logits [(B, T, A_c)]."""
    b, l, dm = h.shape
    hh = h.reshape(b, l // 4, 4, dm)
    return [hh[:, :, c, :] @ params[f"head.{ch}.w"] + params[f"head.{ch}.b"]
            for c, ch in enumerate(CHANNELS)]


def apply_heads_bwd(params, h, dlogits):
    b, l, dm = h.shape
    hh = h.reshape(b, l // 4, 4, dm)
    dh = np.zeros_like(hh)
    grads = {}
    for c, ch in enumerate(CHANNELS):
        dl = dlogits[c]
        dh[:, :, c, :] = dl @ params[f"head.{ch}.w"].T
        grads[f"head.{ch}.w"] = (hh[:, :, c, :].reshape(-1, dm).T
                                 @ dl.reshape(-1, dl.shape[-1]))
        grads[f"head.{ch}.b"] = dl.sum((0, 1))
    return dh.reshape(b, l, dm), grads


def masked_cross_entropy(logits, targets, loss_mask):
    """Mean CE over masked positions only; also returns d(loss)/d(logits).

    Target values at unmasked positions never contribute (structurally):
    both the loss terms and the gradients are multiplied by the mask.
    """
    count = int(loss_mask.sum())
    total = 0.0
    dlogits = []
    for c in range(4):
        l = logits[c]
        m = loss_mask[..., c].astype(l.dtype)
        t = np.clip(targets[..., c], 0, l.shape[-1] - 1)
        mx = l.max(-1, keepdims=True)
        ex = np.exp(l - mx)
        se = ex.sum(-1)
        lse = mx[..., 0] + np.log(se)
        tgt = np.take_along_axis(l, t[..., None], -1)[..., 0]
        total += float(((lse - tgt) * m).sum())
        if count:
            dl = ex / se[..., None]
            np.put_along_axis(dl, t[..., None],
                              np.take_along_axis(dl, t[..., None], -1) - 1.0, -1)
            dl *= (m / count)[..., None]
        else:
            dl = np.zeros_like(l)
        dlogits.append(dl)
    return (total / count if count else 0.0), dlogits, count


# ---------------------------------------------------------------------------
# Training entry points
# ---------------------------------------------------------------------------

def training_forward(params, cfg: ModelConfig, batch, *, train=False, rng=None):
    """Full forward pass for one batch.

    batch: dict with ``x`` (B,T,4) targets, ``c`` (B,T,4) constraints (NC/PAD
    sentinels), ``elapsed`` (B,T) seconds, ``loss_mask`` (B,T,4) bool.
    Returns (loss, logits, cache, masked_count).
    """
    x_idx, c_idx = batch["x"], batch["c"]
    loss_mask = batch["loss_mask"]
    b, t_notes, _ = x_idx.shape
    dtype = params["pos_proj.w"].dtype
    elapsed = batch["elapsed"].astype(dtype)

    pos, pos_feats, flat_t = positional_stream(params, cfg, elapsed)

    c_flat = c_idx.reshape(b, 4 * t_notes)
    enc_tok, enc_rows = token_embedding(params, "enc", c_flat,
                                        np.arange(4 * t_notes) % 4)
    enc_in = enc_tok + pos
    enc_out, enc_cache = encoder_apply(params, cfg, enc_in, train=train, rng=rng,
                                       need_cache=True)

    # decoder reads constrained values through c, generated ones through x
    merged = np.where(c_idx == NC, x_idx, c_idx).reshape(b, 4 * t_notes)
    dec_idx, dec_channels = decoder_input_indices(merged)
    dec_tok, dec_rows = token_embedding(params, "dec", dec_idx, dec_channels)
    dec_in = dec_tok + pos
    dec_out, dec_cache, _ = decoder_apply(params, cfg, dec_in, enc_out,
                                          train=train, rng=rng, need_cache=True)

    logits = apply_heads(params, dec_out)
    loss, dlogits, count = masked_cross_entropy(logits, x_idx, loss_mask)
    cache = dict(dlogits=dlogits, dec_out=dec_out, dec_cache=dec_cache,
                 enc_out=enc_out, enc_cache=enc_cache, enc_rows=enc_rows,
                 dec_rows=dec_rows, pos_feats=pos_feats, flat_t=flat_t)
    return loss, logits, cache, count


def training_backward(params, cfg: ModelConfig, cache) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    dh, frag = apply_heads_bwd(params, cache["dec_out"], cache["dlogits"])
    _acc(grads, frag)
    ddec_in, denc_from_dec, frag = decoder_apply_bwd(params, cfg, dh,
                                                     cache["enc_out"],
                                                     cache["dec_cache"])
    _acc(grads, frag)
    denc_in, frag = encoder_apply_bwd(params, cfg, denc_from_dec, cache["enc_cache"])
    _acc(grads, frag)
    _acc(grads, token_embedding_bwd(params, "enc", denc_in, cache["enc_rows"]))
    _acc(grads, token_embedding_bwd(params, "dec", ddec_in, cache["dec_rows"]))
    dpos = denc_in + ddec_in
    _acc(grads, positional_stream_bwd(params, dpos, cache["pos_feats"],
                                      cache["flat_t"]))
    for name, value in params.items():
        if name not in grads:
            grads[name] = np.zeros_like(value)
    return grads


# ---------------------------------------------------------------------------
# Whole-sequence inference passes
# ---------------------------------------------------------------------------

def encoder_forward(params, cfg: ModelConfig, c_idx: np.ndarray,
                    elapsed: np.ndarray) -> np.ndarray:
    """Constraint summary vectors for one sequence. (T,4)+(T,) -> (4T, dm)."""
    if c_idx.ndim != 2 or c_idx.shape[1] != 4:
        raise ValueError(f"constraints must be (T, 4), got {c_idx.shape}")
    t_notes = c_idx.shape[0]
    dtype = params["pos_proj.w"].dtype
    pos, _, _ = positional_stream(params, cfg, elapsed[None].astype(dtype))
    tok, _ = token_embedding(params, "enc", c_idx.reshape(1, 4 * t_notes),
                             np.arange(4 * t_notes) % 4)
    out, _ = encoder_apply(params, cfg, tok + pos)
    return out[0]


def decoder_forward(params, cfg: ModelConfig, x_idx: np.ndarray,
                    enc_out: np.ndarray, elapsed: np.ndarray):
    """Teacher-forced decoder logits for a full sequence. -> [(T, A_c)]"""
    t_notes = x_idx.shape[0]
    if enc_out.shape[0] != 4 * t_notes:
        raise ValueError("encoder outputs misaligned with target length")
    dtype = params["pos_proj.w"].dtype
    pos, _, _ = positional_stream(params, cfg, elapsed[None].astype(dtype))
    dec_idx, dec_channels = decoder_input_indices(x_idx.reshape(1, 4 * t_notes))
    tok, _ = token_embedding(params, "dec", dec_idx, dec_channels)
    out, _, _ = decoder_apply(params, cfg, tok + pos, enc_out[None])
    return [l[0] for l in apply_heads(params, out)]


# ---------------------------------------------------------------------------
# Recurrent decoding
# ---------------------------------------------------------------------------

@dataclass
class DecoderState:
    """Resumable decoder state: per-layer attention accumulators + position."""

    attn: list[AttentionState]
    t: int  # next flat position to be produced

    @classmethod
    def fresh(cls, cfg: ModelConfig, dtype=np.float32) -> "DecoderState":
        return cls([AttentionState.zeros(cfg.n_heads, cfg.head_dim, dtype)
                    for _ in range(cfg.decoder_layers)], 0)

    def copy(self) -> "DecoderState":
        return DecoderState([s.copy() for s in self.attn], self.t)


def decoder_prefix_state(params, cfg: ModelConfig, merged_idx: np.ndarray,
                         elapsed: np.ndarray, enc_out: np.ndarray,
                         prefix_len: int) -> DecoderState:
    """Run the decoder in parallel over flat positions [0, prefix_len).

    Returns the recurrent state positioned to produce position ``prefix_len``
    — identical (within float error) to stepping those positions one by one.
    """
    if prefix_len == 0:
        return DecoderState.fresh(cfg, params["pos_proj.w"].dtype)
    t_notes = merged_idx.shape[0]
    dtype = params["pos_proj.w"].dtype
    pos, _, _ = positional_stream(params, cfg, elapsed[None].astype(dtype))
    dec_idx, dec_channels = decoder_input_indices(merged_idx.reshape(1, 4 * t_notes))
    tok, _ = token_embedding(params, "dec", dec_idx[:, :prefix_len],
                             dec_channels[:prefix_len])
    x = tok + pos[:, :prefix_len]
    _, _, states = decoder_apply(params, cfg, x, enc_out[None, :prefix_len],
                                 collect_states=True)
    return DecoderState([AttentionState(s[0][0].copy(), s[1][0].copy())
                         for s in states], prefix_len)


def decoder_step(params, cfg: ModelConfig, state: DecoderState, in_token: int,
                 elapsed_s: float, enc_t: np.ndarray) -> np.ndarray:
    """Advance one position: consume the previous token, emit logits for t.

    ``in_token`` is the payload index (or START sentinel) of target token
    t-1; its channel is implied by the position. Mutates ``state``.
    """
    p = params
    t = state.t
    h, d = cfg.n_heads, cfg.head_dim
    in_channel = CHANNELS[(t - 1) % 4]
    size = ALPHABET_SIZES[(t - 1) % 4]
    row = int(vocab_rows(np.asarray(in_token), size))
    tok = p[f"dec_embed.{in_channel}"][row]
    feats = positional_features(np.array([t]), np.array([elapsed_s]),
                                p["channel_embed"], cfg)[0]
    x = tok + feats @ p["pos_proj.w"] + p["pos_proj.b"]

    for i in range(cfg.decoder_layers):
        prefix = f"dec.{i}."
        u, _ = layer_norm_fwd(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"])
        q = (u @ p[prefix + "attn.wq"] + p[prefix + "attn.bq"]).reshape(h, d)
        k = (u @ p[prefix + "attn.wk"] + p[prefix + "attn.bk"]).reshape(h, d)
        v = (u @ p[prefix + "attn.wv"] + p[prefix + "attn.bv"]).reshape(h, d)
        att = attention_step(state.attn[i], feature_map(q), feature_map(k), v)
        o = att.reshape(h * d) @ p[prefix + "attn.wo"] + p[prefix + "attn.bo"]
        x, _ = gru_gate_fwd(x, o, p, prefix + "gate1.")
        u2, _ = layer_norm_fwd(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"])
        a = u2 @ p[prefix + "ff.w1"] + p[prefix + "ff.b1"]
        g, _ = gelu_fwd(a)
        f = g @ p[prefix + "ff.w2"] + p[prefix + "ff.b2"]
        x, _ = gru_gate_fwd(x, f, p, prefix + "gate2.")
    for i in range(cfg.decoder_layers):
        prefix = f"dec.{i}."
        yc = enc_t @ p[prefix + "cross.w"] + p[prefix + "cross.b"]
        x, _ = gru_gate_fwd(x, yc, p, prefix + "gatex.")

    hfin, _ = layer_norm_fwd(x, p["dec.ln_f.g"], p["dec.ln_f.b"])
    ch = CHANNELS[t % 4]
    logits = hfin @ p[f"head.{ch}.w"] + p[f"head.{ch}.b"]
    state.t = t + 1
    return logits
