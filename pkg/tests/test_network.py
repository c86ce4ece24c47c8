from __future__ import annotations

import numpy as np
import pytest

from pianofill.codec import ALPHABET_SIZES, NC, elapsed_times
from pianofill.model.config import ModelConfig
from pianofill.model.network import (
    DecoderState,
    decoder_forward,
    decoder_prefix_state,
    decoder_step,
    encoder_forward,
    init_params,
    masked_cross_entropy,
    training_backward,
    training_forward,
    vocab_rows,
)

CFG = ModelConfig.toy()


def make_params(seed=0, dtype=np.float32, cfg=CFG):
    return init_params(cfg, np.random.Generator(np.random.Philox(seed)), dtype)


def random_tokens(rng, t_notes):
    return np.stack([rng.integers(0, size, size=t_notes)
                     for size in ALPHABET_SIZES], axis=1)


def random_batch(rng, b, t_notes, mask_p=0.6):
    x = np.stack([random_tokens(rng, t_notes) for _ in range(b)])
    masked = rng.random((b, t_notes)) < mask_p
    c = x.copy()
    c[masked] = NC
    loss_mask = np.repeat(masked[:, :, None], 4, axis=2)
    elapsed = np.stack([elapsed_times(x[i]) for i in range(b)])
    return dict(x=x, c=c, elapsed=elapsed, loss_mask=loss_mask)


class TestShapes:
    def test_head_sizes_per_channel(self, rng):
        params = make_params()
        t = 6
        x = random_tokens(rng, t)
        c = x.copy()
        enc = encoder_forward(params, CFG, c, elapsed_times(x))
        logits = decoder_forward(params, CFG, x, enc, elapsed_times(x))
        assert [l.shape for l in logits] == [(t, 88), (t, 128), (t, 106), (t, 106)]

    def test_encoder_output_shape(self, rng):
        params = make_params()
        c = random_tokens(rng, 5)
        enc = encoder_forward(params, CFG, c, elapsed_times(c))
        assert enc.shape == (20, CFG.model_dim)

    def test_all_nc_constraints_are_well_defined(self):
        params = make_params()
        c = np.full((8, 4), NC, dtype=np.int64)
        enc = encoder_forward(params, CFG, c, np.linspace(0, 4, 8))
        assert np.isfinite(enc).all()

    def test_vocab_row_mapping(self):
        rows = vocab_rows(np.array([0, 5, -1, -2, -3]), 88)
        assert rows.tolist() == [0, 5, 88, 89, 90]


class TestCausality:
    """Perturbation tests; exact equality with dropout off."""

    def test_encoder_is_anticausal(self, rng):
        params = make_params()
        t = 8
        c = random_tokens(rng, t)
        elapsed = elapsed_times(c)
        base = encoder_forward(params, CFG, c, elapsed)
        for _ in range(6):
            s = int(rng.integers(0, 4 * t - 1))
            c2 = c.copy()
            note, ch = divmod(s, 4)
            c2[note, ch] = (c2[note, ch] + 1) % ALPHABET_SIZES[ch]
            out = encoder_forward(params, CFG, c2, elapsed)
            assert np.array_equal(out[s + 1:], base[s + 1:]), f"position {s}"
            assert not np.array_equal(out[:s + 1], base[:s + 1])

    def test_encoder_boundary_last_position(self, rng):
        params = make_params()
        c = random_tokens(rng, 1)
        base = encoder_forward(params, CFG, c, np.zeros(1))
        c2 = c.copy()
        c2[0, :3] = (c2[0, :3] + 1) % np.array(ALPHABET_SIZES[:3])
        out = encoder_forward(params, CFG, c2, np.zeros(1))
        np.testing.assert_array_equal(out[3], base[3])

    def test_decoder_is_causal(self, rng):
        params = make_params()
        t = 8
        x = random_tokens(rng, t)
        enc = rng.normal(size=(4 * t, CFG.model_dim)).astype(np.float32)
        base = decoder_forward(params, CFG, x, enc, elapsed_times(x))
        for _ in range(6):
            s = int(rng.integers(0, 4 * t))
            x2 = x.copy()
            note, ch = divmod(s, 4)
            x2[note, ch] = (x2[note, ch] + 1) % ALPHABET_SIZES[ch]
            logits = decoder_forward(params, CFG, x2, enc, elapsed_times(x2))
            for tpos in range(s + 1):  # positions up to and including s see only x_{<s+1}
                note2, ch2 = divmod(tpos, 4)
                assert np.array_equal(logits[ch2][note2], base[ch2][note2]), \
                    f"perturbed {s}, leaked into {tpos}"

    def test_cross_attention_is_diagonal(self, rng):
        params = make_params()
        t = 8
        x = random_tokens(rng, t)
        elapsed = elapsed_times(x)
        enc = rng.normal(size=(4 * t, CFG.model_dim)).astype(np.float32)
        base = decoder_forward(params, CFG, x, enc, elapsed)
        for _ in range(6):
            s = int(rng.integers(0, 4 * t))
            enc2 = enc.copy()
            enc2[s] += rng.normal(size=CFG.model_dim).astype(np.float32)
            logits = decoder_forward(params, CFG, x, enc2, elapsed)
            for tpos in range(4 * t):
                note2, ch2 = divmod(tpos, 4)
                same = np.array_equal(logits[ch2][note2], base[ch2][note2])
                assert same == (tpos != s), f"enc {s} vs logits {tpos}"


class TestMaskedLoss:
    def test_loss_ignores_unmasked_targets_bit_exact(self, rng):
        params = make_params()
        batch = random_batch(rng, 2, 6)
        loss_a, *_ = training_forward(params, CFG, batch)
        x2 = batch["x"].copy()
        unmasked = ~batch["loss_mask"][..., 0]
        for b, i in zip(*np.nonzero(unmasked)):
            x2[b, i] = (x2[b, i] + 7) % np.array(ALPHABET_SIZES)
        loss_b, *_ = training_forward(params, CFG, dict(batch, x=x2))
        assert loss_a == loss_b  # bit-exact

    def test_zero_masked_positions_gives_zero_loss(self, rng):
        params = make_params()
        batch = random_batch(rng, 1, 5)
        batch["c"] = batch["x"].copy()
        batch["loss_mask"] = np.zeros_like(batch["loss_mask"])
        loss, _, _, count = training_forward(params, CFG, batch)
        assert loss == 0.0 and count == 0
        grads = training_backward(params, CFG,
                                  training_forward(params, CFG, batch)[2])
        assert all(np.all(g == 0) for g in grads.values())

    def test_uniform_logits_loss_near_ln_alphabet(self):
        t = 50
        logits = [np.zeros((1, t, a)) for a in ALPHABET_SIZES]
        targets = np.zeros((1, t, 4), dtype=np.int64)
        mask = np.ones((1, t, 4), dtype=bool)
        loss, _, _ = masked_cross_entropy(logits, targets, mask)
        expected = np.mean([np.log(a) for a in ALPHABET_SIZES])
        assert loss == pytest.approx(expected)


class TestGradients:
    def test_full_model_gradcheck_subset(self, rng):
        params = make_params(seed=3, dtype=np.float64)
        batch = random_batch(rng, 2, 4)

        loss, _, cache, _ = training_forward(params, CFG, batch)
        grads = training_backward(params, CFG, cache)

        names = sorted(params)
        checked = 0
        failures = []
        for _ in range(60):
            name = names[int(rng.integers(0, len(names)))]
            arr = params[name]
            i = tuple(rng.integers(0, s) for s in arr.shape)
            h = 1e-5 * max(1.0, abs(arr[i]))
            old = arr[i]
            arr[i] = old + h
            lp = training_forward(params, CFG, batch)[0]
            arr[i] = old - h
            lm = training_forward(params, CFG, batch)[0]
            arr[i] = old
            fd = (lp - lm) / (2 * h)
            an = grads[name][i]
            denom = max(abs(fd), abs(an), 1e-7)
            if abs(fd - an) / denom > 1e-3:
                failures.append((name, i, fd, an))
            checked += 1
        assert not failures, failures[:5]


class TestRecurrentEquivalence:
    def _elapsed_per_note(self, x):
        return elapsed_times(x)

    # f32 accumulates order-dependent rounding through the layer stack; the
    # float64 run pins true equivalence at machine precision.
    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-12)])
    def test_stepping_matches_parallel_logits(self, rng, dtype, tol):
        params = make_params(seed=5, dtype=dtype)
        t = 10
        x = random_tokens(rng, t)
        elapsed = self._elapsed_per_note(x)
        enc = rng.normal(size=(4 * t, CFG.model_dim)).astype(dtype)
        ref = decoder_forward(params, CFG, x, enc, elapsed)

        state = DecoderState.fresh(CFG, dtype)
        flat = x.reshape(-1)
        for pos in range(4 * t):
            tok = -3 if pos == 0 else int(flat[pos - 1])
            logits = decoder_step(params, CFG, state, tok,
                                  float(elapsed[pos // 4]), enc[pos])
            note, ch = divmod(pos, 4)
            ref_l = ref[ch][note]
            scale = max(np.abs(ref_l).max(), 1e-6)
            assert np.abs(logits - ref_l).max() / scale < tol, pos

    def test_prefix_state_then_steps_matches_full_recurrent(self, rng):
        params = make_params(seed=6)
        t = 10
        cut = 17  # mid-slice split
        x = random_tokens(rng, t)
        elapsed = self._elapsed_per_note(x)
        enc = rng.normal(size=(4 * t, CFG.model_dim)).astype(np.float32)
        flat = x.reshape(-1)

        full = DecoderState.fresh(CFG)
        full_logits = []
        for pos in range(4 * t):
            tok = -3 if pos == 0 else int(flat[pos - 1])
            full_logits.append(decoder_step(params, CFG, full, tok,
                                            float(elapsed[pos // 4]), enc[pos]))

        resumed = decoder_prefix_state(params, CFG, x, elapsed, enc, cut)
        assert resumed.t == cut
        for pos in range(cut, 4 * t):
            logits = decoder_step(params, CFG, resumed, int(flat[pos - 1]),
                                  float(elapsed[pos // 4]), enc[pos])
            ref_l = full_logits[pos]
            scale = max(np.abs(ref_l).max(), 1e-6)
            assert np.abs(logits - ref_l).max() / scale < 1e-5, pos

    def test_state_copy_isolation(self, rng):
        params = make_params(seed=7)
        state = DecoderState.fresh(CFG)
        logits_a = decoder_step(params, CFG, state, -3, 0.0,
                                np.zeros(CFG.model_dim, dtype=np.float32))
        snap = state.copy()
        decoder_step(params, CFG, state, 3, 0.0,
                     np.zeros(CFG.model_dim, dtype=np.float32))
        assert snap.t == 1
        np.testing.assert_array_equal(snap.attn[0].s, snap.copy().attn[0].s)
        assert not np.array_equal(snap.attn[0].s, state.attn[0].s)
        assert np.isfinite(logits_a).all()
