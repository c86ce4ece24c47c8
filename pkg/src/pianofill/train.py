"""Dataset chunking, constraint sampling, and the masked-CE training loop.

Performances are cut into fixed-size note windows; each training example
pairs a tokenized window with a masked copy (the constraint sequence) in
which whole note slices — or selected channels, in channel mode — are
replaced by the NC symbol.  The loss covers NC positions only.  Every random
decision flows from one seeded counter-based generator, so runs replay
exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import NC, PAD, augment_notes, draw_augmentation, elapsed_times, encode
from .midi import NoteEvent, Performance, parse_midi
from .model.config import ModelConfig
from .model.network import init_params, training_backward, training_forward

# channel subsets drawn per example in channel-masking mode: pitch-only
# (pitchification-style) and expressivity subsets (velocification-style)
CHANNEL_MASK_SUBSETS = ((0,), (1, 2), (1,), (0, 1, 2, 3))


@dataclass(frozen=True)
class TrainConfig:
    chunk_notes: int = 1024
    batch_size: int = 8
    learning_rate: float = 3e-4
    warmup_steps: int = 1000
    total_steps: int = 1000
    mask_ratio: tuple[float, float] = (0.5, 1.0)
    seed: int = 0
    mask_mode: str = "slice"  # slice | channel
    short_chunks: str = "pad"  # pad | skip
    augment: bool = True
    grad_clip: float = 1.0
    valid_fraction_denominator: int = 10  # every tenth file -> validation

    def __post_init__(self):
        lo, hi = self.mask_ratio
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("mask_ratio bounds must satisfy 0 <= lo <= hi <= 1")
        if self.mask_mode not in ("slice", "channel"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if self.short_chunks not in ("pad", "skip"):
            raise ValueError(f"unknown short_chunks policy {self.short_chunks!r}")


@dataclass
class TrainingExample:
    x: np.ndarray          # (T, 4) target tokens, PAD rows possible
    c: np.ndarray          # (T, 4) constraints: payload, NC, or PAD
    loss_mask: np.ndarray  # (T, 4) bool, true exactly where c is NC
    elapsed: np.ndarray    # (T,) seconds


# ---------------------------------------------------------------------------
# Corpus loading and chunking
# ---------------------------------------------------------------------------

def load_corpus(data_dir, *, sustain_pedal: bool = True) -> list[tuple[str, Performance]]:
    paths = sorted(Path(data_dir).glob("**/*.mid")) + sorted(Path(data_dir).glob("**/*.midi"))
    corpus = []
    for p in paths:
        perf = parse_midi(p.read_bytes(), sustain_pedal=sustain_pedal)
        if len(perf):
            corpus.append((str(p), perf))
    return corpus


def split_corpus(corpus, denominator: int = 10):
    """Every ``denominator``-th file goes to validation, rest to training."""
    train, valid = [], []
    for i, item in enumerate(corpus):
        (valid if i % denominator == denominator - 1 else train).append(item)
    return train, valid


def iter_note_windows(perf: Performance, chunk_notes: int, short_chunks: str = "pad"):
    """Non-overlapping windows of ``chunk_notes`` notes; short tails per policy."""
    notes = perf.notes
    for lo in range(0, len(notes), chunk_notes):
        window = notes[lo:lo + chunk_notes]
        if len(window) < chunk_notes and short_chunks == "skip":
            continue
        yield window


def window_to_arrays(window, chunk_notes: int, final_shift_s: float = 0.0):
    """Tokenize a note window and pad to chunk_notes with PAD slices.

    Returns (tokens (chunk_notes, 4) with PAD rows, elapsed (chunk_notes,),
    valid_notes).  Elapsed holds its last value across padding.
    """
    tokens = encode(Performance.from_notes(window), final_shift_s=final_shift_s)
    n = tokens.note_count
    out = np.full((chunk_notes, 4), PAD, dtype=np.int64)
    out[:n] = tokens.indices
    elapsed = np.zeros(chunk_notes, dtype=np.float64)
    elapsed[:n] = elapsed_times(tokens)
    if n and n < chunk_notes:
        elapsed[n:] = elapsed[n - 1]
    return out, elapsed, n


def make_chunks(corpus, cfg: TrainConfig):
    """Tokenize every performance into fixed-size training chunks.

    corpus: list of Performance or (name, Performance).  Deterministic: file
    order then window order.
    """
    if not corpus:
        raise ValueError("empty corpus")
    chunks = []
    for item in corpus:
        perf = item[1] if isinstance(item, tuple) else item
        notes = perf.notes
        windows = list(iter_note_windows(perf, cfg.chunk_notes, cfg.short_chunks))
        consumed = 0
        for window in windows:
            consumed += len(window)
            # a window that continues into another chunk carries the true
            # gap to the next note in its final shift token
            if consumed < len(notes):
                final_shift = notes[consumed].onset_s - window[-1].onset_s
            else:
                final_shift = 0.0
            chunks.append(window_to_arrays(window, cfg.chunk_notes, final_shift))
    if not chunks:
        raise ValueError("corpus produced no chunks")
    return chunks


# ---------------------------------------------------------------------------
# Constraint sampling
# ---------------------------------------------------------------------------

def sample_constraints(x: np.ndarray, rng: np.random.Generator, *,
                       mask_ratio=(0.5, 1.0), mask_mode: str = "slice",
                       elapsed: np.ndarray | None = None) -> TrainingExample:
    """Draw p ~ U[lo, hi], mask each non-PAD note slice i.i.d. with probability p.

    Slice mode removes whole notes (all four tokens); channel mode masks a
    per-example random channel subset of the selected notes, matching the
    attribute-inpainting applications.
    """
    t_notes = x.shape[0]
    valid = x[:, 0] != PAD
    p = rng.uniform(*mask_ratio)
    picked = (rng.random(t_notes) < p) & valid
    mask = np.zeros((t_notes, 4), dtype=bool)
    if mask_mode == "slice":
        mask[picked] = True
    else:
        subset = CHANNEL_MASK_SUBSETS[rng.integers(0, len(CHANNEL_MASK_SUBSETS))]
        for ch in subset:
            mask[picked, ch] = True
    c = x.copy()
    c[mask] = NC
    if elapsed is None:
        elapsed = elapsed_times(x)
    return TrainingExample(x=x, c=c, loss_mask=mask, elapsed=elapsed)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class Adam:
    learning_rate: float = 3e-4
    warmup_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr_at(self, step: int) -> float:
        if self.warmup_steps <= 0:
            return self.learning_rate
        return self.learning_rate * min(1.0, (step + 1) / self.warmup_steps)

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        if self.grad_clip > 0:
            total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2))
                                for g in grads.values()))
            if total > self.grad_clip:
                scale = self.grad_clip / (total + 1e-12)
                grads = {k: g * scale for k, g in grads.items()}
        lr = self.lr_at(self.step_count)
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            update = lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            params[name] -= update.astype(params[name].dtype)


# ---------------------------------------------------------------------------
# Steps and loop
# ---------------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    pass


def batch_from_examples(examples: list[TrainingExample]) -> dict:
    return {
        "x": np.stack([e.x for e in examples]),
        "c": np.stack([e.c for e in examples]),
        "loss_mask": np.stack([e.loss_mask for e in examples]),
        "elapsed": np.stack([e.elapsed for e in examples]),
    }


def train_step(params, model_cfg: ModelConfig, opt: Adam, batch, *,
               rng: np.random.Generator | None = None, train: bool = True):
    """One optimization step; returns (loss, masked_token_count)."""
    loss, _logits, cache, count = training_forward(params, model_cfg, batch,
                                                   train=train, rng=rng)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss} at step {opt.step_count}")
    if count == 0:
        return 0.0, 0  # nothing to learn from; parameters untouched
    grads = training_backward(params, model_cfg, cache)
    opt.apply(params, grads)
    return float(loss), count


def _example_from_window(window, final_shift, cfg: TrainConfig,
                         rng: np.random.Generator) -> TrainingExample:
    if cfg.augment:
        dilation, vel_shift, transpose = draw_augmentation(rng)
        window = augment_notes(window, dilation, vel_shift, transpose)
        final_shift = final_shift * dilation
        if not window:  # extreme transposition of a tiny window
            window = [NoteEvent(60, 64, 0.0, 0.1)]
    x, elapsed, _n = window_to_arrays(window, cfg.chunk_notes, final_shift)
    return sample_constraints(x, rng, mask_ratio=cfg.mask_ratio,
                              mask_mode=cfg.mask_mode, elapsed=elapsed)


def train(corpus, model_cfg: ModelConfig, cfg: TrainConfig, *,
          params: dict | None = None, log_stream=None, log_every: int = 1):
    """Seeded training over performance windows; yields nothing, returns history.

    corpus: list of Performance or (name, Performance).  Logs line-delimited
    JSON records {step, loss, masked_tokens, tokens_per_s} to ``log_stream``.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    if params is None:
        params = init_params(model_cfg, rng)
    opt = Adam(learning_rate=cfg.learning_rate, warmup_steps=cfg.warmup_steps,
               grad_clip=cfg.grad_clip)

    windows = []
    for item in corpus:
        perf = item[1] if isinstance(item, tuple) else item
        notes = perf.notes
        consumed = 0
        for window in iter_note_windows(perf, cfg.chunk_notes, cfg.short_chunks):
            consumed += len(window)
            final_shift = (notes[consumed].onset_s - window[-1].onset_s
                           if consumed < len(notes) else 0.0)
            windows.append((window, final_shift))
    if not windows:
        raise ValueError("corpus produced no training windows")

    history = []
    for step in range(cfg.total_steps):
        picks = rng.integers(0, len(windows), size=cfg.batch_size)
        examples = [_example_from_window(*windows[i], cfg, rng) for i in picks]
        batch = batch_from_examples(examples)
        t0 = time.perf_counter()
        loss, count = train_step(params, model_cfg, opt, batch, rng=rng)
        dt = time.perf_counter() - t0
        history.append(loss)
        if log_stream is not None and step % log_every == 0:
            record = {"step": step, "loss": round(loss, 6), "masked_tokens": count,
                      "tokens_per_s": round(4 * cfg.chunk_notes * cfg.batch_size / dt, 1)}
            print(json.dumps(record), file=log_stream)
            if hasattr(log_stream, "flush"):
                log_stream.flush()
    return params, history


def evaluate(params, model_cfg: ModelConfig, examples: list[TrainingExample]) -> float:
    """Mean masked cross-entropy over fixed examples (no dropout, no update)."""
    total, count = 0.0, 0
    for e in examples:
        batch = batch_from_examples([e])
        loss, _, _, n = training_forward(params, model_cfg, batch)
        total += loss * n
        count += n
    return total / max(count, 1)
