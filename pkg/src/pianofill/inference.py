"""Two-phase inpainting sampler and the five generation modes.

Phase 1 runs the encoder over the whole constraint sequence and the decoder
over the constrained prefix, both in parallel, producing the recurrent
attention state at the first position to generate.  Phase 2 samples one
token at a time with top-p, teacher-forcing constrained positions, so the
sampling cost scales with the generated region, not the sequence.

Modes
-----
- ``contiguous``: replace the notes inside a time region with a requested
  number of new notes; the surrounding notes are preserved exactly.
- ``unconditional``: generate from scratch (empty context, all-NC).
- ``velocify``: resample velocity (+duration unless ``velocity_only``) of the
  selected notes; rhythm and pitches untouched.
- ``pitchify``: resample pitches only; rhythm and expressivity untouched.
- ``variation``: condition the encoder on the complete performance and
  free-run the decoder over every position, yielding a related new piece.

Determinism: every request carries a seed for a Philox counter-based
generator; one uniform draw is consumed per sampled token, in stream order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .codec import (
    NC,
    PITCH_MIN,
    TIME_QUANTIZER,
    MIN_DECODED_DURATION,
    TokenSequence,
    encode,
)
from .midi import NoteEvent, Performance
from .model.config import ModelConfig
from .model.network import (
    decoder_prefix_state,
    decoder_step,
    encoder_forward,
)

MODES = ("contiguous", "unconditional", "velocify", "pitchify", "variation")
FIT_POLICIES = ("rescale", "truncate", "free")
MAX_ENTRY_GAP_S = 20.0  # largest encodable time shift

DEFAULT_UNCONDITIONAL_DENSITY = 2.0  # notes/s, used only when no region given


class InpaintRequestError(ValueError):
    pass


def density_to_note_count(density: float, region_duration: float) -> int:
    """round(density x duration), half away from zero."""
    if density < 0 or region_duration < 0:
        raise InpaintRequestError("density and duration must be non-negative")
    return int(np.floor(density * region_duration + 0.5))


def top_p_sample(logits: np.ndarray, p: float, rng: np.random.Generator) -> int:
    """Nucleus sampling: smallest probability mass >= p, renormalized."""
    if not 0.0 < p <= 1.0:
        raise InpaintRequestError(f"top_p must be in (0, 1], got {p}")
    logits = np.asarray(logits, dtype=np.float64)
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")
    csum = np.cumsum(probs[order])
    keep = int(np.searchsorted(csum, p - 1e-12, side="left")) + 1
    kept = csum[:keep]
    u = rng.random() * kept[-1]
    return int(order[int(np.searchsorted(kept, u, side="right"))])


@dataclass(frozen=True)
class InpaintRequest:
    context: Performance
    mode: str = "contiguous"
    region: tuple[float, float] | None = None
    note_count: int | None = None
    density: float | None = None
    top_p: float = 0.95
    seed: int = 0
    fit: str = "rescale"
    velocity_only: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InpaintRequestError(f"unknown mode {self.mode!r}")
        if self.fit not in FIT_POLICIES:
            raise InpaintRequestError(f"unknown fit policy {self.fit!r}")
        if not 0.0 < self.top_p <= 1.0:
            raise InpaintRequestError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.region is not None:
            start, end = self.region
            if start < 0 or end < start:
                raise InpaintRequestError(f"bad region [{start}, {end}]")
        if self.note_count is not None and self.note_count < 0:
            raise InpaintRequestError("note_count must be non-negative")
        if self.density is not None and self.density < 0:
            raise InpaintRequestError("density must be non-negative")


@dataclass(frozen=True)
class ConstraintSequence:
    """Channel-aligned constraints: payload indices or NC, plus elapsed times."""

    tokens: np.ndarray     # (T, 4) int64, NC = -1
    elapsed_s: np.ndarray  # (4T,) per-token elapsed seconds

    @property
    def note_count(self) -> int:
        return self.tokens.shape[0]

    def elapsed_notes(self) -> np.ndarray:
        return self.elapsed_s[::4]


@dataclass
class _Plan:
    constraints: ConstraintSequence
    gen_mask: np.ndarray            # (T, 4) positions to sample
    prefix_notes: tuple             # untouched notes before the gap
    suffix_notes: tuple             # untouched notes after the gap
    gap_slice: tuple[int, int]      # [lo, hi) generated note rows (contiguous modes)
    anchor_s: float                 # real time of the gap start / clip start
    region: tuple[float, float] | None
    mode: str
    original_notes: tuple = ()      # attribute modes: note i of the sequence


@dataclass
class InpaintResult:
    performance: Performance
    generated_notes: tuple
    streamed_notes: tuple
    tokens: TokenSequence | None
    constraints: ConstraintSequence
    timing: dict


def _quantize_gaps(notes) -> np.ndarray:
    """Constrained token rows for known notes (shift = gap to the next one)."""
    arr = np.zeros((len(notes), 4), dtype=np.int64)
    for i, n in enumerate(notes):
        shift = notes[i + 1].onset_s - n.onset_s if i + 1 < len(notes) else 0.0
        arr[i] = (n.pitch - PITCH_MIN, n.velocity,
                  TIME_QUANTIZER.quantize(n.duration_s),
                  TIME_QUANTIZER.quantize(shift))
    return arr


def build_constraints(request: InpaintRequest) -> ConstraintSequence:
    """Public view of the constraint construction (see _build_plan)."""
    return _build_plan(request).constraints


def _resolve_note_count(request: InpaintRequest) -> tuple[int, tuple[float, float]]:
    region = request.region
    if request.mode == "unconditional" and region is None:
        if request.note_count is None:
            raise InpaintRequestError("unconditional mode needs note_count or region")
        density = request.density or DEFAULT_UNCONDITIONAL_DENSITY
        region = (0.0, request.note_count / max(density, 1e-9))
    if region is None:
        raise InpaintRequestError(f"mode {request.mode!r} requires a region")
    if request.note_count is not None:
        n = request.note_count
    elif request.density is not None:
        n = density_to_note_count(request.density, region[1] - region[0])
    else:
        raise InpaintRequestError("need note_count or density")
    return n, region


def _build_plan(request: InpaintRequest) -> _Plan:
    mode = request.mode
    notes = request.context.notes

    if mode in ("contiguous", "unconditional"):
        if mode == "unconditional":
            prefix, suffix = (), ()
            n_gap, region = _resolve_note_count(request)
        else:
            n_gap, region = _resolve_note_count(request)
            start, end = region
            prefix = tuple(n for n in notes if n.onset_s < start)
            suffix = tuple(n for n in notes if n.onset_s >= end)
        start, end = region
        if prefix and n_gap > 0 and start - prefix[-1].onset_s > MAX_ENTRY_GAP_S:
            raise InpaintRequestError(
                f"region starts {start - prefix[-1].onset_s:.1f} s after the last "
                f"context note; the largest encodable gap is {MAX_ENTRY_GAP_S} s")

        p_rows = _quantize_gaps(prefix)
        if len(prefix):
            p_rows[-1, 3] = TIME_QUANTIZER.quantize(
                min(start - prefix[-1].onset_s, MAX_ENTRY_GAP_S))
        s_rows = _quantize_gaps(suffix)
        gap_rows = np.full((n_gap, 4), NC, dtype=np.int64)
        tokens = np.concatenate([p_rows, gap_rows, s_rows], axis=0)

        # per-note elapsed: cumulative dequantized shifts outside the gap,
        # linear placeholders across it, the suffix re-anchored at region end
        np_pre, np_gap = len(prefix), n_gap
        elapsed = np.zeros(tokens.shape[0], dtype=np.float64)
        cum = 0.0
        for i in range(np_pre):
            elapsed[i] = cum
            cum += TIME_QUANTIZER.dequantize(int(p_rows[i, 3]))
        gap0 = cum  # elapsed of the first generated note
        span = end - start
        for j in range(np_gap):
            elapsed[np_pre + j] = gap0 + span * j / max(np_gap, 1)
        cum = gap0 + span
        for k in range(len(suffix)):
            elapsed[np_pre + np_gap + k] = cum
            cum += TIME_QUANTIZER.dequantize(int(s_rows[k, 3]))

        gen_mask = np.zeros_like(tokens, dtype=bool)
        gen_mask[np_pre:np_pre + np_gap] = True
        return _Plan(
            constraints=ConstraintSequence(tokens, np.repeat(elapsed, 4)),
            gen_mask=gen_mask, prefix_notes=prefix, suffix_notes=suffix,
            gap_slice=(np_pre, np_pre + np_gap),
            anchor_s=start, region=region, mode=mode)

    # whole-clip modes share the tokenized context
    token_seq = encode(request.context)
    tokens = token_seq.indices.copy()
    ordered = tuple(sorted(notes, key=lambda n: (n.onset_s, n.pitch)))
    elapsed = np.zeros(len(ordered), dtype=np.float64)
    cum = 0.0
    for i in range(len(ordered)):
        elapsed[i] = cum
        cum += TIME_QUANTIZER.dequantize(int(tokens[i, 3]))

    gen_mask = np.zeros_like(tokens, dtype=bool)
    if mode == "variation":
        gen_mask[:] = True
    else:
        if request.region is not None:
            start, end = request.region
            selected = np.array([start <= n.onset_s < end for n in ordered])
        else:
            selected = np.ones(len(ordered), dtype=bool)
        if mode == "pitchify":
            gen_mask[selected, 0] = True
        else:  # velocify
            gen_mask[selected, 1] = True
            if not request.velocity_only:
                gen_mask[selected, 2] = True
        tokens[gen_mask] = NC

    anchor = ordered[0].onset_s if ordered else 0.0
    return _Plan(
        constraints=ConstraintSequence(tokens, np.repeat(elapsed, 4)),
        gen_mask=gen_mask, prefix_notes=(), suffix_notes=(),
        gap_slice=(0, 0), anchor_s=anchor, region=request.region, mode=mode,
        original_notes=ordered)


class InpaintEngine:
    """Holds immutable parameters and runs generation sessions.

    Thread-safe for concurrent sessions: parameters are read-only and all
    per-session state lives in the generator frame.
    """

    def __init__(self, params: dict[str, np.ndarray], config: ModelConfig):
        self.params = params
        self.config = config

    # -- public API ---------------------------------------------------------

    def inpaint(self, request: InpaintRequest,
                on_note: Callable[[NoteEvent], None] | None = None) -> InpaintResult:
        result = None
        for kind, payload in self.iter_stream(request):
            if kind == "note" and on_note is not None:
                on_note(payload)
            elif kind == "done":
                result = payload
        return result

    def iter_stream(self, request: InpaintRequest) -> Iterator[tuple[str, object]]:
        """Yield ("note", NoteEvent) as tokens complete, then ("done", result)."""
        t_begin = time.perf_counter()
        plan = _build_plan(request)
        cons = plan.constraints
        t_notes = cons.note_count
        gen_flat = plan.gen_mask.reshape(-1)
        gen_positions = np.flatnonzero(gen_flat)

        if gen_positions.size == 0:
            perf = request.context
            result = InpaintResult(
                performance=perf, generated_notes=(), streamed_notes=(),
                tokens=TokenSequence(cons.tokens) if t_notes else TokenSequence(
                    np.zeros((0, 4), dtype=np.int64)),
                constraints=cons,
                timing={"phase1_s": 0.0, "sampling_s": 0.0, "first_note_s": None,
                        "total_s": time.perf_counter() - t_begin, "steps": 0})
            yield ("done", result)
            return

        first_gen = int(gen_positions[0])
        last_gen = int(gen_positions[-1])
        elapsed_notes = cons.elapsed_notes().copy()

        # phase 1: encoder over all constraints, decoder over the prefix
        enc_out = encoder_forward(self.params, self.config, cons.tokens,
                                  elapsed_notes)
        out = cons.tokens.copy()
        state = decoder_prefix_state(self.params, self.config, out, elapsed_notes,
                                     enc_out, first_gen)
        t_phase1 = time.perf_counter()

        # last position that must be produced before each note can be emitted
        slice_done_at = {}
        for pos in gen_positions:
            slice_done_at[pos // 4] = int(pos)

        rng = np.random.Generator(np.random.Philox(request.seed))
        out_flat = out.reshape(-1)
        elapsed_cur = float(elapsed_notes[first_gen // 4])
        streamed: list[NoteEvent] = []
        raw_gap: list[NoteEvent] = []
        updated: dict[int, NoteEvent] = {}
        first_note_time = None
        steps = 0

        for pos in range(first_gen, last_gen + 1):
            note_i, ch = divmod(pos, 4)
            if ch == 0 and pos > first_gen:
                elapsed_cur += TIME_QUANTIZER.dequantize(int(out_flat[pos - 4 + 3]))
            in_token = -3 if pos == 0 else int(out_flat[pos - 1])
            logits = decoder_step(self.params, self.config, state, in_token,
                                  elapsed_cur, enc_out[pos])
            steps += 1
            if gen_flat[pos] and not np.all(np.isfinite(logits)):
                raise RuntimeError(
                    f"non-finite logits at position {pos} (note {note_i}, "
                    f"channel {ch}); model state diverged")
            if gen_flat[pos]:
                out_flat[pos] = top_p_sample(logits, request.top_p, rng)

            if slice_done_at.get(note_i) == pos:
                note = self._emit_note(plan, out, note_i, elapsed_cur)
                if note is not None:
                    if plan.mode in ("contiguous", "unconditional"):
                        raw_gap.append(note)
                    else:
                        updated[note_i] = note
                    streamed.append(note)
                    if first_note_time is None:
                        first_note_time = time.perf_counter()
                    yield ("note", note)

        t_sampling = time.perf_counter()
        assert np.array_equal(out[~plan.gen_mask], cons.tokens[~plan.gen_mask])

        performance, generated = self._assemble(plan, request, out, raw_gap, updated)
        result = InpaintResult(
            performance=performance,
            generated_notes=tuple(generated),
            streamed_notes=tuple(streamed),
            tokens=TokenSequence(out),
            constraints=cons,
            timing={
                "phase1_s": t_phase1 - t_begin,
                "sampling_s": t_sampling - t_phase1,
                "first_note_s": (first_note_time - t_begin) if first_note_time else None,
                "total_s": time.perf_counter() - t_begin,
                "steps": steps,
            })
        yield ("done", result)

    # -- helpers -------------------------------------------------------------

    def _emit_note(self, plan: _Plan, out: np.ndarray, note_i: int,
                   elapsed_note: float) -> NoteEvent | None:
        row = out[note_i]
        if plan.mode in ("contiguous", "unconditional"):
            gap0_elapsed = plan.constraints.elapsed_notes()[plan.gap_slice[0]]
            onset = plan.anchor_s + (elapsed_note - gap0_elapsed)
            return NoteEvent(
                pitch=int(row[0]) + PITCH_MIN,
                velocity=int(row[1]),
                onset_s=float(onset),
                duration_s=max(TIME_QUANTIZER.dequantize(int(row[2])),
                               MIN_DECODED_DURATION))
        if plan.mode == "variation":
            return NoteEvent(
                pitch=int(row[0]) + PITCH_MIN,
                velocity=int(row[1]),
                onset_s=float(plan.anchor_s + elapsed_note),
                duration_s=max(TIME_QUANTIZER.dequantize(int(row[2])),
                               MIN_DECODED_DURATION))
        original = plan.original_notes[note_i]
        if plan.mode == "pitchify":
            return NoteEvent(pitch=int(row[0]) + PITCH_MIN,
                             velocity=original.velocity,
                             onset_s=original.onset_s,
                             duration_s=original.duration_s)
        # velocify
        duration = (original.duration_s if not plan.gen_mask[note_i, 2]
                    else max(TIME_QUANTIZER.dequantize(int(row[2])),
                             MIN_DECODED_DURATION))
        return NoteEvent(pitch=original.pitch, velocity=int(row[1]),
                         onset_s=original.onset_s, duration_s=duration)

    def _assemble(self, plan: _Plan, request: InpaintRequest, out: np.ndarray,
                  raw_gap: list[NoteEvent], updated: dict[int, NoteEvent]):
        if plan.mode in ("contiguous", "unconditional"):
            gap_lo, gap_hi = plan.gap_slice
            shifts = [TIME_QUANTIZER.dequantize(int(out[i, 3]))
                      for i in range(gap_lo, gap_hi)]
            span = float(np.sum(shifts))
            start, end = plan.region
            fitted = list(raw_gap)
            if request.fit == "rescale" and raw_gap and span > 0:
                factor = (end - start) / span
                fitted = [NoteEvent(n.pitch, n.velocity,
                                    start + (n.onset_s - start) * factor,
                                    n.duration_s) for n in raw_gap]
            elif request.fit == "truncate":
                fitted = [n for n in raw_gap if n.onset_s < end]
            notes = list(plan.prefix_notes) + fitted + list(plan.suffix_notes)
            return Performance.from_notes(notes), fitted
        if plan.mode == "variation":
            notes = list(updated.values())
            return Performance.from_notes(notes), list(notes)
        # attribute modes: untouched notes keep their original identity
        notes = [updated.get(i, n) for i, n in enumerate(plan.original_notes)]
        return Performance.from_notes(notes), [updated[i] for i in sorted(updated)]
