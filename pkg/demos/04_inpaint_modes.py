#!/usr/bin/env python3
"""Run all five generation modes against one clip and write the results.

Uses the checkpoint from 03_train_toy_model.py when present (run that first
for less random output), otherwise fresh random weights: the mechanics are
identical either way.  Output MIDI lands in demos/out/.
"""

from pathlib import Path

import numpy as np

from pianofill.checkpoint import load_checkpoint
from pianofill.inference import InpaintEngine, InpaintRequest
from pianofill.midi import NoteEvent, Performance, write_midi
from pianofill.model.config import ModelConfig
from pianofill.model.network import init_params

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
ckpt = OUT / "toy.ckpt"

if ckpt.exists():
    params, cfg, step = load_checkpoint(ckpt)
    print(f"using {ckpt} (trained {step} steps)")
else:
    cfg = ModelConfig(n_heads=4, head_dim=8, ff_dim=64, encoder_layers=2,
                      decoder_layers=2, channel_embed_dim=4, token_pos_dim=16,
                      elapsed_dim=16)
    params = init_params(cfg, np.random.Generator(np.random.Philox(0)))
    print("no checkpoint found, using random weights (run 03_ first for better output)")

engine = InpaintEngine(params, cfg)

scale = [48, 50, 52, 55, 57, 60, 62, 64]
clip = Performance.from_notes(
    [NoteEvent(scale[i % 8], 64, i * 0.25, 0.2) for i in range(32)])
write_midi(clip)  # sanity: the clip itself is writable
(OUT / "input.mid").write_bytes(write_midi(clip))

requests = {
    "contiguous": InpaintRequest(context=clip, mode="contiguous",
                                 region=(2.0, 4.0), density=4.0, seed=1),
    "unconditional": InpaintRequest(context=Performance(()), mode="unconditional",
                                    region=(0.0, 6.0), density=3.0, seed=2),
    "velocify": InpaintRequest(context=clip, mode="velocify", seed=3),
    "pitchify": InpaintRequest(context=clip, mode="pitchify", seed=4),
    "variation": InpaintRequest(context=clip, mode="variation", seed=5),
}

for name, req in requests.items():
    notes_seen = []
    result = engine.inpaint(req, on_note=notes_seen.append)
    path = OUT / f"{name}.mid"
    path.write_bytes(write_midi(result.performance))
    t = result.timing
    print(f"{name:13s}: {len(result.performance):3d} notes out "
          f"({len(notes_seen)} streamed), phase1 {t['phase1_s'] * 1e3:5.1f} ms, "
          f"sampling {t['sampling_s'] * 1e3:6.1f} ms -> {path.name}")

print("\npitchify keeps rhythm+dynamics, velocify keeps the score; compare the")
print("files in a DAW or re-encode them with `pianofill encode`.")
