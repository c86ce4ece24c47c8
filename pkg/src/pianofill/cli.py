"""Umbrella command line: serve / train / inpaint / encode / decode / bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_digest, load_checkpoint, save_checkpoint
from .codec import decode, encode, text_to_tokens, tokens_to_text
from .inference import InpaintEngine, InpaintRequest
from .midi import Performance, parse_midi, write_midi
from .model.config import ModelConfig
from .model.network import init_params
from .train import TrainConfig, load_corpus, split_corpus, train

PRESETS = {"toy": ModelConfig.toy, "desk": ModelConfig.desk, "full": ModelConfig}


def _load_engine(ckpt: str | None, preset: str = "desk", seed: int = 0):
    if ckpt:
        params, config, _step = load_checkpoint(ckpt)
        return InpaintEngine(params, config), checkpoint_digest(ckpt)
    config = PRESETS[preset]()
    params = init_params(config, np.random.Generator(np.random.Philox(seed)))
    return InpaintEngine(params, config), None


def cmd_encode(args):
    perf = parse_midi(Path(args.infile).read_bytes(),
                      sustain_pedal=not args.no_sustain_pedal)
    text = tokens_to_text(encode(perf))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_decode(args):
    text = Path(args.infile).read_text() if args.infile else sys.stdin.read()
    data = write_midi(decode(text_to_tokens(text)))
    Path(args.out).write_bytes(data)


def cmd_train(args):
    corpus = load_corpus(args.data)
    if not corpus:
        raise SystemExit(f"no MIDI files under {args.data}")
    train_set, valid_set = split_corpus(corpus)
    model_cfg = PRESETS[args.preset]()
    cfg = TrainConfig(
        chunk_notes=args.chunk_notes, batch_size=args.batch_size,
        learning_rate=args.lr, warmup_steps=args.warmup, total_steps=args.steps,
        seed=args.seed, mask_mode=args.mask_mode, augment=not args.no_augment,
        short_chunks=args.short_chunks)
    print(json.dumps({"train_files": len(train_set), "valid_files": len(valid_set),
                      "preset": args.preset}), file=sys.stderr)
    params, _history = train(train_set or corpus, model_cfg, cfg,
                             log_stream=sys.stdout)
    save_checkpoint(args.out, params, model_cfg, step=cfg.total_steps)
    print(json.dumps({"saved": args.out}), file=sys.stderr)


def cmd_inpaint(args):
    engine, _digest = _load_engine(args.ckpt)
    context = (parse_midi(Path(args.infile).read_bytes())
               if args.infile else Performance(()))
    if (args.start is None) != (args.end is None):
        raise SystemExit("--start and --end must be given together")
    request = InpaintRequest(
        context=context, mode=args.mode,
        region=(args.start, args.end) if args.start is not None else None,
        note_count=args.note_count, density=args.density, top_p=args.top_p,
        seed=args.seed, fit=args.fit, velocity_only=args.velocity_only)
    result = engine.inpaint(request)
    Path(args.out).write_bytes(write_midi(result.performance))
    print(json.dumps({"notes": len(result.performance),
                      "generated": len(result.generated_notes),
                      "timing": result.timing}))


def cmd_serve(args):
    import uvicorn

    from .service import create_app
    engine, digest = _load_engine(args.ckpt, preset=args.preset)
    app = create_app(engine, checkpoint_sha256=digest,
                     max_sessions=args.max_sessions,
                     cors_origins=tuple(args.cors_origin))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def cmd_bench(args):
    from .bench import BenchConfig, format_summary, run_bench
    engine, _digest = _load_engine(args.ckpt, preset=args.preset)
    cfg = BenchConfig(repeats=args.repeats)
    if args.quick:
        cfg = BenchConfig(context_notes=(128, 512), gap_notes=(8, 16, 32),
                          position_gap=16, repeats=args.repeats)
    report = run_bench(engine, cfg, progress=lambda m: print(f"# {m}", file=sys.stderr))
    if args.csv:
        report.write_csv(args.csv)
        print(f"# rows -> {args.csv}", file=sys.stderr)
    print(format_summary(report.summary))
    ok = (report.summary["position_independent"] and report.summary["l_linear"]
          and report.summary["suffix_independent"])
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pianofill")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="MIDI file -> token text (one note per line)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--no-sustain-pedal", action="store_true")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="token text -> MIDI file")
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train on a directory of MIDI files")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-notes", type=int, default=1024)
    p.add_argument("--mask-mode", choices=("slice", "channel"), default="slice")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--short-chunks", choices=("pad", "skip"), default="pad")
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inpaint", help="regenerate a region of a MIDI file")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=float, default=None)
    p.add_argument("--end", type=float, default=None)
    p.add_argument("--density", type=float, default=None)
    p.add_argument("--note-count", type=int, default=None)
    p.add_argument("--mode", choices=("contiguous", "unconditional", "velocify",
                                      "pitchify", "variation"),
                   default="contiguous")
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fit", choices=("rescale", "truncate", "free"),
                   default="rescale")
    p.add_argument("--velocity-only", action="store_true")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("serve", help="run the streaming HTTP service")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--max-sessions", type=int, default=4)
    p.add_argument("--cors-origin", action="append", default=["*"])
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="measure sampling-phase scaling properties")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--csv", default=None)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
