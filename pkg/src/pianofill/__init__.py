"""Piano performance inpainting engine.

Structured four-token-per-note MIDI encoding, a masked linear-attention
encoder-decoder, a two-phase low-latency sampler, and a streaming HTTP
service around it.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import (
    ALPHABETS,
    CHANNELS,
    TIME_QUANTIZER,
    TokenSequence,
    augment,
    decode,
    dequantize_time,
    encode,
    quantize_time,
    text_to_tokens,
    tokens_to_text,
)
from .inference import (
    ConstraintSequence,
    InpaintEngine,
    InpaintRequest,
    InpaintResult,
    build_constraints,
    density_to_note_count,
    top_p_sample,
)
from .midi import MidiParseError, NoteEvent, Performance, parse_midi, write_midi
from .model import ModelConfig, init_params
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ALPHABETS",
    "CHANNELS",
    "ConstraintSequence",
    "InpaintEngine",
    "InpaintRequest",
    "InpaintResult",
    "MidiParseError",
    "ModelConfig",
    "NoteEvent",
    "Performance",
    "TIME_QUANTIZER",
    "TokenSequence",
    "TrainConfig",
    "augment",
    "build_constraints",
    "decode",
    "density_to_note_count",
    "dequantize_time",
    "encode",
    "init_params",
    "load_checkpoint",
    "parse_midi",
    "quantize_time",
    "save_checkpoint",
    "text_to_tokens",
    "tokens_to_text",
    "top_p_sample",
    "train",
    "write_midi",
]
