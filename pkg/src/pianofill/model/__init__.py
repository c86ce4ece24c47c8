from .attention import AttentionState, attention_step, feature_map, linear_attention
from .config import ModelConfig
from .embeddings import positional_features, sinusoid
from .network import (
    DecoderState,
    decoder_forward,
    decoder_prefix_state,
    decoder_step,
    encoder_forward,
    init_params,
    training_backward,
    training_forward,
)

__all__ = [
    "AttentionState",
    "DecoderState",
    "ModelConfig",
    "attention_step",
    "decoder_forward",
    "decoder_prefix_state",
    "decoder_step",
    "encoder_forward",
    "feature_map",
    "init_params",
    "linear_attention",
    "positional_features",
    "sinusoid",
    "training_backward",
    "training_forward",
]
