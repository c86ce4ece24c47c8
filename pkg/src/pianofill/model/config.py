"""Architecture hyperparameters for the masked linear-attention encoder-decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class ModelConfig:
    n_heads: int = 8
    head_dim: int = 64
    ff_dim: int = 1024
    encoder_layers: int = 4
    decoder_layers: int = 8
    dropout: float = 0.1
    channel_embed_dim: int = 12
    token_pos_dim: int = 128
    elapsed_dim: int = 128
    max_notes_per_chunk: int = 1024
    top_p_default: float = 0.95
    # elapsed seconds are multiplied by this before the sinusoid (centisecond
    # resolution at the default)
    elapsed_pos_scale: float = 100.0

    def __post_init__(self):
        for f in ("n_heads", "head_dim", "ff_dim", "encoder_layers", "decoder_layers",
                  "channel_embed_dim", "token_pos_dim", "elapsed_dim"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.token_pos_dim % 2 or self.elapsed_dim % 2:
            raise ValueError("sinusoidal embedding dims must be even")

    @property
    def model_dim(self) -> int:
        return self.n_heads * self.head_dim

    @property
    def positional_total(self) -> int:
        return self.channel_embed_dim + self.token_pos_dim + self.elapsed_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Desktop-CPU scale preset used by the bench harness and the demo service."""
        return cls(n_heads=8, head_dim=16, ff_dim=256, encoder_layers=3,
                   decoder_layers=4)

    @classmethod
    def toy(cls) -> "ModelConfig":
        """Tiny preset for gradient checks and fast tests."""
        return cls(n_heads=2, head_dim=4, ff_dim=16, encoder_layers=2,
                   decoder_layers=2, channel_embed_dim=4, token_pos_dim=8,
                   elapsed_dim=8, dropout=0.0)
