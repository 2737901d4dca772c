"""Model configuration.

JSON field names are the dataclass field names below.  ``key_dim`` selects
the attention projection convention:

``"full"``
    every head projects to the full model width (``key_dim = width``), the
    layout that gives the reference parameter counts 8,177,453 / 3,442,477.
``"split"``
    the model width is shared out between heads (``key_dim = width // heads``).

Attention logits are scaled by ``1 / sqrt(key_dim)`` in both cases.
"""

import dataclasses
import json
from dataclasses import dataclass

VARIANTS = ("lstm", "transformer", "hybrid")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "hybrid"
    seq_len: int = 64
    vocab: int = 45
    d_model: int = 256
    lstm_units: int = 256
    lstm_layers: int = 2
    enc_layers: int = 3
    heads: int = 8
    d_ff: int = 512
    dropout: float = 0.1
    decoder_dropout: float = 0.2
    l2_lambda: float = 0.01
    layernorm_eps: float = 1e-6
    use_embedding: bool = True
    use_positional_encoding: bool = False
    key_dim: str = "full"
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("seq_len", "vocab", "d_model", "lstm_units", "heads", "d_ff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lstm_layers < 1 or self.enc_layers < 0:
            raise ValueError("layer counts must be positive")
        if self.key_dim not in ("full", "split"):
            raise ValueError("key_dim must be 'full' or 'split'")
        if self.key_dim == "split" and self.use_embedding and self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by {self.heads} heads")
        if not (0 <= self.dropout < 1 and 0 <= self.decoder_dropout < 1):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")

    @property
    def width(self) -> int:
        """Feature width entering the first block (d_model, or |V| without embedding)."""
        return self.d_model if self.use_embedding else self.vocab

    @property
    def head_dim(self) -> int:
        if self.key_dim == "full":
            return self.width
        return max(1, self.width // self.heads)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))


def lstm_config(vocab: int = 45, **overrides) -> ModelConfig:
    base = dict(variant="lstm", vocab=vocab, d_model=256, lstm_units=256, lstm_layers=2,
                enc_layers=0, dropout=0.2, decoder_dropout=0.0, l2_lambda=0.01)
    base.update(overrides)
    return ModelConfig(**base)


def transformer_config(vocab: int = 45, **overrides) -> ModelConfig:
    base = dict(variant="transformer", vocab=vocab, d_model=256, enc_layers=4, heads=8,
                d_ff=1024, dropout=0.2, decoder_dropout=0.0, l2_lambda=0.0,
                use_positional_encoding=True)
    base.update(overrides)
    return ModelConfig(**base)


def hybrid_config(vocab: int = 45, **overrides) -> ModelConfig:
    base = dict(variant="hybrid", vocab=vocab, d_model=256, lstm_units=256, lstm_layers=2,
                enc_layers=3, heads=8, d_ff=512, dropout=0.1, decoder_dropout=0.2,
                l2_lambda=0.01, use_positional_encoding=False)
    base.update(overrides)
    return ModelConfig(**base)


def config_for(variant: str, vocab: int = 45, **overrides) -> ModelConfig:
    factory = {"lstm": lstm_config, "transformer": transformer_config, "hybrid": hybrid_config}
    if variant not in factory:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return factory[variant](vocab, **overrides)
