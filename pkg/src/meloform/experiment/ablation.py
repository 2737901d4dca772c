"""Hybrid ablation grid: every variant is the base config with one named delta."""

from typing import Optional

from ..errors import UnknownVariant
from ..models import ModelConfig, hybrid_config
from .presets import D1_LAMBDAS

ABLATION_IDS = ("Base", "A1a", "A2a", "A3", "B1", "B3a", "C1", "C2",
                "D1a", "D1b", "D1c", "D1d", "D1e", "D1f")

DESCRIPTIONS = {
    "Base": "hybrid base configuration",
    "A1a": "one encoder layer",
    "A2a": "four attention heads",
    "A3": "all dropout removed",
    "B1": "one LSTM layer",
    "B3a": "LSTM units halved",
    "C1": "embedding layer removed",
    "C2": "positional encoding added",
}
for _id, _lam in zip(("D1a", "D1b", "D1c", "D1d", "D1e", "D1f"), D1_LAMBDAS):
    DESCRIPTIONS[_id] = f"L2 lambda = {_lam:g}"


def ablation_delta(variant_id: str, base: ModelConfig) -> dict:
    if variant_id == "Base":
        return {}
    if variant_id == "A1a":
        return {"enc_layers": 1}
    if variant_id == "A2a":
        return {"heads": 4}
    if variant_id == "A3":
        return {"dropout": 0.0, "decoder_dropout": 0.0}
    if variant_id == "B1":
        return {"lstm_layers": 1}
    if variant_id == "B3a":
        return {"lstm_units": base.lstm_units // 2}
    if variant_id == "C1":
        return {"use_embedding": False}
    if variant_id == "C2":
        return {"use_positional_encoding": True}
    if variant_id in ("D1a", "D1b", "D1c", "D1d", "D1e", "D1f"):
        return {"l2_lambda": D1_LAMBDAS["abcdef".index(variant_id[-1])]}
    raise UnknownVariant(f"unknown ablation variant {variant_id!r}")


def ablation_config(variant_id: str, base: Optional[ModelConfig] = None) -> ModelConfig:
    """Base hybrid config (full scale unless ``base`` is given) with the variant's delta."""
    base = base if base is not None else hybrid_config()
    return base.replace(**ablation_delta(variant_id, base))


def config_diff(a: ModelConfig, b: ModelConfig) -> dict:
    da, db = a.to_dict(), b.to_dict()
    return {k: (da[k], db[k]) for k in da if da[k] != db[k]}
