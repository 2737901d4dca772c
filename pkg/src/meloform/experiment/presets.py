"""Run presets: full-scale settings and a laptop-sized desk setting."""

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..generator import GenerationConfig
from ..models import ModelConfig, hybrid_config, lstm_config, transformer_config
from ..trainer import TrainConfig

VARIANT_ORDER = ("lstm", "transformer", "hybrid")
D1_LAMBDAS = (0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0)


@dataclass(frozen=True)
class Preset:
    name: str
    corpus_cap: Optional[int]
    seeds_per_split: tuple
    models: dict  # variant -> ModelConfig template (vocab filled in after preprocessing)
    training: dict  # variant -> TrainConfig
    generation: GenerationConfig
    prefix_len: int = 20
    ablations: tuple = ()

    def model_config(self, variant: str, vocab: int) -> ModelConfig:
        return self.models[variant].replace(vocab=vocab)

    def train_config(self, variant: str, seed: int) -> TrainConfig:
        return dataclasses.replace(self.training[variant], seed=seed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "corpus_cap": self.corpus_cap,
            "seeds_per_split": list(self.seeds_per_split),
            "prefix_len": self.prefix_len,
            "models": {k: v.to_dict() for k, v in self.models.items()},
            "training": {k: v.to_dict() for k, v in self.training.items()},
            "generation": dataclasses.asdict(self.generation),
            "ablations": list(self.ablations),
        }


def desk_corpus_path() -> Path:
    return Path(str(resources.files("meloform") / "data" / "desk_corpus"))


def paper_preset() -> Preset:
    return Preset(
        name="paper",
        corpus_cap=None,
        seeds_per_split=(500, 100, 400),
        models={"lstm": lstm_config(), "transformer": transformer_config(), "hybrid": hybrid_config()},
        training={"lstm": TrainConfig(lr_policy="plateau"),
                  "transformer": TrainConfig(lr_policy="warmup", warmup=4000),
                  "hybrid": TrainConfig(lr_policy="plateau")},
        generation=GenerationConfig(temperature=0.7, max_steps=256),
        ablations=("Base", "A1a", "A2a", "A3", "B1", "B3a", "C1", "C2",
                   "D1a", "D1b", "D1c", "D1d", "D1e", "D1f"),
    )


def desk_preset() -> Preset:
    """200 songs, 64-wide models, 50 melodies per model, a few hundred optimizer steps."""
    small = dict(d_model=64, key_dim="split")
    train = dict(epochs_max=4, max_steps_per_epoch=40, max_val_windows=512)
    return Preset(
        name="desk",
        corpus_cap=200,
        seeds_per_split=(25, 5, 20),
        models={
            "lstm": lstm_config(lstm_units=64, **small),
            "transformer": transformer_config(enc_layers=2, d_ff=256, **small),
            "hybrid": hybrid_config(lstm_units=64, enc_layers=2, d_ff=128, **small),
        },
        training={"lstm": TrainConfig(lr_policy="plateau", **train),
                  "transformer": TrainConfig(lr_policy="warmup", warmup=400, **train),
                  "hybrid": TrainConfig(lr_policy="plateau", **train)},
        generation=GenerationConfig(temperature=0.7, max_steps=256),
        ablations=("D1a", "D1b", "D1c", "D1d", "D1e", "D1f"),
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
