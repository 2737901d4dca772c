"""Autoregressive melody continuation with temperature sampling.

Each melody draws from its own generator ``make_rng(master, GENERATE, i)``,
so melody ``i`` does not depend on how many others are generated alongside
it or in which order.  Contexts shorter than the model window are
left-padded with the padding index, which embeds to the zero vector.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import DELIM, HOLD, PAD, REST, SeedSet, Vocabulary, decode_tokens
from .errors import NonFinite, UnknownSeedToken
from .models import ModelConfig, forward
from .rng import GENERATE, make_rng
from .tensor import ParamSet, no_grad


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.7
    max_steps: int = 256
    seed: int = 1
    max_resample: int = 8

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


def sampling_distribution(logits, tau: float) -> np.ndarray:
    """softmax(logits / tau) in double precision."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise NonFinite("logits contain NaN or Inf")
    if not tau > 0:
        raise ValueError("temperature must be > 0")
    z = z / tau
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


def sample_next(logits, tau: float, rng: np.random.Generator) -> int:
    """Index drawn from softmax(logits / tau) by inverting the CDF at one uniform draw."""
    p = sampling_distribution(logits, tau)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))


@dataclass
class Melody:
    index: int
    tokens: list  # seed prefix followed by generated tokens
    seed_len: int
    stopped_on_delim: bool = False
    resampled: int = 0
    forced_rest: int = 0
    degenerate: bool = False

    @property
    def generated(self):
        return self.tokens[self.seed_len:]


def _check_seed(tokens, vocab: Vocabulary):
    if len(tokens) == 0:
        raise UnknownSeedToken("empty seed")
    for t in tokens:
        if t == DELIM or t not in vocab:
            raise UnknownSeedToken(f"seed token {t!r} is not usable with this vocabulary")


def generate_batch(params: ParamSet, cfg: ModelConfig, vocab: Vocabulary, seeds: Sequence,
                   gcfg: GenerationConfig, indices: Optional[Sequence[int]] = None) -> list:
    """Continue every seed; returns one :class:`Melody` per seed.

    All melodies advance in lock-step through one batched forward pass of
    fixed shape, finished ones simply stop being sampled.
    """
    seeds = [list(s) for s in seeds]
    for s in seeds:
        _check_seed(s, vocab)
    indices = list(range(len(seeds))) if indices is None else list(indices)
    rngs = [make_rng(gcfg.seed, GENERATE, i) for i in indices]
    out = [Melody(i, list(s), len(s), degenerate=gcfg.max_steps == 0) for i, s in zip(indices, seeds)]
    if not seeds or gcfg.max_steps == 0:
        return out
    L = cfg.seq_len
    hold = vocab.lookup(HOLD) if HOLD in vocab else None
    delim = vocab.lookup(DELIM)
    rest = vocab.lookup(REST) if REST in vocab else None
    ids = [list(vocab.encode(s)) for s in seeds]
    active = [True] * len(seeds)
    with no_grad():
        for _ in range(gcfg.max_steps):
            if not any(active):
                break
            ctx = np.full((len(seeds), L), PAD, dtype=np.int64)
            for r, seq in enumerate(ids):
                tail = seq[-L:]
                ctx[r, L - len(tail):] = tail
            logits = forward(params, cfg, ctx, train=False).data
            for r in range(len(seeds)):
                if not active[r]:
                    continue
                mel = out[r]
                k = sample_next(logits[r], gcfg.temperature, rngs[r])
                if k == hold and not _has_event(mel.tokens):
                    for _ in range(gcfg.max_resample):
                        mel.resampled += 1
                        k = sample_next(logits[r], gcfg.temperature, rngs[r])
                        if k != hold:
                            break
                    else:
                        if rest is None:
                            raise UnknownSeedToken("vocabulary has no rest symbol to fall back on")
                        k = rest
                        mel.forced_rest += 1
                if k == delim:
                    mel.stopped_on_delim = True
                    active[r] = False
                    continue
                ids[r].append(k)
                mel.tokens.append(vocab.symbols[k])
    return out


def _has_event(tokens) -> bool:
    return any(t != HOLD for t in tokens)


def generate_melody(params: ParamSet, cfg: ModelConfig, vocab: Vocabulary, seed_tokens,
                    gcfg: GenerationConfig, index: int = 0) -> Melody:
    return generate_batch(params, cfg, vocab, [seed_tokens], gcfg, [index])[0]


def sanitize(tokens) -> list:
    """Drop leading holds so the sequence decodes."""
    i = 0
    while i < len(tokens) and tokens[i] == HOLD:
        i += 1
    return list(tokens[i:])


def write_generation(melodies: list, seed_set: Optional[SeedSet], gcfg: GenerationConfig, out_dir,
                     extra: Optional[dict] = None) -> dict:
    """One token file per melody plus ``manifest.json``; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for m in melodies:
        name = f"melody_{m.index:04d}.txt"
        (out_dir / name).write_text(" ".join(m.tokens) + "\n", encoding="utf-8")
        seed = seed_set.seeds[m.index] if seed_set is not None else None
        entries.append({
            "index": m.index,
            "file": name,
            "seed_source_id": seed.source_id if seed else None,
            "seed_split": seed.split if seed else None,
            "prng_seed": [gcfg.seed, GENERATE, m.index],
            "token_count": len(m.tokens),
            "generated": len(m.generated),
            "stopped_on_delim": m.stopped_on_delim,
            "resampled": m.resampled,
            "forced_rest": m.forced_rest,
            "degenerate": m.degenerate,
        })
    manifest = {"generation_config": asdict(gcfg), "melodies": entries}
    manifest.update(extra or {})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return manifest


def read_generation(out_dir) -> list:
    """Token lists of a generation directory, in manifest order."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    return [(out_dir / e["file"]).read_text(encoding="utf-8").split() for e in manifest["melodies"]]


def melody_score(tokens):
    return decode_tokens(sanitize(tokens))
