"""Token corpus: grid encoding, splits, vocabulary, dataset files, windows, seeds.

A melody is a list of string symbols sampled on a sixteenth-note grid:
MIDI numbers (``"60"``) and rests (``"r"``) start an event, ``"_"`` holds it
for one more grid step, and ``"/"`` only ever appears as the song delimiter.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadRatios,
    CorruptDelimiter,
    DanglingHold,
    DecodeError,
    InsufficientSongs,
    NonGridDuration,
    TooShort,
    UnknownSymbol,
)
from .kern import NoteEvent, Score
from .rng import SEEDS, SPLIT, make_rng

REST = "r"
HOLD = "_"
DELIM = "/"
GRID = Fraction(1, 4)
SEQUENCE_LENGTH = 64
PAD = -1  # reserved input index, embeds to the zero vector


def is_pitch(sym: str) -> bool:
    return sym.isdigit()


def encode_score(score: Score, grid=GRID) -> list:
    tokens = []
    for e in score.events:
        steps = Fraction(e.duration) / Fraction(grid)
        if steps.denominator != 1 or steps < 1:
            raise NonGridDuration(f"{score.source_id}: duration {e.duration} is not a multiple of {grid}")
        tokens.append(REST if e.pitch is None else str(e.pitch))
        tokens.extend([HOLD] * (int(steps) - 1))
    return tokens


def decode_tokens(tokens: Sequence[str], grid=GRID, source_id: str = "") -> Score:
    """Inverse of :func:`encode_score`.  Rests-only sequences are allowed."""
    pairs = []
    for i, sym in enumerate(tokens):
        if sym == HOLD:
            if not pairs:
                raise DanglingHold(f"hold symbol at position {i} has nothing to extend")
            pairs[-1][1] += 1
        elif sym == REST:
            pairs.append([None, 1])
        elif sym == DELIM:
            raise DecodeError(f"delimiter at position {i} inside a melody")
        elif is_pitch(sym) and int(sym) <= 127:
            pairs.append([int(sym), 1])
        else:
            raise DecodeError(f"unknown symbol {sym!r} at position {i}")
    grid = Fraction(grid)
    return Score.from_pairs([(p, n * grid) for p, n in pairs], source_id)


def check_tokens(tokens: Sequence[str]) -> None:
    """Raise DanglingHold unless every hold follows a note, rest or hold."""
    prev = None
    for i, sym in enumerate(tokens):
        if sym == HOLD and (prev is None or prev == DELIM):
            raise DanglingHold(f"hold symbol at position {i}")
        prev = sym


@dataclass
class SplitManifest:
    train: list
    val: list
    test: list
    seed: int

    def split_of(self, source_id):
        for name in ("train", "val", "test"):
            if source_id in getattr(self, name):
                return name
        raise KeyError(source_id)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train, "val": self.val,
                           "test": self.test}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["train"], d["val"], d["test"], d["seed"])


def largest_remainder(n: int, ratios) -> list:
    quotas = [n * r for r in ratios]
    sizes = [int(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(ids, ratios=(0.80, 0.06, 0.14), seed: int = 1) -> SplitManifest:
    """Seeded shuffle of the sorted ids, then contiguous train/val/test cuts."""
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3 or min(ratios) < 0:
        raise BadRatios(f"ratios {ratios} must be three non-negative numbers summing to 1")
    ids = sorted(ids)
    if not ids:
        raise ValueError("no ids to split")
    order = make_rng(seed, SPLIT).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train, n_val, _ = largest_remainder(len(ids), ratios)
    return SplitManifest(shuffled[:n_train], shuffled[n_train:n_train + n_val],
                         shuffled[n_train + n_val:], seed)


class Vocabulary:
    """Bijective symbol/index map, indices in sorted symbol order."""

    def __init__(self, symbols):
        self.symbols = sorted(set(symbols))
        self.index = {s: i for i, s in enumerate(self.symbols)}

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.symbols == other.symbols

    def lookup(self, sym: str) -> int:
        try:
            return self.index[sym]
        except KeyError:
            raise UnknownSymbol(f"symbol {sym!r} is not in the training vocabulary") from None

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)

    def decode(self, indices) -> list:
        return [self.symbols[int(i)] for i in indices]

    def to_json(self) -> str:
        return json.dumps(self.index, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        mapping = json.loads(text)
        vocab = cls(mapping)
        if vocab.index != mapping:
            raise ValueError("vocabulary file is not in canonical sorted order")
        return vocab


def build_vocabulary(train_sequences) -> Vocabulary:
    symbols = {DELIM}
    n = 0
    for seq in train_sequences:
        symbols.update(seq)
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from no sequences")
    return Vocabulary(symbols)


def join_songs(sequences, delim_len=SEQUENCE_LENGTH) -> list:
    stream = []
    for i, seq in enumerate(sequences):
        if i:
            stream.extend([DELIM] * delim_len)
        stream.extend(seq)
    return stream


def write_dataset_file(sequences, path, delim_len=SEQUENCE_LENGTH) -> None:
    stream = join_songs(sequences, delim_len)
    text = " ".join(stream) + "\n" if stream else ""
    Path(path).write_text(text, encoding="utf-8")


def read_dataset_file(path, delim_len=SEQUENCE_LENGTH) -> list:
    tokens = Path(path).read_text(encoding="utf-8").split()
    songs, current, run = [], [], 0
    for tok in tokens:
        if tok == DELIM:
            run += 1
            continue
        if run:
            if run != delim_len or not current:
                raise CorruptDelimiter(f"{path}: delimiter run of {run}, expected {delim_len}")
            songs.append(current)
            current, run = [], 0
        current.append(tok)
    if run:
        raise CorruptDelimiter(f"{path}: trailing delimiter run of {run}")
    if current:
        songs.append(current)
    return songs


@dataclass
class WindowBatch:
    """Integer windows ``(n, L)`` and next-token targets ``(n,)``.

    Inputs are kept as indices; :meth:`one_hot` materializes the one-hot view
    the models consume, batch by batch.
    """

    inputs: np.ndarray
    targets: np.ndarray
    vocab_size: int

    def __len__(self):
        return len(self.targets)

    def one_hot(self, rows=None, dtype=np.float32) -> np.ndarray:
        idx = self.inputs if rows is None else self.inputs[rows]
        out = np.zeros(idx.shape + (self.vocab_size,), dtype=dtype)
        valid = idx >= 0
        out[valid, idx[valid]] = 1.0
        return out

    def subset(self, rows):
        return WindowBatch(self.inputs[rows], self.targets[rows], self.vocab_size)


def make_windows(tokens, vocab: Vocabulary, length: int = SEQUENCE_LENGTH) -> WindowBatch:
    """Every length-``L`` window of the stream whose input and target avoid delimiters."""
    if len(tokens) <= length:
        raise TooShort(f"stream of {len(tokens)} tokens is too short for windows of {length}")
    idx = vocab.encode(tokens)
    is_delim = np.array([t == DELIM for t in tokens], dtype=np.int64)
    # delimiters in tokens[t : t+L+1]
    csum = np.concatenate([[0], np.cumsum(is_delim)])
    n = len(tokens) - length
    starts = np.arange(n)
    clean = (csum[starts + length + 1] - csum[starts]) == 0
    starts = starts[clean]
    inputs = idx[starts[:, None] + np.arange(length)[None, :]]
    targets = idx[starts + length]
    return WindowBatch(inputs, targets, len(vocab))


def known_sequences(sequences, vocab: Vocabulary):
    """Split sequences into (kept, dropped_positions) by vocabulary coverage."""
    kept, dropped = [], []
    for i, seq in enumerate(sequences):
        if all(t in vocab for t in seq):
            kept.append(seq)
        else:
            dropped.append(i)
    return kept, dropped


@dataclass
class Seed:
    source_id: str
    split: str
    tokens: list
    short: bool = False


@dataclass
class SeedSet:
    seeds: list = field(default_factory=list)

    def __len__(self):
        return len(self.seeds)

    def counts(self) -> dict:
        out = {"train": 0, "val": 0, "test": 0}
        for s in self.seeds:
            out[s.split] += 1
        return out

    def to_text(self) -> str:
        return "".join(
            f"{s.split}\t{s.source_id}\t{' '.join(s.tokens)}" + ("\tshort\n" if s.short else "\n")
            for s in self.seeds
        )

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path):
        seeds = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            split, source_id, toks, *flag = line.split("\t")
            seeds.append(Seed(source_id, split, toks.split(), flag == ["short"]))
        return cls(seeds)


def extract_seeds(manifest: SplitManifest, encoded: dict, per_split=(500, 100, 400),
                  prefix_len: int = 20, seed: int = 1, vocab: Optional[Vocabulary] = None) -> SeedSet:
    """Draw songs per split without replacement and keep their first tokens.

    With ``vocab`` given, only songs whose prefix is fully in the vocabulary
    are eligible, so every seed can be fed to a trained model.
    """
    rng = make_rng(seed, SEEDS)
    out = []
    for split, count in zip(("train", "val", "test"), per_split):
        pool = [sid for sid in getattr(manifest, split)
                if vocab is None or all(t in vocab for t in encoded[sid][:prefix_len])]
        if len(pool) < count:
            raise InsufficientSongs(f"{split} split has {len(pool)} eligible songs, {count} requested")
        picks = rng.choice(len(pool), size=count, replace=False)
        for i in picks:
            sid = pool[int(i)]
            toks = list(encoded[sid][:prefix_len])
            out.append(Seed(sid, split, toks, short=len(encoded[sid]) <= prefix_len))
    return SeedSet(out)
