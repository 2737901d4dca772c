#!/usr/bin/env python3
"""Count the desk-preset vocabulary without going through meloform's parser.

music21 does the Kern parsing and Krumhansl-Kessler key finding; ties,
grace notes, chords and off-list durations are rejected, the first 200
accepted files (sorted by name) are kept, and the training split is the
PCG64 permutation of ``SeedSequence([seed, 0])`` over sorted ids.  The
printed size and symbol list are the golden values in the acceptance suite.

Requires music21.  Usage: python scripts/desk_vocab_oracle.py [--seed 1]
"""

import argparse
from fractions import Fraction
from pathlib import Path

import numpy as np
from music21 import chord, converter, note

ROOT = Path(__file__).resolve().parents[1] / "src" / "meloform" / "data" / "desk_corpus"
ALLOWED = {Fraction(x) for x in ("1/4", "1/2", "3/4", "1", "3/2", "2", "3", "4")}


def tokens(score):
    events = list(score.flatten().notesAndRests)
    if not events or any(isinstance(e, chord.Chord) or e.duration.isGrace for e in events):
        return None
    if any(isinstance(e, note.Note) and e.tie is not None for e in events):
        return None
    if any(Fraction(e.quarterLength) not in ALLOWED for e in events):
        return None
    k = score.analyze("key.krumhansl")
    shift = ((0 if k.mode == "major" else 9) - k.tonic.pitchClass) % 12
    shift = shift - 12 if shift > 6 else shift
    out = []
    for e in events:
        out.append("r" if e.isRest else str(e.pitch.midi + shift))
        out += ["_"] * (int(Fraction(e.quarterLength) * 4) - 1)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--cap", type=int, default=200)
    args = ap.parse_args()
    songs = {}
    for path in sorted(ROOT.rglob("*.krn")):
        if len(songs) >= args.cap:
            break
        try:
            toks = tokens(converter.parse(path.read_text(encoding="utf-8"), format="humdrum"))
        except Exception:  # anything music21 cannot read is rejected
            toks = None
        if toks is not None:
            songs[path.stem] = toks
    ids = sorted(songs)
    perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence([args.seed, 0]))).permutation(len(ids))
    n_train = round(0.8 * len(ids))  # exact for the 200-song cap
    symbols = {"/"} | {t for j in perm[:n_train] for t in songs[ids[j]]}
    print(len(symbols))
    print(" ".join(sorted(symbols)))


if __name__ == "__main__":
    main()
