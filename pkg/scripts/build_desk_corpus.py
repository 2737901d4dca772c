#!/usr/bin/env python3
"""Regenerate the bundled desk corpus from music21's Essen folksong ABC files.

The desk corpus is a few hundred German folk melodies written out as
single-spine ``**kern`` files.  Ties and grace notes are kept as Kern tie /
grace marks so that the parser's rejection path sees real data.

Requires music21 (not a runtime dependency of the package).

Usage:
    python scripts/build_desk_corpus.py [--n 240] [--seed 1]
"""

import argparse
import random
from fractions import Fraction
from pathlib import Path

from music21 import converter, corpus

# German collections of the Essen database
SOURCES = [
    "altdeu10", "altdeu20", "ballad10", "ballad20", "ballad30", "ballad40",
    "boehme10", "boehme20", "dva0", "erk10", "erk20", "fink0", "kinder0",
    "zuccal0",
]

OUT = Path(__file__).resolve().parents[1] / "src" / "meloform" / "data" / "desk_corpus"

NOTICE = """\
Desk corpus: German folk melodies from the Essen Folksong Collection
(EsAC, encoded under the supervision of Helmut Schaffrath; maintained by
Ewa Dahlig-Turek), as distributed in ABC form by Seymour Schlien with the
music21 corpus.  Converted to monophonic **kern by
scripts/build_desk_corpus.py.  Distribution is for non-commercial research
use only, following the terms in music21/corpus/essenFolksong/license.txt.
"""


def recip(ql):
    """Kern duration string for a quarter length, or None."""
    ql = Fraction(ql)
    if ql <= 0:
        return None
    for dots in range(3):
        base = ql / (2 - Fraction(1, 2 ** dots))
        if base == 8:
            return "0" + "." * dots
        r = Fraction(4) / base
        if r.denominator == 1:
            return str(r.numerator) + "." * dots
    r = Fraction(4) / ql
    return f"{r.numerator}%{r.denominator}"


def kern_pitch(p):
    letter = p.step.lower()
    octave = p.octave
    if octave >= 4:
        name = letter * (octave - 3)
    else:
        name = letter.upper() * (4 - octave)
    acc = ""
    if p.accidental is not None:
        alter = int(p.accidental.alter)
        acc = "#" * alter if alter > 0 else "-" * (-alter)
    return name + acc


def to_kern(score, source_id):
    lines = [f"!!!OTL: {score.metadata.title or ''}".rstrip(),
             f"!!!SCT: {source_id}", "**kern"]
    ks = score.flatten().getElementsByClass("KeySignature")
    if ks:
        marks = "".join(
            p.step.lower() + ("#" if p.accidental.alter > 0 else "-")
            for p in ks[0].alteredPitches
        )
        lines.append(f"*k[{marks}]")
    ts = score.flatten().getElementsByClass("TimeSignature")
    if ts:
        lines.append(f"*M{ts[0].ratioString}")
    part = score.parts[0] if score.parts else score
    bar = 1
    for m in part.getElementsByClass("Measure"):
        if bar > 1 or m.number > 0:
            lines.append(f"={bar}")
        bar += 1
        for n in m.notesAndRests:
            if n.duration.isGrace:
                lines.append("8" + kern_pitch(n.pitch) + "q")
                continue
            dur = recip(n.quarterLength)
            if dur is None:
                continue
            if n.isRest:
                lines.append(dur + "r")
                continue
            if n.isChord:
                lines.append(" ".join(dur + kern_pitch(p) for p in n.pitches))
                continue
            tok = dur + kern_pitch(n.pitch)
            if n.tie is not None:
                tok = {"start": "[", "continue": "", "stop": ""}[n.tie.type] + tok + \
                    {"start": "", "continue": "_", "stop": "]"}[n.tie.type]
            lines.append(tok)
    lines += ["==", "*-"]
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=240)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    pool = []
    for name in SOURCES:
        path = corpus.getWork(f"essenFolksong/{name}.abc")
        opus = converter.parse(path)
        for i, s in enumerate(opus.scores):
            pool.append((name, i, s))
    rng = random.Random(args.seed)
    picked = rng.sample(pool, args.n)

    OUT.mkdir(parents=True, exist_ok=True)
    for old in OUT.glob("*.krn"):
        old.unlink()
    for name, i, s in sorted(picked, key=lambda t: (t[0], t[1])):
        source_id = f"{name}_{i:03d}"
        (OUT / f"{source_id}.krn").write_text(to_kern(s, source_id), encoding="utf-8")
    (OUT / "NOTICE").write_text(NOTICE, encoding="utf-8")
    print(f"wrote {len(picked)} files to {OUT}")


if __name__ == "__main__":
    main()
