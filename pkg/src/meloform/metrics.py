"""Musical-quality metrics for monophonic token sequences.

Eleven local metrics describe note-to-note behaviour and six global metrics
describe distributions and long-range structure.  Times are quarter-lengths
held as exact fractions; variances and standard deviations go through
:mod:`statistics`, which works in exact rational arithmetic before rounding
once, so shifting every pitch by a constant reproduces the same floats.

Inputs too short for a metric (fewer than two notes for interval metrics,
fewer than three intervals for motifs, no qualifying window) give ``0.0``
and put the metric name in the vector's ``flags``.
"""

import csv
import io
import json
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import GRID, decode_tokens
from .errors import DecodeError, EmptyCorpus, EmptySet
from .kern import key_from_histogram

LOCAL_METRICS = (
    "pitch_variance", "pitch_range", "rhythmic_variance", "note_density", "rest_ratio",
    "interval_variability", "note_repetition", "contour_stability", "syncopation",
    "harmonic_tension", "kl_divergence",
)
GLOBAL_METRICS = (
    "pitch_entropy", "rhythmic_entropy", "motif_diversity", "harmonic_complexity",
    "contour_variability", "tonal_drift",
)
METRIC_NAMES = LOCAL_METRICS + GLOBAL_METRICS

DISSONANT_CLASSES = frozenset({1, 2, 6, 10, 11})
UNIT_INTERVAL = ("rest_ratio", "contour_stability", "harmonic_tension", "motif_diversity",
                 "harmonic_complexity")
NON_NEGATIVE = ("pitch_variance", "pitch_range", "rhythmic_variance", "note_density",
                "interval_variability", "note_repetition", "syncopation", "kl_divergence",
                "contour_variability", "tonal_drift")


@dataclass(frozen=True)
class MelodyFeatures:
    pitches: tuple
    onsets: tuple  # Fraction, per note
    durations: tuple  # Fraction, per note
    events: tuple  # NoteEvent, notes and rests in order
    rest_time: Fraction
    total_time: Fraction

    @property
    def pitch_classes(self):
        return tuple(p % 12 for p in self.pitches)

    @property
    def intervals(self):
        return tuple(b - a for a, b in zip(self.pitches, self.pitches[1:]))


def extract_features(tokens: Sequence[str]) -> MelodyFeatures:
    if len(tokens) == 0:
        raise DecodeError("empty token sequence")
    score = decode_tokens(tokens)
    notes = [e for e in score.events if e.pitch is not None]
    rest_time = sum((e.duration for e in score.events if e.pitch is None), Fraction(0))
    return MelodyFeatures(
        pitches=tuple(e.pitch for e in notes),
        onsets=tuple(e.onset for e in notes),
        durations=tuple(e.duration for e in notes),
        events=tuple(score.events),
        rest_time=rest_time,
        total_time=score.total_duration,
    )


@dataclass(frozen=True)
class ReferenceDistribution:
    probs: tuple  # 12 smoothed pitch-class probabilities
    epsilon: float

    def to_json(self) -> str:
        return json.dumps({"epsilon": self.epsilon, "probs": list(self.probs)}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["probs"]), d["epsilon"])


def _smooth(weights, eps: float) -> tuple:
    total = math.fsum(weights)
    p = [w / total for w in weights]
    z = 1.0 + 12 * eps
    return tuple((x + eps) / z for x in p)


def build_reference(sequences, eps: float = 1e-6) -> ReferenceDistribution:
    """Duration-weighted pitch-class frequencies of a corpus, add-eps smoothed."""
    weights = [Fraction(0)] * 12
    for seq in sequences:
        for e in decode_tokens(seq).events:
            if e.pitch is not None:
                weights[e.pitch % 12] += e.duration
    if sum(weights) == 0:
        raise EmptyCorpus("reference corpus contains no notes")
    return ReferenceDistribution(_smooth([float(w) for w in weights], eps), eps)


@dataclass
class MetricVector:
    values: dict
    flags: frozenset = field(default_factory=frozenset)

    def __getitem__(self, name):
        return self.values[name]

    def as_list(self):
        return [self.values[n] for n in METRIC_NAMES]


def _entropy_bits(counts) -> float:
    total = sum(counts)
    probs = sorted(c / total for c in counts if c)
    return max(0.0, -math.fsum(p * math.log2(p) for p in probs))


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def _windows(total: Fraction, size: int, hop: int):
    """Window starts ``s = 0, hop, ...`` with ``s + size <= total``; one window if shorter."""
    if total < size:
        return [Fraction(0)]
    return [Fraction(s) for s in range(0, int((total - size) // hop) * hop + 1, hop)]


def _grid(f: MelodyFeatures):
    """Pitches plus note start/end as integer 16th steps (features are grid-aligned)."""
    q = 1 / GRID
    on = np.array([int(o * q) for o in f.onsets], dtype=np.int64)
    off = on + np.array([int(d * q) for d in f.durations], dtype=np.int64)
    return np.array(f.pitches, dtype=np.int64), on, off


def _overlaps(grid, start, size):
    """Pitches and overlaps (in 16ths) of notes sounding in ``[start, start + size)`` quarters."""
    p, on, off = grid
    lo, hi = int(start / GRID), int((start + size) / GRID)
    ov = np.minimum(off, hi) - np.maximum(on, lo)
    keep = ov > 0
    return p[keep], ov[keep]


def fifths_distance(a: int, b: int) -> int:
    k = ((b - a) * 7) % 12
    return min(k, 12 - k)


def local_metrics(f: MelodyFeatures, ref: Optional[ReferenceDistribution]):
    """Returns ``(values, flags)`` for the eleven local metrics."""
    vals, flags = {}, set()
    n = len(f.pitches)
    total = f.total_time
    iv = f.intervals
    if n == 0:
        flags.update({"pitch_variance", "pitch_range", "rhythmic_variance", "kl_divergence"})
    vals["pitch_variance"] = float(statistics.pvariance(f.pitches)) if n else 0.0
    vals["pitch_range"] = float(max(f.pitches) - min(f.pitches)) if n else 0.0
    vals["rhythmic_variance"] = float(statistics.pvariance(f.durations)) if n else 0.0
    vals["note_density"] = float(Fraction(n) / total)
    vals["rest_ratio"] = float(f.rest_time / total)
    if iv:
        vals["interval_variability"] = float(statistics.pstdev(iv))
        vals["harmonic_tension"] = sum((i % 12) in DISSONANT_CLASSES for i in iv) / len(iv)
    else:
        flags.update({"interval_variability", "harmonic_tension"})
        vals["interval_variability"] = vals["harmonic_tension"] = 0.0
    vals["note_repetition"] = float(sum(i == 0 for i in iv))
    if len(iv) >= 2:
        signs = [_sign(i) for i in iv]
        vals["contour_stability"] = sum(a == b for a, b in zip(signs, signs[1:])) / (len(signs) - 1)
    else:
        flags.add("contour_stability")
        vals["contour_stability"] = 0.0
    vals["syncopation"] = float(sum(on % 1 != 0 for on in f.onsets))
    if n and ref is not None:
        hist = [Fraction(0)] * 12
        for p, d in zip(f.pitches, f.durations):
            hist[p % 12] += d
        tot = sum(hist)
        terms = sorted(float(h / tot) * math.log(float(h / tot) / ref.probs[k])
                       for k, h in enumerate(hist) if h)
        vals["kl_divergence"] = max(0.0, math.fsum(terms))
    else:
        if ref is None:
            flags.add("kl_divergence")
        vals["kl_divergence"] = 0.0
    return vals, flags


def global_metrics(f: MelodyFeatures):
    """Returns ``(values, flags)`` for the six global metrics."""
    vals, flags = {}, set()
    n = len(f.pitches)
    if n:
        vals["pitch_entropy"] = _entropy_bits(sorted(Counter(f.pitch_classes).values()))
        vals["rhythmic_entropy"] = _entropy_bits(sorted(Counter(f.durations).values()))
    else:
        flags.update({"pitch_entropy", "rhythmic_entropy"})
        vals["pitch_entropy"] = vals["rhythmic_entropy"] = 0.0

    iv = f.intervals
    grams = [tuple(iv[i:i + 3]) for i in range(len(iv) - 2)]
    if grams:
        vals["motif_diversity"] = len(set(grams)) / len(grams)
    else:
        flags.add("motif_diversity")
        vals["motif_diversity"] = 0.0

    grid = _grid(f)
    ratios = []
    for s in _windows(f.total_time, 4, 2):
        pits, _ = _overlaps(grid, s, 4)
        if len(pits) < 2:
            continue
        distinct = len(set((pits % 12).tolist()))
        ratios.append(Fraction(distinct - 1, min(11, len(pits) - 1)))
    if ratios:
        vals["harmonic_complexity"] = float(sum(ratios) / len(ratios))
    else:
        flags.add("harmonic_complexity")
        vals["harmonic_complexity"] = 0.0

    means = []
    for s in _windows(f.total_time, 4, 1):
        pits, ov = _overlaps(grid, s, 4)
        if len(pits):
            means.append(Fraction(int((pits * ov).sum()), int(ov.sum())))
    if means:
        vals["contour_variability"] = float(statistics.pvariance(means))
    else:
        flags.add("contour_variability")
        vals["contour_variability"] = 0.0

    tonics = []
    for s in _windows(f.total_time, 8, 2):
        pits, ov = _overlaps(grid, s, 8)
        if len(pits):
            # quarter-length weights, the same floats the kern histogram produces
            hist = np.zeros(12)
            np.add.at(hist, pits % 12, ov * float(GRID))
            tonics.append(key_from_histogram(hist).tonic)
    if n == 0:
        flags.add("tonal_drift")
    vals["tonal_drift"] = float(sum(fifths_distance(a, b) for a, b in zip(tonics, tonics[1:])))
    return vals, flags


def compute_metrics(tokens_or_features, ref: Optional[ReferenceDistribution]) -> MetricVector:
    f = tokens_or_features
    if not isinstance(f, MelodyFeatures):
        f = extract_features(f)
    lv, lf = local_metrics(f, ref)
    gv, gf = global_metrics(f)
    values = {name: (lv.get(name) if name in lv else gv[name]) for name in METRIC_NAMES}
    return MetricVector(values, frozenset(lf | gf))


def bound_violations(vec: MetricVector, f: Optional[MelodyFeatures] = None) -> list:
    """Names of metrics outside their admissible range (empty when all hold)."""
    bad = []
    for name in METRIC_NAMES:
        v = vec[name]
        if not math.isfinite(v):
            bad.append(name)
    for name in UNIT_INTERVAL:
        if not 0.0 <= vec[name] <= 1.0:
            bad.append(name)
    for name in NON_NEGATIVE:
        if vec[name] < 0:
            bad.append(name)
    if not 0.0 <= vec["pitch_entropy"] <= math.log2(12) + 1e-12:
        bad.append("pitch_entropy")
    if f is not None:
        cats = max(1, len(set(f.durations)))
        if not 0.0 <= vec["rhythmic_entropy"] <= math.log2(cats) + 1e-12:
            bad.append("rhythmic_entropy")
    elif vec["rhythmic_entropy"] < 0:
        bad.append("rhythmic_entropy")
    return sorted(set(bad))


# aggregation -------------------------------------------------------------------------
AGGREGATES = ("sum", "min", "max", "mean", "median", "std")


def summarize(vectors: Sequence[MetricVector]) -> dict:
    """Per metric: sum, min, max, mean, median (lower middle) and population std."""
    if len(vectors) == 0:
        raise EmptySet("no metric vectors to summarize")
    out = {}
    for name in METRIC_NAMES:
        vals = [float(v[name]) for v in vectors]
        s = sorted(vals)
        out[name] = {
            "sum": math.fsum(vals),
            "min": s[0],
            "max": s[-1],
            "mean": statistics.fmean(vals),
            "median": s[(len(s) - 1) // 2],
            "std": statistics.pstdev(vals) if len(vals) > 1 else 0.0,
        }
    return out


def _fmt(x) -> str:
    return repr(float(x))


def metrics_csv(vectors: Sequence[MetricVector], ids: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["melody_id", *METRIC_NAMES, "flags"])
    for mid, v in zip(ids, vectors):
        w.writerow([mid, *(_fmt(x) for x in v.as_list()), ";".join(sorted(v.flags))])
    return buf.getvalue()


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *AGGREGATES])
    for name in METRIC_NAMES:
        w.writerow([name, *(_fmt(summary[name][a]) for a in AGGREGATES)])
    return buf.getvalue()


def read_summary_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {r["metric"]: {a: float(r[a]) for a in AGGREGATES} for r in rows}


def evaluate_melodies(token_lists: Sequence, ref: ReferenceDistribution, out_dir=None, ids=None):
    """Metric vectors and summary for a melody set; optionally writes both CSVs."""
    ids = list(ids) if ids is not None else list(range(len(token_lists)))
    vectors = [compute_metrics(t, ref) for t in token_lists]
    summary = summarize(vectors)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(metrics_csv(vectors, ids), encoding="utf-8")
        (out_dir / "summary.csv").write_text(summary_csv(summary), encoding="utf-8")
    return vectors, summary
