"""Monophonic ``**kern`` reader, key finding and tonal normalization.

Only the subset of Humdrum found in monophonic folk-song encodings is
understood: one ``**kern`` spine (other spines are carried along and
ignored), notes, rests, barlines, comments and interpretation records.
Anything that would need guessing (ties, grace notes, editorial marks,
chords, spine splits) raises a typed error instead.
"""

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import (
    EmptyScore,
    KernError,
    MalformedToken,
    PitchOutOfRange,
    PolyphonyUnsupported,
)

ACCEPTABLE_DURATIONS = frozenset(
    Fraction(x) for x in ("1/4", "1/2", "3/4", "1", "3/2", "2", "3", "4")
)

# Krumhansl & Kessler (1982) probe-tone ratings, tonic first.
KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])

_STEP_PC = {"c": 0, "d": 2, "e": 4, "f": 5, "g": 7, "a": 9, "b": 11}
_PITCH_NAMES = ["C", "C#", "D", "E-", "E", "F", "F#", "G", "A-", "A", "B-", "B"]

# marks that carry no pitch/duration information for a monophonic line
_IGNORED = set("{}();LJKk'\"`~^:,/\\&|$tTmMwWSsOoR")
# ties, grace notes, editorial / invisible marks
_REJECTED = {"[": "tie", "]": "tie", "_": "tie", "q": "grace note", "Q": "grace note",
             "P": "appoggiatura", "p": "appoggiatura", "y": "invisible mark",
             "x": "editorial mark", "X": "editorial mark", "?": "editorial mark"}
_TOKEN_RE = re.compile(r"^(\d+(?:%\d+)?)(\.*)([a-gA-G]+|r+)([#\-n]*)$")
_MANIPULATORS = {"*^", "*v", "*+", "*x"}


class Mode(str, Enum):
    MAJOR = "major"
    MINOR = "minor"


@dataclass(frozen=True)
class Key:
    tonic: int
    mode: Mode

    def __post_init__(self):
        if not 0 <= self.tonic <= 11:
            raise ValueError(f"tonic must be a pitch class, got {self.tonic}")

    def __str__(self):
        return f"{_PITCH_NAMES[self.tonic]} {self.mode.value}"


@dataclass(frozen=True)
class NoteEvent:
    """A note (``pitch`` is a MIDI number) or a rest (``pitch is None``).

    Onsets and durations are quarter lengths kept as exact fractions.
    """

    pitch: Optional[int]
    onset: Fraction
    duration: Fraction

    @property
    def is_rest(self) -> bool:
        return self.pitch is None

    @property
    def kind(self) -> str:
        return "rest" if self.pitch is None else "note"


@dataclass(frozen=True)
class Score:
    events: tuple
    source_id: str = ""
    key: Optional[Key] = None

    @property
    def notes(self):
        return [e for e in self.events if e.pitch is not None]

    @property
    def total_duration(self) -> Fraction:
        return sum((e.duration for e in self.events), Fraction(0))

    @classmethod
    def from_pairs(cls, pairs, source_id="", key=None):
        """Build a score from ``(pitch_or_None, duration)`` pairs laid end to end."""
        events, onset = [], Fraction(0)
        for pitch, dur in pairs:
            dur = Fraction(dur)
            events.append(NoteEvent(pitch, onset, dur))
            onset += dur
        return cls(tuple(events), source_id, key)


def _recip_to_ql(recip: str, dots: int) -> Fraction:
    if "%" in recip:
        num, den = recip.split("%")
        if int(num) == 0:
            raise ValueError("zero numerator")
        base = Fraction(4 * int(den), int(num))
    elif set(recip) == {"0"}:
        base = Fraction(8 * 2 ** (len(recip) - 1))  # 0 breve, 00 long
    else:
        base = Fraction(4, int(recip))
    return base * (2 - Fraction(1, 2 ** dots))


def _pitch_to_midi(letters: str, accidentals: str) -> int:
    if len(set(letters)) != 1:
        raise ValueError(f"mixed pitch letters {letters!r}")
    step = letters[0]
    if step.islower():
        octave = 3 + len(letters)
    else:
        octave = 4 - len(letters)
    alter = accidentals.count("#") - accidentals.count("-")
    return 12 * (octave + 1) + _STEP_PC[step.lower()] + alter


def parse_token(token: str, line: Optional[int] = None):
    """Parse one kern data token into ``(pitch_or_None, duration)``."""
    if " " in token:
        raise PolyphonyUnsupported(f"line {line}: chord token {token!r}")
    kept = []
    for ch in token:
        if ch in _REJECTED:
            raise MalformedToken(f"{_REJECTED[ch]} in {token!r} is not supported", line)
        if ch not in _IGNORED:
            kept.append(ch)
    m = _TOKEN_RE.match("".join(kept))
    if m is None:
        raise MalformedToken(f"cannot parse {token!r}", line)
    recip, dots, body, acc = m.groups()
    try:
        duration = _recip_to_ql(recip, len(dots))
    except (ValueError, ZeroDivisionError):
        raise MalformedToken(f"bad duration in {token!r}", line) from None
    if body[0] == "r":
        if acc:
            raise MalformedToken(f"accidental on rest {token!r}", line)
        return None, duration
    try:
        pitch = _pitch_to_midi(body, acc)
    except ValueError as exc:
        raise MalformedToken(f"{exc} in {token!r}", line) from None
    if not 0 <= pitch <= 127:
        raise MalformedToken(f"pitch {pitch} outside MIDI range in {token!r}", line)
    return pitch, duration


def parse_kern(text: str, source_id: str = "") -> Score:
    """Parse a Humdrum document holding exactly one ``**kern`` spine.

    Raises
    ------
    MalformedToken
        Unparseable record (the message carries the 1-based line number).
    PolyphonyUnsupported
        Chords, several ``**kern`` spines, or spine splits.
    EmptyScore
        No note events.
    """
    n_spines = None
    kern_col = None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("!"):
            continue
        fields = line.split("\t")
        if n_spines is None:
            if not line.startswith("**"):
                raise MalformedToken("data before the exclusive interpretation", lineno)
            kern_cols = [i for i, f in enumerate(fields) if f == "**kern"]
            if not kern_cols:
                raise MalformedToken("no **kern spine", lineno)
            if len(kern_cols) > 1:
                raise PolyphonyUnsupported(f"{len(kern_cols)} **kern spines")
            n_spines, kern_col = len(fields), kern_cols[0]
            continue
        if len(fields) != n_spines:
            raise MalformedToken(f"expected {n_spines} spines, found {len(fields)}", lineno)
        token = fields[kern_col]
        if line.startswith("*"):
            manip = [f for f in fields if f in _MANIPULATORS]
            if token in _MANIPULATORS:
                raise PolyphonyUnsupported(f"line {lineno}: spine manipulator {token}")
            if manip:
                raise MalformedToken(f"spine manipulator {manip[0]} unsupported", lineno)
            if token.startswith("**"):
                raise MalformedToken("second exclusive interpretation", lineno)
            continue
        if token.startswith("="):
            continue
        if token == ".":
            continue
        pairs.append(parse_token(token, lineno))
    if n_spines is None:
        raise MalformedToken("no **kern spine")
    score = Score.from_pairs(pairs, source_id)
    if not score.notes:
        raise EmptyScore(f"{source_id or 'document'} has no notes")
    return score


def has_acceptable_durations(score: Score, allowed: Iterable = ACCEPTABLE_DURATIONS) -> bool:
    allowed = {Fraction(a) for a in allowed}
    if not allowed:
        raise ValueError("allowed duration set is empty")
    return all(e.duration in allowed for e in score.events)


def pitch_class_histogram(events, start=None, end=None) -> np.ndarray:
    """Duration-weighted pitch-class histogram, optionally clipped to ``[start, end)``."""
    hist = np.zeros(12)
    for e in events:
        if e.pitch is None:
            continue
        lo, hi = e.onset, e.onset + e.duration
        if start is not None:
            lo, hi = max(lo, start), min(hi, end)
        if hi > lo:
            hist[e.pitch % 12] += float(hi - lo)
    return hist


def key_correlations(hist) -> np.ndarray:
    """Pearson correlations of ``hist`` with the 24 rotated KK profiles.

    Row 0 holds the 12 major keys, row 1 the 12 minor keys, indexed by tonic.
    A flat histogram correlates 0 with everything.
    """
    hist = np.asarray(hist, dtype=float)
    out = np.zeros((2, 12))
    hc = hist - hist.mean()
    hn = np.sqrt((hc * hc).sum())
    if hn == 0:
        return out
    for row in range(2):
        for tonic in range(12):
            pc, pn = _CENTERED[row][tonic]
            out[row, tonic] = (hc * pc).sum() / (hn * pn)
    return out


def _centered(profile, tonic):
    pc = np.roll(profile, tonic)
    pc = pc - pc.mean()
    return pc, np.sqrt((pc * pc).sum())


_CENTERED = [[_centered(p, t) for t in range(12)] for p in (KK_MAJOR, KK_MINOR)]


def key_from_histogram(hist) -> Key:
    """Best-correlating key; ties go to major, then to the lower tonic."""
    corr = key_correlations(hist)
    best, best_key = -np.inf, None
    for row, mode in enumerate((Mode.MAJOR, Mode.MINOR)):
        for tonic in range(12):
            if corr[row, tonic] > best:
                best, best_key = corr[row, tonic], Key(tonic, mode)
    return best_key


def detect_key(score: Score) -> Key:
    if not score.notes:
        raise EmptyScore("key detection needs at least one note")
    return key_from_histogram(pitch_class_histogram(score.events))


def reference_shift(key: Key) -> int:
    """Semitone shift taking ``key`` to C major / A minor, in [-5, +6]."""
    target = 0 if key.mode is Mode.MAJOR else 9
    shift = (target - key.tonic) % 12
    return shift - 12 if shift > 6 else shift


def transpose(score: Score, semitones: int) -> Score:
    events = []
    for e in score.events:
        if e.pitch is None:
            events.append(e)
            continue
        p = e.pitch + semitones
        if not 0 <= p <= 127:
            raise PitchOutOfRange(f"{score.source_id}: pitch {e.pitch}{semitones:+d} leaves MIDI range")
        events.append(replace(e, pitch=p))
    return replace(score, events=tuple(events))


def transpose_to_reference(score: Score, key: Key) -> Score:
    shift = reference_shift(key)
    target = Key(0, Mode.MAJOR) if key.mode is Mode.MAJOR else Key(9, Mode.MINOR)
    return replace(transpose(score, shift), key=target)


@dataclass
class ParseReport:
    accepted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"accepted": self.accepted, "rejected": self.rejected}, indent=2) + "\n"


def load_directory(root, allowed=ACCEPTABLE_DURATIONS, limit=None):
    """Parse, filter and normalize every ``.krn`` file below ``root``.

    Files are visited in sorted path order.  Returns ``(scores, report)``;
    scores are transposed to C major / A minor.  ``limit`` caps the number of
    accepted scores.
    """
    root = Path(root)
    scores, report = [], ParseReport()
    for path in sorted(root.rglob("*.krn")):
        source_id = path.relative_to(root).with_suffix("").as_posix()
        rel = path.relative_to(root).as_posix()
        if limit is not None and len(scores) >= limit:
            report.rejected.append({"id": source_id, "path": rel, "reason": "CorpusCap",
                                    "detail": f"corpus capped at {limit} songs"})
            continue
        try:
            score = parse_kern(path.read_text(encoding="utf-8"), source_id)
            if not has_acceptable_durations(score, allowed):
                bad = sorted({str(e.duration) for e in score.events if e.duration not in allowed})
                report.rejected.append({"id": source_id, "path": rel, "reason": "UnacceptableDuration",
                                        "detail": "durations " + ", ".join(bad)})
                continue
            key = detect_key(score)
            normalized = transpose_to_reference(score, key)
        except (KernError, UnicodeDecodeError) as exc:
            report.rejected.append({"id": source_id, "path": rel, "reason": type(exc).__name__,
                                    "detail": str(exc)})
            continue
        scores.append(normalized)
        report.accepted.append({"id": source_id, "path": rel, "events": len(score.events),
                                "detected_key": str(key), "shift": reference_shift(key)})
    return scores, report
