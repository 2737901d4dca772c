"""Minimal Standard MIDI File writer (format 0, one track)."""

import struct
from fractions import Fraction
from pathlib import Path

from .kern import Score

TICKS_PER_QUARTER = 480
VELOCITY = 80
TEMPO_US = 500_000  # 120 quarter notes per minute


def _vlq(n: int) -> bytes:
    """Variable-length quantity, 7 bits per byte, most significant first."""
    if n < 0:
        raise ValueError("delta time must be non-negative")
    out = [n & 0x7F]
    n >>= 7
    while n:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    return bytes(reversed(out))


def _ticks(ql) -> int:
    t = Fraction(ql) * TICKS_PER_QUARTER
    if t.denominator != 1:
        raise ValueError(f"duration {ql} is not a whole number of ticks")
    return int(t)


def midi_bytes(score: Score, channel: int = 0) -> bytes:
    events = bytearray()
    events += _vlq(0) + b"\xff\x51\x03" + TEMPO_US.to_bytes(3, "big")
    pending = 0
    for e in score.events:
        dur = _ticks(e.duration)
        if e.pitch is None:
            pending += dur
            continue
        events += _vlq(pending) + bytes([0x90 | channel, e.pitch, VELOCITY])
        events += _vlq(dur) + bytes([0x80 | channel, e.pitch, 0])
        pending = 0
    events += _vlq(pending) + b"\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER)
    return header + b"MTrk" + struct.pack(">I", len(events)) + bytes(events)


def export_midi(score: Score, path) -> None:
    """Write ``score`` as a type-0 file: 480 ticks per quarter, velocity 80, 120 bpm."""
    Path(path).write_bytes(midi_bytes(score))
