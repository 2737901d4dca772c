from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meloform.errors import EmptyScore, MalformedToken, PitchOutOfRange, PolyphonyUnsupported
from meloform.experiment.presets import desk_corpus_path
from meloform.kern import (
    KK_MAJOR,
    KK_MINOR,
    Key,
    Mode,
    Score,
    detect_key,
    has_acceptable_durations,
    load_directory,
    parse_kern,
    parse_token,
    pitch_class_histogram,
    reference_shift,
    transpose,
    transpose_to_reference,
)

F = Fraction


def doc(*tokens, extra_spine=False):
    if extra_spine:
        lines = ["**kern\t**dynam"] + [f"{t}\t." for t in tokens] + ["*-\t*-"]
    else:
        lines = ["**kern", *tokens, "*-"]
    return "\n".join(lines) + "\n"


class TestParse:
    def test_quarter_middle_c(self):
        s = parse_kern(doc("4c"))
        (e,) = s.events
        assert (e.pitch, e.onset, e.duration) == (60, 0, 1)
        assert e.kind == "note"

    def test_eighth_rest(self):
        s = parse_kern(doc("8r", "4c"))
        e = s.events[0]
        assert e.is_rest and e.onset == 0 and e.duration == F(1, 2)

    def test_dotted_then_eighth(self):
        s = parse_kern(doc("4.c", "8d"))
        assert [e.duration for e in s.events] == [F(3, 2), F(1, 2)]
        assert [e.onset for e in s.events] == [0, F(3, 2)]
        assert [e.pitch for e in s.events] == [60, 62]

    @pytest.mark.parametrize("token,pitch", [
        ("4c", 60), ("4cc", 72), ("4C", 48), ("4CC", 36), ("4c#", 61), ("4e-", 63),
        ("4b--", 69), ("4a", 69), ("4G", 55), ("4ccc#", 85), ("4cn", 60),
    ])
    def test_pitch_names(self, token, pitch):
        assert parse_token(token)[0] == pitch

    @pytest.mark.parametrize("token,ql", [
        ("1c", 4), ("2c", 2), ("16c", F(1, 4)), ("2.c", 3), ("4..c", F(7, 4)),
        ("0c", 8), ("3c", F(4, 3)), ("3%2c", F(8, 3)),
    ])
    def test_durations(self, token, ql):
        assert parse_token(token)[1] == ql

    def test_barlines_comments_interpretations_consumed(self):
        text = "!!!OTL: x\n**kern\n*k[b-]\n*M3/4\n4c\n=2\n! note\n4d\n=\n*-\n"
        s = parse_kern(text)
        assert [e.pitch for e in s.events] == [60, 62]

    def test_other_spines_ignored(self):
        s = parse_kern(doc("4c", "8d", extra_spine=True))
        assert [e.pitch for e in s.events] == [60, 62]

    def test_null_tokens_skipped(self):
        text = "**kern\t**dynam\n4c\tp\n.\tf\n4d\t.\n*-\t*-\n"
        assert len(parse_kern(text).events) == 2

    def test_articulation_marks_ignored(self):
        assert parse_token("4c;")[0] == 60
        assert parse_token("(8dL")[0] == 62

    @pytest.mark.parametrize("token", ["4cq", "[4c", "4c]", "4c_", "xyz", "4", "c", "4cd", "4r#"])
    def test_malformed(self, token):
        with pytest.raises(MalformedToken):
            parse_kern(doc("4c", token))

    def test_malformed_carries_line_number(self):
        with pytest.raises(MalformedToken) as info:
            parse_kern("**kern\n4c\n4zz\n*-\n")
        assert info.value.line == 3

    def test_chord_rejected(self):
        with pytest.raises(PolyphonyUnsupported):
            parse_kern(doc("4c 4e"))

    def test_two_kern_spines_rejected(self):
        with pytest.raises(PolyphonyUnsupported):
            parse_kern("**kern\t**kern\n4c\t4e\n*-\t*-\n")

    def test_spine_split_rejected(self):
        with pytest.raises(PolyphonyUnsupported):
            parse_kern("**kern\n4c\n*^\n4c\t4e\n*v\t*v\n*-\n")

    def test_rests_only_is_empty(self):
        with pytest.raises(EmptyScore):
            parse_kern(doc("4r", "2r"))

    def test_no_kern_spine(self):
        with pytest.raises(MalformedToken):
            parse_kern("**dynam\np\n*-\n")

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["c", "d", "e", "f", "g", "a", "b", "r", "cc", "B"]),
                              st.sampled_from(["1", "2", "4", "8", "16", "2.", "4.", "8."])),
                    min_size=1, max_size=40))
    def test_telescoping_and_totality(self, items):
        tokens = [d + p for p, d in items]
        if all(p == "r" for p, _ in items):
            with pytest.raises(EmptyScore):
                parse_kern(doc(*tokens))
            return
        s = parse_kern(doc(*tokens))
        assert len(s.events) == len(tokens)
        for a, b in zip(s.events, s.events[1:]):
            assert b.onset - a.onset == a.duration
        assert s.total_duration == sum(e.duration for e in s.events)


class TestDurationFilter:
    def test_all_allowed(self):
        s = Score.from_pairs([(60, F(1, 4)), (62, 4), (None, F(3, 4)), (64, 3)])
        assert has_acceptable_durations(s)

    def test_thirty_second_rejected(self):
        s = Score.from_pairs([(60, 1), (62, F(1, 8))])
        assert not has_acceptable_durations(s)

    def test_empty_allowed_is_error(self):
        with pytest.raises(ValueError):
            has_acceptable_durations(Score.from_pairs([(60, 1)]), set())


def brute_force_key(hist):
    """Independent oracle: scipy-free Pearson over all 24 rotations, explicit tie order."""
    best = None
    for mode, prof in ((Mode.MAJOR, KK_MAJOR), (Mode.MINOR, KK_MINOR)):
        for tonic in range(12):
            p = [prof[(i - tonic) % 12] for i in range(12)]
            r = np.corrcoef(hist, p)[0, 1] if np.std(hist) > 0 else 0.0
            if best is None or r > best[0]:
                best = (r, Key(tonic, mode))
    return best[1]


class TestKey:
    def test_c_major_scale(self):
        s = Score.from_pairs([(p, 1) for p in (60, 62, 64, 65, 67, 69, 71, 72)])
        assert detect_key(s) == Key(0, Mode.MAJOR) == brute_force_key(pitch_class_histogram(s.events))

    def test_a_harmonic_minor(self):
        s = Score.from_pairs([(p, 1) for p in (57, 59, 60, 62, 64, 65, 68, 69)])
        assert detect_key(s) == Key(9, Mode.MINOR) == brute_force_key(pitch_class_histogram(s.events))

    def test_single_pitch_is_deterministic(self):
        s = Score.from_pairs([(60, 1)] * 5)
        k = detect_key(s)
        assert k == detect_key(s)
        # a lone C correlates best with C major (profile peak at the tonic)
        assert k == Key(0, Mode.MAJOR)

    def test_flat_histogram_tie_break(self):
        s = Score.from_pairs([(60 + i, 1) for i in range(12)])
        assert detect_key(s) == Key(0, Mode.MAJOR)

    def test_rest_only_detect_key(self):
        with pytest.raises(EmptyScore):
            detect_key(Score.from_pairs([(None, 1)]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=12, max_size=12))
    def test_matches_brute_force(self, weights):
        hist = np.array(weights)
        pairs = [(60 + i, F(w).limit_denominator(64)) for i, w in enumerate(weights) if w > 0]
        if not pairs:
            return
        s = Score.from_pairs(pairs)
        h = pitch_class_histogram(s.events)
        assert detect_key(s) == brute_force_key(h)

    def test_histogram_window_clip(self):
        s = Score.from_pairs([(60, 2), (62, 2)])
        h = pitch_class_histogram(s.events, F(1), F(3))
        assert h[0] == 1 and h[2] == 1


class TestTranspose:
    def test_d_major(self):
        s = transpose_to_reference(Score.from_pairs([(62, 1)]), Key(2, Mode.MAJOR))
        assert s.events[0].pitch == 60 and s.key == Key(0, Mode.MAJOR)

    def test_c_major_identity(self):
        s = Score.from_pairs([(60, 1), (None, 1), (67, 2)])
        t = transpose_to_reference(s, Key(0, Mode.MAJOR))
        assert t.events == s.events

    def test_e_minor_up_five(self):
        assert reference_shift(Key(4, Mode.MINOR)) == 5
        s = transpose_to_reference(Score.from_pairs([(64, 1)]), Key(4, Mode.MINOR))
        assert s.events[0].pitch == 69

    def test_shift_is_minimal_with_upward_ties(self):
        for tonic, mode in product(range(12), Mode):
            target = 0 if mode is Mode.MAJOR else 9
            candidates = [k for k in range(-6, 7) if (tonic + k - target) % 12 == 0]
            best = min(candidates, key=lambda k: (abs(k), -k))
            assert reference_shift(Key(tonic, mode)) == best

    def test_out_of_range(self):
        with pytest.raises(PitchOutOfRange):
            transpose(Score.from_pairs([(126, 1)]), 5)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.integers(40, 90)), min_size=1, max_size=30).filter(
        lambda ps: any(p is not None for p in ps)))
    def test_intervals_and_idempotence(self, pitches):
        s = Score.from_pairs([(p, 1) for p in pitches])
        t = transpose_to_reference(s, detect_key(s))
        ps, pt = [e.pitch for e in s.notes], [e.pitch for e in t.notes]
        assert np.array_equal(np.diff(ps), np.diff(pt))
        assert [e.duration for e in t.events] == [e.duration for e in s.events]
        k2 = detect_key(t)
        assert k2.mode == detect_key(s).mode
        assert k2.tonic == (0 if k2.mode is Mode.MAJOR else 9)


class TestCorpus:
    def test_load_directory_report(self):
        scores, report = load_directory(desk_corpus_path())
        assert len(scores) == len(report.accepted)
        assert len(scores) + len(report.rejected) == len(list(desk_corpus_path().rglob("*.krn")))
        for s in scores:
            assert s.key in (Key(0, Mode.MAJOR), Key(9, Mode.MINOR))
            assert has_acceptable_durations(s)
        reasons = {r["reason"] for r in report.rejected}
        assert reasons <= {"MalformedToken", "UnacceptableDuration", "EmptyScore", "PolyphonyUnsupported",
                           "PitchOutOfRange"}

    def test_limit_records_cap(self):
        scores, report = load_directory(desk_corpus_path(), limit=5)
        assert len(scores) == 5
        assert any(r["reason"] == "CorpusCap" for r in report.rejected)

    def test_every_file_parses_or_raises_one_typed_error(self):
        from meloform.errors import KernError
        for path in sorted(desk_corpus_path().rglob("*.krn")):
            text = path.read_text(encoding="utf-8")
            try:
                s = parse_kern(text)
            except KernError:
                continue
            records = [ln for ln in text.splitlines()
                       if ln and not ln.startswith(("!", "*", "=")) and ln.split("\t")[0] != "."]
            assert len(s.events) == len(records)


def test_matches_music21_on_ten_corpus_files():
    music21 = pytest.importorskip("music21")
    from meloform.errors import KernError
    checked = 0
    for path in sorted(desk_corpus_path().rglob("*.krn")):
        try:
            ours = parse_kern(path.read_text(encoding="utf-8"))
        except KernError:
            continue
        ref = music21.converter.parse(str(path), format="humdrum")
        theirs = [(None if n.isRest else n.pitch.midi, F(n.offset).limit_denominator(96),
                   F(n.quarterLength).limit_denominator(96))
                  for n in ref.flatten().notesAndRests]
        mine = [(e.pitch, e.onset, e.duration) for e in ours.events]
        assert mine == theirs, path.name
        checked += 1
        if checked == 10:
            break
    assert checked == 10
