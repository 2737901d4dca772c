import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meloform.errors import EmptyCorpus, EmptySet
from meloform.kern import KK_MAJOR, KK_MINOR
from meloform.metrics import (
    GLOBAL_METRICS,
    LOCAL_METRICS,
    METRIC_NAMES,
    MetricVector,
    ReferenceDistribution,
    bound_violations,
    build_reference,
    compute_metrics,
    evaluate_melodies,
    extract_features,
    fifths_distance,
    local_metrics,
    read_summary_csv,
    summarize,
)

F = Fraction


def quarters(pitches):
    out = []
    for p in pitches:
        out += [str(p) if p is not None else "r", "_", "_", "_"]
    return out


def random_tokens(rng, n_events=None, low=48, high=84):
    n_events = n_events or int(rng.integers(1, 60))
    toks = []
    for _ in range(n_events):
        toks.append("r" if rng.random() < 0.15 else str(int(rng.integers(low, high))))
        toks += ["_"] * int(rng.integers(0, 8))
    return toks


# independent grid oracle ------------------------------------------------------------
def roll(tokens):
    """Per 16th step: (note index or -1, pitch or -1)."""
    idx, pit, notes = [], [], []
    cur = -1
    for t in tokens:
        if t == "r":
            cur = -1
        elif t != "_":
            notes.append(int(t))
            cur = len(notes) - 1
        idx.append(cur)
        pit.append(notes[cur] if cur >= 0 else -1)
    return np.array(idx), np.array(pit), notes


def oracle(tokens, ref=None):
    idx, pit, notes = roll(tokens)
    steps = len(tokens)
    total = steps / 4
    p = np.array(notes, dtype=float)
    onsets = np.array([np.flatnonzero(idx == k)[0] for k in range(len(notes))])
    durs = np.array([np.sum(idx == k) for k in range(len(notes))]) / 4
    iv = np.diff(p)
    out = {}
    out["pitch_variance"] = p.var() if len(p) else 0.0
    out["pitch_range"] = np.ptp(p) if len(p) else 0.0
    out["rhythmic_variance"] = durs.var() if len(p) else 0.0
    out["note_density"] = len(p) / total
    out["rest_ratio"] = np.sum(idx < 0) / steps
    out["interval_variability"] = iv.std() if len(iv) else 0.0
    out["note_repetition"] = float(np.sum(iv == 0))
    s = np.sign(iv)
    out["contour_stability"] = float(np.mean(s[1:] == s[:-1])) if len(iv) >= 2 else 0.0
    out["syncopation"] = float(np.sum(onsets % 4 != 0))
    out["harmonic_tension"] = float(np.mean(np.isin(iv % 12, [1, 2, 6, 10, 11]))) if len(iv) else 0.0
    if ref is not None and len(p):
        w = np.bincount(pit[pit >= 0] % 12, minlength=12) / np.sum(pit >= 0)
        m = w > 0
        out["kl_divergence"] = float(np.sum(w[m] * np.log(w[m] / np.array(ref.probs)[m])))
    else:
        out["kl_divergence"] = 0.0

    def ent(values):
        if not len(values):
            return 0.0
        _, c = np.unique(values, return_counts=True)
        q = c / c.sum()
        return float(-(q * np.log2(q)).sum())
    out["pitch_entropy"] = ent(p % 12)
    out["rhythmic_entropy"] = ent(durs)
    grams = [tuple(iv[i:i + 3]) for i in range(len(iv) - 2)]
    out["motif_diversity"] = len(set(grams)) / len(grams) if grams else 0.0

    def starts(size, hop):
        if total < size:
            return [0]
        return list(range(0, int(total - size) + 1, hop))
    ratios = []
    for a in starts(4, 2):
        ks = sorted(set(idx[a * 4:(a + 4) * 4]) - {-1})
        if len(ks) >= 2:
            ratios.append((len({notes[k] % 12 for k in ks}) - 1) / min(11, len(ks) - 1))
    out["harmonic_complexity"] = float(np.mean(ratios)) if ratios else 0.0
    means = []
    for a in starts(4, 1):
        seg = pit[a * 4:(a + 4) * 4]
        seg = seg[seg >= 0]
        if len(seg):
            means.append(seg.mean())
    out["contour_variability"] = float(np.var(means)) if means else 0.0
    return out


def test_local_and_window_metrics_match_grid_oracle():
    rng = np.random.default_rng(0)
    ref = build_reference([random_tokens(rng, 40) for _ in range(5)])
    names = [n for n in METRIC_NAMES if n != "tonal_drift"]
    for _ in range(300):
        toks = random_tokens(rng)
        got, want = compute_metrics(toks, ref), oracle(toks, ref)
        for n in names:
            assert got[n] == pytest.approx(want[n], abs=1e-9), n


# spec examples ----------------------------------------------------------------------
class TestFeatures:
    def test_two_notes(self):
        f = extract_features("60 _ 62".split())
        assert f.pitches == (60, 62) and f.durations == (F(1, 2), F(1, 4)) and f.intervals == (2,)

    def test_rests(self):
        f = extract_features("r r r".split())
        assert f.pitches == () and f.rest_time == F(3, 4) == f.total_time

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_conservation(self, seed):
        f = extract_features(random_tokens(np.random.default_rng(seed)))
        assert sum(f.durations) + f.rest_time == f.total_time


class TestLocal:
    def test_constant_pitch(self):
        v = compute_metrics(quarters([65] * 5), None)
        assert v["pitch_variance"] == v["pitch_range"] == v["interval_variability"] == 0.0
        assert v["contour_stability"] == 1.0 and v["note_repetition"] == 4.0

    def test_zigzag(self):
        v = compute_metrics(quarters([60, 64, 60, 64]), None)
        assert v["pitch_range"] == 4.0 and v["contour_stability"] == 0.0
        assert v["pitch_variance"] == 4.0
        # intervals +4 -4 +4: mean 4/3, mean square 16
        assert v["interval_variability"] == pytest.approx(math.sqrt(16 - 16 / 9), abs=1e-12)
        assert v["note_density"] == 1.0 and v["syncopation"] == 0.0

    def test_kl_identity(self):
        toks = quarters([60, 62, 64, 65, 67, 69, 71, 60])
        ref = build_reference([toks])
        assert abs(compute_metrics(toks, ref)["kl_divergence"]) < 1e-4

    def test_syncopation_and_tension(self):
        v = compute_metrics("60 _ 61 _ _ _ 67".split(), None)
        # onsets 0, 0.5, 1.5 -> two off-beat; intervals +1 (dissonant), +6 (tritone)
        assert v["syncopation"] == 2.0 and v["harmonic_tension"] == 1.0
        assert v["rest_ratio"] == 0.0

    def test_degenerate_flags(self):
        v = compute_metrics(["60"], None)
        assert {"interval_variability", "contour_stability", "motif_diversity"} <= v.flags
        assert v["interval_variability"] == 0.0
        rests = compute_metrics(["r", "_"], None)
        assert rests["rest_ratio"] == 1.0 and "pitch_entropy" in rests.flags


class TestGlobal:
    def test_single_pitch(self):
        v = compute_metrics(quarters([67] * 12), None)
        assert v["pitch_entropy"] == 0.0 and v["motif_diversity"] == 1 / 9 and v["tonal_drift"] == 0.0
        one = compute_metrics(quarters([67] * 3), None)
        assert one["motif_diversity"] == 0.0 and "motif_diversity" in one.flags

    def test_four_classes_two_bits(self):
        assert compute_metrics(quarters([60, 62, 64, 65] * 3), None)["pitch_entropy"] == 2.0

    def test_tonal_drift_c_to_g(self):
        ps = [60, 64, 60, 64, 67, 67, 67, 67, 66, 71, 74, 66]
        # Krumhansl-Kessler by correlation over all 24 rotations
        profiles = [np.roll(KK_MAJOR, k) for k in range(12)] + [np.roll(KK_MINOR, k) for k in range(12)]

        def key(window):
            hist = np.bincount(np.array(window) % 12, minlength=12).astype(float)
            r = [np.corrcoef(hist, prof)[0, 1] for prof in profiles]
            return int(np.argmax(r))
        assert [key(ps[0:8]), key(ps[2:10]), key(ps[4:12])] == [0, 7, 7]
        assert compute_metrics(quarters(ps), None)["tonal_drift"] == 1.0

    def test_fifths_distance(self):
        assert fifths_distance(0, 7) == 1 and fifths_distance(0, 5) == 1
        assert fifths_distance(0, 6) == 6 and fifths_distance(4, 4) == 0
        for a in range(12):
            for b in range(12):
                steps = min(k for k in range(12) if (a + 7 * k) % 12 == b or (a - 7 * k) % 12 == b)
                assert fifths_distance(a, b) == steps

    def test_harmonic_complexity_window(self):
        # one 4-ql window with C D E C: 3 classes over 4 notes -> 2/3
        v = compute_metrics(quarters([60, 62, 64, 60]), None)
        assert v["harmonic_complexity"] == pytest.approx(2 / 3)


# invariants -----------------------------------------------------------------------
def test_bounds_over_1000_random_sequences():
    rng = np.random.default_rng(11)
    ref = build_reference([random_tokens(rng, 30)])
    for _ in range(1000):
        toks = random_tokens(rng)
        if rng.random() < 0.3:
            toks = ["_"] * int(rng.integers(1, 4)) + toks  # generator output before sanitation
            toks = toks[next(i for i, t in enumerate(toks) if t != "_"):]
        f = extract_features(toks)
        v = compute_metrics(f, ref)
        assert bound_violations(v, f) == []
        assert 0 <= v["pitch_entropy"] <= math.log2(12) + 1e-12


def shift(tokens, k):
    return [str(int(t) + k) if t not in ("_", "r") else t for t in tokens]


TRANSPOSE_INVARIANT = ("pitch_variance", "pitch_range", "interval_variability", "contour_stability",
                       "motif_diversity", "rhythmic_variance", "rhythmic_entropy", "note_density",
                       "rest_ratio", "syncopation", "note_repetition", "harmonic_tension",
                       "contour_variability", "pitch_entropy", "harmonic_complexity")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-20, 20))
def test_transposition_invariance(seed, k):
    toks = random_tokens(np.random.default_rng(seed), low=40, high=80)
    a, b = compute_metrics(toks, None), compute_metrics(shift(toks, k), None)
    for n in TRANSPOSE_INVARIANT:
        assert a[n] == b[n], n


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_time_scaling(seed):
    toks = random_tokens(np.random.default_rng(seed))
    # a hold after every symbol doubles each event, rests included
    doubled = [x for t in toks for x in (t, "_")]
    a, b = compute_metrics(toks, None), compute_metrics(doubled, None)
    assert b["note_density"] == pytest.approx(a["note_density"] / 2, rel=1e-12)
    assert b["rest_ratio"] == a["rest_ratio"]
    assert b["pitch_variance"] == a["pitch_variance"]
    assert b["rhythmic_variance"] == pytest.approx(4 * a["rhythmic_variance"], rel=1e-12)


def test_kl_shrinks_with_length():
    rng = np.random.default_rng(5)
    probs = np.array([0.3, 0.02, 0.15, 0.02, 0.12, 0.1, 0.02, 0.17, 0.02, 0.04, 0.02, 0.02])
    ref = ReferenceDistribution(tuple(probs), 0.0)

    def mean_kl(n):
        vals = []
        for _ in range(200):
            pcs = rng.choice(12, size=n, p=probs)
            vals.append(local_metrics(extract_features([str(60 + c) for c in pcs]), ref)[0]["kl_divergence"])
        return np.mean(vals)
    k10, k50, k400 = mean_kl(10), mean_kl(50), mean_kl(400)
    assert k10 > k50 > k400 and k400 < 0.02


class TestReference:
    def test_single_pitch(self):
        ref = build_reference([["60", "_"], ["72"]])
        assert ref.probs[0] == pytest.approx(1, abs=1e-4)
        assert all(p == pytest.approx(1e-6, rel=1e-3) for p in ref.probs[1:])

    def test_normalized_and_positive(self):
        rng = np.random.default_rng(2)
        ref = build_reference([random_tokens(rng) for _ in range(10)])
        assert abs(sum(ref.probs) - 1) < 1e-9 and min(ref.probs) > 0
        assert ReferenceDistribution.from_json(ref.to_json()) == ref

    def test_uniform_corpus(self):
        ref = build_reference([quarters(range(60, 72))])
        assert all(p == pytest.approx(1 / 12, abs=1e-9) for p in ref.probs)

    def test_duration_weighted(self):
        ref = build_reference([["60", "_", "_", "62"]], eps=0.0)
        assert ref.probs[0] == 0.75 and ref.probs[2] == 0.25

    def test_empty(self):
        with pytest.raises(EmptyCorpus):
            build_reference([["r", "_"]])


class TestSummarize:
    def vec(self, x):
        return MetricVector({n: float(x) for n in METRIC_NAMES})

    def test_single(self):
        s = summarize([self.vec(3.5)])
        assert s["pitch_range"] == {"sum": 3.5, "min": 3.5, "max": 3.5, "mean": 3.5, "median": 3.5, "std": 0.0}

    def test_one_two_three(self):
        s = summarize([self.vec(v) for v in (3, 1, 2)])["tonal_drift"]
        assert s["mean"] == 2 and s["median"] == 2 and s["std"] == pytest.approx(0.816496580927726)

    def test_even_count_lower_median(self):
        assert summarize([self.vec(v) for v in (4, 1, 3, 2)])["rest_ratio"]["median"] == 2

    def test_streaming_oracle(self):
        rng = np.random.default_rng(8)
        vecs = [MetricVector({n: float(x) for n, x in zip(METRIC_NAMES, rng.normal(size=17) * 10)})
                for _ in range(100)]
        s = summarize(vecs)
        for j, name in enumerate(METRIC_NAMES):
            # Welford running mean / variance, running extrema and total
            n = mean = m2 = total = 0.0
            lo, hi = math.inf, -math.inf
            for v in vecs:
                x = v[name]
                n += 1
                d = x - mean
                mean += d / n
                m2 += d * (x - mean)
                total += x
                lo, hi = min(lo, x), max(hi, x)
            col = np.array([v[name] for v in vecs])
            med = np.partition(col, 49)[49]
            got = s[name]
            assert abs(got["mean"] - mean) < 1e-9 and abs(got["std"] - math.sqrt(m2 / n)) < 1e-9
            assert abs(got["sum"] - total) < 1e-9 and got["min"] == lo and got["max"] == hi
            assert got["median"] == med
            assert got["min"] <= got["median"] <= got["max"]

    def test_empty(self):
        with pytest.raises(EmptySet):
            summarize([])


def test_evaluate_writes_csvs(tmp_path):
    rng = np.random.default_rng(4)
    toks = [random_tokens(rng) for _ in range(6)]
    ref = build_reference(toks)
    vecs, summary = evaluate_melodies(toks, ref, tmp_path, ids=[f"m{i}" for i in range(6)])
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0].split(",")[1:18] == list(METRIC_NAMES) and len(lines) == 7
    back = read_summary_csv(tmp_path / "summary.csv")
    assert back == summary
    assert len(LOCAL_METRICS) == 11 and len(GLOBAL_METRICS) == 6
