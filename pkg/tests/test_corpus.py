from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meloform.corpus import (
    DELIM,
    HOLD,
    REST,
    SeedSet,
    SplitManifest,
    Vocabulary,
    build_vocabulary,
    check_tokens,
    decode_tokens,
    encode_score,
    extract_seeds,
    join_songs,
    known_sequences,
    largest_remainder,
    make_windows,
    read_dataset_file,
    split_dataset,
    write_dataset_file,
)
from meloform.errors import (
    BadRatios,
    CorruptDelimiter,
    DanglingHold,
    DecodeError,
    InsufficientSongs,
    NonGridDuration,
    TooShort,
    UnknownSymbol,
)
from meloform.kern import Score

F = Fraction

symbol = st.one_of(st.integers(40, 90).map(str), st.just(REST))


@st.composite
def token_seqs(draw, min_events=1, max_events=60):
    events = draw(st.lists(st.tuples(symbol, st.integers(1, 16)), min_size=min_events, max_size=max_events))
    out = []
    for sym, n in events:
        out.append(sym)
        out.extend([HOLD] * (n - 1))
    return out


class TestEncode:
    def test_quarter_note(self):
        assert encode_score(Score.from_pairs([(60, 1)])) == ["60", "_", "_", "_"]

    def test_sixteenth_rest(self):
        assert encode_score(Score.from_pairs([(None, F(1, 4))])) == ["r"]

    def test_dotted_pair(self):
        s = Score.from_pairs([(62, F(3, 2)), (64, F(1, 2))])
        toks = encode_score(s)
        assert toks == "62 _ _ _ _ _ 64 _".split()
        assert decode_tokens(toks).events == s.events

    def test_off_grid(self):
        with pytest.raises(NonGridDuration):
            encode_score(Score.from_pairs([(60, F(1, 3))]))

    def test_decode_examples(self):
        (e,) = decode_tokens("60 _ _ _".split()).events
        assert (e.pitch, e.duration) == (60, 1)
        s = decode_tokens(["r", "r"])
        assert [(e.pitch, e.duration) for e in s.events] == [(None, F(1, 4))] * 2

    def test_dangling_hold(self):
        with pytest.raises(DanglingHold):
            decode_tokens(["_", "60"])
        with pytest.raises(DanglingHold):
            check_tokens(["60", "/", "_"])

    def test_delim_and_junk_rejected(self):
        with pytest.raises(DecodeError):
            decode_tokens(["60", "/"])
        with pytest.raises(DecodeError):
            decode_tokens(["60", "x"])
        with pytest.raises(DecodeError):
            decode_tokens(["128"])

    @settings(max_examples=100, deadline=None)
    @given(token_seqs(max_events=120))
    def test_round_trip(self, toks):
        assert encode_score(decode_tokens(toks)) == toks

    def test_round_trip_200_tokens(self):
        rng = np.random.default_rng(7)
        toks = []
        while len(toks) < 200:
            toks.append(REST if rng.random() < 0.1 else str(rng.integers(50, 80)))
            toks.extend([HOLD] * int(rng.integers(0, 7)))
        toks = toks[:200]
        assert encode_score(decode_tokens(toks)) == toks


class TestSplit:
    def test_sizes_100(self):
        m = split_dataset([f"s{i}" for i in range(100)])
        assert (len(m.train), len(m.val), len(m.test)) == (80, 6, 14)

    def test_single_id(self):
        m = split_dataset(["only"])
        assert (m.train, m.val, m.test) == (["only"], [], [])

    def test_seed_changes_order_not_sizes(self):
        ids = [f"s{i:02d}" for i in range(50)]
        a, b = split_dataset(ids, seed=1), split_dataset(ids, seed=2)
        assert (len(a.train), len(a.val), len(a.test)) == (40, 3, 7)
        assert (len(b.train), len(b.val), len(b.test)) == (40, 3, 7)
        assert a.train != b.train

    def test_largest_remainder_oracle(self):
        # brute force: among integer vectors summing to n, minimize the max
        # deficit then prefer the earliest index, matching the rule
        for n in range(1, 60):
            sizes = largest_remainder(n, (0.8, 0.06, 0.14))
            assert sum(sizes) == n
            quotas = [n * r for r in (0.8, 0.06, 0.14)]
            assert all(abs(s - q) < 1 for s, q in zip(sizes, quotas))

    @settings(max_examples=40, deadline=None)
    @given(st.sets(st.text("abcdef", min_size=1, max_size=6), min_size=1, max_size=80), st.integers(0, 99))
    def test_partition_and_determinism(self, ids, seed):
        m = split_dataset(list(ids), seed=seed)
        all_ids = m.train + m.val + m.test
        assert sorted(all_ids) == sorted(ids) and len(set(all_ids)) == len(all_ids)
        again = split_dataset(list(reversed(sorted(ids))), seed=seed)
        assert again.to_json() == m.to_json()
        assert SplitManifest.from_json(m.to_json()).to_json() == m.to_json()

    def test_bad_ratios(self):
        with pytest.raises(BadRatios):
            split_dataset(["a"], ratios=(0.5, 0.5, 0.5))

    def test_empty(self):
        with pytest.raises(ValueError):
            split_dataset([])

    def test_order_is_the_documented_pcg64_permutation(self):
        ids = sorted(f"s{i}" for i in range(10))
        m = split_dataset(ids, seed=1)
        perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence([1, 0]))).permutation(10)
        assert m.train + m.val + m.test == [ids[j] for j in perm]


class TestVocabulary:
    def test_sorted_contiguous(self):
        v = build_vocabulary([["60", "62", "r", "_"]])
        assert v.symbols == ["/", "60", "62", "_", "r"]
        assert [v.lookup(s) for s in v.symbols] == list(range(5))
        assert build_vocabulary([["r", "_", "62", "60"]]) == v

    def test_unknown_symbol(self):
        v = build_vocabulary([["60", "_"]])
        with pytest.raises(UnknownSymbol):
            v.lookup("61")
        assert "61" not in v

    def test_json_round_trip(self):
        v = build_vocabulary([["60", "_", "r", "72"]])
        assert Vocabulary.from_json(v.to_json()) == v

    def test_non_canonical_json(self):
        with pytest.raises(ValueError):
            Vocabulary.from_json('{"b": 0, "a": 1}')

    def test_known_sequences(self):
        v = build_vocabulary([["60", "_"]])
        kept, dropped = known_sequences([["60"], ["61"], ["60", "_"]], v)
        assert kept == [["60"], ["60", "_"]] and dropped == [1]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(token_seqs(max_events=10), min_size=1, max_size=5))
    def test_bijection(self, seqs):
        v = build_vocabulary(seqs)
        for s in seqs:
            assert v.decode(v.encode(s)) == s
        assert DELIM in v


class TestDatasetFiles:
    def test_two_songs_one_delimiter(self, tmp_path):
        write_dataset_file([["60"], ["62"]], tmp_path / "d")
        text = (tmp_path / "d").read_text()
        assert text == "60 " + "/ " * 64 + "62\n"
        assert read_dataset_file(tmp_path / "d") == [["60"], ["62"]]

    def test_empty(self, tmp_path):
        write_dataset_file([], tmp_path / "d")
        assert (tmp_path / "d").read_text() == ""
        assert read_dataset_file(tmp_path / "d") == []

    def test_round_trip_100_random(self, tmp_path):
        rng = np.random.default_rng(3)
        songs = []
        for _ in range(100):
            s = [str(rng.integers(50, 80))]
            for _ in range(int(rng.integers(0, 30))):
                s.append(rng.choice(["_", "r", str(rng.integers(50, 80))]))
            songs.append(s)
        write_dataset_file(songs, tmp_path / "d")
        assert read_dataset_file(tmp_path / "d") == songs

    def test_corrupt(self, tmp_path):
        (tmp_path / "d").write_text("60 " + "/ " * 10 + "62\n")
        with pytest.raises(CorruptDelimiter):
            read_dataset_file(tmp_path / "d")
        (tmp_path / "e").write_text("60 " + "/ " * 64)
        with pytest.raises(CorruptDelimiter):
            read_dataset_file(tmp_path / "e")


class TestWindows:
    def vocab(self):
        return build_vocabulary([["60", "62", "_", "r"]])

    def test_66_tokens(self):
        toks = (["60", "_"] * 33)
        w = make_windows(toks, self.vocab())
        assert len(w) == 2 and w.inputs.shape == (2, 64)

    def test_skips_delimiters(self):
        v = self.vocab()
        toks = ["60"] * 64 + ["/"] + ["62"] * 70
        w = make_windows(toks, v)
        # window 0 targets '/', skipped; windows touching '/' skipped
        for i in range(len(w)):
            assert v.lookup("/") not in w.inputs[i] and w.targets[i] != v.lookup("/")
        assert len(w) == 70 - 64

    def test_too_short(self):
        with pytest.raises(TooShort):
            make_windows(["60"] * 64, self.vocab())

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from(["60", "62", "_", "r"]), min_size=65, max_size=200))
    def test_alignment_and_one_hot(self, toks):
        v = self.vocab()
        w = make_windows(toks, v)
        assert len(w) == len(toks) - 64
        idx = v.encode(toks)
        for t in range(len(w)):
            assert np.array_equal(w.inputs[t], idx[t:t + 64]) and w.targets[t] == idx[t + 64]
        oh = w.one_hot()
        assert np.all(oh.sum(-1) == 1.0)
        shifted = make_windows(toks[1:], v) if len(toks) > 65 else None
        if shifted is not None:
            assert np.array_equal(shifted.targets, w.targets[1:])

    def test_join_songs(self):
        assert join_songs([["a"], ["b"]], delim_len=2) == ["a", "/", "/", "b"]


class TestSeeds:
    def manifest(self, n=(30, 5, 10)):
        ids = [f"s{i:03d}" for i in range(sum(n))]
        encoded = {sid: ["60", "_"] * (5 + i % 20) for i, sid in enumerate(ids)}
        m = SplitManifest(ids[:n[0]], ids[n[0]:n[0] + n[1]], ids[n[0] + n[1]:], 1)
        return m, encoded

    def test_counts_and_prefix(self):
        m, enc = self.manifest()
        seeds = extract_seeds(m, enc, (20, 5, 8))
        assert seeds.counts() == {"train": 20, "val": 5, "test": 8}
        for s in seeds.seeds:
            assert s.tokens == enc[s.source_id][:20]
            assert s.source_id in getattr(m, s.split)
        assert len({(s.split, s.source_id) for s in seeds.seeds}) == len(seeds)

    def test_short_flag(self):
        m, enc = self.manifest()
        seeds = extract_seeds(m, enc, (30, 5, 10), prefix_len=20)
        for s in seeds.seeds:
            assert s.short == (len(enc[s.source_id]) <= 20)
        assert any(s.short for s in seeds.seeds)

    def test_insufficient(self):
        m, enc = self.manifest()
        with pytest.raises(InsufficientSongs):
            extract_seeds(m, enc, (31, 5, 10))

    def test_deterministic_bytes(self, tmp_path):
        m, enc = self.manifest()
        extract_seeds(m, enc, (20, 5, 8), seed=4).write(tmp_path / "a")
        extract_seeds(m, enc, (20, 5, 8), seed=4).write(tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        back = SeedSet.read(tmp_path / "a")
        assert back.to_text() == (tmp_path / "a").read_text()

    def test_vocab_filter(self):
        m, enc = self.manifest()
        enc[m.train[0]] = ["99"] + enc[m.train[0]][1:]
        v = build_vocabulary([["60", "_"]])
        seeds = extract_seeds(m, enc, (29, 5, 10), vocab=v)
        assert m.train[0] not in {s.source_id for s in seeds.seeds}
