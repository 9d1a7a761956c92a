import random

import numpy as np
import pytest

from phrasefix.align import AlignmentMatrix
from phrasefix.corpus import ParallelCorpus
from phrasefix.errors import ContractViolation, DataError, EstimationError
from phrasefix.phrases import (
    DEFAULT_MAX_PHRASE_LEN,
    LOG_FLOOR,
    PhrasePair,
    build_phrase_table,
    extract_phrases,
    extract_spans,
    load_phrase_table,
    write_phrase_table,
)


def consistency_oracle(m, n, links, max_len):
    """Filter every span rectangle by the textbook consistency predicate."""
    spans = set()
    for i1 in range(m):
        for i2 in range(i1, min(i1 + max_len, m)):
            for j1 in range(n):
                for j2 in range(j1, min(j1 + max_len, n)):
                    covered = False
                    ok = True
                    for i, j in links:
                        in_noisy = i1 <= i <= i2
                        in_clean = j1 <= j <= j2
                        if in_noisy and in_clean:
                            covered = True
                        if in_noisy != in_clean:
                            ok = False
                            break
                    if ok and covered:
                        spans.add((i1, i2, j1, j2))
    return spans


def corpus_of(pairs):
    corpus = ParallelCorpus()
    for noisy, clean in pairs:
        corpus.add_pair(noisy.split(), clean.split())
    return corpus


def diagonal(n):
    return AlignmentMatrix(n, n, frozenset((k, k) for k in range(n)))


class TestExtractSpans:
    def test_diagonal_two_by_two(self):
        spans = extract_spans(2, 2, {(0, 0), (1, 1)}, 2)
        assert spans == {(0, 0, 0, 0), (1, 1, 1, 1), (0, 1, 0, 1)}

    def test_empty_alignment_extracts_nothing(self):
        assert extract_spans(3, 3, set(), 7) == set()

    def test_many_to_one_blocks_subspans(self):
        spans = extract_spans(2, 1, {(0, 0), (1, 0)}, 7)
        assert spans == {(0, 1, 0, 0)}

    def test_unaligned_noisy_boundary_extension(self):
        # middle noisy token unaligned: it may attach to either neighbor span
        spans = extract_spans(3, 2, {(0, 0), (2, 1)}, 7)
        assert (0, 1, 0, 0) in spans
        assert (1, 2, 1, 1) in spans
        assert (0, 0, 0, 0) in spans

    def test_matches_consistency_oracle(self):
        rng = random.Random(99)
        for _ in range(200):
            m = rng.randint(1, 6)
            n = rng.randint(1, 6)
            cells = [(i, j) for i in range(m) for j in range(n)]
            links = frozenset(rng.sample(cells, rng.randint(0, len(cells))))
            max_len = rng.randint(1, 7)
            got = extract_spans(m, n, links, max_len)
            want = consistency_oracle(m, n, links, max_len)
            assert got == want, (m, n, sorted(links), max_len)

    def test_max_len_respected(self):
        rng = random.Random(5)
        for _ in range(60):
            m = rng.randint(1, 6)
            n = rng.randint(1, 6)
            cells = [(i, j) for i in range(m) for j in range(n)]
            links = frozenset(rng.sample(cells, rng.randint(0, len(cells))))
            max_len = rng.randint(1, 3)
            for i1, i2, j1, j2 in extract_spans(m, n, links, max_len):
                assert i2 - i1 + 1 <= max_len
                assert j2 - j1 + 1 <= max_len


class TestExtractPhrases:
    def test_counts_phrases(self):
        corpus = corpus_of([("x y", "a b")])
        counts = extract_phrases(corpus.pairs[0], diagonal(2), 2)
        assert sum(counts.values()) == 3
        pair = corpus.pairs[0]
        assert counts[PhrasePair(pair.noisy, pair.clean)] == 1

    def test_dimension_mismatch(self):
        corpus = corpus_of([("x y", "a b")])
        with pytest.raises(ContractViolation):
            extract_phrases(corpus.pairs[0], AlignmentMatrix(3, 2, frozenset({(0, 0)})))


class TestBuildTable:
    def test_single_pair_probabilities(self):
        corpus = corpus_of([("x", "a")])
        table = build_phrase_table(corpus, [diagonal(1)])
        (entry,) = table.candidates(("x",))
        assert entry.clean == ("a",)
        assert entry.log_phi_fwd == pytest.approx(0.0)
        assert entry.log_phi_bwd == pytest.approx(0.0)

    def test_count_ratio(self):
        """x->a three times and x->b once give phi(a|x)=0.75, phi(b|x)=0.25."""
        corpus = corpus_of([("x", "a")] * 3 + [("x", "b")])
        table = build_phrase_table(corpus, [diagonal(1)] * 4)
        entries = {e.clean: e for e in table.candidates(("x",))}
        assert 10.0 ** entries[("a",)].log_phi_bwd == pytest.approx(0.75)
        assert 10.0 ** entries[("b",)].log_phi_bwd == pytest.approx(0.25)
        # conditioning the other way is certain
        assert entries[("a",)].log_phi_fwd == pytest.approx(0.0)

    def test_row_sums_to_one_both_ways(self):
        rng = random.Random(31)
        words = ["a", "b", "c", "d", "e"]
        corpus = ParallelCorpus()
        alignments = []
        for _ in range(30):
            n = rng.randint(1, 5)
            clean = [rng.choice(words) for _ in range(n)]
            noisy = [rng.choice(words) for _ in range(n)]
            corpus.add_pair(noisy, clean)
            alignments.append(diagonal(n))
        table = build_phrase_table(corpus, alignments)
        fwd_by_clean = {}
        for noisy, options in table.items():
            total = sum(10.0 ** e.log_phi_bwd for e in options)
            np.testing.assert_allclose(total, 1.0, atol=1e-6)
            for e in options:
                fwd_by_clean.setdefault(e.clean, 0.0)
                fwd_by_clean[e.clean] += 10.0 ** e.log_phi_fwd
        for clean, total in fwd_by_clean.items():
            np.testing.assert_allclose(total, 1.0, atol=1e-6)

    def test_pair_order_invariance(self):
        pairs = [("x", "a"), ("x y", "a b"), ("y", "b"), ("x", "b")]
        fwd = corpus_of(pairs)
        rev = corpus_of(list(reversed(pairs)))
        lengths = [len(p.split()) for p, _ in pairs]
        t1 = build_phrase_table(fwd, [diagonal(k) for k in lengths])
        t2 = build_phrase_table(rev, [diagonal(k) for k in reversed(lengths)])
        rows1 = {n: [(e.clean, e.channel_features) for e in opts] for n, opts in t1.items()}
        rows2 = {n: [(e.clean, e.channel_features) for e in opts] for n, opts in t2.items()}
        assert rows1.keys() == rows2.keys()
        for noisy in rows1:
            for (c1, f1), (c2, f2) in zip(rows1[noisy], rows2[noisy]):
                assert c1 == c2
                np.testing.assert_allclose(f1, f2, rtol=1e-12)

    def test_identity_corpus_is_certain(self):
        rng = random.Random(17)
        words = ["red", "green", "blue", "cyan"]
        corpus = ParallelCorpus()
        alignments = []
        for _ in range(25):
            sent = [rng.choice(words) for _ in range(rng.randint(1, 5))]
            corpus.add_pair(sent, sent)
            alignments.append(diagonal(len(sent)))
        table = build_phrase_table(corpus, alignments)
        for noisy, options in table.items():
            best = max(options, key=lambda e: e.log_phi_bwd)
            assert best.clean == noisy
            assert best.log_phi_bwd == pytest.approx(0.0)

    def test_lexical_weights_hand_case(self):
        corpus = corpus_of([("x y", "a")])
        alignment = AlignmentMatrix(2, 1, frozenset({(0, 0), (1, 0)}))
        table = build_phrase_table(corpus, [alignment])
        (entry,) = table.candidates(("x", "y"))
        # t(x|a) = t(y|a) = 1/2, geometric mean = 1/2
        assert 10.0 ** entry.log_lex_fwd == pytest.approx(0.5)
        # t(a|x) = t(a|y) = 1, geometric mean = 1
        assert entry.log_lex_bwd == pytest.approx(0.0)

    def test_weight_multiplies_counts(self):
        weighted = ParallelCorpus()
        weighted.add_pair(["x"], ["a"], weight=3)
        weighted.add_pair(["x"], ["b"])
        table = build_phrase_table(weighted, [diagonal(1), diagonal(1)])
        entries = {e.clean: e for e in table.candidates(("x",))}
        assert 10.0 ** entries[("a",)].log_phi_bwd == pytest.approx(0.75)

    def test_no_extractable_phrases(self):
        corpus = corpus_of([("x", "a")])
        empty = AlignmentMatrix(1, 1, frozenset())
        with pytest.raises(EstimationError):
            build_phrase_table(corpus, [empty])

    def test_max_len_limits_entries(self):
        corpus = corpus_of([("p q r s", "p q r s")])
        table = build_phrase_table(corpus, [diagonal(4)], max_len=2)
        assert table.max_noisy_len <= 2
        assert table.candidates(("p", "q", "r")) == []


class TestTableIO:
    def build_example(self):
        rng = random.Random(8)
        words = ["a", "b", "c"]
        corpus = ParallelCorpus()
        alignments = []
        for _ in range(12):
            n = rng.randint(1, 4)
            corpus.add_pair(
                [rng.choice(words) for _ in range(n)],
                [rng.choice(words) for _ in range(n)],
            )
            alignments.append(diagonal(n))
        return build_phrase_table(corpus, alignments)

    def test_round_trip_is_stable(self, tmp_path):
        table = self.build_example()
        first = tmp_path / "t1.txt"
        second = tmp_path / "t2.txt"
        write_phrase_table(first, table)
        write_phrase_table(second, load_phrase_table(first))
        assert first.read_text() == second.read_text()

    def test_loaded_features_close(self, tmp_path):
        table = self.build_example()
        path = tmp_path / "t.txt"
        write_phrase_table(path, table)
        loaded = load_phrase_table(path)
        for noisy, options in table.items():
            got = loaded.candidates(noisy)
            assert [e.clean for e in got] == [e.clean for e in options]
            for a, b in zip(got, options):
                for lg, lw in zip(a.channel_features, b.channel_features):
                    if lw <= LOG_FLOOR:
                        assert lg <= LOG_FLOOR
                    else:
                        np.testing.assert_allclose(
                            10.0 ** lg, 10.0 ** lw, atol=5e-7
                        )

    def test_malformed_rows_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("x ||| a ||| 0.5 0.5\n")
        with pytest.raises(DataError):
            load_phrase_table(path)
        path.write_text("only two ||| fields\n")
        with pytest.raises(DataError):
            load_phrase_table(path)

    def test_default_max_len_is_seven(self):
        assert DEFAULT_MAX_PHRASE_LEN == 7
