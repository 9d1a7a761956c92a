import math
import random

import numpy as np
import pytest

from phrasefix.corpus import EOS_ID, Vocabulary
from phrasefix.errors import ConfigError, ContractViolation, DataError, EstimationError
from phrasefix.ngram import NGramModel, perplexity, read_arpa, train_ngram, write_arpa
from phrasefix.phrases import LOG_FLOOR


def sents(*lines):
    return [line.split() for line in lines]


def random_corpus(rng, n_sentences=40, vocab_size=8, max_len=7):
    words = [f"w{k}" for k in range(vocab_size)]
    return [
        [rng.choice(words) for _ in range(rng.randint(1, max_len))]
        for _ in range(n_sentences)
    ]


class TestMle:
    def test_single_path_is_certain(self):
        model = train_ngram(sents("a b"), order=2, smoothing="mle")
        assert model.logprob("b", ("a",)) == pytest.approx(0.0)
        assert model.end_logprob(("a", "b")) == pytest.approx(0.0)

    def test_unigram_count_ratios(self):
        model = train_ngram(sents("a a", "a b"), order=1, smoothing="mle")
        assert model.logprob("a") == pytest.approx(math.log10(3 / 6), abs=1e-6)
        assert model.logprob("b") == pytest.approx(math.log10(1 / 6), abs=1e-6)
        assert model.end_logprob(()) == pytest.approx(math.log10(2 / 6), abs=1e-6)

    def test_unseen_event_hits_floor(self):
        model = train_ngram(sents("a b"), order=2, smoothing="mle")
        assert model.logprob("zzz", ("a",)) == LOG_FLOOR

    def test_repetition_never_hurts_own_probability(self):
        rng = random.Random(3)
        for _ in range(15):
            text = random_corpus(rng, n_sentences=10, vocab_size=5, max_len=5)
            target = rng.choice(text)
            before = train_ngram(text, order=2, smoothing="mle")
            after = train_ngram(text + [target], order=2, smoothing="mle")
            slack = 1e-4  # stored probs are quantized to 6 decimals
            assert after.sentence_logprob(target) >= before.sentence_logprob(target) - slack


class TestWittenBell:
    def test_reserves_mass_for_unseen(self):
        model = train_ngram(sents("a b"), order=2, smoothing="witten-bell")
        assert model.logprob("zzz", ("a",)) > -10.0

    def test_seen_events_discounted(self):
        model = train_ngram(sents("a b"), order=2, smoothing="witten-bell")
        assert model.logprob("b", ("a",)) < 0.0

    def test_normalizes_over_any_history(self):
        rng = random.Random(11)
        text = random_corpus(rng)
        model = train_ngram(text, order=3, smoothing="witten-bell")
        events = model.event_tokens()
        pool = sorted({w for s in text for w in s}) + ["zzz"]
        for _ in range(100):
            history = tuple(rng.choice(pool) for _ in range(rng.randint(0, 4)))
            total = sum(10.0 ** model.logprob(w, history) for w in events)
            np.testing.assert_allclose(total, 1.0, atol=1e-4)

    def test_mle_normalizes_over_seen_histories(self):
        rng = random.Random(12)
        text = random_corpus(rng)
        model = train_ngram(text, order=2, smoothing="mle")
        events = model.event_tokens()
        seen = {(): True}
        for sentence in text:
            for k in range(len(sentence)):
                seen[tuple(sentence[: k + 1])] = True
        for history in list(seen)[:100]:
            total = sum(10.0 ** model.logprob(w, history) for w in events)
            np.testing.assert_allclose(total, 1.0, atol=1e-4)


class TestQueries:
    def test_context_truncation(self):
        model = train_ngram(sents("a b"), order=2, smoothing="mle")
        assert model.logprob("b", ("x", "a")) == model.logprob("b", ("a",))
        assert model.state(("x", "a")) == model.state(("a",))

    def test_state_is_sufficient(self):
        rng = random.Random(21)
        model = train_ngram(random_corpus(rng), order=3, smoothing="witten-bell")
        words = model.event_tokens()
        for _ in range(50):
            h1 = tuple(rng.choice(words) for _ in range(rng.randint(0, 5)))
            h2 = tuple(rng.choice(words) for _ in range(rng.randint(0, 5)))
            if model.state(h1) != model.state(h2):
                continue
            for w in words[:5]:
                assert model.logprob(w, h1) == model.logprob(w, h2)

    def test_stored_logprobs_nonpositive(self):
        rng = random.Random(22)
        for smoothing in ("mle", "witten-bell"):
            model = train_ngram(random_corpus(rng), order=3, smoothing=smoothing)
            for table in model.tables.values():
                for logp, _ in table.values():
                    assert logp <= 0.0

    def test_bos_never_predicted(self):
        model = train_ngram(sents("a b"), order=2, smoothing="witten-bell")
        assert model.logprob("<s>", ("a",)) <= -10.0
        assert "<s>" not in model.event_tokens()


class TestTrainErrors:
    def test_empty_text(self):
        with pytest.raises(EstimationError):
            train_ngram([], order=2)
        with pytest.raises(EstimationError):
            train_ngram([[]], order=2)

    def test_bad_order(self):
        with pytest.raises(ContractViolation):
            train_ngram(sents("a"), order=0)

    def test_bad_smoothing(self):
        with pytest.raises(ConfigError):
            train_ngram(sents("a"), order=1, smoothing="kneser-ney")


class TestPerplexity:
    def test_certain_model_scores_one(self):
        model = train_ngram(sents("a b"), order=2, smoothing="mle")
        assert perplexity(model, sents("a b")) == pytest.approx(1.0, abs=1e-4)

    def test_uniform_model_scores_vocab_size(self):
        vocab = Vocabulary()
        ids = [vocab.add(w) for w in ("a", "b", "c")]
        logp = math.log10(0.25)
        table = {(wid,): (logp, 0.0) for wid in ids}
        table[(EOS_ID,)] = (logp, 0.0)
        model = NGramModel(1, vocab, {1: table})
        assert perplexity(model, sents("a b c")) == pytest.approx(4.0)

    def test_finite_on_unseen_words(self):
        rng = random.Random(7)
        model = train_ngram(random_corpus(rng), order=3, smoothing="witten-bell")
        ppl = perplexity(model, sents("w0 martian w1"))
        assert math.isfinite(ppl) and ppl > 0

    def test_rejects_empty_text(self):
        model = train_ngram(sents("a b"), order=2)
        with pytest.raises(ContractViolation):
            perplexity(model, [[]])


class TestArpaIO:
    def test_round_trip_preserves_queries(self, tmp_path):
        rng = random.Random(13)
        text = random_corpus(rng)
        model = train_ngram(text, order=3, smoothing="witten-bell")
        path = tmp_path / "model.arpa"
        write_arpa(path, model)
        loaded = read_arpa(path)
        words = model.event_tokens() + ["zzz"]
        for _ in range(200):
            w = rng.choice(words)
            history = tuple(rng.choice(words) for _ in range(rng.randint(0, 3)))
            np.testing.assert_allclose(
                loaded.logprob(w, history), model.logprob(w, history), atol=1e-6
            )
            np.testing.assert_allclose(
                loaded.end_logprob(history), model.end_logprob(history), atol=1e-6
            )

    def test_second_write_is_bit_identical(self, tmp_path):
        rng = random.Random(14)
        model = train_ngram(random_corpus(rng), order=2, smoothing="witten-bell")
        first = tmp_path / "one.arpa"
        second = tmp_path / "two.arpa"
        write_arpa(first, model)
        write_arpa(second, read_arpa(first))
        assert first.read_bytes() == second.read_bytes()

    def test_header_declares_counts(self, tmp_path):
        model = train_ngram(sents("a b"), order=2)
        path = tmp_path / "model.arpa"
        write_arpa(path, model)
        lines = path.read_text().splitlines()
        assert lines[0] == "\\data\\"
        assert any(line.startswith("ngram 1=") for line in lines)
        assert any(line.startswith("ngram 2=") for line in lines)
        assert lines[-1] == "\\end\\"

    def test_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text(
            "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\ta\n\n\\end\\\n"
        )
        with pytest.raises(DataError, match="declared 2"):
            read_arpa(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\1-grams:\n-0.3\ta\n")
        with pytest.raises(DataError):
            read_arpa(path)

    def test_entry_outside_section_rejected(self, tmp_path):
        path = tmp_path / "bad.arpa"
        path.write_text("\\data\\\nngram 1=1\n\n-0.3\ta\n\\end\\\n")
        with pytest.raises(DataError):
            read_arpa(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_arpa(tmp_path / "nope.arpa")
