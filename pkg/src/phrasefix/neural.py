"""Feed-forward neural language models (history-only and source-conditioned).

Both variants embed a fixed window of ids, pass the concatenation through
one ReLU layer and a full softmax over the target vocabulary, and train by
mini-batch SGD with manually derived float64 gradients (verified against
central differences in the tests).  Histories shorter than the context are
padded with the corpus-frequency-weighted average of all input embeddings,
which stays differentiable: the pad slot's gradient flows back to every
embedding row in proportion to its frequency.

The source-conditioned variant adds a window of source tokens around the
affiliated source position ``round(k * source_len / target_len)`` (offsets
-1..+2, clamped to the sentence with boundary markers), following the joint
model design for correction: the source side is the noisy sentence.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID, ParallelCorpus, Vocabulary
from .errors import ContractViolation, DataError, EstimationError

__all__ = [
    "NeuralConfig",
    "NeuralLM",
    "JointSession",
    "train_neural_lm",
    "train_neural_joint",
    "save_neural",
    "load_neural",
]

_LN10 = math.log(10.0)

#: Window offsets around the affiliated source position (4 source slots).
SOURCE_OFFSETS = (-1, 0, 1, 2)

_PAD = -1

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NeuralConfig:
    """Architecture and SGD settings (defaults sized for real corpora;
    tests shrink the dims)."""

    context: int = 4
    joint: bool = False
    embed_dim: int = 150
    hidden_dim: int = 750
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 64
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.context < 1:
            raise ContractViolation("context must be >= 1")
        if min(self.embed_dim, self.hidden_dim, self.epochs + 1, self.batch_size) < 1:
            raise ContractViolation("invalid neural configuration")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class NeuralLM:
    """Trained model: parameter arrays plus the vocabularies.

    ``params`` holds ``embed``, ``w1``, ``b1``, ``w2``, ``b2`` and, for the
    joint variant, ``src_embed``.  All math is float64.
    """

    def __init__(
        self,
        config: NeuralConfig,
        vocab: Vocabulary,
        source_vocab: Vocabulary | None,
        params: dict[str, np.ndarray],
        unigram_weights: np.ndarray,
        epoch_losses: list[float] | None = None,
    ):
        self.config = config
        self.vocab = vocab
        self.source_vocab = source_vocab
        self.params = params
        self.unigram_weights = unigram_weights
        self.epoch_losses = list(epoch_losses or [])

    # -- construction ---------------------------------------------------

    @classmethod
    def initialize(
        cls,
        config: NeuralConfig,
        vocab: Vocabulary,
        source_vocab: Vocabulary | None,
        unigram_weights: np.ndarray,
    ) -> "NeuralLM":
        rng = np.random.default_rng(config.seed)
        slots = config.context + (len(SOURCE_OFFSETS) if config.joint else 0)
        in_dim = slots * config.embed_dim

        def uniform(*shape: int) -> np.ndarray:
            return rng.uniform(-config.init_scale, config.init_scale, shape)

        params = {
            "embed": uniform(len(vocab), config.embed_dim),
            "w1": uniform(in_dim, config.hidden_dim),
            "b1": uniform(config.hidden_dim),
            "w2": uniform(config.hidden_dim, len(vocab)),
            "b2": uniform(len(vocab)),
        }
        if config.joint:
            assert source_vocab is not None
            params["src_embed"] = uniform(len(source_vocab), config.embed_dim)
        return cls(config, vocab, source_vocab, params, unigram_weights)

    # -- forward/backward -----------------------------------------------

    def _input_matrix(self, hist: np.ndarray, src: np.ndarray | None) -> np.ndarray:
        embed = self.params["embed"]
        pad_vec = self.unigram_weights @ embed
        parts = []
        for slot in range(self.config.context):
            ids = hist[:, slot]
            rows = embed[np.maximum(ids, 0)]
            parts.append(np.where((ids >= 0)[:, None], rows, pad_vec))
        if self.config.joint:
            src_embed = self.params["src_embed"]
            for slot in range(len(SOURCE_OFFSETS)):
                parts.append(src_embed[src[:, slot]])
        return np.concatenate(parts, axis=1)

    def _forward(
        self, hist: np.ndarray, src: np.ndarray | None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        x = self._input_matrix(hist, src)
        pre = x @ self.params["w1"] + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ self.params["w2"] + self.params["b2"]
        return x, pre, hidden, logits

    @staticmethod
    def _log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def loss_and_grads(
        self, hist: np.ndarray, src: np.ndarray | None, labels: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch and gradients for every block."""
        batch = len(labels)
        x, pre, hidden, logits = self._forward(hist, src)
        logp = self._log_softmax(logits)
        loss = -logp[np.arange(batch), labels].mean()

        dlogits = np.exp(logp)
        dlogits[np.arange(batch), labels] -= 1.0
        dlogits /= batch
        grads = {
            "b2": dlogits.sum(axis=0),
            "w2": hidden.T @ dlogits,
        }
        dhidden = dlogits @ self.params["w2"].T
        dpre = dhidden * (pre > 0.0)
        grads["b1"] = dpre.sum(axis=0)
        grads["w1"] = x.T @ dpre
        dx = dpre @ self.params["w1"].T

        d = self.config.embed_dim
        dembed = np.zeros_like(self.params["embed"])
        pad_grad = np.zeros(d)
        for slot in range(self.config.context):
            ids = hist[:, slot]
            grad_slot = dx[:, slot * d : (slot + 1) * d]
            real = ids >= 0
            np.add.at(dembed, ids[real], grad_slot[real])
            if not real.all():
                pad_grad += grad_slot[~real].sum(axis=0)
        # the pad vector is freq-weighted over all rows, so its gradient is too
        dembed += np.outer(self.unigram_weights, pad_grad)
        grads["embed"] = dembed
        if self.config.joint:
            dsrc = np.zeros_like(self.params["src_embed"])
            base = self.config.context * d
            for slot in range(len(SOURCE_OFFSETS)):
                np.add.at(dsrc, src[:, slot], dx[:, base + slot * d : base + (slot + 1) * d])
            grads["src_embed"] = dsrc
        return loss, grads

    # -- event building --------------------------------------------------

    def _history_row(self, prefix_ids: Sequence[int]) -> list[int]:
        c = self.config.context
        tail = list(prefix_ids[-c:])
        return [_PAD] * (c - len(tail)) + tail

    def _source_row(self, src_ids: Sequence[int], position: int, target_len: int) -> list[int]:
        m = len(src_ids)
        center = _round_half_up(position * m / target_len) if target_len else 0
        row = []
        for off in SOURCE_OFFSETS:
            idx = center + off
            if idx < 0:
                row.append(BOS_ID)
            elif idx >= m:
                row.append(EOS_ID)
            else:
                row.append(src_ids[idx])
        return row

    # -- scoring ----------------------------------------------------------

    def _score_event(
        self, word_id: int, prefix_ids: Sequence[int], src_row: Sequence[int] | None
    ) -> float:
        hist = np.array([self._history_row(prefix_ids)], dtype=np.int64)
        src = None
        if self.config.joint:
            src = np.array([src_row], dtype=np.int64)
        _, _, _, logits = self._forward(hist, src)
        return float(self._log_softmax(logits)[0, word_id]) / _LN10

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        """log10 p(word | history) for the history-only variant."""
        if self.config.joint:
            raise ContractViolation("joint model scoring needs a JointSession")
        prefix = [self.vocab.id(t) for t in history]
        return self._score_event(self.vocab.id(word), prefix, None)

    def end_logprob(self, history: Sequence[str] = ()) -> float:
        if self.config.joint:
            raise ContractViolation("joint model scoring needs a JointSession")
        prefix = [self.vocab.id(t) for t in history]
        return self._score_event(EOS_ID, prefix, None)

    def state(self, history: Sequence[str]) -> tuple[int, ...]:
        prefix = [self.vocab.id(t) for t in history]
        return tuple(self._history_row(prefix))

    @property
    def context_size(self) -> int:
        return self.config.context

    def sentence_logprob(
        self, tokens: Sequence[str], source: Sequence[str] | None = None
    ) -> float:
        """Total log10 prob of all events (words + end) of one sentence.

        The joint variant requires ``source`` and uses the true affiliation
        ratio, exactly as in training.
        """
        ids = [self.vocab.id(t) for t in tokens]
        if self.config.joint:
            if source is None:
                raise ContractViolation("joint model needs the source sentence")
            assert self.source_vocab is not None
            src_ids = [self.source_vocab.id(t) for t in source]
        total = 0.0
        n = len(ids)
        for k in range(n + 1):
            word_id = ids[k] if k < n else EOS_ID
            src_row = None
            if self.config.joint:
                src_row = self._source_row(src_ids, k, n)
            total += self._score_event(word_id, ids[:k], src_row)
        return total


class JointSession:
    """Decode-time adapter scoring the joint model against one source.

    While decoding, the final target length is unknown, so the affiliation
    ratio is approximated by assuming target length == source length (the
    affiliated position is then the output position itself, clamped).  The
    query state includes the output position because future scores depend
    on it.
    """

    def __init__(self, model: NeuralLM, source_tokens: Sequence[str]):
        if not model.config.joint:
            raise ContractViolation("JointSession wraps a joint model")
        assert model.source_vocab is not None
        self.model = model
        self.src_ids = [model.source_vocab.id(t) for t in source_tokens]
        self.context_size = model.config.context

    def _row(self, position: int) -> list[int]:
        m = len(self.src_ids)
        return self.model._source_row(self.src_ids, min(position, m), m)

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        prefix = [self.model.vocab.id(t) for t in history]
        return self.model._score_event(
            self.model.vocab.id(word), prefix, self._row(len(history))
        )

    def end_logprob(self, history: Sequence[str] = ()) -> float:
        prefix = [self.model.vocab.id(t) for t in history]
        return self.model._score_event(EOS_ID, prefix, self._row(len(history)))

    def state(self, history: Sequence[str]) -> tuple[int, ...]:
        prefix = [self.model.vocab.id(t) for t in history]
        return (len(history),) + tuple(self.model._history_row(prefix))


def _unigram_weights(vocab: Vocabulary, sentences: Sequence[Sequence[int]]) -> np.ndarray:
    weights = np.zeros(len(vocab))
    for ids in sentences:
        for wid in ids:
            weights[wid] += 1.0
    total = weights.sum()
    if total > 0:
        weights /= total
    return weights


def _train(
    model: NeuralLM,
    hist: np.ndarray,
    src: np.ndarray | None,
    labels: np.ndarray,
) -> NeuralLM:
    config = model.config
    rng = np.random.default_rng(config.seed + 1)
    n = len(labels)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, config.batch_size):
            chosen = order[start : start + config.batch_size]
            loss, grads = model.loss_and_grads(
                hist[chosen], src[chosen] if src is not None else None, labels[chosen]
            )
            for name, grad in grads.items():
                model.params[name] -= config.learning_rate * grad
            epoch_loss += loss
            batches += 1
        model.epoch_losses.append(epoch_loss / batches)
    return model


def train_neural_lm(
    sentences: Sequence[Sequence[str]], config: NeuralConfig = NeuralConfig()
) -> NeuralLM:
    """Train the history-only variant on tokenized text."""
    if config.joint:
        raise ContractViolation("use train_neural_joint for the joint variant")
    sentences = [s for s in sentences if s]
    if not sentences:
        raise EstimationError("cannot train a neural model on empty text")
    vocab = Vocabulary()
    encoded = [tuple(vocab.add(t) for t in s) for s in sentences]
    model = NeuralLM.initialize(config, vocab, None, _unigram_weights(vocab, encoded))

    hist_rows = []
    labels = []
    for ids in encoded:
        n = len(ids)
        for k in range(n + 1):
            hist_rows.append(model._history_row(ids[:k]))
            labels.append(ids[k] if k < n else EOS_ID)
    return _train(
        model,
        np.array(hist_rows, dtype=np.int64),
        None,
        np.array(labels, dtype=np.int64),
    )


def train_neural_joint(
    corpus: ParallelCorpus, config: NeuralConfig = NeuralConfig(joint=True)
) -> NeuralLM:
    """Train the source-conditioned variant on a parallel corpus.

    Target events are the clean words (+ end marker); each event also sees
    the window around its affiliated noisy position.  Pair weights repeat
    events.
    """
    if not config.joint:
        raise ContractViolation("config.joint must be set for the joint variant")
    if not corpus.pairs:
        raise EstimationError("cannot train a neural model on an empty corpus")
    vocab = Vocabulary()
    source_vocab = Vocabulary()
    encoded: list[tuple[tuple[int, ...], tuple[int, ...], int]] = []
    for pair in corpus.pairs:
        target = tuple(vocab.add(t) for t in corpus.clean_tokens(pair))
        source = tuple(source_vocab.add(t) for t in corpus.noisy_tokens(pair))
        encoded.append((target, source, pair.weight))
    model = NeuralLM.initialize(
        config, vocab, source_vocab, _unigram_weights(vocab, [t for t, _, _ in encoded])
    )

    hist_rows = []
    src_rows = []
    labels = []
    for target, source, weight in encoded:
        n = len(target)
        for _ in range(weight):
            for k in range(n + 1):
                hist_rows.append(model._history_row(target[:k]))
                src_rows.append(model._source_row(source, k, n))
                labels.append(target[k] if k < n else EOS_ID)
    return _train(
        model,
        np.array(hist_rows, dtype=np.int64),
        np.array(src_rows, dtype=np.int64),
        np.array(labels, dtype=np.int64),
    )


def save_neural(path: str | Path, model: NeuralLM) -> None:
    """Persist as an .npz container (arrays + JSON metadata, no pickle)."""
    meta = {
        "format_version": _FORMAT_VERSION,
        "config": asdict(model.config),
        "epoch_losses": model.epoch_losses,
    }
    arrays = dict(model.params)
    arrays["unigram_weights"] = model.unigram_weights
    arrays["vocab"] = np.array(list(model.vocab.tokens()), dtype=np.str_)
    if model.source_vocab is not None:
        arrays["src_vocab"] = np.array(list(model.source_vocab.tokens()), dtype=np.str_)
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True), dtype=np.str_)
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def _vocab_from_array(tokens: np.ndarray) -> Vocabulary:
    vocab = Vocabulary()
    for token in tokens.tolist():
        vocab.intern(token)
    return vocab


def load_neural(path: str | Path) -> NeuralLM:
    try:
        data = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != _FORMAT_VERSION:
            raise DataError(f"{path}: unsupported model format {meta.get('format_version')!r}")
        config = NeuralConfig(**meta["config"])
        vocab = _vocab_from_array(data["vocab"])
        source_vocab = _vocab_from_array(data["src_vocab"]) if "src_vocab" in data else None
        params = {
            name: data[name].astype(np.float64)
            for name in ("embed", "w1", "b1", "w2", "b2")
        }
        if config.joint:
            params["src_embed"] = data["src_embed"].astype(np.float64)
        model = NeuralLM(
            config,
            vocab,
            source_vocab,
            params,
            data["unigram_weights"].astype(np.float64),
            meta.get("epoch_losses", []),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing model component {exc}") from exc
    return model
