"""Back-off n-gram language model with MLE and Witten-Bell estimation.

Sentences are padded with a single ``<s>`` and always emit a terminating
``</s>`` event, so the predicted-event set of a sentence of *k* words has
*k+1* members.  All probabilities live in log10; the universal floor is -99
and stored values are quantized to 6 decimals at estimation time so the text
serialization round-trips bit-exactly.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import BOS, BOS_ID, EOS_ID, Vocabulary
from .errors import ConfigError, ContractViolation, DataError, EstimationError
from .phrases import LOG_FLOOR

__all__ = ["NGramModel", "train_ngram", "perplexity", "write_arpa", "read_arpa"]

SMOOTHERS = ("mle", "witten-bell")


def _quantize(value: float) -> float:
    return round(value, 6) + 0.0


class NGramModel:
    """Queryable back-off model.

    ``tables[k]`` maps id k-grams to ``(logprob, backoff)``; the backoff slot
    is only meaningful below the top order.  Queries take strings, map OOVs
    to ``<unk>``, implicitly prepend ``<s>`` to short histories, back off
    with weight 0 through unseen contexts and floor the result at -99.
    """

    def __init__(
        self,
        order: int,
        vocab: Vocabulary,
        tables: dict[int, dict[tuple[int, ...], tuple[float, float]]],
    ):
        if order < 1:
            raise ContractViolation("order must be >= 1")
        self.order = order
        self.vocab = vocab
        self.tables = tables

    @property
    def context_size(self) -> int:
        return self.order - 1

    def _context_ids(self, history: Sequence[str]) -> tuple[int, ...]:
        ids = (BOS_ID,) + tuple(self.vocab.id(t) for t in history)
        if self.order == 1:
            return ()
        return ids[-(self.order - 1) :]

    def state(self, history: Sequence[str]) -> tuple[int, ...]:
        """Hashable query state: everything a future query can depend on."""
        return self._context_ids(history)

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        """log10 p(word | history); history excludes the implicit ``<s>``."""
        return self._query(self.vocab.id(word), self._context_ids(history))

    def end_logprob(self, history: Sequence[str] = ()) -> float:
        """log10 probability of the sentence-end event after ``history``."""
        return self._query(EOS_ID, self._context_ids(history))

    def _query(self, word: int, context: tuple[int, ...]) -> float:
        return max(self._backoff(word, context), LOG_FLOOR)

    def _backoff(self, word: int, context: tuple[int, ...]) -> float:
        entry = self.tables[len(context) + 1].get(context + (word,))
        if entry is not None:
            return entry[0]
        if not context:
            return LOG_FLOOR
        ctx_entry = self.tables[len(context)].get(context)
        bow = ctx_entry[1] if ctx_entry is not None else 0.0
        return bow + self._backoff(word, context[1:])

    def sentence_logprob(self, tokens: Sequence[str]) -> float:
        """Sum of event log probs: every word plus the ``</s>`` event."""
        total = 0.0
        history: tuple[str, ...] = ()
        for token in tokens:
            total += self.logprob(token, history)
            history += (token,)
        return total + self.end_logprob(history)

    def event_tokens(self) -> list[str]:
        """All tokens the model can predict (vocabulary minus ``<s>``)."""
        return [t for t in self.vocab.tokens() if t != BOS]


def train_ngram(
    sentences: Sequence[Sequence[str]], order: int = 3, smoothing: str = "witten-bell"
) -> NGramModel:
    """Estimate an ``order``-gram model from tokenized sentences.

    ``mle`` is the unsmoothed relative-frequency model (no backoff mass);
    ``witten-bell`` discounts each context by its diversity ``T/(c+T)`` and
    renormalizes the backoff weights against the lower order.
    """
    if order < 1:
        raise ContractViolation("order must be >= 1")
    if smoothing not in SMOOTHERS:
        raise ConfigError(f"unknown smoothing {smoothing!r} (expected one of {SMOOTHERS})")
    sentences = [s for s in sentences if s]
    if not sentences:
        raise EstimationError("cannot train a language model on empty text")

    vocab = Vocabulary()
    counts: dict[int, Counter] = {j: Counter() for j in range(1, order + 1)}
    for sentence in sentences:
        padded = (BOS_ID,) + tuple(vocab.add(t) for t in sentence) + (EOS_ID,)
        for end in range(1, len(padded)):
            for j in range(1, order + 1):
                start = end - j + 1
                if start < 0:
                    break
                counts[j][padded[start : end + 1]] += 1

    # per-context totals and continuation diversity
    ctx_total: dict[int, Counter] = {}
    ctx_distinct: dict[int, Counter] = {}
    continuations: dict[int, dict[tuple[int, ...], list[int]]] = {}
    for j in range(1, order + 1):
        totals: Counter = Counter()
        distinct: Counter = Counter()
        conts: dict[tuple[int, ...], list[int]] = defaultdict(list)
        for gram, c in counts[j].items():
            ctx = gram[:-1]
            totals[ctx] += c
            distinct[ctx] += 1
            conts[ctx].append(gram[-1])
        ctx_total[j] = totals
        ctx_distinct[j] = distinct
        continuations[j] = conts

    tables: dict[int, dict[tuple[int, ...], tuple[float, float]]] = {
        j: {} for j in range(1, order + 1)
    }
    model = NGramModel(order, vocab, tables)

    if smoothing == "mle":
        for j in range(1, order + 1):
            default_bow = LOG_FLOOR if j < order else 0.0
            for gram, c in counts[j].items():
                logp = _quantize(math.log10(c / ctx_total[j][gram[:-1]]))
                tables[j][gram] = (logp, default_bow)
        tables[1][(BOS_ID,)] = (LOG_FLOOR, LOG_FLOOR if order > 1 else 0.0)
        return model

    # witten-bell probabilities
    for j in range(1, order + 1):
        for gram, c in counts[j].items():
            ctx = gram[:-1]
            denom = ctx_total[j][ctx] + ctx_distinct[j][ctx]
            tables[j][gram] = (_quantize(math.log10(c / denom)), 0.0)
    # unigram leftover mass goes uniformly to zero-count tokens (always at
    # least <unk>, which never occurs in training text)
    n_events = ctx_total[1][()]
    t_unigram = ctx_distinct[1][()]
    zero_ids = [
        wid for wid in range(len(vocab)) if wid != BOS_ID and (wid,) not in tables[1]
    ]
    leftover = t_unigram / (n_events + t_unigram)
    each = _quantize(math.log10(leftover / len(zero_ids)))
    for wid in zero_ids:
        tables[1][(wid,)] = (each, 0.0)
    tables[1][(BOS_ID,)] = (LOG_FLOOR, 0.0)
    # backoff weights, bottom-up over context length
    for ell in range(1, order):
        for ctx, words in continuations[ell + 1].items():
            c_total = ctx_total[ell + 1][ctx]
            t_ctx = ctx_distinct[ell + 1][ctx]
            seen_lower = sum(10.0 ** model._backoff(w, ctx[1:]) for w in words)
            denom = max(1.0 - seen_lower, 1e-12)
            bow = _quantize(math.log10((t_ctx / (c_total + t_ctx)) / denom))
            logp = tables[ell].get(ctx, (LOG_FLOOR, 0.0))[0]
            tables[ell][ctx] = (logp, bow)
    return model


def perplexity(model: NGramModel, sentences: Sequence[Sequence[str]]) -> float:
    """Corpus perplexity: 10 ** (-total logprob / total predicted events)."""
    total = 0.0
    events = 0
    for sentence in sentences:
        if not sentence:
            continue
        total += model.sentence_logprob(sentence)
        events += len(sentence) + 1
    if events == 0:
        raise ContractViolation("perplexity needs at least one non-empty sentence")
    return 10.0 ** (-total / events)


def write_arpa(path: str | Path, model: NGramModel) -> None:
    """Serialize in the standard text layout (6-decimal fixed point)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\\data\\\n")
        for j in range(1, model.order + 1):
            handle.write(f"ngram {j}={len(model.tables[j])}\n")
        for j in range(1, model.order + 1):
            handle.write(f"\n\\{j}-grams:\n")
            rows = sorted(
                (model.vocab.decode(gram), entry) for gram, entry in model.tables[j].items()
            )
            for tokens, (logp, bow) in rows:
                line = f"{logp:.6f}\t{' '.join(tokens)}"
                if j < model.order:
                    line += f"\t{bow:.6f}"
                handle.write(line + "\n")
        handle.write("\n\\end\\\n")


def read_arpa(path: str | Path) -> NGramModel:
    """Parse a model written by :func:`write_arpa` (or compatible files)."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    declared: dict[int, int] = {}
    idx = 0
    n = len(lines)
    while idx < n and lines[idx].strip() != "\\data\\":
        idx += 1
    if idx == n:
        raise DataError(f"{path}: missing \\data\\ header")
    idx += 1
    while idx < n:
        line = lines[idx].strip()
        if not line:
            idx += 1
            continue
        if line.startswith("\\"):
            break
        if line.startswith("ngram "):
            spec_part = line[len("ngram ") :]
            j_str, _, count_str = spec_part.partition("=")
            try:
                declared[int(j_str)] = int(count_str)
            except ValueError:
                raise DataError(f"{path}: bad count line {line!r}") from None
        idx += 1
    if not declared:
        raise DataError(f"{path}: no ngram counts declared")
    order = max(declared)
    vocab = Vocabulary()
    tables: dict[int, dict[tuple[int, ...], tuple[float, float]]] = {
        j: {} for j in range(1, order + 1)
    }
    current = 0
    while idx < n:
        line = lines[idx].strip()
        idx += 1
        if not line:
            continue
        if line == "\\end\\":
            current = 0
            continue
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:].split("-")[0])
            except ValueError:
                raise DataError(f"{path}: bad section header {line!r}") from None
            if current not in tables:
                raise DataError(f"{path}: section {line!r} exceeds declared order")
            continue
        if current == 0:
            raise DataError(f"{path}: entry outside any n-gram section: {line!r}")
        fields = line.split("\t")
        if len(fields) == 1:
            fields = line.split()
            if len(fields) < current + 1:
                raise DataError(f"{path}: malformed entry {line!r}")
            fields = [fields[0], " ".join(fields[1 : 1 + current])] + fields[1 + current :]
        if len(fields) not in (2, 3):
            raise DataError(f"{path}: malformed entry {line!r}")
        try:
            logp = float(fields[0])
            bow = float(fields[2]) if len(fields) == 3 else 0.0
        except ValueError:
            raise DataError(f"{path}: malformed entry {line!r}") from None
        gram = tuple(vocab.intern(t) for t in fields[1].split())
        if len(gram) != current:
            raise DataError(f"{path}: {len(gram)}-gram in \\{current}-grams section")
        tables[current][gram] = (logp, bow)
    for j, count in declared.items():
        if len(tables[j]) != count:
            raise DataError(
                f"{path}: declared {count} {j}-grams but found {len(tables[j])}"
            )
    return NGramModel(order, vocab, tables)
