"""Evaluation: word error rate, corpus BLEU, and error-split analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .errors import ContractViolation

__all__ = [
    "SentenceErrors",
    "WerReport",
    "sentence_errors",
    "wer_corpus",
    "BleuReport",
    "bleu_stats",
    "bleu_from_stats",
    "bleu_corpus",
    "SplitRow",
    "SplitAnalysis",
    "split_analysis",
]

Tokens = Sequence[Hashable]

BLEU_MAX_ORDER = 4


@dataclass(frozen=True)
class SentenceErrors:
    """Edit-alignment error counts for one (hypothesis, reference) pair."""

    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def edits(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.edits == 0 else float(self.edits)
        return self.edits / self.ref_len


def sentence_errors(hyp: Tokens, ref: Tokens) -> SentenceErrors:
    """Minimum-edit alignment of ``hyp`` against ``ref``.

    Standard Levenshtein DP with unit costs; the backtrace prefers diagonal
    moves over deletions over insertions, which keeps the S/I/D split
    deterministic among cost ties.
    """
    m, n = len(ref), len(hyp)
    if m == 0:
        raise ContractViolation("reference must be non-empty")
    # dist[i][j] = edits aligning ref[:i] to hyp[:j]
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dist[i][0] = i
    for j in range(n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        row = dist[i]
        prev = dist[i - 1]
        ref_tok = ref[i - 1]
        for j in range(1, n + 1):
            row[j] = min(
                prev[j - 1] + (ref_tok != hyp[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )
    subs = ins = dels = 0
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return SentenceErrors(subs, ins, dels, m)


@dataclass
class WerReport:
    """Corpus-level WER: summed counts over summed reference length."""

    sentences: list[SentenceErrors] = field(default_factory=list)

    @property
    def substitutions(self) -> int:
        return sum(s.substitutions for s in self.sentences)

    @property
    def insertions(self) -> int:
        return sum(s.insertions for s in self.sentences)

    @property
    def deletions(self) -> int:
        return sum(s.deletions for s in self.sentences)

    @property
    def ref_len(self) -> int:
        return sum(s.ref_len for s in self.sentences)

    @property
    def wer(self) -> float:
        total = self.ref_len
        edits = sum(s.edits for s in self.sentences)
        if total == 0:
            return 0.0 if edits == 0 else float(edits)
        return edits / total


def wer_corpus(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> WerReport:
    if len(hyps) != len(refs):
        raise ContractViolation(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")
    return WerReport([sentence_errors(h, r) for h, r in zip(hyps, refs)])


def _ngram_counts(tokens: Tokens, order: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - order + 1):
        gram = tuple(tokens[i : i + order])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def bleu_stats(hyp: Tokens, ref: Tokens, max_order: int = BLEU_MAX_ORDER) -> list[int]:
    """Sufficient statistics for corpus BLEU on one sentence pair.

    Layout: ``[match_1..match_k, total_1..total_k, hyp_len, ref_len]`` where
    matches are clipped by reference n-gram counts.
    """
    matches = [0] * max_order
    totals = [0] * max_order
    for k in range(1, max_order + 1):
        hyp_counts = _ngram_counts(hyp, k)
        ref_counts = _ngram_counts(ref, k)
        totals[k - 1] = max(len(hyp) - k + 1, 0)
        matches[k - 1] = sum(
            min(count, ref_counts.get(gram, 0)) for gram, count in hyp_counts.items()
        )
    return matches + totals + [len(hyp), len(ref)]


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


def bleu_from_stats(stats: Sequence[int], max_order: int = BLEU_MAX_ORDER) -> BleuReport:
    """Corpus BLEU (0-100) from aggregated sufficient statistics.

    Geometric mean of modified n-gram precisions for orders 1..k with the
    brevity penalty; orders with zero matches are add-one smoothed
    ((m+1)/(t+1)) so the score never collapses to exactly 0 on near misses.
    """
    matches = stats[:max_order]
    totals = stats[max_order : 2 * max_order]
    hyp_len, ref_len = stats[2 * max_order], stats[2 * max_order + 1]
    precisions = []
    for m, t in zip(matches, totals):
        if m > 0:
            precisions.append(m / t)
        else:
            precisions.append((m + 1) / (t + 1))
    log_mean = sum(math.log(p) for p in precisions) / max_order
    if hyp_len == 0:
        return BleuReport(0.0, tuple(precisions), 0.0, hyp_len, ref_len)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    score = 100.0 * bp * math.exp(log_mean)
    return BleuReport(score, tuple(precisions), bp, hyp_len, ref_len)


def bleu_corpus(
    hyps: Sequence[Tokens], refs: Sequence[Tokens], max_order: int = BLEU_MAX_ORDER
) -> BleuReport:
    if len(hyps) != len(refs):
        raise ContractViolation(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")
    agg = [0] * (2 * max_order + 2)
    for hyp, ref in zip(hyps, refs):
        for idx, value in enumerate(bleu_stats(hyp, ref, max_order)):
            agg[idx] += value
    return bleu_from_stats(agg, max_order)


@dataclass(frozen=True)
class SplitRow:
    length: int
    top_delta: float
    bottom_delta: float
    diff: float
    count: int


@dataclass
class SplitAnalysis:
    """Per-length improvement split between easy and hard sentences."""

    rows: list[SplitRow]
    top_mean: float
    bottom_mean: float

    def to_csv(self) -> str:
        lines = ["length,top_delta,bottom_delta,diff,count"]
        for row in self.rows:
            lines.append(
                f"{row.length},{row.top_delta:.6f},{row.bottom_delta:.6f},"
                f"{row.diff:.6f},{row.count}"
            )
        return "\n".join(lines) + "\n"


def split_analysis(
    baseline_hyps: Sequence[Tokens],
    system_hyps: Sequence[Tokens],
    refs: Sequence[Tokens],
    min_population: int = 5,
) -> SplitAnalysis:
    """Contrast WER deltas on initially-good vs initially-bad sentences.

    Sentences are binned by exact reference length; inside each bin they are
    sorted by baseline per-sentence WER (ties by original index), the first
    half is the "top" (good baseline) split and the rest — with the odd
    element — the "bottom" split.  Reported deltas are mean per-sentence
    (system - baseline) WER; ``diff = bottom_delta - top_delta`` is negative
    when hard sentences improve more.  Bins smaller than ``min_population``
    are left out of the rows; the aggregate means cover the emitted bins.
    """
    if not (len(baseline_hyps) == len(system_hyps) == len(refs)):
        raise ContractViolation("analysis inputs must have identical lengths")
    bins: dict[int, list[tuple[float, int]]] = {}
    for idx, ref in enumerate(refs):
        base = sentence_errors(baseline_hyps[idx], ref).wer
        bins.setdefault(len(ref), []).append((base, idx))
    rows: list[SplitRow] = []
    top_all: list[float] = []
    bottom_all: list[float] = []
    for length in sorted(bins):
        members = sorted(bins[length])
        if len(members) < min_population:
            continue
        half = len(members) // 2
        deltas = []
        for base, idx in members:
            system = sentence_errors(system_hyps[idx], refs[idx]).wer
            deltas.append(system - base)
        top = deltas[:half]
        bottom = deltas[half:]
        top_all.extend(top)
        bottom_all.extend(bottom)
        top_delta = sum(top) / len(top) if top else 0.0
        bottom_delta = sum(bottom) / len(bottom)
        rows.append(
            SplitRow(length, top_delta, bottom_delta, bottom_delta - top_delta, len(members))
        )
    top_mean = sum(top_all) / len(top_all) if top_all else 0.0
    bottom_mean = sum(bottom_all) / len(bottom_all) if bottom_all else 0.0
    return SplitAnalysis(rows, top_mean, bottom_mean)
