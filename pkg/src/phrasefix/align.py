"""Word alignment: lexical translation EM, Viterbi links, symmetrization.

The aligner is the classic one-to-many lexical model with a NULL source slot
and a uniform alignment prior, trained with exact EM in both directions and
symmetrized with intersection / grow-diag style heuristics.  Alignments are
always expressed in (noisy index, clean index) coordinates regardless of the
training direction.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ParallelCorpus, SentencePair
from .errors import ConfigError, ContractViolation, DataError, EstimationError

__all__ = [
    "NULL_ID",
    "FORWARD",
    "BACKWARD",
    "LexicalTable",
    "em_ibm1",
    "viterbi_align",
    "AlignmentMatrix",
    "symmetrize",
    "align_corpus",
    "write_alignments",
    "read_alignments",
    "alignments_for_corpus",
]

#: Conditioning id of the empty (NULL) slot; never a real vocabulary id.
NULL_ID = -1

FORWARD = "clean->noisy"
BACKWARD = "noisy->clean"

_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass
class LexicalTable:
    """Word translation probabilities t(emitted | conditioning).

    ``probs[c][e]`` is positive only for co-occurring pairs; each row sums to
    1 up to float error.  ``log_likelihoods[k]`` is the training-corpus
    log-likelihood after *k* EM updates (length = iterations + 1), which is
    non-decreasing — the EM sanity invariant.
    """

    direction: str
    probs: dict[int, dict[int, float]]
    log_likelihoods: list[float] = field(default_factory=list)

    def prob(self, cond: int, emit: int) -> float:
        row = self.probs.get(cond)
        if row is None:
            return 0.0
        return row.get(emit, 0.0)


def _oriented(pair: SentencePair, direction: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if direction == FORWARD:
        return pair.noisy, pair.clean
    return pair.clean, pair.noisy


def em_ibm1(
    corpus: ParallelCorpus, direction: str = FORWARD, iterations: int = 5
) -> LexicalTable:
    """Estimate a lexical table with ``iterations`` exact EM updates.

    Initialization is uniform over the emitted tokens each conditioning
    token (including NULL) co-occurs with.  Pair weights multiply both the
    expected counts and the likelihood.
    """
    if direction not in (FORWARD, BACKWARD):
        raise ContractViolation(f"unknown direction {direction!r}")
    if iterations < 0:
        raise ContractViolation("iterations must be >= 0")
    if not corpus.pairs:
        raise EstimationError("cannot estimate a lexical table from an empty corpus")

    prepared: list[tuple[tuple[int, ...], tuple[int, ...], float]] = []
    for pair in corpus.pairs:
        emit, cond = _oriented(pair, direction)
        prepared.append((emit, (NULL_ID,) + cond, float(pair.weight)))

    cooc: dict[int, set[int]] = defaultdict(set)
    for emit, conds, _ in prepared:
        emit_set = set(emit)
        for c in set(conds):
            cooc[c].update(emit_set)
    probs: dict[int, dict[int, float]] = {
        c: dict.fromkeys(sorted(emits), 1.0 / len(emits)) for c, emits in cooc.items()
    }

    history: list[float] = [_log_likelihood(prepared, probs)]
    for _ in range(iterations):
        counts: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
        for emit, conds, weight in prepared:
            rows = [probs[c] for c in conds]
            count_rows = [counts[c] for c in conds]
            for e in emit:
                ps = [row[e] for row in rows]
                inv = weight / sum(ps)
                for crow, p in zip(count_rows, ps):
                    crow[e] += p * inv
        probs = {}
        for c, row in counts.items():
            total = sum(row.values())
            probs[c] = {e: v / total for e, v in row.items()}
        history.append(_log_likelihood(prepared, probs))
    return LexicalTable(direction, probs, history)


def _log_likelihood(prepared, probs) -> float:
    log = math.log
    total = 0.0
    for emit, conds, weight in prepared:
        rows = [probs[c] for c in conds]
        base = log(len(conds))
        acc = 0.0
        for e in emit:
            acc += log(sum(row.get(e, 0.0) for row in rows)) - base
        total += weight * acc
    return total


@dataclass(frozen=True)
class AlignmentMatrix:
    """A set of (noisy index, clean index) links for one sentence pair."""

    noisy_len: int
    clean_len: int
    links: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.noisy_len < 1 or self.clean_len < 1:
            raise ContractViolation("alignment dimensions must be positive")
        for i, j in self.links:
            if not (0 <= i < self.noisy_len and 0 <= j < self.clean_len):
                raise ContractViolation(f"link ({i},{j}) outside {self.noisy_len}x{self.clean_len}")


def viterbi_align(pair: SentencePair, table: LexicalTable) -> AlignmentMatrix:
    """Most probable link per emitted token under ``table``.

    NULL wins only when strictly more probable than every position; ties
    between positions go to the smallest index.  Tokens aligned to NULL
    contribute no link.
    """
    emit, cond = _oriented(pair, table.direction)
    null_row = table.probs.get(NULL_ID, {})
    links = set()
    for i, e in enumerate(emit):
        best_p = -1.0
        best_j = 0
        for j, c in enumerate(cond):
            p = table.prob(c, e)
            if p > best_p:
                best_p = p
                best_j = j
        if null_row.get(e, 0.0) > best_p:
            continue
        links.add((i, best_j) if table.direction == FORWARD else (best_j, i))
    if table.direction == FORWARD:
        return AlignmentMatrix(len(emit), len(cond), frozenset(links))
    return AlignmentMatrix(len(cond), len(emit), frozenset(links))


def symmetrize(
    forward: AlignmentMatrix, backward: AlignmentMatrix, heuristic: str = "grow-diag-final"
) -> AlignmentMatrix:
    """Combine two directional alignments over the same pair.

    ``intersection`` keeps mutual links only; ``grow-diag`` additionally
    grows into the union through the 8-neighborhood of current links
    (row-major scan, repeated to a fixpoint, a union point is admitted when
    one of its endpoints is still unaligned); ``grow-diag-final`` then makes
    one more row-major pass over all remaining union points with the same
    unaligned-endpoint test.  The result always lies between intersection
    and union.
    """
    if (forward.noisy_len, forward.clean_len) != (backward.noisy_len, backward.clean_len):
        raise ContractViolation("directional alignments disagree on sentence dimensions")
    inter = forward.links & backward.links
    union = forward.links | backward.links
    if heuristic == "intersection":
        return AlignmentMatrix(forward.noisy_len, forward.clean_len, frozenset(inter))
    if heuristic not in ("grow-diag", "grow-diag-final"):
        raise ConfigError(f"unknown symmetrization heuristic {heuristic!r}")
    links = set(inter)
    noisy_aligned = {i for i, _ in links}
    clean_aligned = {j for _, j in links}
    changed = True
    while changed:
        changed = False
        for i, j in sorted(links):
            for di, dj in _NEIGHBORS:
                point = (i + di, j + dj)
                if point in links or point not in union:
                    continue
                if point[0] not in noisy_aligned or point[1] not in clean_aligned:
                    links.add(point)
                    noisy_aligned.add(point[0])
                    clean_aligned.add(point[1])
                    changed = True
    if heuristic == "grow-diag-final":
        for point in sorted(union - links):
            if point[0] not in noisy_aligned or point[1] not in clean_aligned:
                links.add(point)
                noisy_aligned.add(point[0])
                clean_aligned.add(point[1])
    return AlignmentMatrix(forward.noisy_len, forward.clean_len, frozenset(links))


def align_corpus(
    corpus: ParallelCorpus,
    iterations: int = 5,
    heuristic: str = "grow-diag-final",
) -> list[AlignmentMatrix]:
    """Train both directions and return one symmetrized alignment per pair."""
    fwd_table = em_ibm1(corpus, FORWARD, iterations)
    bwd_table = em_ibm1(corpus, BACKWARD, iterations)
    out = []
    for pair in corpus.pairs:
        fwd = viterbi_align(pair, fwd_table)
        bwd = viterbi_align(pair, bwd_table)
        out.append(symmetrize(fwd, bwd, heuristic))
    return out


def write_alignments(path: str | Path, alignments: Iterable[AlignmentMatrix]) -> None:
    """Write one line per pair of space-separated ``i-j`` links (sorted)."""
    with open(path, "w", encoding="utf-8") as handle:
        for alignment in alignments:
            handle.write(" ".join(f"{i}-{j}" for i, j in sorted(alignment.links)) + "\n")


def read_alignments(path: str | Path) -> list[frozenset[tuple[int, int]]]:
    """Read raw ``i-j`` link sets (dimensions live with the corpus)."""
    out = []
    for lineno, line in enumerate(_lines(path), 1):
        links = set()
        for chunk in line.split():
            left, sep, right = chunk.partition("-")
            if not sep:
                raise DataError(f"{path}:{lineno}: malformed link {chunk!r}")
            try:
                links.add((int(left), int(right)))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed link {chunk!r}") from None
        out.append(frozenset(links))
    return out


def alignments_for_corpus(
    corpus: ParallelCorpus, link_sets: Sequence[frozenset[tuple[int, int]]]
) -> list[AlignmentMatrix]:
    """Attach raw link sets to corpus pair dimensions, validating bounds."""
    if len(link_sets) != len(corpus.pairs):
        raise DataError(
            f"alignment count {len(link_sets)} does not match corpus size {len(corpus.pairs)}"
        )
    out = []
    for pair, links in zip(corpus.pairs, link_sets):
        try:
            out.append(AlignmentMatrix(len(pair.noisy), len(pair.clean), links))
        except ContractViolation as exc:
            raise DataError(str(exc)) from exc
    return out


def _lines(path: str | Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
