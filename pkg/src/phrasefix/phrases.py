"""Phrase pair extraction and the scored phrase table.

Extraction enumerates clean-side spans, projects them through the alignment
links and extends over unaligned noisy boundary tokens — exactly the set of
alignment-consistent rectangles (there is a brute-force mirror of this in
the tests).  Scoring produces four features per entry: relative frequencies
in both directions and lexical weights in both directions, all stored as
log10 with a -99 floor.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .align import AlignmentMatrix
from .corpus import ParallelCorpus, SentencePair
from .errors import ContractViolation, DataError, EstimationError

__all__ = [
    "DEFAULT_MAX_PHRASE_LEN",
    "LOG_FLOOR",
    "PhrasePair",
    "extract_spans",
    "extract_phrases",
    "TableEntry",
    "PhraseTable",
    "build_phrase_table",
    "write_phrase_table",
    "load_phrase_table",
]

DEFAULT_MAX_PHRASE_LEN = 7

#: Log10 floor standing in for log(0) everywhere in the pipeline.
LOG_FLOOR = -99.0

Phrase = tuple[str, ...]

#: Sentinel for the empty conditioning slot in the word translation tables.
_NULL = None


@dataclass(frozen=True)
class PhrasePair:
    """One extracted (noisy, clean) phrase pair (token id tuples)."""

    noisy: tuple
    clean: tuple


def extract_spans(
    noisy_len: int,
    clean_len: int,
    links: frozenset[tuple[int, int]] | set[tuple[int, int]],
    max_len: int,
) -> set[tuple[int, int, int, int]]:
    """All alignment-consistent spans ``(i1, i2, j1, j2)`` (inclusive).

    A rectangle is consistent when it contains at least one link and no link
    leaves it on either side; unaligned boundary tokens extend spans on the
    noisy side, and both sides are capped at ``max_len``.
    """
    if max_len < 1:
        raise ContractViolation("max_len must be >= 1")
    by_clean: dict[int, list[int]] = defaultdict(list)
    by_noisy: dict[int, list[int]] = defaultdict(list)
    noisy_aligned = [False] * noisy_len
    for i, j in links:
        by_clean[j].append(i)
        by_noisy[i].append(j)
        noisy_aligned[i] = True
    spans: set[tuple[int, int, int, int]] = set()
    for j1 in range(clean_len):
        i_min, i_max = noisy_len, -1
        for j2 in range(j1, min(j1 + max_len, clean_len)):
            for i in by_clean.get(j2, ()):
                i_min = min(i_min, i)
                i_max = max(i_max, i)
            if i_max < 0:
                continue
            # every link inside the projected noisy block must stay in [j1, j2]
            consistent = all(
                j1 <= jj <= j2
                for i in range(i_min, i_max + 1)
                for jj in by_noisy.get(i, ())
            )
            if not consistent:
                continue
            i_s = i_min
            while True:
                i_e = i_max
                while True:
                    if i_e - i_s + 1 <= max_len:
                        spans.add((i_s, i_e, j1, j2))
                    i_e += 1
                    if i_e >= noisy_len or noisy_aligned[i_e]:
                        break
                i_s -= 1
                if i_s < 0 or noisy_aligned[i_s]:
                    break
    return spans


def extract_phrases(
    pair: SentencePair, alignment: AlignmentMatrix, max_len: int = DEFAULT_MAX_PHRASE_LEN
) -> Counter:
    """Count phrase pairs induced by one aligned sentence pair.

    Returns a :class:`collections.Counter` over :class:`PhrasePair`; each
    occurrence of a consistent span counts once (times the pair weight is
    applied by the table builder, not here).
    """
    if (len(pair.noisy), len(pair.clean)) != (alignment.noisy_len, alignment.clean_len):
        raise ContractViolation("alignment dimensions do not match the sentence pair")
    counts: Counter = Counter()
    for i1, i2, j1, j2 in extract_spans(
        alignment.noisy_len, alignment.clean_len, alignment.links, max_len
    ):
        counts[PhrasePair(pair.noisy[i1 : i2 + 1], pair.clean[j1 : j2 + 1])] += 1
    return counts


@dataclass(frozen=True)
class TableEntry:
    """One clean-side candidate for some noisy phrase (all features log10)."""

    clean: Phrase
    log_phi_fwd: float
    log_phi_bwd: float
    log_lex_fwd: float
    log_lex_bwd: float

    @property
    def channel_features(self) -> tuple[float, float, float, float]:
        return (self.log_phi_fwd, self.log_phi_bwd, self.log_lex_fwd, self.log_lex_bwd)


class PhraseTable:
    """Noisy phrase -> scored clean candidates, sorted for determinism."""

    def __init__(self, entries: dict[Phrase, list[TableEntry]]):
        self._entries = {
            noisy: sorted(options, key=lambda e: e.clean)
            for noisy, options in sorted(entries.items())
        }
        self.max_noisy_len = max((len(p) for p in self._entries), default=0)

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def candidates(self, noisy: Sequence[str]) -> list[TableEntry]:
        return self._entries.get(tuple(noisy), [])

    def has_unigram(self, token: str) -> bool:
        return (token,) in self._entries

    def items(self) -> Iterable[tuple[Phrase, list[TableEntry]]]:
        return self._entries.items()


def _log10_floor(value: float) -> float:
    if value <= 0.0:
        return LOG_FLOOR
    return max(math.log10(value), LOG_FLOOR)


def build_phrase_table(
    corpus: ParallelCorpus,
    alignments: Sequence[AlignmentMatrix],
    max_len: int = DEFAULT_MAX_PHRASE_LEN,
) -> PhraseTable:
    """Extract, count and score phrase pairs over a whole aligned corpus.

    Relative frequencies come from the weighted span counts.  Lexical
    weights use word translation tables estimated from the alignment links
    themselves (unaligned tokens count as links to the empty slot): each
    covered word contributes its best candidate probability within the
    phrase (or the empty slot), combined by geometric mean so values are
    comparable across phrase lengths.
    """
    if len(alignments) != len(corpus.pairs):
        raise ContractViolation(
            f"{len(alignments)} alignments for {len(corpus.pairs)} pairs"
        )
    fwd_counts: dict[str | None, Counter] = defaultdict(Counter)
    bwd_counts: dict[str | None, Counter] = defaultdict(Counter)
    phrase_counts: Counter = Counter()
    for pair, alignment in zip(corpus.pairs, alignments):
        noisy = corpus.noisy_tokens(pair)
        clean = corpus.clean_tokens(pair)
        weight = pair.weight
        noisy_linked = [False] * len(noisy)
        clean_linked = [False] * len(clean)
        for i, j in alignment.links:
            fwd_counts[clean[j]][noisy[i]] += weight
            bwd_counts[noisy[i]][clean[j]] += weight
            noisy_linked[i] = True
            clean_linked[j] = True
        for i, linked in enumerate(noisy_linked):
            if not linked:
                fwd_counts[_NULL][noisy[i]] += weight
        for j, linked in enumerate(clean_linked):
            if not linked:
                bwd_counts[_NULL][clean[j]] += weight
        for phrase_pair, count in extract_phrases(pair, alignment, max_len).items():
            key = (
                corpus.noisy_vocab.decode(phrase_pair.noisy),
                corpus.clean_vocab.decode(phrase_pair.clean),
            )
            phrase_counts[key] += count * weight
    if not phrase_counts:
        raise EstimationError("no phrase pairs could be extracted")

    fwd_lex = _normalize(fwd_counts)
    bwd_lex = _normalize(bwd_counts)
    noisy_marginal: Counter = Counter()
    clean_marginal: Counter = Counter()
    for (noisy, clean), count in phrase_counts.items():
        noisy_marginal[noisy] += count
        clean_marginal[clean] += count

    entries: dict[Phrase, list[TableEntry]] = defaultdict(list)
    for (noisy, clean), count in phrase_counts.items():
        entries[noisy].append(
            TableEntry(
                clean,
                log_phi_fwd=_log10_floor(count / clean_marginal[clean]),
                log_phi_bwd=_log10_floor(count / noisy_marginal[noisy]),
                log_lex_fwd=_log10_floor(_lex_weight(noisy, clean, fwd_lex)),
                log_lex_bwd=_log10_floor(_lex_weight(clean, noisy, bwd_lex)),
            )
        )
    return PhraseTable(entries)


def _normalize(counts: dict) -> dict:
    out = {}
    for cond, row in counts.items():
        total = sum(row.values())
        out[cond] = {tok: value / total for tok, value in row.items()}
    return out


def _lex_weight(emitted: Phrase, conditioning: Phrase, table: dict) -> float:
    """Geometric mean over emitted words of the best in-span candidate."""
    null_row = table.get(_NULL, {})
    log_sum = 0.0
    for word in emitted:
        best = null_row.get(word, 0.0)
        for cond in conditioning:
            best = max(best, table.get(cond, {}).get(word, 0.0))
        if best <= 0.0:
            return 0.0
        log_sum += math.log(best)
    return math.exp(log_sum / len(emitted))


def write_phrase_table(path: str | Path, table: PhraseTable) -> None:
    """Write ``noisy ||| clean ||| p p p p`` rows (probabilities, 6 decimals)."""
    with open(path, "w", encoding="utf-8") as handle:
        for noisy, options in table.items():
            for entry in options:
                probs = " ".join(f"{10.0 ** lp:.6f}" for lp in entry.channel_features)
                handle.write(f"{' '.join(noisy)} ||| {' '.join(entry.clean)} ||| {probs}\n")


def load_phrase_table(path: str | Path) -> PhraseTable:
    """Parse the text phrase table, converting probabilities back to log10."""
    entries: dict[Phrase, list[TableEntry]] = defaultdict(list)
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        parts = line.split(" ||| ")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 '|||' separated fields")
        noisy = tuple(parts[0].split())
        clean = tuple(parts[1].split())
        scores = parts[2].split()
        if not noisy or not clean or len(scores) != 4:
            raise DataError(f"{path}:{lineno}: malformed phrase table row")
        try:
            probs = [float(s) for s in scores]
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad probability in {parts[2]!r}") from None
        entries[noisy].append(TableEntry(clean, *(_log10_floor(p) for p in probs)))
    if not entries:
        raise DataError(f"{path}: empty phrase table")
    return PhraseTable(entries)
