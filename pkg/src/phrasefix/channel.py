"""Synthetic corruption channel for building controlled parallel corpora.

A channel is a set of per-clean-phrase categorical distributions over noisy
realizations (substitutions, with the empty realization meaning deletion)
plus one global insertion distribution.  Applying the channel to clean text
yields a parallel corpus with a known error process — the scaffolding used
by the end-to-end tests, not part of the correction pipeline itself.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ParallelCorpus
from .errors import ConfigError, DataError

__all__ = [
    "ConfusionChannel",
    "corrupt",
    "corrupt_sentence",
    "load_channel",
    "write_channel",
]

Phrase = tuple[str, ...]

_SUM_TOL = 1e-9


@dataclass
class ConfusionChannel:
    """Phrase-level confusion distributions.

    ``substitutions`` maps each clean phrase to ``[(noisy_phrase, prob), ...]``
    where the empty tuple stands for deletion; each list must sum to 1.
    ``insertions`` is a global list ``[(noisy_phrase, prob), ...]`` whose
    total mass is the per-slot insertion probability (at most 1); one
    insertion draw is made after each consumed clean phrase.
    """

    substitutions: dict[Phrase, list[tuple[Phrase, float]]]
    insertions: list[tuple[Phrase, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for phrase, options in self.substitutions.items():
            if not phrase:
                raise ConfigError("substitution source phrase must be non-empty")
            total = 0.0
            for noisy, prob in options:
                if not 0.0 <= prob <= 1.0:
                    raise ConfigError(
                        f"probability {prob} out of range for {' '.join(phrase)!r}"
                    )
                total += prob
            if abs(total - 1.0) > _SUM_TOL:
                raise ConfigError(
                    f"invalid distribution (sum != 1) for {' '.join(phrase)!r}: {total!r}"
                )
        ins_total = 0.0
        for noisy, prob in self.insertions:
            if not noisy:
                raise ConfigError("insertion phrase must be non-empty")
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"insertion probability {prob} out of range")
            ins_total += prob
        if ins_total > 1.0 + _SUM_TOL:
            raise ConfigError(f"insertion mass exceeds 1: {ins_total!r}")

    @property
    def max_phrase_len(self) -> int:
        return max((len(p) for p in self.substitutions), default=0)


def corrupt(
    clean_sentences: Iterable[Sequence[str]],
    channel: ConfusionChannel,
    seed: int = 0,
) -> ParallelCorpus:
    """Sample a noisy side for each clean sentence.

    Clean tokens are consumed greedily (longest matching substitution phrase
    first; unlisted tokens pass through unchanged), a realization is sampled
    per phrase, and after each consumed phrase one insertion draw is made
    against the global insertion distribution.  Sampling uses
    ``random.Random(seed)``, so a given (text, channel, seed) triple yields a
    bit-identical corpus.  Pairs whose noisy side comes out empty are dropped
    (and counted), like any other degenerate pair.
    """
    rng = random.Random(seed)
    out = ParallelCorpus()
    for clean in clean_sentences:
        out.add_pair(corrupt_sentence(rng, clean, channel), list(clean))
    return out


def corrupt_sentence(
    rng: random.Random, clean: Sequence[str], channel: ConfusionChannel
) -> list[str]:
    """Sample one noisy realization of ``clean`` (may come out empty)."""
    max_len = max(channel.max_phrase_len, 1)
    noisy: list[str] = []
    i = 0
    while i < len(clean):
        options = None
        width = 1
        for width in range(min(max_len, len(clean) - i), 0, -1):
            options = channel.substitutions.get(tuple(clean[i : i + width]))
            if options is not None:
                break
        if options is None:
            width = 1
            noisy.append(clean[i])
        else:
            noisy.extend(_sample(rng, options))
        i += width
        insertion = _sample_insertion(rng, channel.insertions)
        if insertion is not None:
            noisy.extend(insertion)
    return noisy


def _sample(rng: random.Random, options: list[tuple[Phrase, float]]) -> Phrase:
    point = rng.random()
    acc = 0.0
    for phrase, prob in options:
        acc += prob
        if point < acc:
            return phrase
    return options[-1][0]


def _sample_insertion(
    rng: random.Random, insertions: list[tuple[Phrase, float]]
) -> Phrase | None:
    if not insertions:
        return None
    point = rng.random()
    acc = 0.0
    for phrase, prob in insertions:
        acc += prob
        if point < acc:
            return phrase
    return None


def write_channel(path: str | Path, channel: ConfusionChannel) -> None:
    """Serialize as tab-separated ``clean<TAB>noisy<TAB>prob`` rows.

    Deletion rows leave the noisy field empty; insertion rows leave the clean
    field empty.  Rows are sorted for reproducible output.
    """
    rows = []
    for phrase in sorted(channel.substitutions):
        for noisy, prob in channel.substitutions[phrase]:
            rows.append((" ".join(phrase), " ".join(noisy), prob))
    for noisy, prob in channel.insertions:
        rows.append(("", " ".join(noisy), prob))
    with open(path, "w", encoding="utf-8") as handle:
        for clean, noisy, prob in rows:
            handle.write(f"{clean}\t{noisy}\t{prob:.9f}\n")


def load_channel(path: str | Path) -> ConfusionChannel:
    """Parse the tab-separated channel format written by :func:`write_channel`."""
    substitutions: dict[Phrase, list[tuple[Phrase, float]]] = {}
    insertions: list[tuple[Phrase, float]] = []
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
        clean_field, noisy_field, prob_field = parts
        try:
            prob = float(prob_field)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad probability {prob_field!r}") from None
        clean = tuple(clean_field.split())
        noisy = tuple(noisy_field.split())
        if not clean:
            insertions.append((noisy, prob))
        else:
            substitutions.setdefault(clean, []).append((noisy, prob))
    return ConfusionChannel(substitutions, insertions)
