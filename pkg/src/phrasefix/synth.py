"""Synthetic experiment scaffolding: a tiny sentence grammar plus a matched
corruption channel.

The grammar samples English-like sentences over a fixed 50-word vocabulary;
:func:`demo_channel` corrupts them with word confusions (each word has one
systematic misspelling), two phrase-level confusions, deletions and filler
insertions.  Together they give a controlled corpus where a correction model
has something real to learn, which is what the end-to-end tests run on.
"""
from __future__ import annotations

import random
from pathlib import Path
from typing import Sequence

from .channel import ConfusionChannel, corrupt_sentence, write_channel
from .corpus import write_sentences

__all__ = [
    "GRAMMAR_WORDS",
    "sample_sentence",
    "sample_corpus",
    "demo_channel",
    "corrupt_aligned",
    "write_fixture",
]

_DETS = ["the", "a"]
_ADJS = ["old", "young", "quiet", "famous", "small"]
_NOUNS = [
    "farmer",
    "doctor",
    "teacher",
    "soldier",
    "reporter",
    "village",
    "market",
    "river",
    "garden",
    "story",
]
_VERBS = ["visited", "remembered", "liked", "described", "feared", "praised"]
_ADVS = ["often", "never", "quietly", "early"]
_PLACES = ["iraq", "syria", "cairo", "madrid", "lisbon"]
_PRONS = ["he", "she", "they"]
_MISC = [
    "was",
    "born",
    "in",
    "near",
    "from",
    "and",
    "but",
    "with",
    "kind",
    "of",
    "there",
    "again",
    "about",
    "lived",
    "worked",
]

#: The full 50-word closed vocabulary of the synthetic grammar.
GRAMMAR_WORDS = tuple(
    _DETS + _ADJS + _NOUNS + _VERBS + _ADVS + _PLACES + _PRONS + _MISC
)

_FILLERS = ["uh", "um", "ah", "er"]


def _np(rng: random.Random) -> list[str]:
    """Sample a noun phrase: determiner, optional adjective, noun."""
    out = [rng.choice(_DETS)]
    if rng.random() < 0.4:
        out.append(rng.choice(_ADJS))
    out.append(rng.choice(_NOUNS))
    return out


def _place(rng: random.Random) -> str:
    # iraq is over-weighted so its phrase confusion gets real coverage.
    if rng.random() < 0.35:
        return "iraq"
    return rng.choice(_PLACES[1:])


def sample_sentence(rng: random.Random) -> list[str]:
    """Sample one sentence (length roughly 4-14 tokens)."""
    roll = rng.random()
    if roll < 0.22:
        out = _np(rng) + [rng.choice(_VERBS)] + _np(rng)
        if rng.random() < 0.3:
            out.append(rng.choice(_ADVS))
    elif roll < 0.40:
        out = (
            [rng.choice(_PRONS), "was", "born", "in", _place(rng), "and"]
            + [rng.choice(_VERBS)]
            + _np(rng)
        )
    elif roll < 0.55:
        out = _np(rng) + ["from", _place(rng), rng.choice(_VERBS)] + _np(rng)
    elif roll < 0.68:
        out = [rng.choice(_PRONS), rng.choice(_VERBS)] + _np(rng) + ["near"] + _np(rng)
        if rng.random() < 0.3:
            out.append(rng.choice(_ADVS))
    elif roll < 0.78:
        out = _np(rng) + ["was", "kind", "of", rng.choice(_ADJS)]
        if rng.random() < 0.5:
            out += ["and", rng.choice(_PRONS), rng.choice(_VERBS)] + _np(rng)
    elif roll < 0.88:
        out = [
            rng.choice(_PRONS),
            "lived",
            "in",
            _place(rng),
            "and",
            "worked",
            "near",
        ] + _np(rng)
    else:
        out = ["there", "was"] + _np(rng) + ["in"] + _np(rng)
        if rng.random() < 0.4:
            out += ["with", rng.choice(_ADJS), rng.choice(_NOUNS)]
    if rng.random() < 0.15:
        out += ["again", "and", "again"]
    if rng.random() < 0.12:
        out = out + ["but", rng.choice(_PRONS), rng.choice(_VERBS), "about"] + _np(rng)
    return out


def sample_corpus(n: int, seed: int = 0) -> list[list[str]]:
    """Sample ``n`` sentences deterministically."""
    rng = random.Random(seed)
    return [sample_sentence(rng) for _ in range(n)]


_VOWEL_SHIFT = str.maketrans("aeiou", "eioua")


def _confusable(word: str) -> str:
    """Deterministic misspelling of a grammar word (never a grammar word)."""
    out = word.translate(_VOWEL_SHIFT)
    if out == word or out in GRAMMAR_WORDS:
        out = out + "h"
    return out


def demo_channel() -> ConfusionChannel:
    """The corruption process paired with the synthetic grammar.

    Per word: identity 0.82, a systematic misspelling 0.15, deletion 0.03.
    Two phrase confusions ("iraq" -> "eye rack", "kind of" -> "kinda") model
    many-to-one / one-to-many errors, and fillers (uh, um, ...) are inserted
    with total probability 0.02 per consumed phrase.
    """
    subs: dict[tuple[str, ...], list[tuple[tuple[str, ...], float]]] = {}
    reserved = set(GRAMMAR_WORDS) | set(_FILLERS) | {"eye", "rack", "kinda"}
    seen: set[str] = set()
    for word in GRAMMAR_WORDS:
        if word == "iraq":
            continue
        noisy = _confusable(word)
        while noisy in reserved or noisy in seen:
            noisy += "h"
        seen.add(noisy)
        subs[(word,)] = [((word,), 0.82), ((noisy,), 0.15), ((), 0.03)]
    subs[("iraq",)] = [(("eye", "rack"), 0.80), (("iraq",), 0.17), ((), 0.03)]
    subs[("kind", "of")] = [(("kinda",), 0.70), (("kind", "of"), 0.27), ((), 0.03)]
    insertions = [
        (("uh",), 0.008),
        (("um",), 0.006),
        (("ah",), 0.004),
        (("er",), 0.002),
    ]
    return ConfusionChannel(subs, insertions)


def corrupt_aligned(
    sentences: Sequence[Sequence[str]], channel: ConfusionChannel, seed: int = 0
) -> list[list[str]]:
    """Corrupt keeping 1:1 line alignment: empty samples are redrawn."""
    rng = random.Random(seed)
    out = []
    for clean in sentences:
        noisy = corrupt_sentence(rng, clean, channel)
        while not noisy:
            noisy = corrupt_sentence(rng, clean, channel)
        out.append(noisy)
    return out


def write_fixture(
    directory: str | Path,
    n_train: int = 5000,
    n_dev: int = 500,
    n_test: int = 500,
    seed: int = 17,
) -> dict[str, Path]:
    """Write a complete synthetic experiment under ``directory``.

    Produces ``{train,dev,test}.{clean,noisy}.txt`` plus ``channel.tsv`` and
    returns the path map.  Fully determined by ``seed``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    channel = demo_channel()
    sentences = sample_corpus(n_train + n_dev + n_test, seed)
    splits = {
        "train": sentences[:n_train],
        "dev": sentences[n_train : n_train + n_dev],
        "test": sentences[n_train + n_dev :],
    }
    paths: dict[str, Path] = {}
    for idx, (name, clean) in enumerate(splits.items()):
        noisy = corrupt_aligned(clean, channel, seed=seed + 1 + idx)
        paths[f"{name}_clean"] = directory / f"{name}.clean.txt"
        paths[f"{name}_noisy"] = directory / f"{name}.noisy.txt"
        write_sentences(paths[f"{name}_clean"], clean)
        write_sentences(paths[f"{name}_noisy"], noisy)
    paths["channel"] = directory / "channel.tsv"
    write_channel(paths["channel"], channel)
    return paths
