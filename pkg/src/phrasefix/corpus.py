"""Corpus ingestion: tokenization, cleaning, vocabularies, parallel pairs.

Text is lowercased, non-verbal event tags (``[laughter]`` etc.) are removed,
and terminal punctuation is split off into standalone tokens.  Tokens are
mapped to integer ids through per-side :class:`Vocabulary` objects; ids are
an internal representation — everything user-facing works on strings.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import ContractViolation, DataError

__all__ = [
    "BOS",
    "EOS",
    "UNK",
    "BOS_ID",
    "EOS_ID",
    "UNK_ID",
    "MAX_TOKENS",
    "Vocabulary",
    "CleaningPolicy",
    "tokenize_and_clean",
    "SentencePair",
    "ParallelCorpus",
    "load_parallel",
    "read_sentences",
    "write_sentences",
]

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
BOS_ID = 0
EOS_ID = 1
UNK_ID = 2

#: Hard cap on sentence length; longer pairs are dropped at ingestion.
MAX_TOKENS = 100

_MARKERS = (BOS, EOS, UNK)

#: Punctuation detached from the end of a token, one character at a time.
_TERMINAL_PUNCT = frozenset('.,?!;:"')


class Vocabulary:
    """Bidirectional token <-> id map with reserved marker ids.

    Ids 0, 1, 2 are permanently bound to ``<s>``, ``</s>`` and ``<unk>``;
    regular tokens are assigned consecutive ids starting at 3 in insertion
    order, which makes vocabulary construction deterministic for a fixed
    token stream.
    """

    def __init__(self) -> None:
        self._token_to_id: dict[str, int] = {BOS: BOS_ID, EOS: EOS_ID, UNK: UNK_ID}
        self._id_to_token: list[str] = [BOS, EOS, UNK]

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def add(self, token: str) -> int:
        """Return the id for ``token``, assigning a fresh one if unseen."""
        if token in _MARKERS:
            raise ContractViolation(f"reserved marker {token!r} cannot be a corpus token")
        return self.intern(token)

    def intern(self, token: str) -> int:
        """Like :meth:`add` but markers resolve to their reserved ids."""
        ident = self._token_to_id.get(token)
        if ident is None:
            ident = len(self._id_to_token)
            self._token_to_id[token] = ident
            self._id_to_token.append(token)
        return ident

    def id(self, token: str, default: int = UNK_ID) -> int:
        """Look up ``token`` without growing the vocabulary."""
        return self._token_to_id.get(token, default)

    def token(self, ident: int) -> str:
        return self._id_to_token[ident]

    def tokens(self) -> Iterator[str]:
        """All tokens including the three markers, in id order."""
        return iter(self._id_to_token)

    def regular_ids(self) -> range:
        """Ids of non-marker tokens."""
        return range(len(_MARKERS), len(self._id_to_token))

    def encode(self, tokens: Iterable[str], grow: bool = False) -> tuple[int, ...]:
        """Map tokens to ids; unknown tokens become ``<unk>`` unless ``grow``."""
        if grow:
            return tuple(self.add(t) for t in tokens)
        return tuple(self.id(t) for t in tokens)

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._id_to_token[i] for i in ids)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        vocab = cls()
        for token in tokens:
            if token not in _MARKERS:
                vocab.add(token)
        return vocab


@dataclass(frozen=True)
class CleaningPolicy:
    """Knobs for :func:`tokenize_and_clean`."""

    lowercase: bool = True
    event_tags: frozenset[str] = frozenset(
        {"[laughter]", "[noise]", "[sigh]", "[cough]", "[lipsmack]", "[mn]"}
    )


DEFAULT_POLICY = CleaningPolicy()


def tokenize_and_clean(line: str, policy: CleaningPolicy = DEFAULT_POLICY) -> list[str]:
    """Produce the token list for one raw transcript line.

    Lowercases, drops event-tag tokens, splits on whitespace and iteratively
    detaches terminal punctuation (``. , ? ! ; : "``) as separate tokens,
    preserving textual order.  Apostrophes are never touched, so clitics like
    ``'cause`` survive intact.  Cleaning is total: any input yields a
    (possibly empty) token list.
    """
    if policy.lowercase:
        line = line.lower()
    out: list[str] = []
    for raw in line.split():
        if raw in policy.event_tags:
            continue
        trailing: list[str] = []
        while raw and raw[-1] in _TERMINAL_PUNCT:
            trailing.append(raw[-1])
            raw = raw[:-1]
        if raw and raw not in policy.event_tags:
            out.append(raw)
        out.extend(reversed(trailing))
    return out


@dataclass(frozen=True)
class SentencePair:
    """One aligned (noisy, clean) sentence pair, as id tuples.

    ``weight`` carries duplication counts (e.g. when identical pairs from an
    n-best expansion are collapsed); estimation treats a pair of weight *w*
    exactly like *w* copies.
    """

    noisy: tuple[int, ...]
    clean: tuple[int, ...]
    weight: int = 1

    def __post_init__(self) -> None:
        if not self.noisy or not self.clean:
            raise ContractViolation("sentence pair sides must be non-empty")
        if self.weight < 1:
            raise ContractViolation("pair weight must be >= 1")


@dataclass
class ParallelCorpus:
    """A list of sentence pairs plus the two side vocabularies."""

    pairs: list[SentencePair] = field(default_factory=list)
    noisy_vocab: Vocabulary = field(default_factory=Vocabulary)
    clean_vocab: Vocabulary = field(default_factory=Vocabulary)
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)

    def noisy_tokens(self, pair: SentencePair) -> tuple[str, ...]:
        return self.noisy_vocab.decode(pair.noisy)

    def clean_tokens(self, pair: SentencePair) -> tuple[str, ...]:
        return self.clean_vocab.decode(pair.clean)

    def clean_text(self) -> list[list[str]]:
        """Clean-side sentences as token lists (weighted pairs repeated)."""
        out = []
        for pair in self.pairs:
            out.extend([list(self.clean_vocab.decode(pair.clean))] * pair.weight)
        return out

    def add_pair(self, noisy: Sequence[str], clean: Sequence[str], weight: int = 1) -> bool:
        """Encode and store one pair; returns False (and counts it dropped)
        when a side is empty or longer than ``MAX_TOKENS``."""
        if not noisy or not clean or len(noisy) > MAX_TOKENS or len(clean) > MAX_TOKENS:
            self.dropped += 1
            return False
        self.pairs.append(
            SentencePair(
                self.noisy_vocab.encode(noisy, grow=True),
                self.clean_vocab.encode(clean, grow=True),
                weight,
            )
        )
        return True


def _read_lines(path: str | Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_parallel(
    noisy_path: str | Path,
    clean_path: str | Path,
    nbest: int = 1,
    policy: CleaningPolicy = DEFAULT_POLICY,
) -> ParallelCorpus:
    """Read two line-aligned text files into a :class:`ParallelCorpus`.

    With ``nbest`` > 1 the noisy file carries that many consecutive lines per
    clean line and each one becomes a separate pair with the shared clean
    side.  Pairs that clean to an empty side, or exceed ``MAX_TOKENS`` on
    either side, are dropped and counted in ``corpus.dropped``.
    """
    if nbest < 1:
        raise ContractViolation("nbest must be >= 1")
    noisy_lines = _read_lines(noisy_path)
    clean_lines = _read_lines(clean_path)
    expected = len(clean_lines) * nbest
    if len(noisy_lines) != expected:
        raise DataError(f"line count {len(noisy_lines)} vs {expected}")
    corpus = ParallelCorpus()
    for idx, clean_line in enumerate(clean_lines):
        clean = tokenize_and_clean(clean_line, policy)
        for k in range(nbest):
            noisy = tokenize_and_clean(noisy_lines[idx * nbest + k], policy)
            corpus.add_pair(noisy, clean)
    return corpus


def read_sentences(
    path: str | Path, policy: CleaningPolicy = DEFAULT_POLICY
) -> list[list[str]]:
    """Read a plain text file into cleaned token lists, skipping empty lines."""
    sentences = []
    for line in _read_lines(path):
        tokens = tokenize_and_clean(line, policy)
        if tokens:
            sentences.append(tokens)
    return sentences


def write_sentences(path: str | Path, sentences: Iterable[Sequence[str]]) -> None:
    """Write one space-joined sentence per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for tokens in sentences:
            handle.write(" ".join(tokens) + "\n")
