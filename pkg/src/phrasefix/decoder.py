"""Log-linear phrase decoder: beam search over coverage stacks, plus an
exhaustive oracle.

A hypothesis covers a subset of the noisy input, carries the clean output
built so far and a 7-feature vector; its score is the dot product with the
model weights.  One stack per covered-token count, histogram pruning per
stack, and recombination on (coverage, end position, LM state) keeping the
top candidates per state.  Tokens without any 1-token table entry get a
copy-through candidate with zero channel features, so every input can be
decoded.
"""
from __future__ import annotations

from bisect import insort
from collections import namedtuple
from dataclasses import dataclass
from operator import attrgetter
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import ContractViolation
from .phrases import PhraseTable

__all__ = [
    "FEATURE_NAMES",
    "N_FEATURES",
    "ModelWeights",
    "DecoderParams",
    "ScoredHypothesis",
    "DecodeResult",
    "decode",
    "exhaustive_decode",
    "write_nbest",
]

FEATURE_NAMES = (
    "phi_fwd",
    "phi_bwd",
    "lex_fwd",
    "lex_bwd",
    "lm",
    "word_penalty",
    "distortion",
)
N_FEATURES = len(FEATURE_NAMES)

#: Longest input the exhaustive oracle will accept.
ORACLE_MAX_TOKENS = 10


class LanguageModel(Protocol):
    """What the decoder needs from a language model."""

    def logprob(self, word: str, history: Sequence[str]) -> float: ...

    def end_logprob(self, history: Sequence[str]) -> float: ...

    def state(self, history: Sequence[str]) -> tuple: ...


@dataclass(frozen=True)
class ModelWeights:
    """The 7 log-linear weights, in :data:`FEATURE_NAMES` order."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != N_FEATURES:
            raise ContractViolation(f"expected {N_FEATURES} weights, got {len(self.values)}")

    @classmethod
    def uniform(cls) -> "ModelWeights":
        return cls((1.0,) * N_FEATURES)

    def dot(self, features: Sequence[float]) -> float:
        return sum(w * f for w, f in zip(self.values, features))

    def to_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    @classmethod
    def from_dict(cls, mapping: dict[str, float]) -> "ModelWeights":
        missing = [name for name in FEATURE_NAMES if name not in mapping]
        if missing:
            raise ContractViolation(f"missing weights for {missing}")
        return cls(tuple(float(mapping[name]) for name in FEATURE_NAMES))


@dataclass(frozen=True)
class DecoderParams:
    beam_size: int = 100
    nbest: int = 1
    distortion_limit: int = 6
    monotone: bool = False

    def __post_init__(self) -> None:
        if self.beam_size < 1 or self.nbest < 1 or self.distortion_limit < 0:
            raise ContractViolation("invalid decoder parameters")


@dataclass(frozen=True)
class ScoredHypothesis:
    tokens: tuple[str, ...]
    features: tuple[float, ...]
    score: float


@dataclass
class DecodeResult:
    best: ScoredHypothesis
    nbest: list[ScoredHypothesis]


_Hyp = namedtuple("_Hyp", "score features coverage end output state")

_Option = namedtuple("_Option", "width clean channel")


def _span_options(noisy: Sequence[str], table: PhraseTable) -> list[list[_Option]]:
    """Candidate options per start position (table entries + copy-through)."""
    n = len(noisy)
    max_width = max(table.max_noisy_len, 1)
    options: list[list[_Option]] = [[] for _ in range(n)]
    for start in range(n):
        for width in range(1, min(max_width, n - start) + 1):
            for entry in table.candidates(tuple(noisy[start : start + width])):
                options[start].append(_Option(width, entry.clean, entry.channel_features))
        if not table.has_unigram(noisy[start]):
            options[start].append(_Option(1, (noisy[start],), (0.0, 0.0, 0.0, 0.0)))
    return options


_by_output = attrgetter("output")
_by_score = attrgetter("score")


def decode(
    noisy: Sequence[str],
    table: PhraseTable,
    lm: LanguageModel,
    weights: ModelWeights,
    params: DecoderParams = DecoderParams(),
    *,
    cache: dict | None = None,
) -> DecodeResult:
    """Beam-decode one noisy sentence into its n-best clean hypotheses.

    Monotone mode only allows extensions continuing at ``end + 1`` (the
    distortion feature stays 0); otherwise any uncovered span within the
    distortion limit ``|start - end - 1| <= limit`` is reachable, subject to
    one completability rule: after the extension the leftmost uncovered
    position must still lie within the limit of the new phrase end.  That
    rule rejects exactly the hypotheses that could never reach full coverage,
    which is what makes the decoder total.

    ``cache`` is an optional memo reusable across calls that share ``lm``: it
    maps (LM state, word) to (log probability, successor state).  The state
    is a sufficient statistic for continuations — the same assumption
    recombination rests on — so the memo is exact.
    """
    noisy = list(noisy)
    if not noisy:
        raise ContractViolation("cannot decode an empty sentence")
    n = len(noisy)
    options = _span_options(noisy, table)
    full = (1 << n) - 1
    neg_score = lambda h: -h.score
    if cache is None:
        cache = {}
    cache_get = cache.get

    w0, w1, w2, w3, w_lm, w_wp, w_dist = weights.values
    prepped = []
    for start in range(n):
        row = []
        for opt in options[start]:
            c = opt.channel
            wlen = len(opt.clean)
            row.append(
                (
                    opt.width,
                    opt.clean,
                    c,
                    ((1 << opt.width) - 1) << start,
                    wlen,
                    w0 * c[0] + w1 * c[1] + w2 * c[2] + w3 * c[3] - w_wp * wlen,
                )
            )
        prepped.append(row)

    beam = params.beam_size
    nbest_cap = params.nbest
    limit = params.distortion_limit
    monotone = params.monotone

    stacks: list[dict[tuple, list[_Hyp]]] = [{} for _ in range(n + 1)]
    empty = _Hyp(0.0, (0.0,) * N_FEATURES, 0, -1, (), lm.state(()))
    stacks[0][(0, -1, empty.state)] = [empty]

    for covered in range(n):
        flat = [hyp for bucket in stacks[covered].values() for hyp in bucket]
        # Equivalent to sorting on (-score, output): both passes are stable.
        flat.sort(key=_by_output)
        flat.sort(key=_by_score, reverse=True)
        for hyp in flat[:beam]:
            cov = hyp.coverage
            end1 = hyp.end + 1
            if monotone:
                if end1 >= n:
                    continue
                starts: Iterable[int] = (end1,)
            else:
                starts = range(max(0, end1 - limit), min(n - 1, end1 + limit) + 1)
            h_out = hyp.output
            h_state = hyp.state
            h_score = hyp.score
            for start in starts:
                for width, clean, c, mask, wlen, wchan in prepped[start]:
                    if cov & mask:
                        continue
                    new_cov = cov | mask
                    if not monotone and new_cov != full:
                        gap = ~new_cov & full
                        hole = (gap & -gap).bit_length() - 1
                        if start + width - hole > limit:
                            continue
                    jump = start - end1
                    if jump < 0:
                        jump = -jump
                    state = h_state
                    f = hyp.features
                    lm_inc = 0.0
                    # f4 accumulates word by word so the stored feature adds
                    # the same float sequence the oracle does.
                    f4 = f[4]
                    for i, word in enumerate(clean):
                        hit = cache_get((state, word))
                        if hit is None:
                            hist = h_out + clean[:i]
                            hit = (lm.logprob(word, hist), lm.state(hist + (word,)))
                            cache[(state, word)] = hit
                        lp, state = hit
                        lm_inc += lp
                        f4 += lp
                    score = h_score + wchan + w_lm * lm_inc - w_dist * jump
                    key = (new_cov, start + width - 1, state)
                    target = stacks[covered + width]
                    bucket = target.get(key)
                    if bucket is None:
                        bucket = target[key] = []
                    elif len(bucket) >= nbest_cap and bucket[-1].score >= score:
                        continue
                    new = _Hyp(
                        score,
                        (
                            f[0] + c[0],
                            f[1] + c[1],
                            f[2] + c[2],
                            f[3] + c[3],
                            f4,
                            f[5] - wlen,
                            f[6] - jump,
                        ),
                        new_cov,
                        start + width - 1,
                        h_out + clean,
                        state,
                    )
                    insort(bucket, new, key=neg_score)
                    if len(bucket) > nbest_cap:
                        bucket.pop()

    finals: dict[tuple[str, ...], ScoredHypothesis] = {}
    end_cache: dict = {}
    for bucket in stacks[n].values():
        for hyp in bucket:
            end_lp = end_cache.get(hyp.state)
            if end_lp is None:
                end_lp = lm.end_logprob(hyp.output)
                end_cache[hyp.state] = end_lp
            features = hyp.features[:4] + (hyp.features[4] + end_lp,) + hyp.features[5:]
            scored = ScoredHypothesis(hyp.output, features, weights.dot(features))
            held = finals.get(hyp.output)
            if held is None or scored.score > held.score:
                finals[hyp.output] = scored
    if not finals:
        raise ContractViolation("decoder produced no complete hypothesis")
    ranked = sorted(finals.values(), key=lambda s: (-s.score, s.tokens))
    return DecodeResult(ranked[0], ranked[: params.nbest])


def exhaustive_decode(
    noisy: Sequence[str],
    table: PhraseTable,
    lm: LanguageModel,
    weights: ModelWeights,
    params: DecoderParams = DecoderParams(),
) -> DecodeResult:
    """Enumerate every segmentation / substitution / reachable order.

    Independent oracle for the beam decoder: no pruning, no recombination,
    and the language model feature is recomputed from scratch on each
    complete output.  Reachability follows the same jump and completability
    rules as ``decode``.  Guarded to inputs of at most 10 tokens.
    """
    noisy = list(noisy)
    if not noisy:
        raise ContractViolation("cannot decode an empty sentence")
    if len(noisy) > ORACLE_MAX_TOKENS:
        raise ContractViolation(
            f"exhaustive decode limited to {ORACLE_MAX_TOKENS} tokens, got {len(noisy)}"
        )
    n = len(noisy)
    options = _span_options(noisy, table)
    full = (1 << n) - 1
    finals: dict[tuple[str, ...], ScoredHypothesis] = {}

    def complete(output: tuple[str, ...], channel: list[float], wp: float, dist: float) -> None:
        lm_total = 0.0
        for idx, word in enumerate(output):
            lm_total += lm.logprob(word, output[:idx])
        lm_total += lm.end_logprob(output)
        features = (channel[0], channel[1], channel[2], channel[3], lm_total, wp, dist)
        scored = ScoredHypothesis(output, features, weights.dot(features))
        held = finals.get(output)
        if held is None or scored.score > held.score:
            finals[output] = scored

    def walk(
        coverage: int,
        end: int,
        output: tuple[str, ...],
        channel: list[float],
        wp: float,
        dist: float,
    ) -> None:
        if coverage == full:
            complete(output, channel, wp, dist)
            return
        for start in range(n):
            jump = abs(start - end - 1)
            if params.monotone:
                if start != end + 1:
                    continue
            elif jump > params.distortion_limit:
                continue
            for option in options[start]:
                mask = ((1 << option.width) - 1) << start
                if coverage & mask:
                    continue
                grown = coverage | mask
                if not params.monotone and grown != full:
                    hole = next(j for j in range(n) if not grown >> j & 1)
                    if start + option.width - hole > params.distortion_limit:
                        continue
                walk(
                    grown,
                    start + option.width - 1,
                    output + option.clean,
                    [a + b for a, b in zip(channel, option.channel)],
                    wp - len(option.clean),
                    dist - jump,
                )

    walk(0, -1, (), [0.0, 0.0, 0.0, 0.0], 0.0, 0.0)
    if not finals:
        raise ContractViolation("no complete hypothesis reachable")
    ranked = sorted(finals.values(), key=lambda s: (-s.score, s.tokens))
    return DecodeResult(ranked[0], ranked)


def write_nbest(path: str | Path, results: Sequence[DecodeResult]) -> None:
    """Write ``id ||| tokens ||| features ||| score`` rows (6 decimals)."""
    with open(path, "w", encoding="utf-8") as handle:
        for idx, result in enumerate(results):
            for hyp in result.nbest:
                feats = " ".join(f"{f:.6f}" for f in hyp.features)
                handle.write(
                    f"{idx} ||| {' '.join(hyp.tokens)} ||| {feats} ||| {hyp.score:.6f}\n"
                )
