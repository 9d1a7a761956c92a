"""Minimum error rate training of the decoder weights.

The inner step is the exact line search: for one search direction, each
dev sentence's pooled hypotheses are lines score(γ) = a + b·γ, their upper
envelope gives the argmax hypothesis per γ-interval, and merging all
sentences' breakpoints yields a piecewise-constant corpus error whose best
interval midpoint is returned (ties toward the smallest |γ|).  The outer
loop alternates decoding the dev set into a growing hypothesis pool with
greedy descent over coordinate and random directions plus one random
restart per iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .decoder import (
    FEATURE_NAMES,
    N_FEATURES,
    DecodeResult,
    DecoderParams,
    LanguageModel,
    ModelWeights,
    decode,
)
from .errors import ContractViolation, DataError
from .metrics import bleu_from_stats, bleu_stats, sentence_errors
from .phrases import PhraseTable

__all__ = [
    "MertConfig",
    "NBestPool",
    "envelope",
    "line_search",
    "mert_optimize",
    "write_weights",
    "read_weights",
]

CRITERIA = ("wer", "bleu")


@dataclass(frozen=True)
class MertConfig:
    criterion: str = "wer"
    nbest: int = 100
    max_iterations: int = 8
    random_directions: int = 8
    epsilon: float = 1e-4
    seed: int = 0
    #: feature indices pinned at their initial value (e.g. word penalty in
    #: the word-baseline preset)
    frozen: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise ContractViolation(f"unknown criterion {self.criterion!r}")
        if self.nbest < 1 or self.max_iterations < 1 or self.random_directions < 0:
            raise ContractViolation("invalid MERT configuration")


class NBestPool:
    """Per-sentence pools of distinct hypotheses with precomputed error stats.

    Deduplication is by token sequence; the first-seen feature vector is
    kept.  ``stats`` rows are (edits, ref_len) for WER and BLEU sufficient
    statistics for BLEU.
    """

    def __init__(self, refs: Sequence[Sequence[str]], criterion: str = "wer"):
        if criterion not in CRITERIA:
            raise ContractViolation(f"unknown criterion {criterion!r}")
        self.refs = [tuple(r) for r in refs]
        self.criterion = criterion
        self._index: list[dict[tuple[str, ...], int]] = [{} for _ in refs]
        self.features: list[list[np.ndarray]] = [[] for _ in refs]
        self.stats: list[list[np.ndarray]] = [[] for _ in refs]

    def __len__(self) -> int:
        return sum(len(f) for f in self.features)

    def _stat(self, tokens: tuple[str, ...], idx: int) -> np.ndarray:
        if self.criterion == "wer":
            err = sentence_errors(tokens, self.refs[idx])
            return np.array([err.edits, err.ref_len], dtype=np.float64)
        return np.array(bleu_stats(tokens, self.refs[idx]), dtype=np.float64)

    def add(self, idx: int, tokens: tuple[str, ...], features: Sequence[float]) -> bool:
        """Insert one hypothesis; returns True when it was new."""
        bucket = self._index[idx]
        if tokens in bucket:
            return False
        bucket[tokens] = len(self.features[idx])
        self.features[idx].append(np.asarray(features, dtype=np.float64))
        self.stats[idx].append(self._stat(tokens, idx))
        return True

    def add_result(self, idx: int, result: DecodeResult) -> int:
        added = 0
        for hyp in result.nbest:
            added += self.add(idx, hyp.tokens, hyp.features)
        return added

    def corpus_error(self, weights: ModelWeights) -> float:
        """Corpus error of the per-sentence argmax under ``weights``."""
        w = np.asarray(weights.values)
        agg = None
        for feats, stats in zip(self.features, self.stats):
            if not feats:
                raise ContractViolation("pool has an empty sentence bucket")
            scores = np.stack(feats) @ w
            best = int(np.argmax(scores))
            agg = stats[best] if agg is None else agg + stats[best]
        return _error_from_agg(agg, self.criterion)


def _error_from_agg(agg: np.ndarray, criterion: str) -> float:
    if criterion == "wer":
        edits, ref_len = agg
        if ref_len == 0:
            return 0.0 if edits == 0 else float(edits)
        return float(edits) / float(ref_len)
    return 1.0 - bleu_from_stats([int(round(v)) for v in agg]).score / 100.0


def envelope(lines: Sequence[tuple[float, float, int]]) -> list[tuple[float, int]]:
    """Upper envelope of lines ``y = a + b*gamma``.

    ``lines`` holds (intercept, slope, id); the result lists
    ``(gamma_start, id)`` pieces with ascending start points, the first
    starting at -inf.  Among exact duplicates the smallest id survives.
    """
    if not lines:
        raise ContractViolation("envelope of an empty line set")
    ordered = sorted(lines, key=lambda t: (t[1], -t[0], t[2]))
    # drop all but the highest line per slope
    filtered: list[tuple[float, float, int]] = []
    for a, b, ident in ordered:
        if filtered and filtered[-1][1] == b:
            continue
        filtered.append((a, b, ident))
    hull: list[tuple[float, float, int, float]] = []  # (a, b, id, start)
    for a, b, ident in filtered:
        start = -math.inf
        while hull:
            a2, b2, _, start2 = hull[-1]
            # b > b2 strictly, so the crossing is well defined
            start = (a2 - a) / (b - b2)
            if start <= start2:
                hull.pop()
                continue
            break
        if not hull:
            start = -math.inf
        hull.append((a, b, ident, start))
    return [(start, ident) for _, _, ident, start in hull]


def line_search(
    pool: NBestPool, weights: ModelWeights, direction: Sequence[float]
) -> tuple[float, float]:
    """Best step size along ``direction``: returns (gamma*, corpus error).

    Degenerate directions (no breakpoints anywhere) return gamma* = 0 with
    the current error.
    """
    w = np.asarray(weights.values)
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (N_FEATURES,):
        raise ContractViolation("direction must have one component per feature")
    events: list[tuple[float, int, int]] = []  # (gamma, sentence, new active index)
    active: list[int] = []
    agg = None
    for idx, feats in enumerate(pool.features):
        mat = np.stack(feats)
        intercepts = mat @ w
        slopes = mat @ d
        env = envelope(
            [(float(a), float(b), i) for i, (a, b) in enumerate(zip(intercepts, slopes))]
        )
        active.append(env[0][1])
        stat = pool.stats[idx][env[0][1]]
        agg = stat.copy() if agg is None else agg + stat
        for start, ident in env[1:]:
            events.append((start, idx, ident))
    current_err = _error_from_agg(agg, pool.criterion)
    if not events:
        return 0.0, current_err
    events.sort(key=lambda e: e[0])
    first = events[0][0]
    best_gamma, best_err = first - 1.0, current_err
    pos = 0
    while pos < len(events):
        gamma = events[pos][0]
        while pos < len(events) and events[pos][0] == gamma:
            _, idx, ident = events[pos]
            agg -= pool.stats[idx][active[idx]]
            agg += pool.stats[idx][ident]
            active[idx] = ident
            pos += 1
        if pos < len(events):
            midpoint = (gamma + events[pos][0]) / 2.0
        else:
            midpoint = gamma + 1.0
        err = _error_from_agg(agg, pool.criterion)
        if (err, abs(midpoint), midpoint) < (best_err, abs(best_gamma), best_gamma):
            best_gamma, best_err = midpoint, err
    return best_gamma, best_err


def _descend(
    pool: NBestPool,
    weights: ModelWeights,
    config: MertConfig,
    rng: np.random.Generator,
    log_rows: list[tuple[int, str, float, float]],
    iteration: int,
    tag: str = "",
) -> tuple[ModelWeights, float]:
    """Greedy descent over coordinate + random directions until no direction
    improves the pool error by more than epsilon."""
    current = np.asarray(weights.values, dtype=np.float64)
    current_err = pool.corpus_error(ModelWeights(tuple(current)))
    while True:
        directions: list[tuple[str, np.ndarray]] = []
        for i, name in enumerate(FEATURE_NAMES):
            if i in config.frozen:
                continue
            vec = np.zeros(N_FEATURES)
            vec[i] = 1.0
            directions.append((f"{tag}coord:{name}", vec))
        for k in range(config.random_directions):
            vec = rng.uniform(-1.0, 1.0, N_FEATURES)
            for i in config.frozen:
                vec[i] = 0.0
            directions.append((f"{tag}rand:{k}", vec))
        best: tuple[float, float, str, np.ndarray] | None = None
        for ident, vec in directions:
            gamma, err = line_search(pool, ModelWeights(tuple(current)), vec)
            key = (err, abs(gamma))
            if best is None or key < (best[0], abs(best[1])):
                best = (err, gamma, ident, vec)
        if best is None or current_err - best[0] <= config.epsilon:
            return ModelWeights(tuple(current)), current_err
        err, gamma, ident, vec = best
        current = current + gamma * vec
        current_err = err
        log_rows.append((iteration, ident, gamma, err))


def mert_optimize(
    dev_noisy: Sequence[Sequence[str]],
    dev_refs: Sequence[Sequence[str]],
    table: PhraseTable,
    lm_factory: Callable[[Sequence[str]], LanguageModel],
    init_weights: ModelWeights,
    config: MertConfig = MertConfig(),
    decoder_params: DecoderParams = DecoderParams(),
) -> tuple[ModelWeights, list[tuple[int, str, float, float]]]:
    """Tune decoder weights on a dev set.

    Each outer iteration decodes the dev set with the current weights into
    the pool (n-best per sentence), then descends on the pooled error from
    the current point and once more from a random restart, keeping the
    better endpoint.  Stops when the pool stops growing, the error improves
    by less than epsilon, or the iteration cap is reached.  Fully
    deterministic for a fixed seed.
    """
    if len(dev_noisy) != len(dev_refs):
        raise ContractViolation("dev noisy/reference size mismatch")
    if not dev_noisy:
        raise ContractViolation("MERT needs a non-empty dev set")
    pool = NBestPool(dev_refs, config.criterion)
    rng = np.random.default_rng(config.seed)
    weights = init_weights
    log_rows: list[tuple[int, str, float, float]] = []
    params = DecoderParams(
        beam_size=max(decoder_params.beam_size, config.nbest),
        nbest=config.nbest,
        distortion_limit=decoder_params.distortion_limit,
        monotone=decoder_params.monotone,
    )
    prev_err: float | None = None
    cache_lm: object = None
    cache: dict = {}
    for iteration in range(config.max_iterations):
        added = 0
        for idx, noisy in enumerate(dev_noisy):
            lm = lm_factory(noisy)
            if lm is not cache_lm:
                # One logprob memo per LM object: a shared model keeps it
                # across sentences and iterations, per-sentence sessions get
                # their own (their scores depend on the source sentence).
                cache_lm = lm
                cache = {}
            result = decode(noisy, table, lm, weights, params, cache=cache)
            added += pool.add_result(idx, result)
        if iteration > 0 and added == 0:
            break
        weights, err = _descend(pool, weights, config, rng, log_rows, iteration)
        restart_init = rng.uniform(-1.0, 1.0, N_FEATURES)
        for i in config.frozen:
            restart_init[i] = weights.values[i]
        restart_rows: list[tuple[int, str, float, float]] = []
        restart_weights, restart_err = _descend(
            pool,
            ModelWeights(tuple(restart_init)),
            config,
            rng,
            restart_rows,
            iteration,
            tag="restart-",
        )
        if restart_err < err:
            weights, err = restart_weights, restart_err
            log_rows.extend(restart_rows)
        if prev_err is not None and prev_err - err < config.epsilon:
            prev_err = err
            break
        prev_err = err
    return weights, log_rows


def write_weights(path: str | Path, weights: ModelWeights) -> None:
    """Write ``name<TAB>value`` rows in canonical feature order."""
    with open(path, "w", encoding="utf-8") as handle:
        for name, value in zip(FEATURE_NAMES, weights.values):
            handle.write(f"{name}\t{value:.12g}\n")


def read_weights(path: str | Path) -> ModelWeights:
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    mapping: dict[str, float] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        name, sep, value = line.partition("\t")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected name<TAB>value")
        try:
            mapping[name] = float(value)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad weight value {value!r}") from None
    try:
        return ModelWeights.from_dict(mapping)
    except ContractViolation as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_mert_log(path: str | Path, rows: Sequence[tuple[int, str, float, float]]) -> None:
    """CSV log of accepted line-search steps."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("iteration,direction,gamma,dev_error\n")
        for iteration, direction, gamma, err in rows:
            handle.write(f"{iteration},{direction},{gamma:.6f},{err:.6f}\n")
