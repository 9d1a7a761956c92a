"""Stage orchestration: each stage reads its declared inputs, writes its
artifact under ``output_dir`` and nothing else, so reruns with unchanged
inputs and seeds reproduce byte-identical files.
"""
from __future__ import annotations

import multiprocessing
import random
from pathlib import Path
from typing import Callable, Sequence

from . import align as align_mod
from . import channel as channel_mod
from .config import NGRAM_TYPES, PipelineConfig
from .corpus import (
    MAX_TOKENS,
    ParallelCorpus,
    load_parallel,
    read_sentences,
    tokenize_and_clean,
    write_sentences,
)
from .decoder import DecodeResult, DecoderParams, ModelWeights, decode, write_nbest
from .errors import ConfigError, DataError
from .mert import MertConfig, mert_optimize, read_weights, write_mert_log, write_weights
from .metrics import bleu_corpus, split_analysis, wer_corpus
from .neural import JointSession, NeuralConfig, load_neural, save_neural
from .neural import train_neural_joint, train_neural_lm
from .ngram import read_arpa, train_ngram, write_arpa
from .phrases import build_phrase_table, load_phrase_table, write_phrase_table

__all__ = [
    "stage_align",
    "stage_phrases",
    "stage_lm",
    "stage_nnlm",
    "stage_mert",
    "stage_decode",
    "stage_score",
    "stage_analyze",
    "stage_corrupt",
    "run_pipeline",
    "decode_corpus",
    "load_eval_pairs",
]


def _ensure_outdir(config: PipelineConfig) -> None:
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)


def _require_file(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _load_train(config: PipelineConfig) -> ParallelCorpus:
    noisy = _require_file(config.require("train_noisy"), "training noisy file")
    clean = _require_file(config.require("train_clean"), "training clean file")
    return load_parallel(noisy, clean, config.nbest_input)


def load_eval_pairs(
    noisy_path: Path, clean_path: Path
) -> tuple[list[list[str]], list[list[str]]]:
    """Line-aligned evaluation pairs; degenerate lines are dropped together."""
    noisy_lines = _read_lines(noisy_path)
    clean_lines = _read_lines(clean_path)
    if len(noisy_lines) != len(clean_lines):
        raise DataError(f"line count {len(noisy_lines)} vs {len(clean_lines)}")
    noisy_out, clean_out = [], []
    for noisy_line, clean_line in zip(noisy_lines, clean_lines):
        noisy = tokenize_and_clean(noisy_line)
        clean = tokenize_and_clean(clean_line)
        if not noisy or not clean or len(noisy) > MAX_TOKENS or len(clean) > MAX_TOKENS:
            continue
        noisy_out.append(noisy)
        clean_out.append(clean)
    return noisy_out, clean_out


def _read_lines(path: Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


# -- model-building stages -------------------------------------------------


def stage_align(config: PipelineConfig) -> Path:
    """EM in both directions, Viterbi links, symmetrization -> alignments."""
    _ensure_outdir(config)
    corpus = _load_train(config)
    alignments = align_mod.align_corpus(corpus, config.em_iterations, config.symmetrization)
    out = config.artifact("alignments")
    align_mod.write_alignments(out, alignments)
    return out


def stage_phrases(config: PipelineConfig) -> Path:
    """Extract and score the phrase table from corpus + alignments."""
    _ensure_outdir(config)
    corpus = _load_train(config)
    alignment_path = _require_file(config.artifact("alignments"), "alignments artifact")
    link_sets = align_mod.read_alignments(alignment_path)
    alignments = align_mod.alignments_for_corpus(corpus, link_sets)
    table = build_phrase_table(corpus, alignments, config.max_phrase_len)
    out = config.artifact("phrase_table")
    write_phrase_table(out, table)
    return out


def stage_lm(config: PipelineConfig) -> Path:
    """Train the n-gram model on the clean side of the training data."""
    _ensure_outdir(config)
    if config.lm_type not in NGRAM_TYPES:
        raise ConfigError(
            f"lm stage requires an n-gram lm_type {NGRAM_TYPES}, got {config.lm_type!r}"
        )
    clean = _require_file(config.require("train_clean"), "training clean file")
    model = train_ngram(read_sentences(clean), config.lm_order, config.lm_type)
    out = config.artifact("lm")
    write_arpa(out, model)
    return out


def _neural_config(config: PipelineConfig, joint: bool) -> NeuralConfig:
    return NeuralConfig(
        context=config.neural_context,
        joint=joint,
        embed_dim=config.neural_embed_dim,
        hidden_dim=config.neural_hidden_dim,
        epochs=config.neural_epochs,
        learning_rate=config.neural_learning_rate,
        batch_size=config.neural_batch_size,
        seed=config.seed,
    )


def stage_nnlm(config: PipelineConfig) -> Path:
    """Train the neural model named by ``lm_type`` (fflm or nnjm)."""
    _ensure_outdir(config)
    if config.lm_type == "fflm":
        clean = _require_file(config.require("train_clean"), "training clean file")
        model = train_neural_lm(read_sentences(clean), _neural_config(config, joint=False))
    elif config.lm_type == "nnjm":
        model = train_neural_joint(_load_train(config), _neural_config(config, joint=True))
    else:
        raise ConfigError(
            f"nnlm stage requires lm_type 'fflm' or 'nnjm', got {config.lm_type!r}"
        )
    out = config.artifact("neural")
    save_neural(out, model)
    return out


# -- decoding-side helpers ---------------------------------------------------


def _load_lm(config: PipelineConfig):
    """Returns (model, session class) for the configured language model type."""
    if config.lm_type in NGRAM_TYPES:
        model = read_arpa(_require_file(config.artifact("lm"), "language model artifact"))
        return model, None
    model = load_neural(_require_file(config.artifact("neural"), "neural model artifact"))
    if config.lm_type == "fflm":
        if model.config.joint:
            raise ConfigError("lm_type is fflm but the saved model is source-conditioned")
        return model, None
    if not model.config.joint:
        raise ConfigError("lm_type is nnjm but the saved model has no source side")
    return model, JointSession


def _lm_factory(model, session_cls) -> Callable[[Sequence[str]], object]:
    if session_cls is None:
        return lambda noisy: model
    return lambda noisy: session_cls(model, noisy)


def _decoder_params(config: PipelineConfig) -> DecoderParams:
    return DecoderParams(
        beam_size=config.beam_size,
        nbest=config.nbest,
        distortion_limit=config.distortion_limit,
        monotone=config.monotone,
    )


def _initial_weights(config: PipelineConfig) -> ModelWeights:
    values = [1.0] * 7
    for idx in config.frozen_features:
        values[idx] = 0.0
    return ModelWeights(tuple(values))


def _decode_weights(config: PipelineConfig) -> ModelWeights:
    """Tuned weights when the artifact exists, otherwise the initial ones."""
    path = config.artifact("weights")
    if Path(path).is_file():
        return read_weights(path)
    return _initial_weights(config)


def stage_mert(config: PipelineConfig) -> Path:
    """Tune weights on the dev pair of files."""
    _ensure_outdir(config)
    noisy_path = _require_file(config.require("dev_noisy"), "dev noisy file")
    clean_path = _require_file(config.require("dev_clean"), "dev clean file")
    dev_noisy, dev_refs = load_eval_pairs(noisy_path, clean_path)
    table = load_phrase_table(
        _require_file(config.artifact("phrase_table"), "phrase table artifact")
    )
    model, session_cls = _load_lm(config)
    mert_config = MertConfig(
        criterion=config.criterion_name,
        nbest=config.mert_nbest,
        max_iterations=config.mert_iterations,
        random_directions=config.mert_random_directions,
        seed=config.seed,
        frozen=config.frozen_features,
    )
    weights, log_rows = mert_optimize(
        dev_noisy,
        dev_refs,
        table,
        _lm_factory(model, session_cls),
        _initial_weights(config),
        mert_config,
        _decoder_params(config),
    )
    out = config.artifact("weights")
    write_weights(out, weights)
    write_mert_log(config.artifact("mert_log"), log_rows)
    return out


# -- parallel decode ---------------------------------------------------------

_WORKER: dict = {}


def _init_worker(table, model, session_cls, weights, params) -> None:
    _WORKER["table"] = table
    _WORKER["factory"] = _lm_factory(model, session_cls)
    _WORKER["weights"] = weights
    _WORKER["params"] = params


def _decode_one(tokens: list[str]) -> DecodeResult | None:
    if not tokens:
        return None
    lm = _WORKER["factory"](tokens)
    if lm is not _WORKER.get("cache_lm"):
        # A factory handing back the same model can keep one logprob memo;
        # per-sentence sessions must not share (their scores depend on the
        # source sentence), and a fresh object gets a fresh cache.
        _WORKER["cache_lm"] = lm
        _WORKER["cache"] = {}
    return decode(
        tokens,
        _WORKER["table"],
        lm,
        _WORKER["weights"],
        _WORKER["params"],
        cache=_WORKER["cache"],
    )


def decode_corpus(
    sentences: Sequence[list[str]],
    table,
    model,
    session_cls,
    weights: ModelWeights,
    params: DecoderParams,
    threads: int = 1,
) -> list[DecodeResult | None]:
    """Decode a batch, optionally fanning out over processes.

    Results come back in input order regardless of thread count; empty
    inputs yield ``None`` (the caller writes them through as empty lines).
    """
    if threads <= 1:
        _init_worker(table, model, session_cls, weights, params)
        return [_decode_one(tokens) for tokens in sentences]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(
        threads, initializer=_init_worker, initargs=(table, model, session_cls, weights, params)
    ) as pool:
        return pool.map(_decode_one, sentences, chunksize=16)


def stage_decode(config: PipelineConfig) -> Path:
    """Decode the test noisy file with the current weights."""
    _ensure_outdir(config)
    noisy_path = _require_file(config.require("test_noisy"), "test noisy file")
    sentences = [tokenize_and_clean(line) for line in _read_lines(noisy_path)]
    table = load_phrase_table(
        _require_file(config.artifact("phrase_table"), "phrase table artifact")
    )
    model, session_cls = _load_lm(config)
    results = decode_corpus(
        sentences,
        table,
        model,
        session_cls,
        _decode_weights(config),
        _decoder_params(config),
        config.threads,
    )
    out = config.artifact("decoded")
    write_sentences(out, [r.best.tokens if r else () for r in results])
    write_nbest(config.artifact("nbest"), [r for r in results if r is not None])
    return out


# -- evaluation stages ---------------------------------------------------------


def _pair_metrics(hyps: list[list[str]], refs: list[list[str]]) -> dict[str, float]:
    wer = wer_corpus(hyps, refs)
    bleu = bleu_corpus(hyps, refs)
    metrics: dict[str, float] = {
        "wer": wer.wer,
        "substitutions": wer.substitutions,
        "insertions": wer.insertions,
        "deletions": wer.deletions,
        "ref_len": wer.ref_len,
        "bleu": bleu.score,
        "brevity_penalty": bleu.brevity_penalty,
    }
    for order, precision in enumerate(bleu.precisions, 1):
        metrics[f"p{order}"] = precision
    return metrics


def score_files(hyp_path: Path, ref_path: Path) -> dict[str, float]:
    """WER + BLEU of two line-aligned files, as a flat metric mapping.

    Rows whose reference side cleans to nothing carry no score mass and are
    skipped (together with their hypothesis line).
    """
    hyps_lines = _read_lines(hyp_path)
    refs_lines = _read_lines(ref_path)
    if len(hyps_lines) != len(refs_lines):
        raise DataError(f"line count {len(hyps_lines)} vs {len(refs_lines)}")
    hyps, refs = [], []
    for hyp_line, ref_line in zip(hyps_lines, refs_lines):
        ref = tokenize_and_clean(ref_line)
        if not ref:
            continue
        hyps.append(tokenize_and_clean(hyp_line))
        refs.append(ref)
    return _pair_metrics(hyps, refs)


def _write_metrics_csv(path: Path, metrics: dict[str, float]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("metric,value\n")
        for name, value in metrics.items():
            if isinstance(value, int):
                handle.write(f"{name},{value}\n")
            else:
                handle.write(f"{name},{value:.6f}\n")


def stage_score(config: PipelineConfig) -> Path:
    """Score the decoded test output against the clean references."""
    _ensure_outdir(config)
    hyp = _require_file(config.artifact("decoded"), "decoded output artifact")
    ref = _require_file(config.require("test_clean"), "test clean file")
    metrics = score_files(hyp, ref)
    out = config.artifact("report")
    _write_metrics_csv(out, metrics)
    return out


def stage_analyze(config: PipelineConfig) -> Path:
    """Split-improvement analysis of corrected vs uncorrected output."""
    _ensure_outdir(config)
    baseline_path = _require_file(config.require("test_noisy"), "test noisy file")
    system_path = _require_file(config.artifact("decoded"), "decoded output artifact")
    ref_path = _require_file(config.require("test_clean"), "test clean file")
    baseline_lines = _read_lines(baseline_path)
    system_lines = _read_lines(system_path)
    ref_lines = _read_lines(ref_path)
    if not (len(baseline_lines) == len(system_lines) == len(ref_lines)):
        raise DataError(
            f"line counts differ: {len(baseline_lines)} vs {len(system_lines)}"
            f" vs {len(ref_lines)}"
        )
    baseline, system, refs = [], [], []
    for base_line, sys_line, ref_line in zip(baseline_lines, system_lines, ref_lines):
        ref = tokenize_and_clean(ref_line)
        if not ref:
            continue
        baseline.append(tokenize_and_clean(base_line))
        system.append(tokenize_and_clean(sys_line))
        refs.append(ref)
    analysis = split_analysis(baseline, system, refs)
    out = config.artifact("analysis")
    with open(out, "w", encoding="utf-8") as handle:
        handle.write(analysis.to_csv())
    return out


def stage_corrupt(
    clean_path: Path, channel_path: Path, out_path: Path, seed: int = 0
) -> Path:
    """Corrupt a clean text file line by line (1:1, lines may come out empty)."""
    channel = channel_mod.load_channel(channel_path)
    rng = random.Random(seed)
    noisy = [
        channel_mod.corrupt_sentence(rng, tokenize_and_clean(line), channel)
        for line in _read_lines(clean_path)
    ]
    write_sentences(out_path, noisy)
    return out_path


def run_pipeline(config: PipelineConfig) -> dict[str, dict[str, dict[str, float]]]:
    """Full chain: align, phrases, LM, MERT, decode, score, analyze.

    Returns the summary — WER and BLEU of both evaluation splits before and
    after correction — and writes it as the summary artifact.
    """
    stage_align(config)
    stage_phrases(config)
    if config.lm_type in ("fflm", "nnjm"):
        stage_nnlm(config)
    else:
        stage_lm(config)
    stage_mert(config)
    stage_decode(config)
    stage_score(config)
    stage_analyze(config)

    # the test split is already decoded; the dev split gets one more pass
    # with the tuned weights so the summary shows both before/after pairs
    dev_noisy, dev_refs = load_eval_pairs(
        config.require("dev_noisy"), config.require("dev_clean")
    )
    table = load_phrase_table(config.artifact("phrase_table"))
    model, session_cls = _load_lm(config)
    results = decode_corpus(
        dev_noisy,
        table,
        model,
        session_cls,
        _decode_weights(config),
        _decoder_params(config),
        config.threads,
    )
    dev_corrected = [list(r.best.tokens) for r in results if r is not None]
    summary = {
        "dev": {
            "noisy": _pair_metrics(dev_noisy, dev_refs),
            "corrected": _pair_metrics(dev_corrected, dev_refs),
        },
        "test": {
            "noisy": score_files(config.require("test_noisy"), config.require("test_clean")),
            "corrected": score_files(config.artifact("decoded"), config.require("test_clean")),
        },
    }
    with open(config.artifact("summary"), "w", encoding="utf-8") as handle:
        handle.write("split,system,wer,bleu\n")
        for split in ("dev", "test"):
            for system in ("noisy", "corrected"):
                metrics = summary[split][system]
                handle.write(
                    f"{split},{system},{metrics['wer']:.6f},{metrics['bleu']:.6f}\n"
                )
    return summary
