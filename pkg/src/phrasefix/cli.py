"""Command line entry point.

Every subcommand is one pipeline stage; they communicate only through the
artifact files under the configured output directory, so any prefix of the
chain can be rerun idempotently.  Failures print a single machine-parseable
``error: <code>: <message>`` line on stderr and exit with a stable status.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import apply_word_baseline, load_config
from .errors import ConfigError, DataError, EstimationError, PhrasefixError

__all__ = ["main", "EXIT_CODES"]

EXIT_CODES = {"config": 2, "data": 3, "estimate": 4, "internal": 70}

_STAGES = {
    "align": pipeline.stage_align,
    "phrases": pipeline.stage_phrases,
    "lm": pipeline.stage_lm,
    "nnlm": pipeline.stage_nnlm,
    "mert": pipeline.stage_mert,
    "decode": pipeline.stage_decode,
    "analyze": pipeline.stage_analyze,
}


def _error_code(exc: Exception) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, EstimationError):
        return "estimate"
    if isinstance(exc, DataError):
        return "data"
    return "internal"


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument(
        "--preset",
        choices=["word-baseline"],
        help="apply a named preset on top of the config",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phrasefix",
        description="Phrase-based correction of noisy ASR transcripts.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("align", "train word alignments for the parallel training data"),
        ("phrases", "extract and score the phrase table"),
        ("lm", "train the n-gram language model"),
        ("nnlm", "train the neural language model (lm_type fflm or nnjm)"),
        ("mert", "tune decoder weights on the dev set"),
        ("decode", "decode the test noisy file"),
        ("analyze", "split-improvement analysis of the decoded output"),
        ("pipeline", "run every stage in order and print the summary"),
    ]:
        stage = sub.add_parser(name, help=help_text)
        _add_config_arg(stage)

    score = sub.add_parser("score", help="WER/BLEU of a hypothesis file vs a reference")
    score.add_argument("--hyp", required=True, help="hypothesis text file")
    score.add_argument("--ref", required=True, help="reference text file")
    score.add_argument("--out", help="also write the report CSV here")

    corrupt = sub.add_parser("corrupt", help="corrupt clean text through a channel file")
    corrupt.add_argument("--input", required=True, help="clean text file")
    corrupt.add_argument("--channel", required=True, help="channel definition (TSV)")
    corrupt.add_argument("--output", required=True, help="noisy output file")
    corrupt.add_argument("--seed", type=int, default=0)
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "score":
        metrics = pipeline.score_files(Path(args.hyp), Path(args.ref))
        for name, value in metrics.items():
            print(f"{name}\t{value:.6f}" if isinstance(value, float) else f"{name}\t{value}")
        if args.out:
            pipeline._write_metrics_csv(Path(args.out), metrics)
        return
    if args.command == "corrupt":
        out = pipeline.stage_corrupt(
            Path(args.input), Path(args.channel), Path(args.output), args.seed
        )
        print(f"wrote {out}")
        return

    config = load_config(args.config)
    if args.preset == "word-baseline":
        config = apply_word_baseline(config)
    if args.command == "pipeline":
        summary = pipeline.run_pipeline(config)
        print("split\tsystem\twer\tbleu")
        for split in ("dev", "test"):
            for system in ("noisy", "corrected"):
                metrics = summary[split][system]
                print(
                    f"{split}\t{system}\t{metrics['wer']:.6f}\t{metrics['bleu']:.6f}"
                )
        return
    out = _STAGES[args.command](config)
    print(f"wrote {out}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except PhrasefixError as exc:
        code = _error_code(exc)
        print(f"error: {code}: {exc}", file=sys.stderr)
        return EXIT_CODES[code]
    except Exception as exc:  # noqa: BLE001 - fault barrier for the CLI
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES["internal"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
