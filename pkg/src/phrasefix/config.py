"""Pipeline configuration: an INI file parsed into one typed object.

Every stage reads the same config; artifact locations are derived from
``output_dir`` so stages compose without repeating paths.  Validation is
strict: unknown sections or keys, bad types, out-of-range values, and data
paths that do not exist are all configuration errors at load time.
Artifacts produced by earlier stages are checked by the stage that consumes
them.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError

__all__ = ["PipelineConfig", "load_config", "apply_word_baseline", "ARTIFACTS"]

#: Within-stage parallelism defaults to the machine (orchestration is
#: always sequential across stages).
_DEFAULT_THREADS = max(1, os.cpu_count() or 1)

#: Artifact file names under ``output_dir``.
ARTIFACTS = {
    "alignments": "train.align",
    "phrase_table": "phrases.txt",
    "lm": "lm.arpa",
    "neural": "neural.npz",
    "weights": "weights.tsv",
    "mert_log": "mert_log.csv",
    "decoded": "test.decoded.txt",
    "nbest": "test.nbest.txt",
    "report": "report.csv",
    "analysis": "analysis.csv",
    "summary": "summary.csv",
}

_LM_TYPES = ("mle", "witten-bell", "fflm", "nnjm")
NGRAM_TYPES = ("mle", "witten-bell")
_HEURISTICS = ("intersection", "grow-diag", "grow-diag-final")
_CRITERIA = ("W", "B")


@dataclass(frozen=True)
class PipelineConfig:
    # [data]
    train_noisy: Path | None = None
    train_clean: Path | None = None
    dev_noisy: Path | None = None
    dev_clean: Path | None = None
    test_noisy: Path | None = None
    test_clean: Path | None = None
    nbest_input: int = 1
    # [model]
    max_phrase_len: int = 7
    em_iterations: int = 5
    symmetrization: str = "grow-diag-final"
    lm_order: int = 3
    lm_type: str = "witten-bell"
    neural_context: int = 4
    neural_embed_dim: int = 150
    neural_hidden_dim: int = 750
    neural_epochs: int = 10
    neural_batch_size: int = 64
    neural_learning_rate: float = 0.05
    # [decoder]
    beam_size: int = 100
    nbest: int = 1
    distortion_limit: int = 6
    monotone: bool = False
    # [mert]
    mert_criterion: str = "W"
    mert_nbest: int = 100
    mert_iterations: int = 8
    mert_random_directions: int = 8
    # [run]
    seed: int = 17
    threads: int = _DEFAULT_THREADS
    output_dir: Path = Path("out")
    # preset state (not an INI key)
    frozen_features: tuple[int, ...] = ()

    def artifact(self, name: str) -> Path:
        return Path(self.output_dir) / ARTIFACTS[name]

    def require(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"missing required data path {name!r} in config")
        return value

    @property
    def criterion_name(self) -> str:
        return "wer" if self.mert_criterion == "W" else "bleu"


_SCHEMA: dict[str, dict[str, str]] = {
    "data": {
        "train_noisy": "path",
        "train_clean": "path",
        "dev_noisy": "path",
        "dev_clean": "path",
        "test_noisy": "path",
        "test_clean": "path",
        "nbest_input": "int",
    },
    "model": {
        "max_phrase_len": "int",
        "em_iterations": "int",
        "symmetrization": "str",
        "lm_order": "int",
        "lm_type": "str",
        "neural_context": "int",
        "neural_embed_dim": "int",
        "neural_hidden_dim": "int",
        "neural_epochs": "int",
        "neural_batch_size": "int",
        "neural_learning_rate": "float",
    },
    "decoder": {
        "beam_size": "int",
        "nbest": "int",
        "distortion_limit": "int",
        "monotone": "bool",
    },
    "mert": {
        "mert_criterion": "str",
        "mert_nbest": "int",
        "mert_iterations": "int",
        "mert_random_directions": "int",
    },
    "run": {"seed": "int", "threads": "int", "output_dir": "path"},
}

# INI keys in [mert] drop the prefix for readability
_KEY_ALIASES = {
    ("mert", "criterion"): "mert_criterion",
    ("mert", "nbest"): "mert_nbest",
    ("mert", "max_iterations"): "mert_iterations",
    ("mert", "random_directions"): "mert_random_directions",
}

_BOOLEANS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(kind: str, raw: str, base: Path, context: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOLEANS:
                raise ValueError(raw)
            return _BOOLEANS[raw.lower()]
        if kind == "path":
            return (base / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {context}: {raw!r} is not a valid {kind}") from None


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate an INI config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep keys case-sensitive
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    base = path.parent
    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            field_name = _KEY_ALIASES.get((section, key), key)
            if field_name not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            kind = _SCHEMA[section][field_name]
            values[field_name] = _convert(kind, raw, base, f"[{section}] {key}")

    config = PipelineConfig(**values)
    _validate(config)
    return config


def _validate(config: PipelineConfig) -> None:
    checks = [
        (config.nbest_input >= 1, "nbest_input must be >= 1"),
        (config.max_phrase_len >= 1, "max_phrase_len must be >= 1"),
        (config.em_iterations >= 1, "em_iterations must be >= 1"),
        (
            config.symmetrization in _HEURISTICS,
            f"symmetrization must be one of {_HEURISTICS}",
        ),
        (config.lm_order >= 1, "lm_order must be >= 1"),
        (config.lm_type in _LM_TYPES, f"lm_type must be one of {_LM_TYPES}"),
        (config.neural_context >= 1, "neural_context must be >= 1"),
        (config.neural_epochs >= 0, "neural_epochs must be >= 0"),
        (config.beam_size >= 1, "beam_size must be >= 1"),
        (config.nbest >= 1, "nbest must be >= 1"),
        (config.distortion_limit >= 0, "distortion_limit must be >= 0"),
        (config.mert_criterion in _CRITERIA, f"mert criterion must be one of {_CRITERIA}"),
        (config.mert_nbest >= 1, "mert nbest must be >= 1"),
        (config.mert_iterations >= 1, "mert max_iterations must be >= 1"),
        (config.mert_random_directions >= 0, "mert random_directions must be >= 0"),
        (config.threads >= 1, "threads must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    for name in ("train_noisy", "train_clean", "dev_noisy", "dev_clean", "test_noisy", "test_clean"):
        value = getattr(config, name)
        if value is not None and not Path(value).is_file():
            raise ConfigError(f"data path {name} not found: {value}")


def apply_word_baseline(config: PipelineConfig) -> PipelineConfig:
    """The word-level baseline preset: 1-word phrases, bigram LM, monotone
    decoding, and word penalty + distortion pinned at weight 0."""
    from .decoder import FEATURE_NAMES

    frozen = (FEATURE_NAMES.index("word_penalty"), FEATURE_NAMES.index("distortion"))
    return replace(
        config,
        max_phrase_len=1,
        lm_order=2,
        monotone=True,
        frozen_features=frozen,
    )
