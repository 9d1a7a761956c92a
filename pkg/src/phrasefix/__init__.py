"""phrasefix: phrase-based noisy-channel correction of ASR transcripts.

Train a correction model from (noisy, clean) sentence pairs — word
alignment, phrase extraction, language modeling — tune the log-linear
weights by minimum error rate training, and decode new noisy text with a
beam search over phrase segmentations.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractViolation,
    DataError,
    EstimationError,
    PhrasefixError,
)

__all__ = [
    "__version__",
    "PhrasefixError",
    "ConfigError",
    "DataError",
    "EstimationError",
    "ContractViolation",
]
