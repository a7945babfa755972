"""Amortized bivariate causal discovery workbench.

Synthetic SCM corpora, a compact alternating-attention transformer trained by
maximum likelihood, classical baselines, closed-form identifiability checks
and SHD-based evaluation.
"""

from .errors import (
    AmortCDError,
    ConfigError,
    ContractError,
    DataIOError,
    NumericError,
)
from .scm import ClassSpec, CorpusConfig, Dataset, GraphLabel, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "AmortCDError",
    "ClassSpec",
    "ConfigError",
    "ContractError",
    "CorpusConfig",
    "DataIOError",
    "Dataset",
    "GraphLabel",
    "NumericError",
    "generate_corpus",
]
