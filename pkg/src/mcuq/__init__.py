"""Uncertainty estimates and reject-option decisions from Monte-Carlo softmax samples."""

from mcuq.errors import (
    DegenerateStatisticError,
    DimensionError,
    FormatError,
    MCSError,
    ProbabilityError,
)
from mcuq.tensor import LabelSet, MCSampleSet, load_mcs, renormalize, save_mcs

__version__ = "0.1.0"

__all__ = [
    "DegenerateStatisticError",
    "DimensionError",
    "FormatError",
    "LabelSet",
    "MCSError",
    "MCSampleSet",
    "ProbabilityError",
    "load_mcs",
    "renormalize",
    "save_mcs",
]
