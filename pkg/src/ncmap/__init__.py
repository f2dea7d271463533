"""Deformed oscillator pairs from similarity transforms on truncated Fock spaces."""
from .errors import (
    BranchDegenerateError, DimensionError, GeneratorError, IntegrationError,
    InversionError, NcmapError, NoSolutionError, ParameterError, PoleError,
    ResonanceError, SimilarityOverflowError, TrajectoryError,
)
from .fock import FockMatrix
from .params import DeformParams
from .report import VERSION as __version__

__all__ = [
    "FockMatrix", "DeformParams", "NcmapError", "DimensionError", "GeneratorError",
    "ParameterError", "ResonanceError", "NoSolutionError", "SimilarityOverflowError",
    "InversionError", "BranchDegenerateError", "PoleError", "IntegrationError",
    "TrajectoryError",
]
