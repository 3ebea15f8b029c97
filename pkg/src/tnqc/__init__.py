"""Tensor-network and variational quantum-circuit classifiers for jet images."""

from .errors import (
    ConfigError,
    DegenerateDataError,
    DomainError,
    FormatError,
    NumericalError,
    ShapeError,
    StructureError,
    TnqcError,
    UnsupportedVersionError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateDataError",
    "DomainError",
    "FormatError",
    "NumericalError",
    "ShapeError",
    "StructureError",
    "TnqcError",
    "UnsupportedVersionError",
]
