"""Hypothesis-testing exponents for classical and quantum sources on finite algebras.

Submodules: ``operators`` (dense Hermitian algebra and projectors),
``models`` (source models and their marginals), ``cells`` (exact classical
partitions), ``divergence`` (entropies and rates), ``typicality`` (typical
and separating projections), ``np_testing`` (Neyman-Pearson tests) and
``experiments`` / ``cli`` (configured runs).
"""

from .errors import (
    ConfigError,
    DimensionGuardError,
    DimensionMismatchError,
    ModelError,
    NotHermitianError,
    NotPSDError,
    QsanovError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionGuardError",
    "DimensionMismatchError",
    "ModelError",
    "NotHermitianError",
    "NotPSDError",
    "QsanovError",
]
