"""Complexity-adaptive decomposition solver with token-budget benchmarking."""

__version__ = "0.1.0"

from .answers import DatasetKind
from .estimator import EstimatorBackend, EstimatorKind
from .policy import PolicyKind, PolicyParams, SolvePolicy
from .profile import ComplexityProfile, ScoreWeights, SolverClass, Tier, score, validate_profile

__all__ = [
    "ComplexityProfile",
    "DatasetKind",
    "EstimatorBackend",
    "EstimatorKind",
    "PolicyKind",
    "PolicyParams",
    "ScoreWeights",
    "SolvePolicy",
    "SolverClass",
    "Tier",
    "score",
    "validate_profile",
    "__version__",
]
