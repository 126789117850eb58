"""Sparse signal recovery from second moments under group actions."""

from .rep import (AmbiguityElement, BlockSignal, Field, IsotypicBlock, Parity, RepresentationSpec,
                  SparseBasis, ShapeError, ValidationError, apply_ambiguity, flatten, orbit_span_dimension,
                  random_ambiguity, random_basis, random_signal, sparsity_bound, unflatten)
from .moments import GramMoment, gram_distance, population_gram, signal_distance_up_to_phase
from .models import build_model
from .certify import certify_basis, sweep_K
from .solver import RecoveryProblem, SolverOptions, exact_oracle, factor_gram, recover

__version__ = "0.1.0"

__all__ = [
    "AmbiguityElement", "BlockSignal", "Field", "IsotypicBlock", "Parity", "RepresentationSpec", "SparseBasis",
    "ShapeError", "ValidationError", "apply_ambiguity", "flatten", "orbit_span_dimension", "random_ambiguity",
    "random_basis", "random_signal", "sparsity_bound", "unflatten", "GramMoment", "gram_distance",
    "population_gram", "signal_distance_up_to_phase", "build_model", "certify_basis", "sweep_K",
    "RecoveryProblem", "SolverOptions", "exact_oracle", "factor_gram", "recover",
]
