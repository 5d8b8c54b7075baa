"""Deep ReLU emulation of truncated polynomial chaos expansions."""

from .assembler import TAYLOR, DeltaPolicy, GpcSurrogate, assemble, make_plan
from .errors import (BudgetError, ConstructionError, ConvergenceError, DomainError, NumericalGuardError,
                     RangeError)
from .gadgets import build_cutoff, build_cutoff_product, build_monomial, build_product, build_square
from .multiindex import IndexSet, MultiIndex, RhoRule, WeightSequence, build_index_set, tail_constants
from .orthopoly import HERMITE, JACOBI, gauss_rule, hermite_coeffs, jacobi_coeffs
from .relu_core import ReluNetwork, concatenate, parallelize
from .synthetic import power_law_expansion, telescoping_expansion

__version__ = "0.1.0"

__all__ = [
    "HERMITE", "JACOBI", "TAYLOR",
    "BudgetError", "ConstructionError", "ConvergenceError", "DeltaPolicy", "DomainError", "GpcSurrogate",
    "IndexSet", "MultiIndex", "NumericalGuardError", "RangeError", "ReluNetwork", "RhoRule",
    "WeightSequence", "assemble", "build_cutoff", "build_cutoff_product", "build_index_set",
    "build_monomial", "build_product", "build_square", "concatenate", "gauss_rule", "hermite_coeffs",
    "jacobi_coeffs", "make_plan", "parallelize", "power_law_expansion", "tail_constants",
    "telescoping_expansion",
]
