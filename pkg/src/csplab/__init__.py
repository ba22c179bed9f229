"""csplab: random-CSP solving with classic and learned variable ordering."""

from .network import Constraint, ConstraintNetwork, load_instance, save_instance
from .rb import RbParams, derive_counts, generate, preset
from .search import SearchStats, Transition, action_set, lexicographic_value, solve
from .state import SearchState

__all__ = [
    "Constraint",
    "ConstraintNetwork",
    "load_instance",
    "save_instance",
    "RbParams",
    "derive_counts",
    "generate",
    "preset",
    "SearchStats",
    "Transition",
    "action_set",
    "lexicographic_value",
    "solve",
    "SearchState",
]

__version__ = "0.1.0"
