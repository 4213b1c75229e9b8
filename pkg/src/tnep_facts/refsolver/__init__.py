"""Desk-scale reference optimisation: simplex, branch-and-bound, enumeration."""

from .bnb import BnBConfig, BnBStats, brute_force_milp, relative_gap, solve_milp
from .simplex import MAX_DESK_VARS, DeskScaleError, LpResult, LpStatus, simplex, solve_arrays, solve_lp

__all__ = [
    "BnBConfig", "BnBStats", "brute_force_milp", "relative_gap", "solve_milp",
    "MAX_DESK_VARS", "DeskScaleError", "LpResult", "LpStatus", "simplex", "solve_arrays", "solve_lp",
]
