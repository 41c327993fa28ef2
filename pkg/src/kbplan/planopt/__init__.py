"""Plan optimization: LP solver, 65-term objective, forward/inverse/mimic."""

from .lp import LpProblem, LpSolution, LpStatus, simplex_solve
from .terms import (
    NUM_TERMS,
    OAR_QUANTILES,
    ObjectiveTerm,
    TermKind,
    beam_fluence_maps,
    build_terms,
    normalize_weights,
    spg_complexity,
    spg_subgradient,
    term_value,
    term_values,
)
from .forward import AssembledLp, ForwardProblem, Plan, SolverFailure, solve_forward
from .inverse import inverse_weights
from .mimic import MimicBudgetExceeded, MimicSettings, dose_mimic
from .planio import read_plan, write_plan

__all__ = [
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "simplex_solve",
    "NUM_TERMS",
    "OAR_QUANTILES",
    "ObjectiveTerm",
    "TermKind",
    "build_terms",
    "term_value",
    "term_values",
    "normalize_weights",
    "beam_fluence_maps",
    "spg_complexity",
    "spg_subgradient",
    "ForwardProblem",
    "AssembledLp",
    "Plan",
    "SolverFailure",
    "solve_forward",
    "inverse_weights",
    "MimicSettings",
    "MimicBudgetExceeded",
    "dose_mimic",
    "read_plan",
    "write_plan",
]
