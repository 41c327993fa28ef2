"""Gap-minimizing inverse estimation of objective weights.

Given a target dose d, find simplex weights alpha under which d is as close
to forward-optimal as possible. For fixed constraint data (G, h) and cost
c(alpha) = term_columns @ alpha, any dual-feasible y certifies the forward
optimum to be at least -h'y, so the suboptimality of d under alpha is at
most

    gap(alpha, y) = sum_t alpha_t f_t(d) + h'y.

Minimizing this gap over alpha on the simplex and dual-feasible y is itself
an LP in (alpha, y), since dual feasibility G'y >= -c(alpha) is jointly
linear. The reported optimum is the smallest certifiable suboptimality of
the target dose over all weightings.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .forward import ForwardProblem, SolverFailure
from .lp import LpProblem, LpStatus, simplex_solve
from .terms import NUM_TERMS, term_values


def inverse_weights(
    problem: ForwardProblem, target_dose: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Estimate the 65 simplex weights that best rationalize a target dose.

    Returns (alpha, info) where info carries the certified inverse gap and
    LP diagnostics. Ties between equally good weightings resolve
    deterministically through the solver's pivoting.
    """
    asm = problem.assembled()
    phi = term_values(problem.terms, target_dose, problem.phantom)
    m, n = asm.G.shape

    # variables: [alpha (65), y (m)]
    c = np.concatenate([phi, asm.h])
    dual_rows = sparse.hstack(
        [-asm.term_columns, -asm.G.T], format="csr"
    )  # -C alpha - G' y <= 0  per forward variable
    ones = sparse.csr_matrix(
        (np.ones(NUM_TERMS), (np.zeros(NUM_TERMS, dtype=int), np.arange(NUM_TERMS))),
        shape=(1, NUM_TERMS + m),
    )
    G_inv = sparse.vstack([dual_rows, ones, -ones], format="csc")
    h_inv = np.concatenate([np.zeros(n), [1.0], [-1.0]])

    sol = simplex_solve(LpProblem(c=c, G=G_inv, h=h_inv))
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverFailure(
            "inverse LP failed "
            f"({sol.status.value}: {sol.message}); the forward model is malformed",
            sol,
        )
    alpha = np.maximum(sol.x[:NUM_TERMS], 0.0)
    alpha = alpha / alpha.sum()
    info = {
        "gap": sol.objective,
        "target_term_values": phi,
        "duality_gap": sol.duality_gap,
        "primal_infeasibility": sol.primal_infeasibility,
        "dual_infeasibility": sol.dual_infeasibility,
        "iterations": sol.iterations,
    }
    return alpha, info
