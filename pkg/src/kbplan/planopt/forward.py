"""Forward fluence optimization.

solve_forward minimizes the alpha-weighted sum of the 65 objective terms
over nonnegative beamlet fluences subject to the complexity budget
SPG(w) <= C. The piecewise-linear terms are reformulated exactly with
auxiliary variables (one upper bound per max term, one hinge variable per
structure voxel per hinge term, one positive-gradient variable per
beamlet), so the whole problem is a single LP with a certified duality gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..dosecalc import InfluenceMatrix, compute_dose
from ..phantom import Phantom
from .lp import LpProblem, LpStatus, simplex_solve
from .terms import (
    NUM_TERMS,
    ObjectiveTerm,
    TermKind,
    normalize_weights,
    spg_complexity,
    term_values,
)


class SolverFailure(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class ForwardProblem:
    influence: InfluenceMatrix
    phantom: Phantom
    terms: list[ObjectiveTerm]
    complexity_bound: float | None  # None = complexity unconstrained
    _assembled: "AssembledLp | None" = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.terms) != NUM_TERMS:
            raise ValueError(f"expected {NUM_TERMS} terms, got {len(self.terms)}")
        if self.complexity_bound is not None and self.complexity_bound < 0:
            raise ValueError("complexity bound must be nonnegative")

    def assembled(self) -> "AssembledLp":
        if self._assembled is None:
            self._assembled = assemble_forward_lp(self)
        return self._assembled


@dataclass
class AssembledLp:
    """Constraint data shared by the forward solve and inverse estimation.

    Variables are laid out [w | per-max-term bounds | hinge slabs | g]; the
    constraint matrix G and rhs h do not depend on alpha. term_columns maps
    a weight vector to the LP cost: c = term_columns @ alpha.
    """

    G: sparse.csc_matrix
    h: np.ndarray
    term_columns: sparse.csc_matrix  # (n_vars, 65)
    n_beamlets: int
    n_vars: int

    def cost(self, alpha: np.ndarray) -> np.ndarray:
        return np.asarray(self.term_columns @ alpha).ravel()


@dataclass
class Plan:
    fluence: np.ndarray
    dose: np.ndarray
    term_values: np.ndarray
    objective: float
    complexity: float
    provenance: str
    weights: np.ndarray | None = None
    complexity_bound: float | None = None
    diagnostics: dict = field(default_factory=dict)


def assemble_forward_lp(problem: ForwardProblem) -> AssembledLp:
    A_csr = problem.influence.matrix.tocsr()
    B = problem.influence.num_beamlets
    beams = problem.influence.beams
    phantom = problem.phantom

    structure_rows: dict[int, sparse.csr_matrix] = {}
    structure_count: dict[int, int] = {}

    def rows_for(s) -> sparse.csr_matrix:
        key = int(s)
        if key not in structure_rows:
            flat = np.flatnonzero(phantom.grid.mask(s).ravel(order="F"))
            if flat.size == 0:
                raise ValueError(f"structure {s.name} is empty")
            structure_rows[key] = A_csr[flat, :]
            structure_count[key] = flat.size
        return structure_rows[key]

    max_terms = [(i, t) for i, t in enumerate(problem.terms) if t.kind is TermKind.MAX_DOSE]
    hinge_terms = [
        (i, t)
        for i, t in enumerate(problem.terms)
        if t.kind in (TermKind.AVG_ABOVE, TermKind.AVG_UNDERDOSE, TermKind.AVG_OVERDOSE)
    ]

    n_max = len(max_terms)
    for _, t in hinge_terms:
        rows_for(t.structure)
    n_hinge = sum(structure_count[int(t.structure)] for _, t in hinge_terms)

    off_max = B
    off_hinge = off_max + n_max
    off_g = off_hinge + n_hinge
    n_vars = off_g + B

    g_blocks = []
    h_parts = []
    col_entries = {i: [] for i in range(NUM_TERMS)}  # term -> [(var, coeff)]

    # mean-dose terms touch only w
    for i, t in enumerate(problem.terms):
        if t.kind is TermKind.MEAN_DOSE:
            As = rows_for(t.structure)
            mean_row = np.asarray(As.sum(axis=0)).ravel() / As.shape[0]
            nz = np.flatnonzero(mean_row)
            col_entries[i] = [(int(j), float(mean_row[j])) for j in nz]

    # max terms: A_v w - M <= 0 for every structure voxel
    for k, (i, t) in enumerate(max_terms):
        As = rows_for(t.structure)
        nv = As.shape[0]
        block = sparse.hstack(
            [
                As,
                sparse.csc_matrix(
                    (-np.ones(nv), (np.arange(nv), np.full(nv, k))), shape=(nv, n_max)
                ),
                sparse.csc_matrix((nv, n_hinge + B)),
            ],
            format="csr",
        )
        g_blocks.append(block)
        h_parts.append(np.zeros(nv))
        col_entries[i] = [(off_max + k, 1.0)]

    # hinge terms: one auxiliary per structure voxel
    hinge_cursor = 0
    for i, t in hinge_terms:
        As = rows_for(t.structure)
        nv = As.shape[0]
        sign = -1.0 if t.kind is TermKind.AVG_UNDERDOSE else 1.0
        rhs = -t.threshold if t.kind is TermKind.AVG_UNDERDOSE else t.threshold
        z_cols = off_hinge + hinge_cursor + np.arange(nv)
        block = sparse.hstack(
            [
                sign * As,
                sparse.csc_matrix((nv, n_max)),
                sparse.csc_matrix(
                    (-np.ones(nv), (np.arange(nv), z_cols - off_hinge)),
                    shape=(nv, n_hinge),
                ),
                sparse.csc_matrix((nv, B)),
            ],
            format="csr",
        )
        g_blocks.append(block)
        h_parts.append(np.full(nv, float(rhs)))
        col_entries[i] = [(int(z), 1.0 / nv) for z in z_cols]
        hinge_cursor += nv

    # positive-gradient rows: w_j - w_prev - g_j <= 0, leading zero per row
    rows_i, cols_i, vals_i = [], [], []
    off = 0
    r = 0
    for b in beams:
        for row in range(b.rows):
            for col in range(b.cols):
                j = off + row * b.cols + col
                rows_i.append(r)
                cols_i.append(j)
                vals_i.append(1.0)
                if col > 0:
                    rows_i.append(r)
                    cols_i.append(j - 1)
                    vals_i.append(-1.0)
                rows_i.append(r)
                cols_i.append(off_g + j)
                vals_i.append(-1.0)
                r += 1
        off += b.num_beamlets
    spg_block = sparse.csr_matrix(
        (vals_i, (rows_i, cols_i)), shape=(B, n_vars)
    )
    g_blocks.append(spg_block)
    h_parts.append(np.zeros(B))

    if problem.complexity_bound is not None:
        budget = sparse.csr_matrix(
            (np.ones(B), (np.zeros(B, dtype=int), off_g + np.arange(B))),
            shape=(1, n_vars),
        )
        g_blocks.append(budget)
        h_parts.append(np.array([problem.complexity_bound]))

    G = sparse.vstack(
        [
            sparse.hstack([blk, sparse.csr_matrix((blk.shape[0], n_vars - blk.shape[1]))])
            if blk.shape[1] != n_vars
            else blk
            for blk in g_blocks
        ],
        format="csc",
    )
    h = np.concatenate(h_parts)

    tc_rows, tc_cols, tc_vals = [], [], []
    for i, entries in col_entries.items():
        for var, coeff in entries:
            tc_rows.append(var)
            tc_cols.append(i)
            tc_vals.append(coeff)
    term_columns = sparse.csc_matrix(
        (tc_vals, (tc_rows, tc_cols)), shape=(n_vars, NUM_TERMS)
    )
    return AssembledLp(G=G, h=h, term_columns=term_columns, n_beamlets=B, n_vars=n_vars)


def solve_forward(
    problem: ForwardProblem, alpha: np.ndarray, provenance: str = "plan"
) -> Plan:
    alpha = normalize_weights(alpha)
    asm = problem.assembled()
    lp = LpProblem(c=asm.cost(alpha), G=asm.G, h=asm.h)
    sol = simplex_solve(lp)
    if sol.status is LpStatus.INFEASIBLE:
        raise SolverFailure(
            "forward LP reported infeasible, which is impossible for a "
            "nonnegative complexity bound; the model is malformed",
            sol,
        )
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverFailure(
            f"forward LP did not reach optimality: {sol.status.value} ({sol.message})",
            sol,
        )
    w = np.maximum(sol.x[: asm.n_beamlets], 0.0)
    dose = compute_dose(problem.influence, w)
    tvals = term_values(problem.terms, dose, problem.phantom)
    spg = spg_complexity(w, problem.influence.beams)
    if problem.complexity_bound is not None and spg > problem.complexity_bound + 1e-6:
        raise SolverFailure(
            f"complexity {spg} exceeds bound {problem.complexity_bound}", sol
        )
    return Plan(
        fluence=w,
        dose=dose,
        term_values=tvals,
        objective=float(alpha @ tvals),
        complexity=spg,
        provenance=provenance,
        weights=alpha,
        complexity_bound=problem.complexity_bound,
        diagnostics={
            "lp_objective": sol.objective,
            "duality_gap": sol.duality_gap,
            "primal_infeasibility": sol.primal_infeasibility,
            "dual_infeasibility": sol.dual_infeasibility,
            "iterations": sol.iterations,
        },
    )
