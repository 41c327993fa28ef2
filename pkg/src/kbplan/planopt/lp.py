"""Revised simplex solver for inequality-form linear programs.

Problems are min c'x subject to G x <= h with each component of x either
nonnegative or free. The solver runs two phases (artificials only on rows
with negative right-hand side), prices with Dantzig's rule, and switches
permanently to Bland's rule once the objective stalls, which guarantees
termination on degenerate vertices. The basis inverse is maintained
explicitly with periodic refactorization.

Optimal solutions come with the dual vector y >= 0 of the inequality rows
and certification numbers (primal/dual infeasibility, duality gap) that are
recomputed from the original problem data, not from solver internals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iter_limit"


@dataclass
class LpProblem:
    c: np.ndarray
    G: object  # (m, n) ndarray or scipy sparse
    h: np.ndarray
    nonneg: np.ndarray | None = None  # per-variable flag, default all True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.nonneg is None:
            self.nonneg = np.ones(self.c.size, dtype=bool)
        else:
            self.nonneg = np.asarray(self.nonneg, dtype=bool)
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.h))):
            raise ValueError("LP data must be finite")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.h.size


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    dual: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    primal_infeasibility: float = np.inf
    dual_infeasibility: float = np.inf
    duality_gap: float = np.inf
    message: str = ""
    extra: dict = field(default_factory=dict)


def _as_csc(G, m, n):
    if sparse.issparse(G):
        return G.tocsc().astype(np.float64)
    return sparse.csc_matrix(np.asarray(G, dtype=np.float64).reshape(m, n))


class _Tableau:
    """Internal equality-form state shared by the two phases."""

    def __init__(self, problem: LpProblem):
        m, n = problem.num_rows, problem.num_vars
        G = _as_csc(problem.G, m, n)
        self.flip = np.where(problem.h < 0, -1.0, 1.0)
        self.b = problem.h * self.flip

        # column layout: original vars (free ones get a mirrored negative
        # copy), then slacks, then artificials for flipped rows
        flipper = sparse.diags(self.flip)
        cols = [flipper @ G]
        self.col_var = list(range(n))  # original index per structural column
        self.col_sign = [1.0] * n
        free = np.flatnonzero(~problem.nonneg)
        if free.size:
            cols.append(-(flipper @ G[:, free]))
            self.col_var += [int(j) for j in free]
            self.col_sign += [-1.0] * free.size
        self.n_struct = len(self.col_var)

        slack = sparse.diags(self.flip).tocsc()
        cols.append(slack)
        art_rows = np.flatnonzero(self.flip < 0)
        self.art_cols = []
        if art_rows.size:
            art = sparse.csc_matrix(
                (np.ones(art_rows.size), (art_rows, np.arange(art_rows.size))),
                shape=(m, art_rows.size),
            )
            cols.append(art)
        self.A = sparse.hstack(cols, format="csc")
        self.m = m
        self.N = self.A.shape[1]
        self.slack0 = self.n_struct
        self.art0 = self.slack0 + m
        self.art_cols = list(range(self.art0, self.N))

        self.cost2 = np.zeros(self.N)
        for k in range(self.n_struct):
            self.cost2[k] = self.col_sign[k] * problem.c[self.col_var[k]]

        # starting basis: slack on unflipped rows, artificial on flipped rows
        self.basis = np.empty(m, dtype=np.int64)
        art_iter = iter(self.art_cols)
        for i in range(m):
            self.basis[i] = self.slack0 + i if self.flip[i] > 0 else next(art_iter)
        self.Binv = np.eye(m)
        self.xB = self.b.copy()
        self.in_basis = np.zeros(self.N, dtype=bool)
        self.in_basis[self.basis] = True

    def refactorize(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b

    def column(self, j):
        sl = slice(self.A.indptr[j], self.A.indptr[j + 1])
        return self.A.indices[sl], self.A.data[sl]

    def apply_binv(self, j):
        rows, vals = self.column(j)
        return self.Binv[:, rows] @ vals


_REFACTOR_EVERY = 500
_STALL_LIMIT = 60


def _run_phase(t: _Tableau, cost, allowed, max_iter, tol):
    """Iterate to optimality of the given cost over allowed entering columns.

    Returns (status_flag, iterations). status_flag is "optimal", "unbounded"
    or "iter_limit".
    """
    it = 0
    bland = False
    stall = 0
    last_obj = np.inf
    cB = cost[t.basis]
    while it < max_iter:
        if it and it % _REFACTOR_EVERY == 0:
            t.refactorize()
            cB = cost[t.basis]
        pi = cB @ t.Binv
        # reduced costs over all columns; basic/blocked ones masked out
        r = cost - (t.A.T @ pi)
        r[t.in_basis] = 0.0
        r[~allowed] = 0.0
        candidates = np.flatnonzero(r < -tol)
        if candidates.size == 0:
            return "optimal", it
        if bland:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmin(r[candidates])])

        u = t.apply_binv(enter)
        pos = np.flatnonzero(u > 1e-10)
        if pos.size == 0:
            return "unbounded", it
        ratios = t.xB[pos] / u[pos]
        theta = ratios.min()
        ties = pos[ratios <= theta + 1e-12 * (1.0 + abs(theta))]
        if bland:
            leave = int(ties[np.argmin(t.basis[ties])])
        else:
            leave = int(ties[np.argmax(u[ties])])

        # pivot: update basis, inverse, and basic solution in place
        theta = t.xB[leave] / u[leave]
        t.xB -= theta * u
        t.xB[leave] = theta
        np.maximum(t.xB, 0.0, out=t.xB)
        piv_row = t.Binv[leave, :] / u[leave]
        t.Binv -= np.outer(u, piv_row)
        t.Binv[leave, :] = piv_row
        t.in_basis[t.basis[leave]] = False
        t.in_basis[enter] = True
        t.basis[leave] = enter
        cB = cost[t.basis]
        it += 1

        obj = float(cB @ t.xB)
        if obj < last_obj - tol * (1.0 + abs(last_obj)):
            last_obj = obj
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_LIMIT and not bland:
                bland = True
    return "iter_limit", it


def simplex_solve(problem: LpProblem, max_iter: int | None = None, tol: float = 1e-9) -> LpSolution:
    m, n = problem.num_rows, problem.num_vars
    if max_iter is None:
        max_iter = max(2000, 30 * (m + n))
    if m == 0:
        # no constraints: optimum is 0 unless some cost direction is open
        x = np.zeros(n)
        unbounded = np.any(problem.c[problem.nonneg] < -tol) or np.any(
            problem.c[~problem.nonneg] != 0.0
        )
        if unbounded:
            return LpSolution(status=LpStatus.UNBOUNDED, message="no constraints bound the objective")
        return _certify(problem, x, np.zeros(0), 0)

    t = _Tableau(problem)
    scale = 1.0 + max(np.abs(problem.c).max(initial=0.0), np.abs(problem.h).max(initial=0.0))
    total_it = 0

    if t.art_cols:
        cost1 = np.zeros(t.N)
        cost1[t.art_cols] = 1.0
        allowed1 = np.ones(t.N, dtype=bool)
        flag, it = _run_phase(t, cost1, allowed1, max_iter, tol * scale)
        total_it += it
        t.refactorize()
        phase1_obj = float(cost1[t.basis] @ t.xB)
        if flag == "iter_limit":
            return LpSolution(
                status=LpStatus.ITER_LIMIT,
                iterations=total_it,
                message="phase 1 exceeded the iteration budget",
            )
        if phase1_obj > 1e-7 * scale:
            return LpSolution(
                status=LpStatus.INFEASIBLE,
                iterations=total_it,
                message=f"phase 1 optimum {phase1_obj:.3e} > 0",
            )
        # drive leftover artificials out of the basis where possible
        for i in range(t.m):
            if t.basis[i] < t.art0:
                continue
            pivoted = False
            for j in range(t.art0):
                if t.in_basis[j]:
                    continue
                u = t.apply_binv(j)
                if abs(u[i]) > 1e-8:
                    piv_row = t.Binv[i, :] / u[i]
                    t.Binv -= np.outer(u, piv_row)
                    t.Binv[i, :] = piv_row
                    t.in_basis[t.basis[i]] = False
                    t.in_basis[j] = True
                    t.basis[i] = j
                    t.xB = t.Binv @ t.b
                    pivoted = True
                    break
            # a row with no eligible pivot is redundant; its artificial
            # stays basic at zero and is simply never allowed to enter

    allowed2 = np.ones(t.N, dtype=bool)
    for j in t.art_cols:
        allowed2[j] = False
    flag, it = _run_phase(t, t.cost2, allowed2, max_iter - total_it, tol * scale)
    total_it += it
    if flag == "iter_limit":
        return LpSolution(
            status=LpStatus.ITER_LIMIT,
            iterations=total_it,
            message="phase 2 exceeded the iteration budget",
        )
    if flag == "unbounded":
        return LpSolution(status=LpStatus.UNBOUNDED, iterations=total_it)

    t.refactorize()
    x = np.zeros(n)
    for i, col in enumerate(t.basis):
        if col < t.n_struct:
            x[t.col_var[col]] += t.col_sign[col] * t.xB[i]
    pi = t.cost2[t.basis] @ t.Binv
    y = -t.flip * pi
    np.maximum(y, 0.0, out=y)
    return _certify(problem, x, y, total_it)


def _certify(problem: LpProblem, x, y, iterations) -> LpSolution:
    """Recompute feasibility and gap numbers against the original data."""
    G, h, c = problem.G, problem.h, problem.c
    if problem.num_rows:
        Gx = np.asarray(G @ x).ravel()
        slack_violation = float(np.maximum(Gx - h, 0.0).max(initial=0.0))
        r = c + np.asarray(G.T @ y).ravel()
    else:
        slack_violation = 0.0
        r = c.copy()
    sign_violation = float(np.maximum(-x[problem.nonneg], 0.0).max(initial=0.0))
    primal_infeas = max(slack_violation, sign_violation)
    dual_infeas = float(np.maximum(-r[problem.nonneg], 0.0).max(initial=0.0))
    if np.any(~problem.nonneg):
        dual_infeas = max(dual_infeas, float(np.abs(r[~problem.nonneg]).max(initial=0.0)))
    obj = float(c @ x)
    gap = abs(obj + float(h @ y)) if problem.num_rows else 0.0
    status = LpStatus.OPTIMAL
    message = ""
    if primal_infeas > 1e-7 or dual_infeas > 1e-7 or gap > 1e-6 * (1.0 + abs(obj)):
        status = LpStatus.ITER_LIMIT
        message = (
            "numerical certification failed: "
            f"primal {primal_infeas:.2e}, dual {dual_infeas:.2e}, gap {gap:.2e}"
        )
    return LpSolution(
        status=status,
        x=x,
        dual=y,
        objective=obj,
        iterations=iterations,
        primal_infeasibility=primal_infeas,
        dual_infeasibility=dual_infeas,
        duality_gap=gap,
        message=message,
    )
