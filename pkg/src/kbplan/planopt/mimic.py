"""Dose mimicking: least-squares fluence fitting under the complexity budget.

Minimizes ||A w - d||_2^2 over w >= 0 with SPG(w) <= C. The smooth part is
handled by accelerated projected gradient steps (monotone via best-iterate
tracking, restart on non-monotone momentum); the complexity constraint by
an exact outer search on a hinge-penalty multiplier: double the multiplier
until the inner solution is feasible, then bisect to the smallest feasible
multiplier. Iteration budgets are fixed, so runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dosecalc import compute_dose
from .forward import ForwardProblem, Plan
from .terms import spg_complexity, spg_subgradient, term_values


class MimicBudgetExceeded(RuntimeError):
    """Raised when no feasible fluence was found; carries the best iterate."""

    def __init__(self, message, best_fluence):
        super().__init__(message)
        self.best_fluence = best_fluence


@dataclass
class MimicSettings:
    inner_iters: int = 1500
    max_doublings: int = 24
    bisection_steps: int = 8
    feas_tol: float = 1e-6


def _estimate_lipschitz(A) -> float:
    """2 * sigma_max(A)^2 via deterministic power iteration."""
    n = A.shape[1]
    v = np.ones(n) / np.sqrt(n)
    for _ in range(40):
        u = A @ v
        v = A.T @ u
        norm = np.linalg.norm(v)
        if norm == 0:
            return 2.0
        v /= norm
    return 2.0 * float(norm) * 1.01  # small safety factor


def _inner_minimize(A, d, w0, L, mu, beams, bound, iters):
    """Accelerated projected (sub)gradient descent on the penalized objective."""

    def objective(w):
        r = A @ w - d
        pen = 0.0
        if mu > 0.0 and bound is not None:
            pen = mu * max(0.0, spg_complexity(w, beams) - bound)
        return float(r @ r) + pen

    step = 1.0 / L
    w = w0.copy()
    v = w.copy()
    t_mom = 1.0
    best_w = w.copy()
    best_obj = objective(w)
    trace = [best_obj]
    for _ in range(iters):
        r = A @ v - d
        grad = 2.0 * (A.T @ r)
        if mu > 0.0 and bound is not None and spg_complexity(v, beams) > bound:
            grad = grad + mu * spg_subgradient(v, beams)
        w_next = np.maximum(v - step * grad, 0.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        v = w_next + ((t_mom - 1.0) / t_next) * (w_next - w)
        obj = objective(w_next)
        if obj < best_obj:
            best_obj = obj
            best_w = w_next.copy()
            trace.append(obj)
        elif obj > best_obj * (1.0 + 1e-12) + 1e-15:
            # restart momentum when acceleration overshoots
            v = w_next.copy()
            t_next = 1.0
        w = w_next
        t_mom = t_next
    return best_w, best_obj, trace


def dose_mimic(
    problem: ForwardProblem,
    target_dose: np.ndarray,
    settings: MimicSettings = MimicSettings(),
    provenance: str = "mimic",
) -> Plan:
    A = problem.influence.matrix
    if target_dose.shape != problem.phantom.grid.dims:
        raise ValueError(
            f"dose dims {target_dose.shape} do not match phantom {problem.phantom.grid.dims}"
        )
    d = np.asarray(target_dose, dtype=np.float64).ravel(order="F")
    beams = problem.influence.beams
    bound = problem.complexity_bound
    L = _estimate_lipschitz(A)
    w0 = np.zeros(problem.influence.num_beamlets)

    w, obj, trace = _inner_minimize(A, d, w0, L, 0.0, beams, bound, settings.inner_iters)
    feasible = bound is None or spg_complexity(w, beams) <= bound + settings.feas_tol

    best_feasible = w if feasible else None
    if not feasible:
        mu_lo, mu = 0.0, 1.0
        for _ in range(settings.max_doublings):
            w_mu, _, trace_mu = _inner_minimize(
                A, d, w, L, mu, beams, bound, settings.inner_iters
            )
            trace.extend(trace_mu)
            if spg_complexity(w_mu, beams) <= bound + settings.feas_tol:
                best_feasible = w_mu
                break
            mu_lo, mu = mu, mu * 2.0
        if best_feasible is None:
            raise MimicBudgetExceeded(
                "penalty doubling exhausted without reaching the complexity bound",
                w,
            )
        mu_hi = mu
        # smallest multiplier that still lands feasible, keeping the best fit
        for _ in range(settings.bisection_steps):
            mid = 0.5 * (mu_lo + mu_hi)
            w_mid, _, trace_mid = _inner_minimize(
                A, d, w, L, mid, beams, bound, settings.inner_iters
            )
            trace.extend(trace_mid)
            if spg_complexity(w_mid, beams) <= bound + settings.feas_tol:
                mu_hi = mid
                best_feasible = w_mid
            else:
                mu_lo = mid
        w = best_feasible

    dose = compute_dose(problem.influence, w)
    residual = float(np.linalg.norm(dose.ravel(order="F") - d))
    target_norm = float(np.linalg.norm(d))
    return Plan(
        fluence=w,
        dose=dose,
        term_values=term_values(problem.terms, dose, problem.phantom),
        objective=residual**2,
        complexity=spg_complexity(w, beams),
        provenance=provenance,
        weights=None,
        complexity_bound=bound,
        diagnostics={
            "residual_l2": residual,
            "relative_residual": residual / target_norm if target_norm > 0 else 0.0,
            "objective_trace": trace,
            "lipschitz": L,
        },
    )
