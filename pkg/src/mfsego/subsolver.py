"""Constrained maximization of the acquisition function.

Multi-start SLSQP over the box, with the GP mean inequality/equality
constraints of the infill sub-problem. Gradients come from forward
finite differences (step 1e-7 on the unit cube) unless the caller
supplies value-and-gradient callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .acquisition import Incumbent
from .doe import Bounds, lhs_sample
from .errors import SolverError, StateError

FD_STEP = 1e-7


@dataclass
class AcqProblem:
    """Infill sub-problem: maximize `objective` subject to every inequality
    mean <= 0 and every equality mean == 0, inside `bounds`.

    The *_and_grad callables are optional (value, gradient) versions used
    when present; `ineq_scales`/`eq_scales` express each constraint's
    output scale so feasibility tolerances act on standardized residuals.
    """

    objective: Callable[[np.ndarray], float]
    ineq_means: Sequence[Callable[[np.ndarray], float]]
    eq_means: Sequence[Callable[[np.ndarray], float]]
    bounds: Bounds
    objective_and_grad: Optional[Callable] = None
    ineq_and_grads: Optional[Sequence[Callable]] = None
    eq_and_grads: Optional[Sequence[Callable]] = None
    ineq_scales: Optional[Sequence[float]] = None
    eq_scales: Optional[Sequence[float]] = None


@dataclass
class SubsolveResult:
    x_star: np.ndarray
    acq_value: float
    constraint_residual: float
    n_starts: int
    converged: bool
    best_start_index: int = -1


class _Memo:
    """Per-solve cache so objective/constraint wrappers share evaluations."""

    def __init__(self):
        self.store: dict[bytes, dict] = {}

    def slot(self, u: np.ndarray) -> dict:
        key = u.tobytes()
        entry = self.store.get(key)
        if entry is None:
            entry = {}
            self.store[key] = entry
        return entry


def _wrap(problem: AcqProblem, memo: _Memo):
    """Build u-space fun/jac pairs for SLSQP; values negated for the
    objective (SLSQP minimizes)."""
    bounds = problem.bounds
    span = bounds.span

    def make(tag, fun, fun_and_grad, sign):
        def value(u):
            slot = memo.slot(np.asarray(u))
            if tag not in slot:
                x = bounds.from_unit(u)
                if fun_and_grad is not None:
                    v, g = fun_and_grad(x)
                    slot[tag] = v
                    slot[tag + "_g"] = g * span
                else:
                    slot[tag] = fun(x)
            return sign * slot[tag]

        if fun_and_grad is None:
            return value, None

        def jac(u):
            slot = memo.slot(np.asarray(u))
            if tag + "_g" not in slot:
                value(u)
            return sign * slot[tag + "_g"]

        return value, jac

    obj_fun, obj_jac = make("obj", problem.objective, problem.objective_and_grad, -1.0)
    ineqs = []
    for j, fun in enumerate(problem.ineq_means):
        fg = problem.ineq_and_grads[j] if problem.ineq_and_grads else None
        # scipy convention: constraint fun >= 0, so pass -mean
        ineqs.append(make(f"g{j}", fun, fg, -1.0))
    eqs = []
    for j, fun in enumerate(problem.eq_means):
        fg = problem.eq_and_grads[j] if problem.eq_and_grads else None
        eqs.append(make(f"h{j}", fun, fg, 1.0))
    return obj_fun, obj_jac, ineqs, eqs


def _residual(problem: AcqProblem, x: np.ndarray, eq_relax: float) -> float:
    """Max standardized violation of the mean constraints at x."""
    worst = 0.0
    for j, fun in enumerate(problem.ineq_means):
        scale = problem.ineq_scales[j] if problem.ineq_scales else 1.0
        worst = max(worst, fun(x) / scale)
    for j, fun in enumerate(problem.eq_means):
        scale = problem.eq_scales[j] if problem.eq_scales else 1.0
        worst = max(worst, (abs(fun(x)) - eq_relax) / scale)
    return worst


def solve(problem: AcqProblem, n_starts: int = 10, seed: int = 0,
          tol: float = 1e-6, eq_relax: float = 0.0,
          starts: np.ndarray | None = None, maxiter: int = 60) -> SubsolveResult:
    """Multi-start constrained local search; starts are LHS unless given.

    Returns the feasible-within-tol candidate of greatest acquisition, or
    the least-violating candidate with converged=False when no start
    reaches feasibility.
    """
    if n_starts < 1:
        raise SolverError("need at least one start")
    d = problem.bounds.dim
    if starts is None:
        unit_box = Bounds(np.zeros(d), np.ones(d))
        starts = lhs_sample(n_starts, unit_box, seed).points
    else:
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n_starts = len(starts)

    memo = _Memo()
    obj_fun, obj_jac, ineqs, eqs = _wrap(problem, memo)
    constraints = []
    for fun, jac in ineqs:
        c = {"type": "ineq", "fun": fun}
        if jac is not None:
            c["jac"] = jac
        constraints.append(c)
    for fun, jac in eqs:
        if eq_relax > 0.0:
            # |h| <= relax as two inequalities
            constraints.append({"type": "ineq",
                                "fun": (lambda u, f=fun: eq_relax - f(u)),
                                **({"jac": (lambda u, j=jac: -j(u))} if jac else {})})
            constraints.append({"type": "ineq",
                                "fun": (lambda u, f=fun: f(u) + eq_relax),
                                **({"jac": (lambda u, j=jac: j(u))} if jac else {})})
        else:
            c = {"type": "eq", "fun": fun}
            if jac is not None:
                c["jac"] = jac
            constraints.append(c)

    box = [(0.0, 1.0)] * d
    candidates = []
    for idx, u0 in enumerate(starts):
        try:
            res = minimize(
                obj_fun, np.clip(u0, 0.0, 1.0), jac=obj_jac, method="SLSQP",
                bounds=box, constraints=constraints,
                options={"maxiter": maxiter, "ftol": 1e-9, "eps": FD_STEP},
            )
            u_cand = np.clip(res.x, 0.0, 1.0)
        except (ValueError, FloatingPointError):
            u_cand = np.clip(u0, 0.0, 1.0)
        if not np.all(np.isfinite(u_cand)):
            u_cand = np.clip(u0, 0.0, 1.0)
        x = problem.bounds.from_unit(u_cand)
        acq = problem.objective(x)
        if not np.isfinite(acq):
            continue
        candidates.append((idx, x, acq, _residual(problem, x, eq_relax)))

    if not candidates:
        raise SolverError("acquisition non-finite at every start")

    feasible = [c for c in candidates if c[3] <= tol]
    if feasible:
        idx, x, acq, resid = max(feasible, key=lambda c: c[2])
        return SubsolveResult(x, acq, max(resid, 0.0), n_starts, True, idx)
    idx, x, acq, resid = min(candidates, key=lambda c: (c[3], -c[2]))
    return SubsolveResult(x, acq, resid, n_starts, False, idx)


def select_incumbent(f_values, g_values=None, h_values=None,
                     feas_tol: float = 1e-6) -> Incumbent:
    """Best feasible high-fidelity objective; least-violating fallback.

    Feasibility means RSCV <= feas_tol; ties on violation break to the
    lower objective.
    """
    f = np.asarray(f_values, dtype=float).ravel()
    if f.size == 0:
        raise StateError("no high-fidelity samples to select an incumbent from")
    n = f.size
    G = np.zeros((n, 0)) if g_values is None else np.atleast_2d(np.asarray(g_values, dtype=float))
    H = np.zeros((n, 0)) if h_values is None else np.atleast_2d(np.asarray(h_values, dtype=float))
    if G.shape[0] != n:
        G = G.reshape(n, -1)
    if H.shape[0] != n:
        H = H.reshape(n, -1)
    viol = np.sqrt(np.sum(np.maximum(G, 0.0) ** 2, axis=1) + np.sum(H**2, axis=1))
    feasible = viol <= feas_tol
    if np.any(feasible):
        return Incumbent(float(np.min(f[feasible])), True, 0.0)
    order = np.lexsort((f, viol))
    best = order[0]
    return Incumbent(float(f[best]), False, float(viol[best]))
