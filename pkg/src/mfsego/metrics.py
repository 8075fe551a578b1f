"""Feasibility and convergence metrics, and data profiles.

A run trace is a sequence of (cum_cost, f, rscv) triples for the
high-fidelity samples of one run, in sampling order with the initial
design at cost zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError


def rscv(g_values, h_values=()) -> float:
    """Root square constraint violation:
    sqrt(sum max(g,0)^2 + sum h^2)."""
    g = np.asarray(list(g_values), dtype=float)
    h = np.asarray(list(h_values), dtype=float)
    total = 0.0
    if g.size:
        total += float(np.sum(np.maximum(g, 0.0) ** 2))
    if h.size:
        total += float(np.sum(h**2))
    return math.sqrt(total)


def tau_solved(f_i: float, f_0: float, f_star: float, tau: float) -> bool:
    """Whether f_i closes a (1 - tau) fraction of the gap from the
    reference start value f_0 down to the best value f_star.

    This is the convergence-test orientation f_0 - f_i >= (1 - tau)(f_0 -
    f_star); the printed form with both sides negated marks near-zero
    progress as solved and is reported (not used) by the verify command.
    """
    return f_0 - f_i >= (1.0 - tau) * (f_0 - f_star)


def tau_solved_printed_form(f_i: float, f_0: float, f_star: float, tau: float) -> bool:
    """The literally printed inequality, kept for the verify report."""
    return f_i - f_0 >= (1.0 - tau) * (f_star - f_0)


@dataclass
class DataProfile:
    grid: np.ndarray
    fraction_solved: dict[str, np.ndarray]
    eps: float
    tau: float
    n_instances: int
    excluded_problems: list[str] = field(default_factory=list)

    def rows(self):
        """(budget, solver, fraction) tuples, tidy-table order."""
        out = []
        for solver in sorted(self.fraction_solved):
            for b, frac in zip(self.grid, self.fraction_solved[solver]):
                out.append((float(b), solver, float(frac)))
        return out


def _first_feasible_f(trace, eps: float):
    for _, f, v in trace:
        if v <= eps:
            return f
    return None


def _solve_cost(trace, eps: float, threshold: float):
    """Smallest cum_cost at which an eps-feasible sample meets threshold."""
    for cost, f, v in trace:
        if v <= eps and f <= threshold:
            return cost
    return None


def data_profile(records, eps: float, tau: float, grid) -> DataProfile:
    """Fraction of (problem, seed) instances solved per solver vs budget.

    Every record needs .problem, .solver, .seed and .hf_trace(). The
    reference values f_0 (greatest first feasible value) and f_star (best
    feasible value) are pooled across all solvers per problem.
    """
    grid = np.asarray(sorted(grid), dtype=float)
    records = list(records)
    if not records:
        raise StateError("no run records")
    problems = sorted({r.problem for r in records})
    solvers = sorted({r.solver for r in records})

    refs = {}
    excluded = []
    for prob in problems:
        first_fs = []
        best = math.inf
        for r in records:
            if r.problem != prob:
                continue
            trace = r.hf_trace()
            f0 = _first_feasible_f(trace, eps)
            if f0 is not None:
                first_fs.append(f0)
            for _, f, v in trace:
                if v <= eps and f < best:
                    best = f
        if not first_fs or not math.isfinite(best):
            warnings.warn(f"no feasible point in any run of {prob}; excluded")
            excluded.append(prob)
            continue
        f_0 = max(first_fs)
        threshold = f_0 - (1.0 - tau) * (f_0 - best)
        refs[prob] = threshold

    instances = {(r.problem, r.seed) for r in records if r.problem in refs}
    n_instances = len(instances)
    fractions = {}
    for solver in solvers:
        counts = np.zeros(len(grid))
        for r in records:
            if r.solver != solver or r.problem not in refs:
                continue
            cost = _solve_cost(r.hf_trace(), eps, refs[r.problem])
            if cost is not None:
                counts += grid >= cost - 1e-12
        fractions[solver] = counts / max(n_instances, 1)
    return DataProfile(grid, fractions, eps, tau, n_instances, excluded)
