"""SEGO and MFSEGO outer loops.

Each iteration refits the surrogates (warm-started from the previous
iteration), maximizes the acquisition under the surrogate-mean
constraints, picks a fidelity level (multi-fidelity mode), samples the
oracles at every level up to it, and updates the incumbent from the
highest-fidelity data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import acquisition as acq
from .acquisition import Incumbent
from .doe import DUPLICATE_TOL, Bounds, Design, NestedDesign
from .errors import ConfigError, FitError, StateError
from .fidelity import CostModel, FidelityCriterion, reduction_table, select_level
from .gp import GpModel, gp_fit, hyperparam_starts
from .metrics import rscv
from .mfgp import MfGpModel, mfgp_fit
from .subsolver import AcqProblem, SubsolveResult, solve, select_incumbent

_SIGMA_FLOOR = 1e-150


@dataclass
class ProblemDef:
    """Multi-fidelity constrained problem: per-level oracles (ordered low
    to high fidelity), per-level costs, optional reference optimum."""

    name: str
    bounds: Bounds
    objective: Sequence[Callable[[np.ndarray], float]]
    cost_model: CostModel
    ineq_constraints: Sequence[Sequence[Callable]] = ()
    eq_constraints: Sequence[Sequence[Callable]] = ()
    selection_cost_model: Optional[CostModel] = None
    known_optimum: Optional[dict] = None

    def __post_init__(self):
        L = len(self.objective)
        if L < 1:
            raise ConfigError("need at least one fidelity level")
        if self.cost_model.n_levels != L:
            raise ConfigError("cost model level count mismatch")
        for row in list(self.ineq_constraints) + list(self.eq_constraints):
            if len(row) != L:
                raise ConfigError("every constraint needs one oracle per level")
        if self.selection_cost_model is None:
            self.selection_cost_model = self.cost_model

    @property
    def n_levels(self) -> int:
        return len(self.objective)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def n_ineq(self) -> int:
        return len(self.ineq_constraints)

    @property
    def n_eq(self) -> int:
        return len(self.eq_constraints)

    def evaluate(self, x: np.ndarray, level: int):
        """(f, g-vector, h-vector) at 1-based fidelity level."""
        idx = level - 1
        f = float(self.objective[idx](x))
        g = np.array([row[idx](x) for row in self.ineq_constraints], dtype=float)
        h = np.array([row[idx](x) for row in self.eq_constraints], dtype=float)
        return f, g, h


class LevelSamples:
    """Design points and sampled outputs of one fidelity level."""

    def __init__(self, bounds: Bounds):
        self.bounds = bounds
        self.points: list[np.ndarray] = []
        self.f: list[float] = []
        self.g: list[np.ndarray] = []
        self.h: list[np.ndarray] = []

    @property
    def n(self) -> int:
        return len(self.points)

    def contains(self, x: np.ndarray) -> bool:
        if not self.points:
            return False
        unit = self.bounds.to_unit(np.asarray(self.points))
        du = np.max(np.abs(unit - self.bounds.to_unit(x)), axis=1)
        return bool(np.any(du < DUPLICATE_TOL))

    def append(self, x, f, g, h):
        self.points.append(np.asarray(x, dtype=float))
        self.f.append(float(f))
        self.g.append(np.asarray(g, dtype=float))
        self.h.append(np.asarray(h, dtype=float))

    def copy(self) -> "LevelSamples":
        out = LevelSamples(self.bounds)
        out.points = [p.copy() for p in self.points]
        out.f = list(self.f)
        out.g = [g.copy() for g in self.g]
        out.h = [h.copy() for h in self.h]
        return out

    def design(self) -> Design:
        return Design(np.asarray(self.points), self.bounds)

    def f_array(self) -> np.ndarray:
        return np.asarray(self.f, dtype=float)

    def g_array(self) -> np.ndarray:
        if not self.g or self.g[0].size == 0:
            return np.zeros((self.n, 0))
        return np.asarray(self.g)

    def h_array(self) -> np.ndarray:
        if not self.h or self.h[0].size == 0:
            return np.zeros((self.n, 0))
        return np.asarray(self.h)

    def output_matrix(self) -> np.ndarray:
        """Columns: objective, then inequality then equality constraints."""
        return np.column_stack([self.f_array(), self.g_array(), self.h_array()])


class FidelityDataset:
    """Per-level samples forming a nested multi-fidelity DoE."""

    def __init__(self, levels: list[LevelSamples]):
        if not levels:
            raise StateError("need at least one level")
        self.levels = levels

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def bounds(self) -> Bounds:
        return self.levels[0].bounds

    def nested_design(self) -> NestedDesign:
        return NestedDesign([lvl.design() for lvl in self.levels])

    def top(self) -> LevelSamples:
        return self.levels[-1]

    def copy(self) -> "FidelityDataset":
        return FidelityDataset([lvl.copy() for lvl in self.levels])


def evaluate_design(problem: ProblemDef, design: Design, level: int) -> LevelSamples:
    samples = LevelSamples(design.bounds)
    for x in design.points:
        f, g, h = problem.evaluate(x, level)
        samples.append(x, f, g, h)
    return samples


def evaluate_doe(problem: ProblemDef, design: NestedDesign) -> FidelityDataset:
    return FidelityDataset(
        [evaluate_design(problem, lvl, i + 1) for i, lvl in enumerate(design.levels)]
    )


@dataclass
class OptimizerConfig:
    max_iter: int
    mode: str = "multi"  # "mono" (SEGO) or "multi" (MFSEGO)
    acquisition: str = "logei"  # "logei" or "ei"
    criterion: FidelityCriterion = FidelityCriterion.OBJECTIVE_ONLY
    n_acq_starts: Optional[int] = None  # default max(10, 5d)
    feas_tol: float = 1e-6
    seed: int = 0
    budget: Optional[float] = None  # cum_cost cap in HF-equivalent units
    mu_tol: float = 1e-6  # sub-problem feasibility tol (standardized)
    infill: str = "constrained"  # "constrained" or "pof-ei"
    fixed_level: Optional[int] = None  # test hook: bypass the criterion
    acq_maxiter: int = 60

    def __post_init__(self):
        if self.max_iter < 0:
            raise ConfigError("max_iter must be non-negative")
        if self.mode not in ("mono", "multi"):
            raise ConfigError("mode must be 'mono' or 'multi'")
        if self.acquisition not in ("logei", "ei"):
            raise ConfigError("acquisition must be 'logei' or 'ei'")
        if self.infill not in ("constrained", "pof-ei"):
            raise ConfigError("infill must be 'constrained' or 'pof-ei'")


@dataclass
class IterationRecord:
    iteration: int
    x: list
    level: int
    cost: float
    cum_cost: float
    f: float
    g: list
    h: list
    rscv: float
    f_min: float
    incumbent_feasible: bool
    rscv_at_incumbent: float


@dataclass
class RunRecord:
    problem: str
    solver: str
    seed: int
    n_levels: int
    doe_cost: float
    initial_hf: list
    initial_incumbent: dict
    iterations: list = field(default_factory=list)
    final: Optional[dict] = None
    error: Optional[str] = None

    def hf_trace(self):
        """(cum_cost, f, rscv) for every highest-fidelity sample, initial
        design first at cost zero."""
        trace = [(0.0, p["f"], p["rscv"]) for p in self.initial_hf]
        for it in self.iterations:
            level = it.level if isinstance(it, IterationRecord) else it["level"]
            if level == self.n_levels:
                if isinstance(it, IterationRecord):
                    trace.append((it.cum_cost, it.f, it.rscv))
                else:
                    trace.append((it["cum_cost"], it["f"], it["rscv"]))
        return trace

    def best_feasible_at(self, budget: float, feas_tol: float = 1e-6):
        """Best feasible objective among HF samples with cum_cost <= budget."""
        best = math.inf
        for cost, f, v in self.hf_trace():
            if cost <= budget + 1e-12 and v <= feas_tol and f < best:
                best = f
        return best if math.isfinite(best) else None

    def cost_to_reach(self, threshold: float, feas_tol: float = 1e-6):
        """Smallest cum_cost with a feasible HF sample at or below threshold."""
        for cost, f, v in self.hf_trace():
            if v <= feas_tol and f <= threshold:
                return cost
        return None


def warm_start_hyperparams(previous_theta: Optional[np.ndarray], d: int,
                           seed: int) -> np.ndarray:
    """Start list for the hyperparameter search: the previous optimum (when
    available) followed by 3d LHS candidates."""
    init = np.log10(previous_theta) if previous_theta is not None else None
    return hyperparam_starts(d, seed, init=init)


def _fit_seed(seed: int, iteration: int, k: int) -> int:
    return (seed * 1_000_003 + iteration * 131 + k * 7919) % (2**31 - 1)


def _fit_mono(samples: LevelSamples, prev_models, seed: int, iteration: int):
    design = samples.design()
    outputs = samples.output_matrix()
    models = []
    for k in range(outputs.shape[1]):
        init = prev_models[k].kernel if prev_models else None
        models.append(
            gp_fit(design, outputs[:, k], init=init,
                   seed=_fit_seed(seed, iteration, k))
        )
    return models


def _fit_multi(dataset: FidelityDataset, prev_models, seed: int, iteration: int):
    design = dataset.nested_design()
    per_level = [lvl.output_matrix() for lvl in dataset.levels]
    n_outputs = per_level[0].shape[1]
    models = []
    for k in range(n_outputs):
        init = prev_models[k] if prev_models else None
        models.append(
            mfgp_fit(design, [m[:, k] for m in per_level],
                     seed=_fit_seed(seed, iteration, k), init=init)
        )
    return models


def _model_scales(model):
    return model.y_shift, model.y_scale


def _acq_pair(obj_model, incumbent: Incumbent, kind: str, bounds: Bounds):
    """(value, value_and_grad) callables of the acquisition at original x."""
    shift, scale = _model_scales(obj_model)
    f_min = (incumbent.f_min - shift) / scale
    span = bounds.span
    use_log = kind == "logei"

    def value_and_grad(x):
        u = bounds.to_unit(x)
        m, v, gm, gv = obj_model.mean_var_grad_unit(u)
        sigma = math.sqrt(max(v, _SIGMA_FLOOR**2))
        z = (f_min - m) / sigma
        if use_log:
            val = acq.log_h(z) + math.log(sigma)
            dlh = acq.log_h_prime(z)
            dval_dm = -dlh / sigma
            dval_ds = (1.0 - dlh * z) / sigma
        else:
            val = acq.ei(m, sigma, f_min)
            dval_dm = -acq.normal_cdf(z)
            dval_ds = acq.normal_pdf(z)
        grad_u = dval_dm * gm + dval_ds * gv / (2.0 * sigma)
        return val, grad_u / span

    def value(x):
        u = bounds.to_unit(x)
        m, v = obj_model.mean_var_unit(u)
        sigma = math.sqrt(max(v, _SIGMA_FLOOR**2))
        if use_log:
            return acq.log_h((f_min - m) / sigma) + math.log(sigma)
        return acq.ei(m, sigma, f_min)

    return value, value_and_grad


def _mean_pair(model, bounds: Bounds):
    """(mean, mean_and_grad) callables in original output units."""
    shift, scale = _model_scales(model)
    span = bounds.span

    def mean(x):
        u = bounds.to_unit(x)
        if isinstance(model, MfGpModel):
            m, _ = model.mean_var_unit(u)
        else:
            m = model.mean_unit(u)
        return m * scale + shift

    def mean_and_grad(x):
        u = bounds.to_unit(x)
        m, _, gm, _ = model.mean_var_grad_unit(u)
        return m * scale + shift, gm * scale / span

    return mean, mean_and_grad


def _build_infill_problem(models, incumbent, config: OptimizerConfig,
                          bounds: Bounds, n_ineq: int, n_eq: int) -> AcqProblem:
    if config.infill == "pof-ei":
        from .baselines import pof_penalized_acq

        value, value_and_grad = pof_penalized_acq(
            models, incumbent, config.acquisition, bounds, n_ineq, n_eq
        )
        return AcqProblem(value, [], [], bounds, objective_and_grad=value_and_grad)

    value, value_and_grad = _acq_pair(models[0], incumbent, config.acquisition, bounds)
    ineq_models = models[1 : 1 + n_ineq]
    eq_models = models[1 + n_ineq : 1 + n_ineq + n_eq]
    ineq_pairs = [_mean_pair(m, bounds) for m in ineq_models]
    eq_pairs = [_mean_pair(m, bounds) for m in eq_models]
    return AcqProblem(
        objective=value,
        ineq_means=[p[0] for p in ineq_pairs],
        eq_means=[p[0] for p in eq_pairs],
        bounds=bounds,
        objective_and_grad=value_and_grad,
        ineq_and_grads=[p[1] for p in ineq_pairs],
        eq_and_grads=[p[1] for p in eq_pairs],
        ineq_scales=[m.y_scale for m in ineq_models],
        eq_scales=[m.y_scale for m in eq_models],
    )


def _solve_infill(problem_def: ProblemDef, infill: AcqProblem,
                  config: OptimizerConfig, iteration: int) -> SubsolveResult:
    d = problem_def.dim
    n_starts = config.n_acq_starts or max(10, 5 * d)
    acq_seed = (config.seed * 9176 + iteration) % (2**31 - 1)
    result = solve(infill, n_starts=n_starts, seed=acq_seed, tol=config.mu_tol,
                   maxiter=config.acq_maxiter)
    if not result.converged and problem_def.n_eq > 0:
        relax = max(1e-2 * 0.5**iteration, 1e-6)
        relaxed = solve(infill, n_starts=n_starts, seed=acq_seed,
                        tol=config.mu_tol, eq_relax=relax,
                        maxiter=config.acq_maxiter)
        if relaxed.converged or relaxed.constraint_residual < result.constraint_residual:
            result = relaxed
    return result


def _dedup_point(x: np.ndarray, samples: LevelSamples, bounds: Bounds, rng) -> np.ndarray:
    """Nudge x off an existing sample at this level; magnitude 1e-6 of the
    domain diagonal."""
    tries = 0
    while samples.contains(x) and tries < 100:
        direction = rng.standard_normal(bounds.dim)
        direction /= max(np.linalg.norm(direction), 1e-300)
        step = 1e-6 * np.linalg.norm(bounds.span)
        x = np.clip(x + step * direction, bounds.lower, bounds.upper)
        tries += 1
    return x


def _incumbent_of(samples: LevelSamples, feas_tol: float) -> Incumbent:
    return select_incumbent(samples.f_array(), samples.g_array(),
                            samples.h_array(), feas_tol)


def _initial_hf_summary(samples: LevelSamples):
    return [
        {"f": f, "rscv": rscv(g, h)}
        for f, g, h in zip(samples.f, samples.g, samples.h)
    ]


def _doe_cost(problem: ProblemDef, counts) -> float:
    cn = problem.cost_model.normalized().costs
    return float(sum(cn[i] * c for i, c in enumerate(counts)))


def sego_run(problem: ProblemDef, doe: LevelSamples,
             config: OptimizerConfig, solver_name: str = "sego") -> RunRecord:
    """Mono-fidelity constrained BO on the highest-fidelity oracles."""
    if config.mode != "mono":
        raise ConfigError("sego_run requires mode='mono'")
    if doe.n == 0:
        raise StateError("initial DoE is empty")
    top_level = problem.n_levels
    data = doe.copy()
    incumbent = _incumbent_of(data, config.feas_tol)
    record = RunRecord(
        problem=problem.name, solver=solver_name, seed=config.seed,
        n_levels=1, doe_cost=_doe_cost(problem, [0] * (top_level - 1) + [data.n]),
        initial_hf=_initial_hf_summary(data),
        initial_incumbent={"f_min": incumbent.f_min,
                           "feasible": incumbent.is_feasible,
                           "rscv": incumbent.fallback_violation},
    )
    rng = np.random.default_rng(config.seed)
    cum_cost = 0.0
    prev_models = None
    last_solve = None
    for i in range(config.max_iter):
        if config.budget is not None and cum_cost >= config.budget - 1e-12:
            break
        try:
            models = _fit_mono(data, prev_models, config.seed, i)
        except FitError as exc:
            record.error = f"iteration {i}: {exc}"
            break
        prev_models = models
        infill = _build_infill_problem(models, incumbent, config, problem.bounds,
                                       problem.n_ineq, problem.n_eq)
        result = _solve_infill(problem, infill, config, i)
        last_solve = result
        x_i = _dedup_point(result.x_star, data, problem.bounds, rng)
        f, g, h = problem.evaluate(x_i, top_level)
        if not data.contains(x_i):
            data.append(x_i, f, g, h)
        cum_cost += 1.0
        incumbent = _incumbent_of(data, config.feas_tol)
        record.iterations.append(IterationRecord(
            iteration=i, x=list(map(float, x_i)), level=1, cost=1.0,
            cum_cost=cum_cost, f=f, g=list(map(float, g)), h=list(map(float, h)),
            rscv=rscv(g, h), f_min=incumbent.f_min,
            incumbent_feasible=incumbent.is_feasible,
            rscv_at_incumbent=(0.0 if incumbent.is_feasible
                               else incumbent.fallback_violation),
        ))
    if last_solve is not None:
        record.final = {
            "x_star": list(map(float, last_solve.x_star)),
            "acq_value": last_solve.acq_value,
            "constraint_residual": last_solve.constraint_residual,
            "n_starts": last_solve.n_starts,
            "converged": last_solve.converged,
        }
    return record


def mfsego_run(problem: ProblemDef, doe: FidelityDataset,
               config: OptimizerConfig, solver_name: Optional[str] = None) -> RunRecord:
    """Multi-fidelity constrained BO with per-iteration level selection."""
    if config.mode != "multi":
        raise ConfigError("mfsego_run requires mode='multi'")
    L = problem.n_levels
    if L < 2:
        raise ConfigError("multi-fidelity mode needs at least two levels")
    if doe.n_levels != L:
        raise ConfigError("dataset level count does not match the problem")
    doe.nested_design()  # raises StructureError if nesting is violated
    if doe.top().n == 0:
        raise StateError("no high-fidelity samples in the initial DoE")
    if solver_name is None:
        solver_name = f"mfsego-{config.criterion.value}"

    cn = problem.cost_model.normalized().costs
    data = doe.copy()
    incumbent = _incumbent_of(data.top(), config.feas_tol)
    record = RunRecord(
        problem=problem.name, solver=solver_name, seed=config.seed,
        n_levels=L, doe_cost=_doe_cost(problem, [lvl.n for lvl in data.levels]),
        initial_hf=_initial_hf_summary(data.top()),
        initial_incumbent={"f_min": incumbent.f_min,
                           "feasible": incumbent.is_feasible,
                           "rscv": incumbent.fallback_violation},
    )
    rng = np.random.default_rng(config.seed)
    cum_cost = 0.0
    prev_models = None
    last_solve = None
    for i in range(config.max_iter):
        if config.budget is not None and cum_cost >= config.budget - 1e-12:
            break
        try:
            models = _fit_multi(data, prev_models, config.seed, i)
        except FitError as exc:
            record.error = f"iteration {i}: {exc}"
            break
        prev_models = models
        infill = _build_infill_problem(models, incumbent, config, problem.bounds,
                                       problem.n_ineq, problem.n_eq)
        result = _solve_infill(problem, infill, config, i)
        last_solve = result
        if config.fixed_level is not None:
            level = config.fixed_level
        else:
            table = reduction_table(models, result.x_star)
            level = select_level(table, problem.selection_cost_model,
                                 config.criterion)
        x_i = _dedup_point(result.x_star, data.levels[level - 1],
                           problem.bounds, rng)
        values = None
        for lvl in range(1, level + 1):
            f, g, h = problem.evaluate(x_i, lvl)
            if lvl == level:
                values = (f, g, h)
            if not data.levels[lvl - 1].contains(x_i):
                data.levels[lvl - 1].append(x_i, f, g, h)
        cost = float(np.sum(cn[:level]))
        cum_cost += cost
        incumbent = _incumbent_of(data.top(), config.feas_tol)
        f, g, h = values
        record.iterations.append(IterationRecord(
            iteration=i, x=list(map(float, x_i)), level=level, cost=cost,
            cum_cost=cum_cost, f=f, g=list(map(float, g)), h=list(map(float, h)),
            rscv=rscv(g, h), f_min=incumbent.f_min,
            incumbent_feasible=incumbent.is_feasible,
            rscv_at_incumbent=(0.0 if incumbent.is_feasible
                               else incumbent.fallback_violation),
        ))
    if last_solve is not None:
        record.final = {
            "x_star": list(map(float, last_solve.x_star)),
            "acq_value": last_solve.acq_value,
            "constraint_residual": last_solve.constraint_residual,
            "n_starts": last_solve.n_starts,
            "converged": last_solve.converged,
        }
    return record
