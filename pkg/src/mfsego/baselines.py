"""Comparison solvers sharing the optimizer loop.

The PoF-penalized mode drops the mean constraints from the infill
sub-problem and multiplies the improvement acquisition by the
probability of feasibility instead. It runs on the same nested
multi-fidelity model as the main solver, so outputs label it
"pof-ei (nested-model)" rather than claiming any external framework.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import acquisition as acq
from .acquisition import Incumbent
from .doe import Bounds
from .errors import ConfigError
from .optimizer import (
    FidelityDataset,
    OptimizerConfig,
    ProblemDef,
    RunRecord,
    mfsego_run,
)

POF_EI_LABEL = "pof-ei (nested-model)"
_SIGMA_FLOOR = 1e-150


@dataclass
class BaselineConfig(OptimizerConfig):
    kind: str = "pof-penalized-ei"  # or "sego-mono"

    def __post_init__(self):
        super().__post_init__()
        if self.kind not in ("pof-penalized-ei", "sego-mono"):
            raise ConfigError("kind must be 'pof-penalized-ei' or 'sego-mono'")


def _pdf_cdf_ratio(t: float) -> float:
    """phi(t)/Phi(t), stable in the lower tail."""
    if t > -8.0:
        return acq.normal_pdf(t) / acq.normal_cdf(t)
    a = abs(t)
    return a + 1.0 / a - 2.0 / (a * a * a)


def pof_penalized_acq(models, incumbent: Incumbent, kind: str, bounds: Bounds,
                      n_ineq: int, n_eq: int):
    """(value, value_and_grad) callables for EI(x) * PoF(x).

    With kind='logei' the value is log EI + sum log Phi, otherwise the
    plain product. Equality constraints are rejected: the penalty favors
    |h| large on one side exactly as much as feasibility.
    """
    if n_eq > 0:
        raise ConfigError("the PoF-penalized acquisition cannot handle "
                          "equality constraints")
    obj_model = models[0]
    con_models = models[1 : 1 + n_ineq]
    f_min = (incumbent.f_min - obj_model.y_shift) / obj_model.y_scale
    span = bounds.span
    use_log = kind == "logei"
    # standardized threshold of each constraint: mean <= 0 in original units
    offsets = [m.y_shift / m.y_scale for m in con_models]

    def value(x):
        u = bounds.to_unit(x)
        m, v = obj_model.mean_var_unit(u)
        sigma = math.sqrt(max(v, _SIGMA_FLOOR**2))
        z = (f_min - m) / sigma
        if use_log:
            total = acq.log_h(z) + math.log(sigma)
            for model, off in zip(con_models, offsets):
                cm, cv = model.mean_var_unit(u)
                cs = math.sqrt(max(cv, _SIGMA_FLOOR**2))
                total += acq.normal_logcdf(-(cm + off) / cs)
            return total
        ei_val = acq.ei(m, sigma, f_min)
        for model, off in zip(con_models, offsets):
            cm, cv = model.mean_var_unit(u)
            cs = math.sqrt(max(cv, _SIGMA_FLOOR**2))
            ei_val *= acq.normal_cdf(-(cm + off) / cs)
        return ei_val

    def value_and_grad(x):
        u = bounds.to_unit(x)
        m, v, gm, gv = obj_model.mean_var_grad_unit(u)
        sigma = math.sqrt(max(v, _SIGMA_FLOOR**2))
        gs = gv / (2.0 * sigma)
        z = (f_min - m) / sigma
        if use_log:
            val = acq.log_h(z) + math.log(sigma)
            dlh = acq.log_h_prime(z)
            grad = (-dlh / sigma) * gm + ((1.0 - dlh * z) / sigma) * gs
            for model, off in zip(con_models, offsets):
                cm, cv, cgm, cgv = model.mean_var_grad_unit(u)
                cs = math.sqrt(max(cv, _SIGMA_FLOOR**2))
                cgs = cgv / (2.0 * cs)
                t = -(cm + off) / cs
                ratio = _pdf_cdf_ratio(t)
                dt = (-1.0 / cs) * cgm + ((cm + off) / cs**2) * cgs
                val += acq.normal_logcdf(t)
                grad = grad + ratio * dt
            return val, grad / span
        ei_val = acq.ei(m, sigma, f_min)
        gei = (-acq.normal_cdf(z)) * gm + acq.normal_pdf(z) * gs
        pof_val = 1.0
        dlogpof = np.zeros_like(gm)
        for model, off in zip(con_models, offsets):
            cm, cv, cgm, cgv = model.mean_var_grad_unit(u)
            cs = math.sqrt(max(cv, _SIGMA_FLOOR**2))
            cgs = cgv / (2.0 * cs)
            t = -(cm + off) / cs
            pof_val *= acq.normal_cdf(t)
            dt = (-1.0 / cs) * cgm + ((cm + off) / cs**2) * cgs
            dlogpof = dlogpof + _pdf_cdf_ratio(t) * dt
        val = ei_val * pof_val
        grad = gei * pof_val + val * dlogpof
        return val, grad / span

    return value, value_and_grad


def pof_ei_run(problem: ProblemDef, doe: FidelityDataset,
               config: OptimizerConfig) -> RunRecord:
    """MFSEGO loop with the PoF-penalized box-constrained infill."""
    if problem.n_eq > 0:
        raise ConfigError("the PoF-EI baseline requires a problem without "
                          "equality constraints")
    cfg = replace(config, infill="pof-ei", mode="multi")
    return mfsego_run(problem, doe, cfg, solver_name=POF_EI_LABEL)
