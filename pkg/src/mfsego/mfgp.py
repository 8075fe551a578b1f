"""Recursive multi-fidelity kriging.

Level 1 is a plain GP; every level above models the residual against
the scaled level below (scalar factor rho), fitted bottom-up with the
lower levels frozen. All levels share one output standardization (the
level-1 statistics) so the recursion is exact in scaled space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .doe import DUPLICATE_TOL, Design, NestedDesign
from .errors import DomainError, FitError, StructureError
from .gp import (
    NUGGET_MAX,
    NUGGET_START,
    KernelParams,
    LikelihoodProblem,
    _pairwise_sq,
    _standardize,
    hyperparam_starts,
    optimize_hyperparams,
)

_SIGMA2_FLOOR = 1e-18


@dataclass(frozen=True)
class LevelPosterior:
    """Posterior at one fidelity level; variance splits into the scaled
    lower-level part plus the level's own discrepancy term."""

    mean: float
    variance: float
    delta_variance: float


class _LevelRecord:
    """Frozen per-level state: kernel, scaling factor, factorized kernel."""

    def __init__(self, design: Design, Y: np.ndarray, y: np.ndarray,
                 yprev: np.ndarray | None, theta: np.ndarray,
                 rho: float | None, nugget: float,
                 sigma2_std_override: float | None = None):
        self.design = design
        self.Y = Y
        self.rho = rho
        self.nugget = nugget
        self.U = design.bounds.to_unit(design.points)
        self.theta = np.atleast_1d(np.asarray(theta, dtype=float))
        n = design.n
        resid = y if yprev is None else y - rho * yprev
        R = np.exp(-(_pairwise_sq(self.U) @ self.theta))
        R[np.diag_indices(n)] += nugget
        try:
            self.chol = cholesky(R, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FitError(
                "level correlation matrix not positive definite",
                condition_number=float(np.linalg.cond(R)),
            ) from exc
        rhs = np.empty((n, 2))
        rhs[:, 0] = resid
        rhs[:, 1] = 1.0
        sol = cho_solve((self.chol, True), rhs, check_finite=False)
        self.beta_std = float(sol[:, 0].sum() / sol[:, 1].sum())
        self.alpha = sol[:, 0] - self.beta_std * sol[:, 1]
        quad = float((resid - self.beta_std) @ self.alpha)
        self.sigma2_std = max(quad / n, _SIGMA2_FLOOR)
        if sigma2_std_override is not None:
            self.sigma2_std = sigma2_std_override

    def corr_to(self, u: np.ndarray):
        diff = u - self.U
        return np.exp(-((diff * diff) @ self.theta)), diff

    def delta_terms(self, u: np.ndarray):
        """(trend+residual mean term, discrepancy variance) at u."""
        r, _ = self.corr_to(u)
        m = self.beta_std + float(r @ self.alpha)
        v = solve_triangular(self.chol, r, lower=True, check_finite=False)
        dv = self.sigma2_std * (1.0 - float(v @ v))
        dv = min(max(dv, 0.0), self.sigma2_std * (1.0 + self.nugget))
        return m, dv

    def delta_terms_grad(self, u: np.ndarray):
        r, diff = self.corr_to(u)
        dr = (-2.0 * r)[:, None] * (diff * self.theta[None, :])
        m = self.beta_std + float(r @ self.alpha)
        gm = dr.T @ self.alpha
        v = solve_triangular(self.chol, r, lower=True, check_finite=False)
        rinv_r = solve_triangular(self.chol, v, lower=True, trans=1,
                                  check_finite=False)
        dv = self.sigma2_std * (1.0 - float(v @ v))
        gdv = -2.0 * self.sigma2_std * (dr.T @ rinv_r)
        clamped = min(max(dv, 0.0), self.sigma2_std * (1.0 + self.nugget))
        if clamped != dv:
            gdv = np.zeros_like(gdv)
        return m, clamped, gm, gdv


class MfGpModel:
    """Fitted recursive co-kriging model; immutable."""

    def __init__(self, design: NestedDesign, levels: list[_LevelRecord],
                 y_mean: float, y_std: float):
        self.design = design
        self.levels = levels
        self._y_mean = y_mean
        self._y_std = y_std

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def bounds(self):
        return self.design.bounds

    @property
    def y_shift(self) -> float:
        return self._y_mean

    @property
    def y_scale(self) -> float:
        return self._y_std

    def kernel(self, level: int) -> KernelParams:
        rec = self.levels[level - 1]
        return KernelParams(rec.theta, rec.sigma2_std * self._y_std**2)

    def rho(self, level: int) -> float:
        """Scaling factor stored with level >= 2."""
        if level < 2:
            raise DomainError("level 1 has no scaling factor")
        return self.levels[level - 1].rho

    # --- unit-cube fast paths (standardized outputs) -------------------

    def level_posteriors_unit(self, u: np.ndarray, up_to: int | None = None):
        """Means, variances and discrepancy variances for levels 1..up_to."""
        up_to = self.n_levels if up_to is None else up_to
        means, variances, deltas = [], [], []
        m = v = 0.0
        for rec in self.levels[:up_to]:
            dm, dv = rec.delta_terms(u)
            if rec.rho is None:
                m, v = dm, dv
            else:
                m = rec.rho * m + dm
                v = rec.rho**2 * v + dv
            means.append(m)
            variances.append(v)
            deltas.append(dv)
        return means, variances, deltas

    def mean_var_unit(self, u: np.ndarray, level: int | None = None):
        level = self.n_levels if level is None else level
        means, variances, _ = self.level_posteriors_unit(u, level)
        return means[-1], variances[-1]

    def mean_var_grad_unit(self, u: np.ndarray, level: int | None = None):
        level = self.n_levels if level is None else level
        m = v = 0.0
        gm = gv = np.zeros(len(u))
        for rec in self.levels[:level]:
            dm, dv, gdm, gdv = rec.delta_terms_grad(u)
            if rec.rho is None:
                m, v, gm, gv = dm, dv, gdm, gdv
            else:
                m = rec.rho * m + dm
                v = rec.rho**2 * v + dv
                gm = rec.rho * gm + gdm
                gv = rec.rho**2 * gv + gdv
        return m, v, gm, gv

    # --- original-unit surface ------------------------------------------

    def predict(self, x: np.ndarray, level: int | None = None) -> LevelPosterior:
        level = self.n_levels if level is None else level
        if not 1 <= level <= self.n_levels:
            raise DomainError(f"level {level} out of range 1..{self.n_levels}")
        u = self.bounds.to_unit(np.asarray(x, dtype=float))
        means, variances, deltas = self.level_posteriors_unit(u, level)
        s2 = self._y_std**2
        return LevelPosterior(
            means[-1] * self._y_std + self._y_mean,
            variances[-1] * s2,
            deltas[-1] * s2,
        )


def mfgp_predict(model: MfGpModel, x: np.ndarray, level: int) -> LevelPosterior:
    return model.predict(x, level)


def variance_contribution(model: MfGpModel, x: np.ndarray, level: int) -> float:
    """Discrepancy variance of `level` at x, scaled through the rho chain
    up to the top level."""
    if not 1 <= level <= model.n_levels:
        raise DomainError(f"level {level} out of range 1..{model.n_levels}")
    u = model.bounds.to_unit(np.asarray(x, dtype=float))
    _, _, deltas = model.level_posteriors_unit(u, level)
    scale = 1.0
    for rec in model.levels[level:]:
        scale *= rec.rho**2
    return deltas[-1] * scale * model._y_std**2


def total_variance_identity_check(model: MfGpModel, x: np.ndarray,
                                  rtol: float = 1e-8) -> bool:
    """Top-level variance must equal the sum of per-level contributions."""
    u = model.bounds.to_unit(np.asarray(x, dtype=float))
    _, variances, deltas = model.level_posteriors_unit(u)
    total = 0.0
    scale = 1.0
    for rec, dv in zip(reversed(model.levels), reversed(deltas)):
        total += dv * scale
        if rec.rho is not None:
            scale *= rec.rho**2
    top = variances[-1]
    return abs(top - total) <= rtol * max(abs(top), abs(total), 1e-300)


def _prev_level_values(design: NestedDesign, level: int, y_prev: np.ndarray) -> np.ndarray:
    """Stored level-(l-1) outputs at the level-l points, matched row-wise."""
    lower = design.levels[level - 2]
    upper = design.levels[level - 1]
    lower_unit = lower.bounds.to_unit(lower.points)
    out = np.empty(upper.n)
    for i, row in enumerate(upper.bounds.to_unit(upper.points)):
        dist = np.max(np.abs(lower_unit - row), axis=1)
        j = int(np.argmin(dist))
        if dist[j] >= DUPLICATE_TOL:
            raise StructureError("nested design row missing from lower level")
        out[i] = y_prev[j]
    return out


def _check_outputs(design: NestedDesign, Y_per_level) -> list[np.ndarray]:
    if len(Y_per_level) != design.n_levels:
        raise StructureError("one output vector per level required")
    Ys = []
    for lvl, Y in zip(design.levels, Y_per_level):
        Y = np.asarray(Y, dtype=float).ravel()
        if len(Y) != lvl.n:
            raise StructureError("output length does not match level design size")
        Ys.append(Y)
    return Ys


def mfgp_fit(design: NestedDesign, Y_per_level, seed: int = 0,
             init: MfGpModel | None = None, n_lhs: int | None = None) -> MfGpModel:
    """Sequential bottom-up fit; each level's (theta, rho) by multi-start
    MLE on the concentrated likelihood, lower levels frozen."""
    Ys = _check_outputs(design, Y_per_level)
    d = design.bounds.dim
    _, y_mean, y_std = _standardize(Ys[0])
    ys = [(Y - y_mean) / y_std for Y in Ys]

    records: list[_LevelRecord] = []
    for level in range(1, design.n_levels + 1):
        lvl_design = design.levels[level - 1]
        U = lvl_design.bounds.to_unit(lvl_design.points)
        y = ys[level - 1]
        if level == 1:
            yprev = None
            rho_start = None
        else:
            yprev = _prev_level_values(design, level, ys[level - 2])
            denom = float(yprev @ yprev)
            rho_start = float(yprev @ y) / denom if denom > 1e-300 else 1.0
            rho_start = float(np.clip(rho_start, -9.99, 9.99))
        init_log = None
        if init is not None and level <= init.n_levels:
            prev_rec = init.levels[level - 1]
            init_log = np.log10(prev_rec.theta)
            if prev_rec.rho is not None:
                rho_start = float(np.clip(prev_rec.rho, -9.99, 9.99))
        starts = hyperparam_starts(d, seed + level - 1, init=init_log, n_lhs=n_lhs)

        nugget = NUGGET_START
        while True:
            problem = LikelihoodProblem(U, y, yprev, nugget)
            nll, params = optimize_hyperparams(problem, starts, rho_start=rho_start)
            if params is not None and np.isfinite(nll):
                theta = 10.0 ** params[:d]
                rho = float(params[d]) if yprev is not None else None
                records.append(
                    _LevelRecord(lvl_design, Ys[level - 1], y, yprev, theta,
                                 rho, nugget)
                )
                break
            if nugget >= NUGGET_MAX:
                raise FitError(
                    f"level {level} fit failed after nugget escalation",
                    condition_number=float(np.linalg.cond(problem.corr(10.0 ** starts[0]))),
                )
            nugget *= 10.0
    return MfGpModel(design, records, y_mean, y_std)


def mfgp_build(design: NestedDesign, Y_per_level, thetas, rhos,
               sigma2s=None, nugget: float = NUGGET_START) -> MfGpModel:
    """Model with fixed per-level kernels and scaling factors.

    `rhos` has one entry per level >= 2. `sigma2s` (original output units)
    optionally pins each level's discrepancy process variance instead of
    the profiled estimate; meant for diagnostics and hand-built fixtures.
    """
    Ys = _check_outputs(design, Y_per_level)
    if len(rhos) != design.n_levels - 1:
        raise StructureError("need one rho per level above the first")
    _, y_mean, y_std = _standardize(Ys[0])
    ys = [(Y - y_mean) / y_std for Y in Ys]
    records = []
    for level in range(1, design.n_levels + 1):
        yprev = None if level == 1 else _prev_level_values(design, level, ys[level - 2])
        rho = None if level == 1 else float(rhos[level - 2])
        override = None
        if sigma2s is not None and sigma2s[level - 1] is not None:
            override = float(sigma2s[level - 1]) / y_std**2
        records.append(
            _LevelRecord(design.levels[level - 1], Ys[level - 1], ys[level - 1],
                         yprev, np.atleast_1d(thetas[level - 1]), rho, nugget,
                         sigma2_std_override=override)
        )
    return MfGpModel(design, records, y_mean, y_std)
