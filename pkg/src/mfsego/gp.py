"""Single-fidelity Gaussian-process regression.

Squared-exponential correlation, constant trend, hyperparameters by
multi-start maximization of the concentrated log-likelihood. Inputs are
scaled to the unit cube and outputs standardized internally; the public
surface (beta, sigma_z2, predictions) is in original units.

The likelihood and prediction paths are deliberately lean: a BO run
evaluates them hundreds of thousands of times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize

from .doe import Bounds, Design, lhs_sample
from .errors import DomainError, FitError

LOG10_THETA_MIN = -6.0
LOG10_THETA_MAX = 2.0
RHO_BOUND = 10.0
NUGGET_START = 1e-10
NUGGET_MAX = 1e-4
_SIGMA2_FLOOR = 1e-18
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class KernelParams:
    """Correlation lengths (unit-cube parameterization) and process variance."""

    theta: np.ndarray
    sigma_z2: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        if np.any(theta <= 0) or self.sigma_z2 <= 0:
            raise DomainError("kernel parameters must be positive")


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float


def kernel_corr(x: np.ndarray, x2: np.ndarray, theta: np.ndarray) -> float:
    """Squared-exponential correlation prod_l exp(-theta_l |x_l - x2_l|^2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if x.shape != x2.shape or x.shape != theta.shape:
        raise DomainError("x, x2 and theta must share one dimension d")
    return float(np.exp(-np.sum(theta * (x - x2) ** 2)))


def _pairwise_sq(U: np.ndarray) -> np.ndarray:
    """(N, N, d) array of per-coordinate squared differences."""
    return (U[:, None, :] - U[None, :, :]) ** 2


def _standardize(Y: np.ndarray):
    mean = float(Y.mean())
    std = float(Y.std())
    if std <= 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return (Y - mean) / std, mean, std


class LikelihoodProblem:
    """Concentrated negative log-likelihood over (log10 theta [, rho]).

    y is the (standardized) level output; when yprev is given, the
    residual y - rho * yprev is modeled and rho joins the search vector.
    """

    def __init__(self, U: np.ndarray, y: np.ndarray, yprev: np.ndarray | None,
                 nugget: float):
        self.n, self.d = U.shape
        self.sq2d = _pairwise_sq(U).reshape(self.n * self.n, self.d)
        self.y = y
        self.yprev = yprev
        self.nugget = nugget
        self.with_rho = yprev is not None
        self._diag = np.arange(0, self.n * self.n, self.n + 1)

    def corr(self, theta: np.ndarray) -> np.ndarray:
        R = np.exp(-(self.sq2d @ theta))
        R[self._diag] += self.nugget
        return R.reshape(self.n, self.n)

    def nll_grad(self, params: np.ndarray):
        d, n = self.d, self.n
        theta = 10.0 ** params[:d]
        if self.with_rho:
            resid = self.y - params[d] * self.yprev
        else:
            resid = self.y
        R = self.corr(theta)
        try:
            L = cholesky(R, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros(len(params))
        rhs = np.empty((n, 2))
        rhs[:, 0] = resid
        rhs[:, 1] = 1.0
        sol = cho_solve((L, True), rhs, check_finite=False)
        beta = sol[:, 0].sum() / sol[:, 1].sum()
        alpha = sol[:, 0] - beta * sol[:, 1]
        quad = float((resid - beta) @ alpha)
        sigma2 = max(quad / n, _SIGMA2_FLOOR)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        nll = 0.5 * (n * math.log(sigma2) + logdet)

        inv, info = dpotri(L, lower=1)
        if info != 0:
            return np.inf, np.zeros(len(params))
        rinv = inv + inv.T
        rinv[np.diag_indices(n)] = np.diag(inv)
        W = (np.outer(alpha, alpha) / sigma2 - rinv) * R
        grad = np.empty(len(params))
        grad[:d] = 0.5 * (W.ravel() @ self.sq2d) * theta * _LN10
        if self.with_rho:
            grad[d] = -float(self.yprev @ alpha) / sigma2
        return nll, grad

    def nll(self, params: np.ndarray) -> float:
        return self.nll_grad(params)[0]


def _search_bounds(d: int, with_rho: bool):
    lo = [LOG10_THETA_MIN] * d
    hi = [LOG10_THETA_MAX] * d
    if with_rho:
        lo.append(-RHO_BOUND)
        hi.append(RHO_BOUND)
    return list(zip(lo, hi))


def hyperparam_starts(d: int, seed: int, init: np.ndarray | None = None,
                      n_lhs: int | None = None) -> np.ndarray:
    """Multi-start points in log10(theta) space: warm start first, then 3d LHS."""
    if n_lhs is None:
        n_lhs = 3 * d
    box = Bounds(np.full(d, LOG10_THETA_MIN), np.full(d, LOG10_THETA_MAX))
    starts = lhs_sample(n_lhs, box, seed).points
    if init is not None:
        init = np.clip(np.atleast_1d(init), LOG10_THETA_MIN, LOG10_THETA_MAX)
        starts = np.vstack([init[None, :], starts])
    return starts


def optimize_hyperparams(problem: LikelihoodProblem, starts: np.ndarray,
                         rho_start: float | None = None, maxiter: int = 30,
                         n_optimize: int = 2):
    """Multi-start search: score every start, run the local optimizer from
    the `n_optimize` most promising ones (0 or None = all of them).

    The returned likelihood is at least as good as the value at every
    start point (the starts themselves stay in the candidate pool);
    first-found wins on ties.
    """
    bounds = _search_bounds(problem.d, problem.with_rho)
    scored = []
    for s in starts:
        p0 = np.asarray(s, dtype=float)
        if problem.with_rho:
            p0 = np.append(p0, rho_start)
        nll0, _ = problem.nll_grad(p0)
        scored.append((nll0, p0))
    best_nll = np.inf
    best_params = None
    for nll0, p0 in scored:
        if nll0 < best_nll:
            best_nll, best_params = nll0, p0
    order = sorted(range(len(scored)), key=lambda i: scored[i][0])
    if not n_optimize:
        n_optimize = len(scored)
    for rank, i in enumerate(order):
        if rank >= n_optimize:
            break
        nll0, p0 = scored[i]
        if not np.isfinite(nll0):
            continue
        res = minimize(
            problem.nll_grad, p0, method="L-BFGS-B", jac=True, bounds=bounds,
            options={"maxiter": maxiter},
        )
        if np.isfinite(res.fun) and res.fun < best_nll:
            best_nll, best_params = res.fun, res.x
    return best_nll, best_params


class GpModel:
    """Fitted GP; immutable. Stored training data is in original units."""

    def __init__(self, X: Design, Y: np.ndarray, theta: np.ndarray, nugget: float):
        Y = np.asarray(Y, dtype=float).ravel()
        if X.n != len(Y):
            raise DomainError("X and Y lengths differ")
        self.X = X
        self.Y = Y
        self.nugget = float(nugget)
        self._U = X.bounds.to_unit(X.points)
        y, self._y_mean, self._y_std = _standardize(Y)

        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        n = len(y)
        R = np.exp(-(_pairwise_sq(self._U) @ theta))
        R[np.diag_indices(n)] += self.nugget
        try:
            self.chol = cholesky(R, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FitError(
                "correlation matrix not positive definite",
                condition_number=float(np.linalg.cond(R)),
            ) from exc
        rhs = np.empty((n, 2))
        rhs[:, 0] = y
        rhs[:, 1] = 1.0
        sol = cho_solve((self.chol, True), rhs, check_finite=False)
        self._beta_std = float(sol[:, 0].sum() / sol[:, 1].sum())
        self.alpha = sol[:, 0] - self._beta_std * sol[:, 1]
        quad = float((y - self._beta_std) @ self.alpha)
        self._sigma2_std = max(quad / n, _SIGMA2_FLOOR)
        self.kernel = KernelParams(theta, self._sigma2_std * self._y_std**2)

    @property
    def beta(self) -> float:
        return self._beta_std * self._y_std + self._y_mean

    @property
    def bounds(self) -> Bounds:
        return self.X.bounds

    @property
    def y_shift(self) -> float:
        return self._y_mean

    @property
    def y_scale(self) -> float:
        return self._y_std

    # --- unit-cube fast paths (standardized outputs) -------------------

    def corr_to(self, u: np.ndarray) -> np.ndarray:
        diff = u - self._U
        return np.exp(-((diff * diff) @ self.kernel.theta)), diff

    def mean_unit(self, u: np.ndarray) -> float:
        r, _ = self.corr_to(u)
        return self._beta_std + float(r @ self.alpha)

    def mean_var_unit(self, u: np.ndarray):
        r, _ = self.corr_to(u)
        mean = self._beta_std + float(r @ self.alpha)
        v = solve_triangular(self.chol, r, lower=True, check_finite=False)
        var = self._sigma2_std * (1.0 - float(v @ v))
        var = min(max(var, 0.0), self._sigma2_std * (1.0 + self.nugget))
        return mean, var

    def mean_var_grad_unit(self, u: np.ndarray):
        """(mean, var, dmean/du, dvar/du) on standardized outputs."""
        r, diff = self.corr_to(u)
        dr = (-2.0 * r)[:, None] * (diff * self.kernel.theta[None, :])
        mean = self._beta_std + float(r @ self.alpha)
        gmean = dr.T @ self.alpha
        v = solve_triangular(self.chol, r, lower=True, check_finite=False)
        rinv_r = solve_triangular(self.chol, v, lower=True, trans=1,
                                  check_finite=False)
        var = self._sigma2_std * (1.0 - float(v @ v))
        gvar = -2.0 * self._sigma2_std * (dr.T @ rinv_r)
        clamped = min(max(var, 0.0), self._sigma2_std * (1.0 + self.nugget))
        if clamped != var:
            gvar = np.zeros_like(gvar)
        return mean, clamped, gmean, gvar

    # --- original-unit surface ------------------------------------------

    def predict(self, x: np.ndarray) -> Posterior:
        u = self.X.bounds.to_unit(np.asarray(x, dtype=float))
        mean, var = self.mean_var_unit(u)
        return Posterior(mean * self._y_std + self._y_mean, var * self._y_std**2)

    def predict_with_grad(self, x: np.ndarray):
        """(mean, variance, dmean/dx, dvariance/dx) in original units."""
        u = self.X.bounds.to_unit(np.asarray(x, dtype=float))
        r, diff = self.corr_to(u)
        dr = (-2.0 * r)[:, None] * (diff * self.kernel.theta[None, :])
        mean = self._beta_std + float(r @ self.alpha)
        gmean = dr.T @ self.alpha
        v = solve_triangular(self.chol, r, lower=True, check_finite=False)
        rinv_r = solve_triangular(self.chol, v, lower=True, trans=1,
                                  check_finite=False)
        var = self._sigma2_std * (1.0 - float(v @ v))
        gvar = -2.0 * self._sigma2_std * (dr.T @ rinv_r)
        clamped = min(max(var, 0.0), self._sigma2_std * (1.0 + self.nugget))
        if clamped != var:
            gvar = np.zeros_like(gvar)
        span = self.X.bounds.span
        return (
            mean * self._y_std + self._y_mean,
            clamped * self._y_std**2,
            gmean * self._y_std / span,
            gvar * self._y_std**2 / span,
        )


def neg_loglik(X: Design, Y: np.ndarray, theta: np.ndarray,
               nugget: float = NUGGET_START) -> float:
    """Concentrated negative log-likelihood of theta on (X, Y); for audits."""
    Y = np.asarray(Y, dtype=float).ravel()
    y, _, _ = _standardize(Y)
    problem = LikelihoodProblem(X.bounds.to_unit(X.points), y, None, nugget)
    return float(problem.nll(np.log10(np.atleast_1d(theta))))


def gp_build(X: Design, Y: np.ndarray, theta: np.ndarray,
             nugget: float = NUGGET_START) -> GpModel:
    """Model with fixed correlation lengths; beta and sigma_z2 profiled."""
    return GpModel(X, Y, theta, nugget)


def gp_fit(X: Design, Y: np.ndarray, init: KernelParams | None = None,
           seed: int = 0, n_lhs: int | None = None) -> GpModel:
    """Multi-start MLE fit. `init` (e.g. the previous iteration's kernel)
    is prepended to the 3d LHS starting points."""
    Y = np.asarray(Y, dtype=float).ravel()
    if X.n < 2:
        raise DomainError("need at least two training points to fit")
    y, _, _ = _standardize(Y)
    d = X.dim
    U = X.bounds.to_unit(X.points)
    init_log = np.log10(init.theta) if init is not None else None
    starts = hyperparam_starts(d, seed, init=init_log, n_lhs=n_lhs)

    nugget = NUGGET_START
    while True:
        problem = LikelihoodProblem(U, y, None, nugget)
        nll, params = optimize_hyperparams(problem, starts)
        if params is not None and np.isfinite(nll):
            return GpModel(X, Y, 10.0 ** params[:d], nugget)
        if nugget >= NUGGET_MAX:
            R = problem.corr(10.0 ** starts[0])
            raise FitError(
                "no finite likelihood at any start after nugget escalation",
                condition_number=float(np.linalg.cond(R)),
            )
        nugget *= 10.0
