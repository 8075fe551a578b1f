"""Acquisition functions over GP posteriors.

Expected Improvement, its numerically stable logarithm, and the special
functions both need. Everything here is scalar and stateless; the
sub-solver calls these thousands of times per iteration, so the hot
paths stick to the math module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

_SQRT_2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_2 = math.log(2.0)

# Branch constants of the stable log-EI helper.
_C1 = 0.5 * math.log(2.0 * math.pi)
_C2 = 0.5 * math.log(math.pi / 2.0)
_EPS = 2.0 ** -52
_DEEP_TAIL = -1.0 / math.sqrt(_EPS)  # = -2^26

# exp(w) overflows double just above w = 709.78.
_EXP_OVERFLOW = 709.0


@dataclass(frozen=True)
class Incumbent:
    """Best high-fidelity objective found so far.

    When no sampled point is feasible, f_min falls back to the objective
    of the least-violating point and fallback_violation records its RSCV.
    """

    f_min: float
    is_feasible: bool
    fallback_violation: float = 0.0


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def normal_cdf(x: float) -> float:
    # erfc-based for tail accuracy; plain erf loses digits below x ~ -6.
    return 0.5 * math.erfc(-x / _SQRT_2)


def normal_logcdf(x: float) -> float:
    """log Phi(x), stable into the lower tail."""
    if x > -1.0:
        return math.log(normal_cdf(x))
    # Phi(x) = 0.5 * erfcx(-x/sqrt(2)) * exp(-x^2/2) for x < 0
    return math.log(0.5 * erfcx(-x / _SQRT_2)) - 0.5 * x * x


def _erfcx_cont_frac(z: float) -> float:
    # Laplace continued fraction, modified Lentz; accurate for z >= ~20.
    tiny = 1e-300
    f = z if z != 0 else tiny
    c = f
    d = 0.0
    for n in range(1, 80):
        a_n = 0.5 * n
        d = z + a_n * d
        if d == 0.0:
            d = tiny
        c = z + a_n / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return 1.0 / (_SQRT_PI * f)


def erfcx(z: float) -> float:
    """Scaled complementary error function exp(z^2) * erfc(z).

    For z below about -26.6 the true value exceeds the double range and
    +inf is returned; callers in this module never reach that region.
    """
    if z >= 0.0:
        if z <= 25.0:
            return math.exp(z * z) * math.erfc(z)
        return _erfcx_cont_frac(z)
    w = z * z
    if w > _EXP_OVERFLOW:
        return math.inf
    return 2.0 * math.exp(w) - erfcx(-z)


def log1mexp(z: float) -> float:
    """log(1 - exp(z)) for z < 0, using the standard two-regime split."""
    if z >= 0.0:
        raise DomainError("log1mexp requires z < 0")
    if z > -_LOG_2:
        return math.log(-math.expm1(z))
    return math.log1p(-math.exp(z))


def ei(mu: float, sigma: float, f_min: float) -> float:
    """Expected improvement of a N(mu, sigma^2) posterior over f_min."""
    if sigma < 0.0:
        raise DomainError("sigma must be non-negative")
    if sigma == 0.0:
        return 0.0
    z = (f_min - mu) / sigma
    value = sigma * (z * normal_cdf(z) + normal_pdf(z))
    return value if value > 0.0 else 0.0


def log_h(z: float) -> float:
    """Stable log(pdf(z) + z * cdf(z)), the shape factor of log-EI."""
    if z > -1.0:
        return math.log(normal_pdf(z) + z * normal_cdf(z))
    if z > _DEEP_TAIL:
        w = math.log(erfcx(-z / _SQRT_2) * abs(z)) + _C2
        return -0.5 * z * z - _C1 + log1mexp(w)
    return -0.5 * z * z - _C1 - 2.0 * math.log(abs(z))


def log_ei(mu: float, sigma: float, f_min: float) -> float:
    """log of the expected improvement; finite even deep in the tail."""
    if sigma <= 0.0:
        raise DomainError("log_ei requires sigma > 0; use ei for the zero case")
    z = (f_min - mu) / sigma
    return log_h(z) + math.log(sigma)


def log_h_prime(z: float) -> float:
    """d/dz log_h(z) = cdf(z) / h(z), stable across all branches."""
    if z > -1.0:
        return normal_cdf(z) / (normal_pdf(z) + z * normal_cdf(z))
    if z > -8.0:
        # ratio of the shared exp(-z^2/2) factors; g = 1 - exp(w) as in log_h
        t = -z / _SQRT_2
        w = math.log(erfcx(t) * abs(z)) + _C2
        g = -math.expm1(w)
        return 0.5 * math.sqrt(2.0 * math.pi) * erfcx(t) / g
    # asymptotic: cdf/h = |z| (1 + 2/z^2 - 6/z^4 + O(z^-6))
    a = abs(z)
    return a + 2.0 / a - 6.0 / (a * a * a)


def pof(mu_g, sigma_g) -> float:
    """Probability that every constraint posterior is non-positive."""
    value = 1.0
    for mu, sigma in zip(mu_g, sigma_g):
        if sigma < 0.0:
            raise DomainError("sigma must be non-negative")
        if sigma == 0.0:
            value *= 1.0 if mu <= 0.0 else 0.0
        else:
            value *= normal_cdf(-mu / sigma)
    return value


def log_pof(mu_g, sigma_g) -> float:
    """log of pof; -inf when any deterministic constraint is violated."""
    total = 0.0
    for mu, sigma in zip(mu_g, sigma_g):
        if sigma == 0.0:
            if mu > 0.0:
                return -math.inf
        else:
            total += normal_logcdf(-mu / sigma)
    return total
