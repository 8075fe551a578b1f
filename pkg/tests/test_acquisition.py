"""Tests for EI, log-EI, and their special functions.

Monte-Carlo and importance-sampling oracles live here, independent of
the closed forms they check.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsego.acquisition import (
    Incumbent,
    ei,
    erfcx,
    log1mexp,
    log_ei,
    log_h,
    normal_cdf,
    normal_pdf,
    pof,
)
from mfsego.errors import DomainError

EPS = 2.0**-52
DEEP_TAIL = -1.0 / math.sqrt(EPS)


def mc_ei(mu, sigma, f_min, n=10**7, seed=0):
    """Plain Monte-Carlo oracle E[max(f_min - Y, 0)], Y ~ N(mu, sigma^2)."""
    rng = np.random.default_rng(seed)
    y = rng.normal(mu, sigma, size=n)
    return float(np.maximum(f_min - y, 0.0).mean())


def is_ei_tail(z, n=10**8, seed=1):
    """Importance-sampling oracle for EI(-z, 1, 0) = E[(z - T)+] deep in
    the tail (z < 0).

    Samples the improvement e = z - t from Exp(|z|); the weight
    e * phi(z - e) / q(e) collapses to e * exp(-z^2/2 - e^2/2) /
    (|z| sqrt(2 pi)).
    """
    lam = abs(z)
    rng = np.random.default_rng(seed)
    total = 0.0
    chunk = 10**7
    done = 0
    const = -0.5 * z * z - math.log(lam) - 0.5 * math.log(2 * math.pi)
    while done < n:
        m = min(chunk, n - done)
        e = rng.exponential(1.0 / lam, size=m)
        total += float(np.sum(e * np.exp(const - 0.5 * e * e)))
        done += m
    return total / n


class TestEi:
    def test_zero_sigma(self):
        assert ei(3.0, 0.0, 1.0) == 0.0
        assert ei(-3.0, 0.0, 1.0) == 0.0

    def test_symmetric_case(self):
        assert ei(0.0, 1.0, 0.0) == pytest.approx(normal_pdf(0.0), rel=1e-12)
        assert normal_pdf(0.0) == pytest.approx(0.398942, abs=1e-6)

    def test_against_mc_oracle(self):
        # mu=-1, sigma=1, f_min=0 -> Phi(1) + phi(1)
        expected = normal_cdf(1.0) + normal_pdf(1.0)
        assert expected == pytest.approx(1.08332, abs=1e-5)
        assert mc_ei(-1.0, 1.0, 0.0) == pytest.approx(expected, abs=1e-3)
        assert ei(-1.0, 1.0, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            ei(0.0, -1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        mu=st.floats(-50, 50),
        sigma=st.floats(1e-6, 30),
        f_min=st.floats(-50, 50),
        shift=st.floats(-100, 100),
    )
    def test_translation_equivariance(self, mu, sigma, f_min, shift):
        a = ei(mu, sigma, f_min)
        b = ei(mu + shift, sigma, f_min + shift)
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(-20, 20), sigma=st.floats(1e-3, 10), f_min=st.floats(-20, 20))
    def test_non_negative(self, mu, sigma, f_min):
        assert ei(mu, sigma, f_min) >= 0.0

    def test_increasing_in_sigma(self):
        for mu, f_min in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (3.0, 1.0)]:
            values = [ei(mu, s, f_min) for s in (0.5, 0.6, 0.8, 1.0, 1.5)]
            assert all(b > a for a, b in zip(values, values[1:]))


class TestLogEi:
    def test_identity_on_analytic_branch(self):
        for z in np.linspace(-0.999, 8.0, 200):
            mu, sigma, f_min = -float(z), 1.0, 0.0
            e = ei(mu, sigma, f_min)
            assert math.exp(log_ei(mu, sigma, f_min)) == pytest.approx(e, rel=1e-10)

    def test_moderate_tail_against_is_oracle(self):
        z = -30.0
        oracle = is_ei_tail(z)
        ours = math.exp(log_ei(-z, 1.0, 0.0))
        assert ours == pytest.approx(oracle, rel=0.05)

    def test_deep_tail_finite(self):
        z = -1e9
        val = log_ei(1e9, 1.0, 0.0)
        expected = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - 2 * math.log(abs(z))
        assert math.isfinite(val)
        assert val == pytest.approx(expected, rel=1e-12)
        # the naive formula is numerically zero there
        assert ei(1e9, 1.0, 0.0) == 0.0

    def test_continuity_at_branch_points(self):
        for z0 in (-1.0, DEEP_TAIL):
            below = log_h(z0 - 1e-9 * abs(z0))
            above = log_h(z0 + 1e-9 * abs(z0))
            assert abs(below - above) <= 1e-6 * max(1.0, abs(below))

    def test_sigma_scaling(self):
        # log EI(mu, s, f) = log_h(z) + log s
        assert log_ei(0.0, 2.0, 1.0) == pytest.approx(
            log_h(0.5) + math.log(2.0), rel=1e-12
        )

    def test_rejects_zero_sigma(self):
        with pytest.raises(DomainError):
            log_ei(0.0, 0.0, 1.0)

    @settings(max_examples=300, deadline=None)
    @given(mu=st.floats(-30, 30), sigma=st.floats(1e-3, 10), f_min=st.floats(-30, 30))
    def test_exp_log_ei_matches_ei(self, mu, sigma, f_min):
        e = ei(mu, sigma, f_min)
        if e > 1e-300:
            assert math.exp(log_ei(mu, sigma, f_min)) == pytest.approx(e, rel=1e-8)


class TestErfcx:
    def test_zero(self):
        assert erfcx(0.0) == 1.0

    def test_large_argument_asymptotic(self):
        # 1/(z sqrt(pi)) * (1 - 1/(2 z^2) + 3/(4 z^4)) at z = 100
        z = 100.0
        series = (1 - 1 / (2 * z**2) + 3 / (4 * z**4)) / (z * math.sqrt(math.pi))
        assert erfcx(z) == pytest.approx(series, rel=1e-10)
        assert erfcx(z) == pytest.approx(0.0056416, abs=1e-7)

    def test_at_one(self):
        assert erfcx(1.0) == pytest.approx(math.e * math.erfc(1.0), rel=1e-13)
        assert erfcx(1.0) == pytest.approx(0.427584, abs=1e-6)

    def test_negative_overflow_guard(self):
        assert erfcx(-27.0) == math.inf
        assert math.isfinite(erfcx(-26.0))

    def test_symmetry_identity(self):
        # erfcx(-z) + erfcx(z) = 2 exp(z^2)
        for z in (0.3, 1.0, 2.5, 5.0):
            assert erfcx(-z) + erfcx(z) == pytest.approx(
                2 * math.exp(z * z), rel=1e-12
            )


class TestLog1mexp:
    def test_known_value(self):
        assert log1mexp(-1.0) == pytest.approx(math.log(1 - math.exp(-1)), rel=1e-14)

    def test_branch_point_continuity(self):
        lo = log1mexp(-math.log(2) - 1e-12)
        hi = log1mexp(-math.log(2) + 1e-12)
        assert abs(lo - hi) < 1e-10

    def test_rejects_non_negative(self):
        with pytest.raises(DomainError):
            log1mexp(0.0)

    @settings(max_examples=100, deadline=None)
    @given(z=st.floats(-700, -1e-9))
    def test_matches_direct_formula(self, z):
        direct = math.log1p(-math.exp(z)) if z < -1 else math.log(-math.expm1(z))
        assert log1mexp(z) == pytest.approx(direct, rel=1e-12)


class TestPof:
    def test_deep_feasibility(self):
        assert pof([-10.0], [1.0]) == pytest.approx(normal_cdf(10.0), abs=1e-10)
        assert pof([-10.0], [1.0]) == pytest.approx(1.0, abs=1e-10)

    def test_boundary(self):
        assert pof([0.0], [1.0]) == pytest.approx(0.5, rel=1e-12)

    def test_two_boundaries(self):
        assert pof([0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.25, rel=1e-12)

    def test_zero_sigma_convention(self):
        assert pof([-1.0], [0.0]) == 1.0
        assert pof([1.0], [0.0]) == 0.0
        assert pof([0.0], [0.0]) == 1.0


class TestIncumbent:
    def test_fields(self):
        inc = Incumbent(1.5, False, 0.3)
        assert inc.f_min == 1.5 and not inc.is_feasible
        assert inc.fallback_violation == 0.3
