import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from r2d2bnn.special import (
    bessel_k,
    digamma,
    dlog_bessel_k_dnu,
    log_bessel_k,
    log_gamma,
    softplus,
)


def bessel_k_quadrature(nu, x):
    """Independent oracle: K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt."""
    val, _ = integrate.quad(lambda t: np.exp(-x * np.cosh(t)) * np.cosh(nu * t), 0, 60, limit=400)
    return val


class TestBesselK:
    def test_half_integer_closed_form(self):
        # K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
        assert bessel_k(0.5, 1.0) == pytest.approx(np.sqrt(np.pi / 2) * np.exp(-1.0), rel=1e-12)

    def test_order_symmetry(self):
        assert bessel_k(-0.5, 2.0) == pytest.approx(bessel_k(0.5, 2.0), rel=1e-14)

    def test_against_quadrature_oracle(self):
        # frozen from the integral representation: 1.423261342314433
        assert bessel_k(1.3, 0.7) == pytest.approx(1.423261342314433, rel=1e-10)
        assert bessel_k(1.3, 0.7) == pytest.approx(bessel_k_quadrature(1.3, 0.7), rel=1e-10)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            bessel_k(0.5, 0.0)
        with pytest.raises(ValueError):
            bessel_k(0.5, -1.0)
        with pytest.raises(ValueError):
            bessel_k(np.nan, 1.0)
        with pytest.raises(ValueError):
            bessel_k(0.5, np.inf)

    def test_symmetry_property_grid(self):
        gen = np.random.default_rng(42)
        nu = gen.uniform(-5, 5, size=200)
        x = gen.uniform(1e-3, 50, size=200)
        kp = bessel_k(nu, x)
        km = bessel_k(-nu, x)
        assert np.all(np.abs(km - kp) <= 1e-10 * kp)

    def test_recurrence_property_grid(self):
        # K_{nu+1}(x) = K_{nu-1}(x) + (2 nu / x) K_nu(x)
        gen = np.random.default_rng(7)
        nu = gen.uniform(-3, 3, size=100)
        x = gen.uniform(0.1, 30, size=100)
        lhs = bessel_k(nu + 1, x)
        rhs = bessel_k(nu - 1, x) + (2 * nu / x) * bessel_k(nu, x)
        assert np.all(np.abs(lhs - rhs) <= 1e-8 * np.abs(lhs))

    def test_log_bessel_wide_range(self):
        # spots where the raw value overflows or underflows double precision
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 40
        for nu, x in [(0.5, 1.0), (12.0, 3.0), (200.0, 1.0), (130.0, 0.1), (60.0, 1e-8),
                      (0.0, 1e4), (200.0, 1e4), (105.6, 1156.0), (-40.0, 2.0), (199.9, 5e-4)]:
            expect = float(mpmath.log(mpmath.besselk(nu, x)))
            got = log_bessel_k(nu, x)
            assert abs(got - expect) <= 1e-10 * max(1.0, abs(expect)), (nu, x)

    def test_saturation_out_of_double_range(self):
        assert bessel_k(0.0, 1e4) >= 0.0
        assert np.isinf(bessel_k(200.0, 0.01))


class TestDlogBesselDnu:
    def test_definitional(self):
        h = 1e-5
        expect = (log_bessel_k(0.5 + h, 1.0) - log_bessel_k(0.5 - h, 1.0)) / (2 * h)
        assert dlog_bessel_k_dnu(0.5, 1.0) == pytest.approx(expect, abs=1e-14)

    def test_zero_order_vanishes(self):
        # K_nu even in nu, so the central difference is exactly zero
        assert dlog_bessel_k_dnu(0.0, 1.0) == 0.0

    def test_richardson_oracle(self):
        # frozen step-halving extrapolation at (2, 3): 0.5607313748893598
        assert dlog_bessel_k_dnu(2.0, 3.0) == pytest.approx(0.5607313748893598, abs=1e-6)

    def test_vectorized(self):
        out = dlog_bessel_k_dnu(-0.5, np.array([0.5, 1.0, 2.0]))
        assert out.shape == (3,)


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma(1.0) == 0.0
        assert log_gamma(0.5) == pytest.approx(0.5 * np.log(np.pi), rel=1e-14)

    def test_recurrence_oracle(self):
        # product recurrence climbing from the (0, 1) interval
        acc = log_gamma(0.3)
        for k in range(7):
            acc += np.log(0.3 + k)
        assert log_gamma(7.3) == pytest.approx(acc, abs=1e-10)

    def test_domain(self):
        with pytest.raises(ValueError):
            log_gamma(0.0)
        with pytest.raises(ValueError):
            log_gamma(-2.0)


class TestDigamma:
    def test_euler_mascheroni(self):
        assert digamma(1.0) == pytest.approx(-0.5772156649015329, rel=1e-12)

    def test_recurrence(self):
        assert digamma(2.0) == pytest.approx(digamma(1.0) + 1.0, rel=1e-12)

    def test_finite_difference_of_log_gamma(self):
        h = 1e-6
        fd = (log_gamma(3.7 + h) - log_gamma(3.7 - h)) / (2 * h)
        assert digamma(3.7) == pytest.approx(fd, rel=1e-6)

    def test_consistency_grid(self):
        gen = np.random.default_rng(3)
        x = gen.uniform(0.2, 30, size=100)
        h = 1e-6
        fd = (log_gamma(x + h) - log_gamma(x - h)) / (2 * h)
        assert np.all(np.abs(digamma(x) - fd) <= 1e-5 * np.maximum(np.abs(fd), 1.0))


class TestSoftplus:
    def test_known_values(self):
        assert softplus(0.0) == pytest.approx(np.log(2.0), rel=1e-14)
        # frozen high-precision log(1 + e^-3)
        assert softplus(-3.0) == pytest.approx(0.04858735157374206, rel=1e-12)

    def test_no_overflow(self):
        v = softplus(100.0)
        assert np.isfinite(v)
        assert v == pytest.approx(100.0, abs=1e-12)
        assert softplus(1000.0) == pytest.approx(1000.0, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            softplus(np.inf)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=-700, max_value=700))
    def test_monotone_and_positive(self, rho):
        v = softplus(rho)
        assert v > 0.0
        assert v > max(0.0, rho) - 1e-12
        assert softplus(rho + 1e-3) > v
