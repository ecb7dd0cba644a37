"""
Unit tests for penalty module.

Tests cover:
- OUParams validation and steady-state variance
- Quantization floor and MMSE as a function of age
- Transient MMSE and its steady-state limit
- Exact integrals against adaptive quadrature
- Linear, constant and user-supplied penalties
"""

import pytest
import numpy as np
from ouestimation import penalty
from ouestimation.penalty import (OUParams, OUMsePenalty, LinearAgePenalty,
                                  ConstantPenalty, CallablePenalty, penalty_integral)


@pytest.fixture
def ou():
    """OU process with unit steady-state variance."""
    return OUParams(theta=0.5, sigma=1.0)


class TestOUParams:
    """Test OU parameter validation."""

    def test_variance(self, ou):
        """Steady-state variance is sigma^2/(2 theta)."""
        assert ou.variance == pytest.approx(1.0)
        assert OUParams(theta=0.01, sigma=1.0).variance == pytest.approx(50.0)

    def test_non_positive_theta(self):
        """theta must be strictly positive."""
        with pytest.raises(ValueError, match='theta must be positive'):
            OUParams(theta=0.0, sigma=1.0)

    def test_non_numeric_sigma(self):
        """sigma must be a number."""
        with pytest.raises(TypeError, match='sigma must be a number'):
            OUParams(theta=1.0, sigma='1')

    def test_frozen(self, ou):
        """Parameters cannot be changed after creation."""
        with pytest.raises(AttributeError):
            ou.theta = 2.0


class TestMsePenalty:
    """Test the MMSE as a function of age."""

    def test_quantization_floor(self, ou):
        """At age zero only the quantization error remains."""
        assert penalty.quantization_mse(ou, 2) == pytest.approx(1 / 16)
        assert penalty.mse_penalty(ou, 2, 0.0) == pytest.approx(1 / 16)

    def test_large_age_limit(self, ou):
        """Old samples carry no information: the MMSE reaches the variance."""
        assert penalty.mse_penalty(ou, 3, 200.0) == pytest.approx(ou.variance)

    def test_increasing_in_age(self, ou):
        """The MMSE grows with the age."""
        values = penalty.mse_penalty(ou, 2, np.linspace(0, 10, 101))
        assert np.all(np.diff(values) > 0)

    def test_decreasing_in_bits(self, ou):
        """More bits give a smaller MMSE at the same age."""
        values = [penalty.mse_penalty(ou, ell, 0.3) for ell in range(1, 9)]
        assert np.all(np.diff(values) < 0)

    def test_known_value(self, ou):
        """h(delta) = v (1 - (1 - 2^(-2 ell)) e^(-2 theta delta))."""
        expected = 1.0 * (1 - (1 - 0.25) * np.exp(-2 * 0.5 * 0.35))
        assert penalty.mse_penalty(ou, 1, 0.35) == pytest.approx(expected, rel=1e-14)

    def test_negative_age(self, ou):
        """Negative ages are rejected."""
        with pytest.raises(ValueError, match='age must be non-negative'):
            penalty.mse_penalty(ou, 2, -0.1)

    def test_invalid_bits(self, ou):
        """ell must be a positive integer."""
        with pytest.raises(ValueError, match='at least 1 bit'):
            penalty.quantization_mse(ou, 0)
        with pytest.raises(TypeError):
            penalty.quantization_mse(ou, 2.0)

    def test_transient_limit(self, ou):
        """A sample taken long after start-up gives the steady-state MMSE."""
        ages = np.array([0.0, 0.2, 1.5])
        transient = penalty.transient_mse(ou, 2, 1000.0 + ages, 1000.0)
        assert transient == pytest.approx(penalty.mse_penalty(ou, 2, ages), rel=1e-12)

    def test_transient_order(self, ou):
        """The estimate cannot be older than the time it is used."""
        with pytest.raises(ValueError):
            penalty.transient_mse(ou, 2, 1.0, 2.0)


class TestIntegrals:
    """Test exact integrals against quadrature."""

    def test_ou_exact_matches_quadrature(self, ou):
        """The closed-form integral of h agrees with adaptive quadrature."""
        g = OUMsePenalty(ou, 3)
        lower = np.array([0.0, 0.35, 2.0, 7.5])
        upper = np.array([0.1, 1.2, 9.0, 50.0])
        exact = g.exact_integral(lower, upper)
        numeric = g.quadrature_integral(lower, upper)
        assert exact == pytest.approx(numeric, rel=1e-10)

    def test_empty_interval(self, ou):
        """The integral over [a, a] is zero."""
        assert penalty_integral(OUMsePenalty(ou, 2), 1.3, 1.3) == 0.0

    def test_invalid_limits(self, ou):
        """Limits must satisfy 0 <= a <= b."""
        g = OUMsePenalty(ou, 2)
        with pytest.raises(ValueError, match='must not exceed'):
            penalty_integral(g, 2.0, 1.0)
        with pytest.raises(ValueError, match='must be non-negative'):
            penalty_integral(g, -1.0, 1.0)

    def test_linear_integral(self):
        """The age penalty integrates to (b^2 - a^2)/2."""
        assert penalty_integral(LinearAgePenalty(), 1.0, 3.0) == pytest.approx(4.0)

    def test_callable_uses_quadrature(self):
        """A user penalty without antiderivative is integrated numerically."""
        g = CallablePenalty(lambda t: t**2)
        assert not g.has_exact_integral
        assert penalty_integral(g, 0.0, 3.0) == pytest.approx(9.0, rel=1e-10)

    def test_callable_with_integral(self):
        """A user antiderivative takes precedence over quadrature."""
        g = CallablePenalty(lambda t: 2 * t, integral=lambda a, b: b**2 - a**2, vectorized=True)
        assert g.has_exact_integral
        assert penalty_integral(g, np.array([0.0, 1.0]), np.array([1.0, 2.0])) == pytest.approx([1.0, 3.0])


class TestPenaltyBounds:
    """Test sup, inf and envelopes used to truncate series."""

    def test_ou_bounds(self, ou):
        """h is bounded by the variance and starts at the quantization floor."""
        g = OUMsePenalty(ou, 2)
        assert g.sup == pytest.approx(ou.variance)
        assert g.inf == pytest.approx(1 / 16)
        assert g.envelope == (pytest.approx(ou.variance), 0.0)

    def test_linear_envelope(self):
        """The age penalty is unbounded with unit slope."""
        g = LinearAgePenalty()
        assert g.sup == np.inf
        assert g.envelope == (0.0, 1.0)

    def test_constant(self):
        """A constant penalty is its own bound."""
        g = ConstantPenalty(2.5)
        assert g(np.array([0.0, 10.0])) == pytest.approx([2.5, 2.5])
        assert g.sup == g.inf == 2.5

    def test_callable_envelopes(self):
        """User penalties get an envelope from sup or growth rate, else none."""
        assert CallablePenalty(np.sqrt, sup=None).envelope is None
        assert CallablePenalty(lambda t: 1 + t, growth_rate=1.0).envelope == (1.0, 1.0)
        assert CallablePenalty(np.tanh, sup=1.0).envelope == (1.0, 0.0)
