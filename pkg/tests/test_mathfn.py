"""
Tests for the standard normal special functions
"""

import math

import numpy as np
import pytest
from scipy import stats

from hserrors import DomainError, NumericalError
from mathfn import MILLS_SWITCH, inv_mills, norm_cdf, norm_pdf, norm_quantile


class TestNormalFunctions:
    """Test the normal distribution functions"""

    def test_pdf_and_cdf_at_zero(self):
        """Test the density and distribution at zero"""
        assert norm_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))
        assert norm_cdf(0.0) == 0.5

    def test_scalar_input_returns_float(self):
        """Test scalar input returns a float"""
        assert isinstance(norm_cdf(1.0), float)
        assert isinstance(inv_mills(-12.0), float)

    def test_array_input_keeps_shape(self):
        """Test array input keeps its shape"""
        values = np.linspace(-3, 3, 12).reshape(3, 4)
        assert norm_pdf(values).shape == (3, 4)
        assert norm_cdf(values).shape == (3, 4)
        np.testing.assert_allclose(norm_cdf(values), stats.norm.cdf(values), rtol=1e-14)

    def test_quantile_inverts_cdf(self):
        """Test the quantile inverts the distribution"""
        p = np.array([1e-10, 0.025, 0.5, 0.975, 1 - 1e-10])
        np.testing.assert_allclose(norm_cdf(norm_quantile(p)), p, rtol=1e-9)
        assert norm_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_quantile_outside_open_interval(self, p):
        """Test a quantile outside the open unit interval"""
        with pytest.raises(DomainError):
            norm_quantile(p)

    def test_non_finite_argument(self):
        """Test a non finite argument"""
        with pytest.raises(DomainError, match="finite"):
            norm_cdf(np.array([0.0, np.inf]))
        with pytest.raises(DomainError):
            inv_mills(float("nan"))

    def test_domain_error_is_numerical_and_value_error(self):
        """Test the domain error is numerical and a value error"""
        assert issubclass(DomainError, NumericalError)
        assert issubclass(DomainError, ValueError)


class TestInverseMills:
    """Test the inverse Mills ratio"""

    def test_value_at_zero(self):
        """Test the value at zero"""
        assert inv_mills(0.0) == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-14)

    def test_matches_direct_ratio_in_body(self):
        """Test the direct ratio in the body"""
        x = np.linspace(-4.9, 8.0, 50)
        expected = stats.norm.pdf(x) / stats.norm.cdf(x)
        np.testing.assert_allclose(inv_mills(x), expected, rtol=1e-12)

    def test_continuous_across_switch(self):
        """Test continuity across the switch point"""
        below = inv_mills(MILLS_SWITCH - 1e-9)
        above = inv_mills(MILLS_SWITCH + 1e-9)
        assert below == pytest.approx(above, rel=1e-7)

    def test_far_left_tail_is_finite_and_near_minus_x(self):
        """Test the far left tail is finite and near minus x"""
        x = np.array([-40.0, -100.0, -1e4])
        values = inv_mills(x)
        assert np.all(np.isfinite(values))
        # lambda(x) ~ -x for very negative x
        np.testing.assert_allclose(values / -x, 1.0, rtol=1e-3)

    def test_far_right_tail_vanishes(self):
        """Test the far right tail vanishes"""
        assert 0.0 <= inv_mills(40.0) < 1e-300

    def test_positive_and_decreasing(self):
        """Test the ratio is positive and decreasing"""
        x = np.linspace(-30, 10, 400)
        values = inv_mills(x)
        assert np.all(values > 0)
        assert np.all(np.diff(values) < 0)

    def test_derivative_identity(self):
        """Test the derivative identity"""
        # lambda'(x) = -lambda(x) (x + lambda(x))
        x = np.array([-20.0, -6.0, -1.0, 0.5, 3.0])
        h = 1e-5
        numeric = (inv_mills(x + h) - inv_mills(x - h)) / (2 * h)
        analytic = -inv_mills(x) * (x + inv_mills(x))
        np.testing.assert_allclose(numeric, analytic, rtol=1e-5)

    def test_reference_values(self):
        """Test the ratio deep in the left tail and far in the right tail"""
        assert inv_mills(-10.0) == pytest.approx(10.0980932, abs=5e-8)
        assert inv_mills(5.0) == pytest.approx(1.48672e-6, rel=1e-5)

    def test_lipschitz_on_random_pairs(self, rng):
        """Test the ratio never moves faster than its argument"""
        x = rng.uniform(-40.0, 20.0, 5000)
        y = rng.uniform(-40.0, 20.0, 5000)
        assert np.all(np.abs(inv_mills(x) - inv_mills(y)) <= np.abs(x - y) + 1e-12)

    def test_stays_above_the_asymptote(self):
        """Test lambda(x) + x is positive everywhere"""
        x = np.concatenate([np.linspace(-40.0, 40.0, 2001), [-1e3, -1e4]])
        assert np.all(inv_mills(x) + x > 0.0)


class TestQuantileRoundTrip:
    """Test the quantile undoes the distribution function"""

    def test_quantile_of_cdf(self):
        """Test quantile(cdf(x)) recovers x for |x| <= 6"""
        x = np.linspace(-6.0, 6.0, 1201)
        np.testing.assert_allclose(norm_quantile(norm_cdf(x)), x, rtol=0, atol=1e-8)

    def test_reference_quantiles(self):
        """Test the quantiles behind the usual interval levels"""
        assert norm_quantile(0.5) == 0.0
        assert norm_quantile(0.995) == pytest.approx(2.575829, abs=1e-6)
        assert norm_cdf(-10.0) == pytest.approx(7.62e-24, rel=1e-3)
