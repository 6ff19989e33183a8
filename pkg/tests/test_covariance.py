import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.pam.covariance import (
    CovarianceSpec,
    Regime,
    SpaceCovariance,
    TimeCovariance,
    cell_averaged_gamma,
    cell_averaged_gamma0,
    dalang_check,
    dalang_partial_integral,
    gamma0_eval,
    gamma_eval,
    gamma_fourier,
    kernel_eval,
    mollify_gamma,
    reflect_lag_table,
    regime_classify,
    time_double_integral,
    verify_factorization,
)
from src.utils.errors import ConfigError


def spec(time, space, theta=1.0):
    return CovarianceSpec(time=time, space=space, theta=theta)


class TestConstruction:
    def test_fractional_alpha0_range(self):
        with pytest.raises(ValidationError):
            TimeCovariance.fractional(1.0)
        assert TimeCovariance.fractional(0.0).hurst0 == 1.0

    def test_alpha0_only_for_fractional(self):
        with pytest.raises(ValidationError):
            TimeCovariance(kind="white", alpha0=0.3)

    def test_product_hurst_range(self):
        with pytest.raises(ValidationError):
            SpaceCovariance.product([0.4])
        assert SpaceCovariance.product([0.75, 0.75]).scaling_exponent == pytest.approx(1.0)

    def test_dirac_is_one_dimensional(self):
        with pytest.raises(ValidationError):
            SpaceCovariance(kind="dirac", d=2)

    def test_gamma_at_zero(self):
        assert SpaceCovariance.smooth(2.5, 1.0).gamma_at_zero == 2.5
        assert math.isinf(SpaceCovariance.riesz(0.5).gamma_at_zero)


class TestPointwise:
    def test_riesz_scaling_is_exact(self):
        space = SpaceCovariance.riesz(0.7, 2)
        x = np.array([[0.3, 0.1], [1.0, -2.0], [2.5, 0.4]])
        c = 3.0
        np.testing.assert_allclose(gamma_eval(space, c * x), c ** -0.7 * gamma_eval(space, x), rtol=1e-13)

    def test_product_scaling(self):
        space = SpaceCovariance.product([0.8, 0.6])
        x = np.array([0.4, -1.3])
        assert gamma_eval(space, 2.0 * x) == pytest.approx(2.0 ** -space.scaling_exponent * gamma_eval(space, x))

    def test_singular_points_are_refused(self):
        with pytest.raises(ConfigError, match="singularity"):
            gamma_eval(SpaceCovariance.riesz(0.5), 0.0)
        with pytest.raises(ConfigError, match="singularity"):
            gamma0_eval(TimeCovariance.fractional(0.3), 0.0)

    def test_distributional_kinds_have_no_values(self):
        with pytest.raises(ConfigError, match="distributional"):
            gamma_eval(SpaceCovariance.dirac(), 0.5)
        with pytest.raises(ConfigError, match="distributional"):
            gamma0_eval(TimeCovariance.white(), 0.5)

    def test_gamma0_values(self):
        assert gamma0_eval(TimeCovariance.constant(), 3.0) == 1.0
        assert gamma0_eval(TimeCovariance.fractional(0.5), 4.0) == pytest.approx(0.5)


class TestFourierAndKernels:
    def test_riesz_transform_needs_alpha_below_d(self):
        space = SpaceCovariance.riesz(1.5, 1)
        with pytest.raises(ConfigError):
            gamma_fourier(space, 1.0)
        with pytest.raises(ConfigError):
            kernel_eval(space)

    def test_smooth_spectrum_at_zero_is_mass(self):
        space = SpaceCovariance.smooth(2.0, 0.5)
        assert gamma_fourier(space, 0.0) == pytest.approx(2.0 * math.sqrt(2.0 * math.pi) * 0.5)

    def test_smooth_kernel_factorizes(self):
        kernel = kernel_eval(SpaceCovariance.smooth(1.7, 0.8))
        assert np.max(verify_factorization(kernel, [0.0, 0.5, 1.5])) < 1e-7

    def test_riesz_kernel_factorizes(self):
        kernel = kernel_eval(SpaceCovariance.riesz(0.5, 1))
        assert np.max(verify_factorization(kernel, [0.1, 1.0, 10.0])) < 1e-4

    def test_dirac_kernel_is_distributional(self):
        kernel = kernel_eval(SpaceCovariance.dirac())
        assert kernel.distributional
        with pytest.raises(ConfigError):
            kernel.evaluate(0.1)
        smoothed = kernel_eval(SpaceCovariance.dirac(), epsilon=0.25)
        assert smoothed.evaluate(0.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi * 0.25))

    def test_mollified_dirac_is_heat_kernel(self):
        eps = 0.1
        assert mollify_gamma(SpaceCovariance.dirac(), eps, 0.0) == pytest.approx(1.0 / math.sqrt(4.0 * math.pi * eps))

    def test_mollification_requires_positive_epsilon(self):
        with pytest.raises(ConfigError):
            mollify_gamma(SpaceCovariance.riesz(0.5), 0.0, 1.0)


class TestRegimes:
    def test_fractional_riesz_violation_cites_constraint(self):
        report = regime_classify(spec(TimeCovariance.fractional(0.6), SpaceCovariance.riesz(0.9, 1)))
        assert report.regime == Regime.FRACTIONAL_RIESZ
        assert not report.admissible
        assert any("2*alpha0 + alpha < 2" in v for v in report.violations)

    def test_fractional_riesz_admissible(self):
        report = regime_classify(spec(TimeCovariance.fractional(0.2), SpaceCovariance.riesz(0.6, 1)))
        assert report.admissible

    def test_white_riesz_bound(self):
        report = regime_classify(spec(TimeCovariance.white(), SpaceCovariance.riesz(2.5, 3)))
        assert report.regime == Regime.WHITE_RIESZ
        assert len(report.violations) == 1

    def test_white_dirac(self):
        report = regime_classify(spec(TimeCovariance.white(), SpaceCovariance.dirac()))
        assert report.regime == Regime.WHITE_DIRAC
        assert report.regime.white_in_time
        assert report.admissible

    def test_fractional_product_constraint(self):
        report = regime_classify(spec(TimeCovariance.fractional(0.8), SpaceCovariance.product([0.55, 0.55])))
        assert report.regime == Regime.FRACTIONAL_PRODUCT
        assert any("2*H0 + sum(H_j) > d + 1" in v for v in report.violations)

    def test_fractional_dirac_constraint(self):
        ok = regime_classify(spec(TimeCovariance.fractional(0.4), SpaceCovariance.dirac()))
        bad = regime_classify(spec(TimeCovariance.fractional(0.5), SpaceCovariance.dirac()))
        assert ok.admissible
        assert not bad.admissible

    def test_smooth_is_bounded_class(self):
        report = regime_classify(spec(TimeCovariance.constant(), SpaceCovariance.smooth()))
        assert report.regime == Regime.BOUNDED
        assert report.admissible


class TestDalang:
    def test_decisions(self):
        assert dalang_check(SpaceCovariance.dirac())
        assert dalang_check(SpaceCovariance.riesz(1.5, 3))
        assert not dalang_check(SpaceCovariance.riesz(2.5, 3))
        assert dalang_check(SpaceCovariance.smooth())

    def test_dirac_partial_integral(self):
        assert dalang_partial_integral(SpaceCovariance.dirac(), 10.0) == pytest.approx(2.0 * math.atan(10.0))

    def test_partial_integral_converges_for_admissible_riesz(self):
        space = SpaceCovariance.riesz(0.5, 1)
        a = dalang_partial_integral(space, 1e3)
        b = dalang_partial_integral(space, 1e4)
        assert b > a
        assert (b - a) / b < 0.05


class TestLatticeTables:
    def test_time_tables(self):
        np.testing.assert_array_equal(cell_averaged_gamma0(TimeCovariance.constant(), 0.1, 3), np.ones(4))
        white = cell_averaged_gamma0(TimeCovariance.white(), 0.25, 3)
        np.testing.assert_array_equal(white, [4.0, 0.0, 0.0, 0.0])

    def test_riesz_lag_zero_average(self):
        a, h = 0.5, 0.2
        table = cell_averaged_gamma(SpaceCovariance.riesz(a, 1), h, 2)
        assert table[0] == pytest.approx(2.0 * h ** (-a) / ((1.0 - a) * (2.0 - a)))
        assert table[0] > table[1] > table[2] > 0

    def test_dirac_table(self):
        table = cell_averaged_gamma(SpaceCovariance.dirac(), 0.5, 3)
        np.testing.assert_array_equal(table, [2.0, 0.0, 0.0, 0.0])

    def test_reflect(self):
        np.testing.assert_array_equal(reflect_lag_table(np.array([3.0, 2.0, 1.0])), [1.0, 2.0, 3.0, 2.0, 1.0])
        assert reflect_lag_table(np.ones((3, 3))).shape == (5, 5)

    def test_time_double_integral(self):
        assert time_double_integral(TimeCovariance.white(), 2.0) == 2.0
        assert time_double_integral(TimeCovariance.constant(), 2.0) == 4.0
        assert time_double_integral(TimeCovariance.fractional(0.5), 1.0) == pytest.approx(2.0 / (0.5 * 1.5))
