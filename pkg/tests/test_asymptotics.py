import math

import numpy as np
import pytest

from src.pam.asymptotics import (
    THEOREM_REGIMES,
    MomentGrowthResult,
    ScanRecord,
    TheoremId,
    TheoremParams,
    fit_exponent,
    half_moment_rate,
    half_moment_rate_numeric,
    holds_in,
    legendre,
    legendre_numeric,
    limit_constant,
    long_time_constant,
    long_time_moment_rate,
    moment_constant,
    moment_exponent,
    moment_growth_experiment,
    second_moment_closed_form,
    second_moment_quadrature,
    second_moment_rates,
    sobolev_energy,
    spatial_max_experiment,
    spatial_scan,
    tail_rate,
    tail_rate_via_legendre,
)
from src.pam.covariance import CovarianceSpec, Regime, SpaceCovariance, TimeCovariance
from src.pam.feynman_kac import MomentEstimate
from src.pam.noise_field import GridSpec
from src.pam.spde_solver import LatticeField, SolveConfig
from src.utils.errors import ConfigError, NumericalError
from src.utils.rng import realization_seed


class TestConstants:
    def test_white_dirac_limit(self):
        value = limit_constant(TheoremId.TH1_7, TheoremParams(theta=1.0, t=1.0))
        assert value == pytest.approx(0.75 * (2.0 / 3.0) ** (1.0 / 3.0))
        assert value == pytest.approx(0.655185, abs=1e-6)

    def test_scaling_law_reduces_to_the_dirac_law(self):
        params = TheoremParams(theta=1.3, t=2.0, alpha=1.0, energy=1.0 / 6.0)
        assert limit_constant(TheoremId.TH1_6, params) == pytest.approx(
            limit_constant(TheoremId.TH1_7, params), rel=1e-14)

    def test_fractional_law_at_flat_time_matches_the_time_independent_law(self):
        params = TheoremParams(theta=0.8, t=1.5, alpha=0.6, alpha0=0.0, energy=0.3)
        assert limit_constant(TheoremId.TH1_2, params) == pytest.approx(
            limit_constant(TheoremId.COR1_5B, params), rel=1e-14)

    def test_bounded_law(self):
        params = TheoremParams(theta=2.0, t=1.0, gamma_zero=0.5, time_integral=1.0)
        assert limit_constant(TheoremId.TH1_1, params) == pytest.approx(2.0)

    def test_missing_energy(self):
        with pytest.raises(ConfigError, match="solve"):
            limit_constant(TheoremId.TH1_2, TheoremParams(alpha=0.5))

    def test_tail_ids_are_not_limit_laws(self):
        with pytest.raises(ConfigError):
            limit_constant(TheoremId.TH5_1, TheoremParams(gamma_zero=1.0))

    def test_dirac_moment_growth(self):
        params = TheoremParams(theta=1.0, t=2.0, dirac=True)
        assert moment_exponent(TheoremId.PROP3_3, params) == pytest.approx(3.0)
        assert moment_constant(TheoremId.PROP3_3, params) == pytest.approx(1.0 / 12.0)

    def test_long_time_dirac_matches_scaling_form(self):
        dirac = long_time_constant("dirac", TheoremParams(theta=1.0))
        scaling = long_time_constant("scaling", TheoremParams(theta=1.0, alpha=1.0, energy=1.0 / 6.0))
        assert dirac == pytest.approx(0.75 * (2.0 / 3.0) ** (1.0 / 3.0))
        assert scaling == pytest.approx(dirac, rel=1e-12)

    def test_long_time_bounded(self):
        params = TheoremParams(theta=2.0, d=1, gamma_zero=0.5)
        assert long_time_constant("bounded", params) == pytest.approx(2.0)
        with pytest.raises(ConfigError, match="unknown long-time kind"):
            long_time_constant("riesz", params)

    def test_sobolev_energy(self):
        assert sobolev_energy(1.0, 2.0) == pytest.approx(2.0)
        with pytest.raises(ConfigError):
            sobolev_energy(2.0, 1.0)

    def test_long_time_moment_rate(self):
        params = TheoremParams(theta=1.0, t=1.0, alpha=1.0, energy=1.0 / 6.0)
        assert long_time_moment_rate(1, params) == pytest.approx(1.0 / 24.0)
        assert long_time_moment_rate(2, params) == pytest.approx(1.0 / 3.0)
        assert long_time_moment_rate(1, params) == pytest.approx(moment_constant(TheoremId.PROP3_2, params))

    def test_regimes(self):
        assert holds_in(TheoremId.TH1_7, Regime.WHITE_DIRAC)
        assert not holds_in(TheoremId.TH1_7, Regime.BOUNDED)
        assert set(THEOREM_REGIMES) == set(TheoremId)

    def test_alpha0_must_stay_below_one(self):
        with pytest.raises(ValueError):
            TheoremParams(alpha0=1.0)


class TestLegendre:
    def test_closed_form(self):
        value, argmax = legendre(2.0, 1.0, 2.0)
        assert value == pytest.approx(1.0)
        assert argmax == pytest.approx(1.0)

    def test_zero_lambda(self):
        assert legendre(3.0, 0.5, 0.0) == (0.0, 0.0)

    @pytest.mark.parametrize("p, C0, lam", [(1.0, 1.0, 1.0), (2.0, 0.0, 1.0), (2.0, 1.0, -1.0)])
    def test_invalid(self, p, C0, lam):
        with pytest.raises(ConfigError):
            legendre(p, C0, lam)

    @pytest.mark.parametrize("p, C0, lam", [(2.0, 1.0, 2.0), (3.0, 1.0 / 12.0, 0.7), (1.5, 2.0, 5.0)])
    def test_numeric_agrees(self, p, C0, lam):
        assert legendre_numeric(p, C0, lam)[0] == pytest.approx(legendre(p, C0, lam)[0], rel=1e-8)

    def test_half_moment_rate(self):
        assert half_moment_rate(2.0, 1.0, 2.0) == pytest.approx(1.5 * 2.0 ** (1.0 / 3.0))
        assert half_moment_rate_numeric(2.0, 1.0, 2.0) == pytest.approx(half_moment_rate(2.0, 1.0, 2.0), rel=1e-6)


class TestTails:
    def test_white_dirac_tail(self):
        assert tail_rate(TheoremId.TH5_4, TheoremParams(theta=1.0, t=6.0), 3.0) == pytest.approx(-4.0)

    @pytest.mark.parametrize("theorem, params", [
        (TheoremId.TH5_1, TheoremParams(theta=1.2, t=1.0, gamma_zero=2.0, time_integral=1.5)),
        (TheoremId.TH5_2, TheoremParams(theta=0.9, t=2.0, alpha=0.7, alpha0=0.4, energy=0.2)),
        (TheoremId.TH5_3, TheoremParams(theta=1.1, t=3.0, alpha=1.2, energy=0.35)),
        (TheoremId.TH5_4, TheoremParams(theta=0.7, t=1.5)),
    ])
    @pytest.mark.parametrize("lam", [0.5, 2.0])
    def test_literal_rate_is_the_legendre_transform(self, theorem, params, lam):
        assert tail_rate(theorem, params, lam) == pytest.approx(tail_rate_via_legendre(theorem, params, lam), rel=1e-8)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ConfigError):
            tail_rate(TheoremId.TH5_4, TheoremParams(), 0.0)

    def test_moment_ids_are_not_tails(self):
        with pytest.raises(ConfigError):
            tail_rate_via_legendre(TheoremId.PROP3_3, TheoremParams(dirac=True), 1.0)


class TestSecondMoment:
    @pytest.mark.parametrize("theta, t", [(1.0, 0.5), (1.0, 4.0), (0.5, 10.0)])
    def test_quadrature_matches_closed_form(self, theta, t):
        assert second_moment_quadrature(theta, t) == pytest.approx(second_moment_closed_form(theta, t), rel=1e-10)

    def test_rates(self):
        rates = second_moment_rates(1.0)
        assert rates["exact"] == 0.25
        assert rates["large_m_prediction"] == pytest.approx(1.0 / 3.0)


def _exp_abs_field():
    grid = GridSpec(d=1, nx=11, dx=1.0)
    return LatticeField(values=np.exp(np.abs(grid.positions())), grid=grid, time=1.0)


class TestScan:
    def test_running_maximum(self):
        records = spatial_scan(_exp_abs_field(), [1.0, 2.5, 5.0], seed=3)
        assert [r.max_log_u for r in records] == pytest.approx([1.0, 2.0, 5.0])
        assert all(r.seed == 3 for r in records)

    def test_radii_must_increase(self):
        with pytest.raises(ConfigError):
            spatial_scan(_exp_abs_field(), [2.0, 1.0])

    def test_radius_must_fit_the_grid(self):
        with pytest.raises(ConfigError, match="covered"):
            spatial_scan(_exp_abs_field(), [1.0, 6.0])

    def test_non_positive_values(self):
        grid = GridSpec(d=1, nx=11, dx=1.0)
        field = LatticeField(values=-np.ones(11), grid=grid, time=1.0)
        with pytest.raises(NumericalError):
            spatial_scan(field, [1.0])

    def test_ensemble_scan_is_monotone(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac())
        cfg = SolveConfig(spec=spec, grid=GridSpec(d=1, nx=256, dx=1.0, nt=4, dt=0.05))
        records = spatial_max_experiment(cfg, [realization_seed(0, i) for i in range(2)], [2.0, 8.0, 32.0, 100.0])
        assert len(records) == 8
        for i in (0, 4):
            values = [r.max_log_u for r in records[i:i + 4]]
            assert values == sorted(values)


class TestFit:
    def _records(self, exponent, intercept, radii):
        return [ScanRecord(R=R, max_log_u=intercept * math.log(R) ** exponent) for R in radii]

    def test_exact_power_law(self):
        fit = fit_exponent(self._records(0.5, 2.0, [10.0, 100.0, 1e3, 1e4]), n_boot=200)
        assert fit.exponent == pytest.approx(0.5, abs=1e-10)
        assert fit.intercept == pytest.approx(2.0, rel=1e-10)
        assert fit.half_width == pytest.approx(0.0, abs=1e-8)
        assert not fit.nonlinear

    def test_too_few_records(self):
        with pytest.raises(ConfigError, match="insufficient spread"):
            fit_exponent(self._records(0.5, 1.0, [10.0, 100.0, 1e3]))

    def test_too_narrow(self):
        with pytest.raises(ConfigError, match="insufficient spread"):
            fit_exponent(self._records(0.5, 1.0, [10.0, 20.0, 40.0, 80.0]))

    def test_radii_above_one(self):
        with pytest.raises(ConfigError):
            fit_exponent(self._records(0.5, 1.0, [1.0, 10.0, 100.0, 1e3]))


class TestMomentGrowth:
    @staticmethod
    def _cubic(m):
        log_value = 0.3 * m ** 3
        return MomentEstimate(m=m, value=math.exp(log_value), log_value=log_value, stderr=0.0, n_samples=1)

    def test_recovers_exponent_and_constant(self):
        result = moment_growth_experiment("(2)x(III)", 1.0, 1.0, [1, 2, 3, 4], self._cubic)
        assert isinstance(result, MomentGrowthResult)
        assert result.exponent == pytest.approx(3.0)
        assert result.constant == pytest.approx(0.3)
        assert all(row.reliable for row in result.rows)

    def test_heavy_tails_are_excluded(self):
        def estimator(m):
            est = self._cubic(m)
            return est.model_copy(update={"heavy_tail": m > 1})

        with pytest.raises(NumericalError):
            moment_growth_experiment("(2)x(III)", 1.0, 1.0, [1, 2, 3], estimator)
