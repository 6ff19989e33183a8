import math

import numpy as np
import pytest
from scipy.stats import norm

from src.pam.covariance import CovarianceSpec, SpaceCovariance, TimeCovariance
from src.pam.feynman_kac import (
    annealed_moment_fractional,
    annealed_moment_white_time,
    fk_eigenvalue_bound,
    hamiltonian_matrix,
    killed_path_expectation,
    PathEnsemble,
    potential_along_paths,
    quenched_u_estimate,
    sample_paths,
)
from src.pam.noise_field import FieldRealization, GridSpec, sample_stationary_field
from src.utils.errors import ConfigError, NumericalError
from src.utils.rng import realization_seed

# γ ≡ 1 to double precision on any path
FLAT = SpaceCovariance.smooth(1.0, 1e12)


class TestPaths:
    def test_shape_and_start(self):
        paths = sample_paths(5, 10, 0.01, d=2, seed=3, start=np.array([1.0, -1.0]))
        pos = paths.positions()
        assert pos.shape == (5, 11, 2)
        np.testing.assert_array_equal(pos[:, 0], np.tile([1.0, -1.0], (5, 1)))
        assert paths.t == pytest.approx(0.1)

    def test_streams_are_independent(self):
        a = sample_paths(4, 8, 0.1, seed=1).increments
        b = sample_paths(4, 8, 0.1, seed=1, stream=(1,)).increments
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, sample_paths(4, 8, 0.1, seed=1).increments)

    def test_invalid_ensemble(self):
        with pytest.raises(ConfigError):
            sample_paths(0, 8, 0.1)

    def test_endpoint_variance(self):
        # 40000 paths in ten streams; SE of the sample variance is about 0.7%
        ends = np.concatenate([
            sample_paths(4000, 10, 0.1, seed=5, stream=(s,)).positions()[:, -1, 0] for s in range(10)
        ])
        assert ends.var() == pytest.approx(1.0, rel=0.03)


class TestHamiltonian:
    def test_white_time_diagonal_is_undefined(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=FLAT)
        H = hamiltonian_matrix(sample_paths(3, 8, 0.125, seed=1), spec)
        assert H.entry(0, 1) == pytest.approx(1.0)
        assert H.total() == pytest.approx(3.0)
        with pytest.raises(ConfigError, match="diagonal"):
            H.entry(1, 1)

    def test_constant_time_interaction(self):
        spec = CovarianceSpec(time=TimeCovariance.constant(), space=FLAT)
        H = hamiltonian_matrix(sample_paths(2, 8, 0.125, seed=1), spec)
        np.testing.assert_allclose(H.Q, np.ones((2, 2)))
        assert H.total() == pytest.approx(4.0)

    def test_singular_space_needs_mollification(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac())
        with pytest.raises(ConfigError, match="epsilon"):
            hamiltonian_matrix(sample_paths(2, 8, 0.1, seed=1), spec)

    def test_gram_inequalities(self):
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=SpaceCovariance.smooth(1.0, 1.0))
        for seed in range(100):
            Q = hamiltonian_matrix(sample_paths(3, 8, 0.125, seed=seed), spec).Q
            np.testing.assert_array_equal(Q, Q.T)
            diag = np.diag(Q)
            assert np.all(Q <= np.sqrt(np.outer(diag, diag)) * (1.0 + 1e-12))
            assert Q.sum() <= 3 * diag.sum() * (1.0 + 1e-12)

    def test_coincident_paths_see_the_heat_kernel(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac())
        t, eps = 0.5, 0.01
        paths = PathEnsemble(increments=np.zeros((2, 16, 1)), dt=t / 16, start=np.zeros((2, 1)))
        H = hamiltonian_matrix(paths, spec, epsilon=eps)
        assert H.entry(0, 1) == pytest.approx(t / math.sqrt(4.0 * math.pi * eps), rel=1e-12)


class TestAnnealedMoments:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_constant_covariance_is_exact(self, m):
        spec = CovarianceSpec(time=TimeCovariance.constant(), space=FLAT, theta=1.0)
        est = annealed_moment_fractional(m, 1.0, spec, n_mc=64, seed=1, n_steps=8)
        assert est.log_value == pytest.approx(m * m / 2.0, abs=1e-12)
        assert est.stderr == 0.0

    @pytest.mark.parametrize("m, expected", [(2, 0.5), (3, 1.5)])
    def test_white_time_flat_covariance_is_exact(self, m, expected):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=FLAT, theta=1.0)
        est = annealed_moment_white_time(m, 0.5, spec, [0.01], n_mc=64, seed=1, n_steps=8)
        assert est.log_value == pytest.approx(expected, abs=1e-12)
        assert not est.extrapolated

    def test_fractional_estimator_refuses_white_time(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=FLAT)
        with pytest.raises(ConfigError):
            annealed_moment_fractional(2, 1.0, spec, n_mc=8, seed=1)

    def test_white_estimator_refuses_pointwise_time(self):
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=FLAT)
        with pytest.raises(ConfigError):
            annealed_moment_white_time(2, 1.0, spec, [0.1], n_mc=8, seed=1)

    def test_singular_space_needs_three_epsilons(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac())
        with pytest.raises(ConfigError, match="three"):
            annealed_moment_white_time(2, 1.0, spec, [0.01, 0.02], n_mc=8, seed=1)

    def test_epsilon_schedule_must_be_positive(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=FLAT)
        with pytest.raises(ConfigError):
            annealed_moment_white_time(2, 1.0, spec, [0.0, 0.1], n_mc=8, seed=1)

    def test_estimate_does_not_depend_on_workers(self):
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=SpaceCovariance.smooth(1.0, 1.0))
        one = annealed_moment_fractional(2, 0.5, spec, n_mc=600, seed=4, n_steps=8, workers=1)
        many = annealed_moment_fractional(2, 0.5, spec, n_mc=600, seed=4, n_steps=8, workers=3)
        assert one.value == many.value

    def test_normalized_moments_grow_with_m(self):
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=SpaceCovariance.smooth(1.0, 1.0))
        ests = [annealed_moment_fractional(m, 0.5, spec, n_mc=2000, seed=6, n_steps=8) for m in (1, 2, 3)]
        for low, high in zip(ests, ests[1:]):
            tol = 3.0 * (low.log_stderr / low.m + high.log_stderr / high.m)
            assert high.log_value / high.m >= low.log_value / low.m - tol

    def test_jensen_lower_bound(self):
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=SpaceCovariance.riesz(0.5, 1))
        t, n_mc, n_steps, eps = 0.2, 128, 8, 0.01
        est = annealed_moment_fractional(2, t, spec, n_mc=n_mc, seed=8, n_steps=n_steps, epsilon=eps)
        # the single batch the estimator draws
        paths = sample_paths(2 * n_mc, n_steps, t / n_steps, 1, seed=8, stream=(0,))
        q12 = [
            hamiltonian_matrix(PathEnsemble(increments=paths.increments[2 * i:2 * i + 2], dt=paths.dt,
                                            start=paths.start[2 * i:2 * i + 2]), spec, eps).entry(0, 1)
            for i in range(n_mc)
        ]
        assert est.value >= math.exp(spec.theta ** 2 * float(np.mean(q12))) * (1.0 - 1e-12)

    def test_moments_grow_as_epsilon_shrinks(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac(), theta=1.0)
        est = annealed_moment_white_time(2, 0.25, spec, [0.0025, 0.005, 0.01], n_mc=512, seed=9, n_steps=64)
        assert [e for e, _, _ in est.schedule] == [0.01, 0.005, 0.0025]
        assert est.epsilon_monotone is True

    @pytest.mark.slow
    def test_white_dirac_second_moment(self):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac(), theta=1.0)
        t = 0.5
        exact = 2.0 * math.exp(t / 4.0) * norm.cdf(math.sqrt(t / 2.0))
        est = annealed_moment_white_time(2, t, spec, [0.0025, 0.005, 0.01], n_mc=4096, seed=7)
        assert est.extrapolated
        assert est.value == pytest.approx(exact, rel=0.08)


class TestQuenched:
    def _field(self, value):
        grid = GridSpec(d=1, nx=201, dx=0.1, nt=10, dt=0.01)
        spec = CovarianceSpec(time=TimeCovariance.constant(), space=SpaceCovariance.smooth(), theta=1.0)
        return FieldRealization(values=np.full((grid.nt, grid.nx), value), spec=spec, grid=grid, seed=0)

    def test_zero_field(self):
        assert quenched_u_estimate(self._field(0.0), 0.0, n_paths=32, seed=1) == pytest.approx(1.0)

    def test_constant_field(self):
        field = self._field(2.0)
        assert quenched_u_estimate(field, 0.0, n_paths=32, seed=1) == pytest.approx(math.exp(2.0 * 0.1))

    def test_initial_condition_at_the_endpoint(self):
        field = self._field(0.0)
        value = quenched_u_estimate(field, 0.0, n_paths=4000, seed=2, initial=lambda p: p[:, 0] ** 2)
        # E B(t)^2 = t = 0.1
        assert value == pytest.approx(0.1, rel=0.1)

    @pytest.fixture(scope="class")
    def random_fields(self):
        grid = GridSpec(d=1, nx=201, dx=0.1, nt=10, dt=0.01)
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.5), space=SpaceCovariance.smooth(1.0, 1.0), theta=1.0)
        return [sample_stationary_field(spec, grid, realization_seed(31, i)) for i in range(200)]

    def test_time_reversal_in_law(self, random_fields):
        diffs = np.array([
            quenched_u_estimate(f, 0.0, n_paths=64, seed=i, reverse_time=True)
            - quenched_u_estimate(f, 0.0, n_paths=64, seed=i, reverse_time=False)
            for i, f in enumerate(random_fields)
        ])
        assert abs(diffs.mean()) < 4.0 * diffs.std(ddof=1) / math.sqrt(diffs.size)

    def test_quenched_average_matches_annealed_first_moment(self, random_fields):
        quenched = np.array([quenched_u_estimate(f, 0.0, n_paths=64, seed=i) for i, f in enumerate(random_fields)])
        q_se = quenched.std(ddof=1) / math.sqrt(quenched.size)
        spec = random_fields[0].spec
        annealed = annealed_moment_fractional(1, 0.1, spec, n_mc=4000, seed=32, n_steps=10)
        assert abs(quenched.mean() - annealed.value) < 4.0 * math.hypot(q_se, annealed.stderr)

    def test_paths_outside_the_domain(self):
        values = np.zeros((4, 5))
        positions = np.full((2, 5, 1), 10.0)
        with pytest.raises(NumericalError, match="domain"):
            potential_along_paths(values, 0.1, 2, positions)


class TestEigenvalueBound:
    def test_bound_for_zero_potential(self):
        bound = fk_eigenvalue_bound(np.zeros(31), 1.0, 1.0)
        h = 2.0 / 32
        lattice_energy = (1.0 - math.cos(math.pi * h / 2.0)) / h ** 2
        assert bound == pytest.approx(2.0 * math.exp(-lattice_energy))

    def test_square_time_sliced_table_in_one_dimension(self):
        h = 2.0 / 16
        lattice_energy = (1.0 - math.cos(math.pi * h / 2.0)) / h ** 2
        sliced = fk_eigenvalue_bound(np.zeros((15, 15)), 1.0, 1.0, d=1)
        assert sliced == pytest.approx(2.0 * math.exp(-lattice_energy))
        assert sliced == pytest.approx(fk_eigenvalue_bound(np.zeros(15), 1.0, 1.0))
        # without d a square table is a two-dimensional box
        assert fk_eigenvalue_bound(np.zeros((15, 15)), 1.0, 1.0) == pytest.approx(4.0 * math.exp(-2.0 * lattice_energy))

    def test_table_rank_must_match_dimension(self):
        with pytest.raises(ConfigError, match="d=3"):
            fk_eigenvalue_bound(np.zeros((15, 15)), 1.0, 1.0, d=3)

    def test_killed_paths_stay_below_the_bound(self):
        f = np.zeros(31)
        est, se = killed_path_expectation(f, 1.0, 1.0, n_paths=4000, seed=3, n_steps=200)
        assert 0.0 < est < fk_eigenvalue_bound(f, 1.0, 1.0)
        assert se > 0.0

    def test_time_slices_must_divide_steps(self):
        with pytest.raises(ConfigError, match="multiple"):
            killed_path_expectation(np.zeros((3, 15)), 1.0, 1.0, n_paths=10, seed=1, n_steps=10)
