import math

import numpy as np
import pytest

from src.pam.covariance import CovarianceSpec, SpaceCovariance, TimeCovariance
from src.pam.variational import (
    VariationalGrid,
    dirichlet_ground_energy,
    dirichlet_laplacian,
    e_from_m,
    m_from_e,
    principal_eigenvalue,
    solve_E_time_dependent,
    solve_E_time_independent,
    solve_M,
)
from src.utils.errors import AdmissibilityError, ConfigError
from src.utils.rng import make_generator

DIRAC = SpaceCovariance.dirac()


@pytest.fixture
def small_grid():
    # sech-shaped optimizer of width 1 fits in the box without doubling
    return VariationalGrid(d=1, nx=127, half_width=8.0, n_starts=1, tol=1e-6, mass_tol=1e-3)


class TestGrid:
    def test_nodes_are_interior(self):
        grid = VariationalGrid(nx=9, half_width=1.0)
        nodes = grid.nodes()
        assert grid.h == pytest.approx(0.2)
        assert nodes[0] == pytest.approx(-0.8)
        assert nodes[-1] == pytest.approx(0.8)

    def test_doubling_keeps_spacing(self):
        grid = VariationalGrid(nx=63, half_width=4.0)
        wide = grid.doubled()
        assert wide.half_width == 8.0
        assert wide.h == pytest.approx(grid.h)


class TestDirichlet:
    def test_laplacian_stencil(self):
        lap = dirichlet_laplacian(4, 0.5).toarray()
        assert lap[0, 0] == pytest.approx(-8.0)
        assert lap[0, 1] == pytest.approx(4.0)
        assert lap[0, 3] == 0.0

    def test_two_dimensional_laplacian(self):
        assert dirichlet_laplacian(5, 0.1, d=2).shape == (25, 25)

    def test_principal_eigenvalue_of_zero_potential(self):
        lam = principal_eigenvalue(np.zeros(63), 5.0)
        assert lam == pytest.approx(-dirichlet_ground_energy(63, 5.0), rel=1e-8)
        assert lam == pytest.approx(-math.pi ** 2 / (8.0 * 25.0), rel=1e-3)

    def test_constant_potential_shifts_the_eigenvalue(self):
        base = principal_eigenvalue(np.zeros(31), 2.0)
        assert principal_eigenvalue(np.full(31, 0.7), 2.0) == pytest.approx(base + 0.7, rel=1e-8)

    def test_two_dimensional_ground_energy(self):
        lam = principal_eigenvalue(np.zeros((15, 15)), 1.0)
        assert lam == pytest.approx(-dirichlet_ground_energy(15, 1.0, d=2), rel=1e-8)

    def test_principal_eigenvalue_is_monotone_in_the_potential(self):
        gen = make_generator(4)
        f = gen.uniform(-1.0, 1.0, 31)
        bump = gen.uniform(0.0, 0.5, 31)
        assert principal_eigenvalue(f + bump, 2.0) >= principal_eigenvalue(f, 2.0)
        assert principal_eigenvalue(f - bump, 2.0) <= principal_eigenvalue(f, 2.0)


class TestConversions:
    @pytest.mark.parametrize("alpha", [0.3, 1.0, 1.7])
    def test_inverse(self, alpha):
        assert e_from_m(m_from_e(0.42, alpha), alpha) == pytest.approx(0.42, rel=1e-12)

    def test_dirac_exponent(self):
        assert e_from_m(0.75, 1.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("alpha", [0.0, 2.0, 2.5])
    def test_outside_range(self, alpha):
        with pytest.raises(ConfigError):
            e_from_m(1.0, alpha)
        with pytest.raises(ConfigError):
            m_from_e(1.0, alpha)


class TestEnergy:
    def test_dirac_energy(self, small_grid):
        result = solve_E_time_independent(DIRAC, small_grid)
        assert result.value == pytest.approx(1.0 / 6.0, rel=2e-2)
        np.testing.assert_allclose(result.profile.slice_norms(), 1.0, rtol=1e-10)
        assert result.residual <= 1e-6
        assert result.history[-1] == result.value

    def test_history_is_non_decreasing(self, small_grid):
        history = solve_E_time_independent(DIRAC, small_grid).history
        assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))

    def test_coupling_scales_the_interaction(self, small_grid):
        # g -> g_k rescaling: E(c) = c^2 E(1) for the Dirac interaction
        one = solve_E_time_independent(DIRAC, small_grid).value
        two = solve_E_time_independent(DIRAC, small_grid, coupling=2.0).value
        assert two == pytest.approx(4.0 * one, rel=2e-2)

    def test_starts_agree(self, small_grid):
        grid = small_grid.model_copy(update={"n_starts": 3})
        result = solve_E_time_independent(DIRAC, grid)
        assert len(result.start_values) == 3
        spread = max(result.start_values) - min(result.start_values)
        assert spread <= 10.0 * grid.tol * (1.0 + abs(result.value))

    def test_translated_start_gives_the_same_energy(self, small_grid):
        grid = small_grid.model_copy(update={"mass_tol": 1e-2})
        centred = solve_E_time_independent(DIRAC, grid).value
        shifted = solve_E_time_independent(DIRAC, grid, shift=1.0).value
        assert shifted == pytest.approx(centred, rel=1e-5)

    def test_refinement_changes_little(self, small_grid):
        coarse = solve_E_time_independent(DIRAC, small_grid).value
        fine = solve_E_time_independent(DIRAC, small_grid.model_copy(update={"nx": 255})).value
        assert fine == pytest.approx(coarse, rel=5e-3)

    def test_product_covariance_is_refused(self, small_grid):
        with pytest.raises(ConfigError):
            solve_E_time_independent(SpaceCovariance.product([0.7]), small_grid)

    def test_riesz_exponent_bound(self, small_grid):
        with pytest.raises(AdmissibilityError):
            solve_E_time_independent(SpaceCovariance.riesz(1.5, 1), small_grid)

    def test_time_dependent_refuses_white_time(self, small_grid):
        spec = CovarianceSpec(time=TimeCovariance.white(), space=DIRAC)
        with pytest.raises(ConfigError):
            solve_E_time_dependent(spec, small_grid)

    @pytest.mark.slow
    def test_time_dependent_with_flat_time_covariance(self):
        grid = VariationalGrid(d=1, nx=127, half_width=8.0, ns=4, n_starts=1, tol=1e-6, mass_tol=1e-3)
        spec = CovarianceSpec(time=TimeCovariance.fractional(0.0), space=DIRAC)
        dependent = solve_E_time_dependent(spec, grid).value
        independent = solve_E_time_independent(DIRAC, grid).value
        assert dependent == pytest.approx(independent, rel=1e-5)

    @pytest.mark.slow
    def test_dirac_energy_on_the_default_box(self):
        grid = VariationalGrid(d=1, nx=255, half_width=16.0, n_starts=1, tol=1e-7)
        assert solve_E_time_independent(DIRAC, grid).value == pytest.approx(1.0 / 6.0, rel=2e-2)


class TestM:
    def test_beta_must_be_positive(self, small_grid):
        with pytest.raises(ConfigError):
            solve_M(0.0, DIRAC, small_grid)

    def test_truncation_needs_smoothing(self, small_grid):
        with pytest.raises(ConfigError):
            solve_M(1.0, DIRAC, small_grid, truncation=2.0)

    @pytest.mark.slow
    def test_m_converts_to_the_dirac_energy(self):
        grid = VariationalGrid(d=1, nx=319, half_width=20.0, n_starts=1, tol=1e-7)
        m1 = solve_M(1.0, DIRAC, grid).value
        assert m1 == pytest.approx(0.75 * (1.0 / 6.0) ** (1.0 / 3.0), rel=2e-2)
        assert e_from_m(m1, 1.0) == pytest.approx(1.0 / 6.0, rel=5e-2)

    @pytest.mark.slow
    def test_scaling_in_beta(self):
        # the dirac interaction has exponent alpha = 1, so M(beta) = beta^{4/3} M(1)
        grid = VariationalGrid(d=1, nx=319, half_width=20.0, n_starts=1, tol=1e-7)
        ratio = solve_M(2.0, DIRAC, grid).value / solve_M(1.0, DIRAC, grid).value
        assert ratio == pytest.approx(2.0 ** (4.0 / 3.0), rel=2e-2)
