"""
Property suite behind `pamlab selftest`

Small, fast versions of the exact checks: lattice positivity and monotone
coupling, scan monotonicity, rate-function algebra, specialization
identities, the white/white second moment and two variational anchors.
Each check raises AssertionError with a message on failure.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ..pam.asymptotics import (
    TheoremId,
    TheoremParams,
    limit_constant,
    second_moment_closed_form,
    second_moment_quadrature,
    spatial_scan,
    tail_rate,
    tail_rate_via_legendre,
)
from ..pam.covariance import CovarianceSpec, SpaceCovariance, TimeCovariance, gamma_eval
from ..pam.noise_field import GridSpec
from ..pam.spde_solver import LatticeField, SolveConfig, solve_ensemble
from ..pam.variational import (
    VariationalGrid,
    dirichlet_ground_energy,
    principal_eigenvalue,
    solve_E_time_independent,
)
from ..utils.errors import PamlabError
from ..utils.rng import make_generator, realization_seed

logger = logging.getLogger(__name__)


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


class SelftestSuite:
    """Runs every check and reports PASS/FAIL per check"""

    def __init__(self, seed: int = 0, workers: Optional[int] = None):
        self.seed = seed
        self.workers = workers
        self.grid = GridSpec(d=1, nx=64, dx=0.1, nt=100, dt=0.004)
        self.solve_cfg = SolveConfig(
            spec=CovarianceSpec(time=TimeCovariance.white(), space=SpaceCovariance.dirac(), theta=1.0),
            grid=self.grid,
        )

    def checks(self) -> List[Tuple[str, Callable[[], str]]]:
        return [
            ("positivity", self.check_positivity),
            ("monotone_coupling", self.check_monotone_coupling),
            ("sandwich", self.check_sandwich),
            ("mean_preservation", self.check_mean_preservation),
            ("scan_monotone", self.check_scan_monotone),
            ("legendre_rates", self.check_legendre_rates),
            ("specialization", self.check_specialization),
            ("second_moment", self.check_second_moment),
            ("riesz_scaling", self.check_riesz_scaling),
            ("dirichlet_eigenvalue", self.check_dirichlet_eigenvalue),
            ("dirac_energy", self.check_dirac_energy),
        ]

    def run(self) -> List[CheckResult]:
        results = []
        for name, check in self.checks():
            try:
                detail = check()
                results.append(CheckResult(name=name, passed=True, detail=detail))
                logger.info(f"selftest {name}: PASS {detail}")
            except (AssertionError, PamlabError) as e:
                results.append(CheckResult(name=name, passed=False, detail=str(e)))
                logger.error(f"selftest {name}: FAIL {e}")
        return results

    def _seeds(self, n: int) -> List[int]:
        return [realization_seed(self.seed, i) for i in range(n)]

    def _initial(self, low: float, high: float, stream: int) -> np.ndarray:
        return make_generator(self.seed, stream).uniform(low, high, size=self.grid.spatial_shape)

    def check_positivity(self) -> str:
        fields = solve_ensemble(self.solve_cfg, self._seeds(16), self.workers)
        _expect(bool(np.all(fields > 0)), f"non-positive value {fields.min()}")
        return f"min u = {fields.min():.3g}"

    def check_monotone_coupling(self) -> str:
        u0 = self._initial(0.5, 1.5, 101)
        v0 = u0 + self._initial(0.0, 0.5, 102)
        seeds = self._seeds(16)
        u = solve_ensemble(self.solve_cfg, seeds, self.workers, initial=u0)
        v = solve_ensemble(self.solve_cfg, seeds, self.workers, initial=v0)
        violations = int(np.sum(u > v))
        _expect(violations == 0, f"{violations} sites with u > v")
        return "0 violations"

    def check_sandwich(self) -> str:
        u0 = self._initial(0.5, 2.0, 103)
        seeds = self._seeds(16)
        u = solve_ensemble(self.solve_cfg, seeds, self.workers, initial=u0)
        lo = solve_ensemble(self.solve_cfg, seeds, self.workers, initial=np.full_like(u0, u0.min()))
        hi = solve_ensemble(self.solve_cfg, seeds, self.workers, initial=np.full_like(u0, u0.max()))
        violations = int(np.sum(lo > u) + np.sum(u > hi))
        _expect(violations == 0, f"{violations} sandwich violations")
        return "0 violations"

    def check_mean_preservation(self) -> str:
        fields = solve_ensemble(self.solve_cfg, self._seeds(256), self.workers)
        at_origin = fields[:, self.grid.origin_index]
        mean = float(np.mean(at_origin))
        se = float(np.std(at_origin, ddof=1) / math.sqrt(at_origin.size))
        _expect(abs(mean - 1.0) < 5.0 * se, f"mean {mean:.5f} is {abs(mean - 1) / se:.1f} SE from 1")
        return f"mean {mean:.4f} +/- {se:.4f}"

    def check_scan_monotone(self) -> str:
        fields = solve_ensemble(self.solve_cfg, self._seeds(4), self.workers)
        for values in fields:
            field = LatticeField(values=values, grid=self.grid, time=self.grid.t_final)
            scan = [r.max_log_u for r in spatial_scan(field, [0.5, 1.0, 2.0, 3.0])]
            _expect(all(b >= a for a, b in zip(scan, scan[1:])), f"scan not monotone: {scan}")
        return "monotone on 4 realizations"

    def check_legendre_rates(self) -> str:
        params = TheoremParams(theta=1.3, t=0.7, d=1, alpha0=0.2, alpha=0.8, gamma_zero=1.5, energy=0.4)
        worst = 0.0
        for theorem in (TheoremId.TH5_1, TheoremId.TH5_2, TheoremId.TH5_3, TheoremId.TH5_4):
            literal = tail_rate(theorem, params, 1.7)
            numeric = tail_rate_via_legendre(theorem, params, 1.7)
            worst = max(worst, abs(literal - numeric) / abs(literal))
        _expect(worst < 1e-8, f"largest relative gap {worst:.2e}")
        return f"largest relative gap {worst:.1e}"

    def check_specialization(self) -> str:
        th16 = limit_constant(TheoremId.TH1_6, TheoremParams(theta=1.0, t=1.0, d=1, alpha=1.0, energy=1.0 / 6.0))
        th17 = limit_constant(TheoremId.TH1_7, TheoremParams(theta=1.0, t=1.0))
        _expect(th16 == th17, f"th1.6 {th16!r} != th1.7 {th17!r}")
        return f"{th17:.12g}"

    def check_second_moment(self) -> str:
        closed = second_moment_closed_form(1.0, 0.5)
        quad = second_moment_quadrature(1.0, 0.5)
        _expect(abs(closed - quad) <= 1e-10 * closed, f"closed form {closed} vs quadrature {quad}")
        return f"{closed:.12g}"

    def check_riesz_scaling(self) -> str:
        space = SpaceCovariance.riesz(0.5, 1)
        x = np.array([0.3, 1.0, 2.5])
        lhs = np.asarray(gamma_eval(space, 4.0 * x))
        rhs = 4.0 ** -0.5 * np.asarray(gamma_eval(space, x))
        _expect(bool(np.allclose(lhs, rhs, rtol=1e-12, atol=0.0)), f"{lhs} vs {rhs}")
        return "gamma(4x) = 4^-alpha gamma(x)"

    def check_dirichlet_eigenvalue(self) -> str:
        half_width = 5.0
        lam = principal_eigenvalue(np.zeros(63), half_width)
        exact = -dirichlet_ground_energy(63, half_width)
        continuum = -math.pi ** 2 / (8.0 * half_width ** 2)
        _expect(abs(lam - exact) <= 1e-8 * abs(exact), f"lambda {lam} vs lattice value {exact}")
        _expect(abs(lam - continuum) <= 1e-3 * abs(continuum), f"lambda {lam} vs continuum {continuum}")
        return f"lambda = {lam:.8g}"

    def check_dirac_energy(self) -> str:
        grid = VariationalGrid(d=1, nx=255, half_width=16.0, n_starts=1, tol=1e-7)
        value = solve_E_time_independent(SpaceCovariance.dirac(), grid, seed=self.seed, workers=1).value
        _expect(abs(value - 1.0 / 6.0) <= 2e-2 / 6.0, f"E = {value}, expected 1/6")
        return f"E = {value:.6f}"
