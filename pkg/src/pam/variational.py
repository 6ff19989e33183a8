"""
Variational constants

Maximizes the energy functionals that fix the limit constants:

    E(d,γ)        = sup_g { c∬γ(x−y)g²(x)g²(y) − ½∫|∇g|² }
    E(α₀,d,γ)     = sup_g { ∬∬γ(x−y)|r−s|^{−α₀}g²(r,x)g²(s,y) − ½∬|∇ₓg|² }
    M(β)          = sup_g { β(∬γ(x−y)g²(x)g²(y))^{1/2} − ½∫|∇g|² }

over L²-normalized g (per time slice) with zero boundary values on the box
(−L, L)^d. The optimizer is a semi-implicit normalized gradient flow,

    (I − τΔ_h)g̃ = g + τN(g)g,   g ← g̃/‖g̃‖ slice by slice,

with τ grown on accepted steps and halved on rejected ones. Interactions use
the cell-averaged covariance tables shared with the noise sampler.

Also here: the principal Dirichlet eigenvalue λ_D(f) of ½Δ + f by shifted
inverse power iteration, and the E ↔ M(1) conversion.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import signal, sparse
from scipy.sparse import linalg as sparse_linalg

from ..utils.errors import AdmissibilityError, ConfigError, NumericalError
from ..utils.parallel import parallel_map
from ..utils.rng import make_generator
from .covariance import (
    CovarianceSpec,
    SpaceCovariance,
    SpaceKind,
    TimeKind,
    cell_averaged_gamma,
    cell_averaged_gamma0,
    kernel_eval,
    reflect_lag_table,
    regime_classify,
)

logger = logging.getLogger(__name__)

MODULE = "variational"

TAU_START = 0.1
TAU_MAX = 10.0
TAU_MIN = 1e-12
ASCENT_SLACK = 1e-14


class VariationalGrid(BaseModel):
    """Interior nodes x_i = −L + i·h, i = 1..nx, h = 2L/(nx+1), per axis"""

    model_config = ConfigDict(frozen=True)

    d: int = Field(default=1, ge=1, le=2)
    nx: int = Field(default=256, ge=8)
    half_width: float = Field(default=10.0, gt=0)
    ns: int = Field(default=16, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=50_000, ge=1)
    n_starts: int = Field(default=5, ge=1)
    mass_tol: float = Field(default=1e-6, gt=0)
    max_doublings: int = Field(default=3, ge=0)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.nx + 1)

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return (self.nx,) * self.d

    def nodes(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(1, self.nx + 1)

    def doubled(self) -> "VariationalGrid":
        """Twice the box at the same spacing"""
        return self.model_copy(update={"half_width": 2.0 * self.half_width, "nx": 2 * self.nx + 1})


@dataclass
class Profile:
    """Optimizer g on the box; slices along the first axis"""

    g: np.ndarray  # (ns, nx, ..., nx)
    dx: float
    ds: float
    half_width: float

    def slice_norms(self) -> np.ndarray:
        d = self.g.ndim - 1
        return np.sum(self.g ** 2, axis=tuple(range(1, d + 1))) * self.dx ** d


@dataclass
class VariationalResult:
    problem: str
    value: float
    profile: Profile
    iterations: int
    residual: float
    start_values: List[float] = field(default_factory=list)
    history: List[float] = field(default_factory=list)

    @property
    def half_width(self) -> float:
        return self.profile.half_width

    @property
    def nx(self) -> int:
        return self.profile.g.shape[1]


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------

def dirichlet_laplacian(n: int, h: float, d: int = 1) -> sparse.csr_matrix:
    """Δ_h with zero boundary values on n^d interior nodes"""
    lap1 = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / (h * h)
    if d == 1:
        return lap1.tocsr()
    return sparse.kronsum(lap1, lap1).tocsr()


def dirichlet_ground_energy(n: int, half_width: float, d: int = 1) -> float:
    """Smallest eigenvalue of −½Δ_h on the box"""
    h = 2.0 * half_width / (n + 1)
    return d * (1.0 - math.cos(math.pi / (n + 1))) / (h * h)


def principal_eigenvalue(f: np.ndarray, half_width: float, tol: float = 1e-12,
                         max_iter: int = 100_000) -> float:
    """Largest eigenvalue of ½Δ_h + f with zero boundary values, f on the interior nodes"""
    f = np.asarray(f, dtype=float)
    d = f.ndim
    n = f.shape[0]
    h = 2.0 * half_width / (n + 1)
    A = 0.5 * dirichlet_laplacian(n, h, d) + sparse.diags(f.ravel())
    sigma = float(np.max(f)) + 0.05
    shifted = (sigma * sparse.identity(n ** d) - A).tocsc()
    solve = sparse_linalg.factorized(shifted)
    v = np.ones(n ** d) / math.sqrt(n ** d)
    lam = float(v @ (A @ v))
    for it in range(max_iter):
        w = solve(v)
        v = w / np.linalg.norm(w)
        Av = A @ v
        lam = float(v @ Av)
        if np.linalg.norm(Av - lam * v) <= tol * max(1.0, abs(lam)):
            logger.debug(f"Principal eigenvalue {lam:.12g} after {it + 1} iterations")
            return lam
    logger.warning(f"Power iteration stopped at max_iter={max_iter}, lambda={lam:.12g}")
    return lam


def _interaction_table(space: SpaceCovariance, grid: VariationalGrid) -> np.ndarray:
    """Cell-averaged γ at lags −(nx−1)..(nx−1) along each axis"""
    if space.d != grid.d:
        raise ConfigError(f"covariance dimension {space.d} does not match grid dimension {grid.d}", module=MODULE)
    if space.kind == SpaceKind.DIRAC and grid.d != 1:
        raise ConfigError("dirac covariance needs d = 1", module=MODULE)
    return reflect_lag_table(cell_averaged_gamma(space, grid.h, grid.nx - 1))


def _truncated_kernel_table(space: SpaceCovariance, grid: VariationalGrid, epsilon: float,
                            truncation: Optional[float]) -> np.ndarray:
    """Pointwise (K_ε·1{|x|≤N}) ∗ (K_ε·1{|x|≤N}) on the lag grid"""
    if grid.d != 1:
        raise ConfigError("truncated-kernel problems are implemented for d = 1", module=MODULE)
    n, h = grid.nx, grid.h
    lags = np.arange(-(n - 1), n) * h
    kernel = kernel_eval(space, epsilon)
    table = np.asarray(kernel.evaluate(lags), dtype=float)
    if truncation is not None:
        table = np.where(np.abs(lags) <= truncation, table, 0.0)
    full = signal.fftconvolve(table, table) * h
    return full[n - 1:3 * n - 2]


def _admissible_space(space: SpaceCovariance) -> None:
    if space.kind == SpaceKind.RIESZ and not space.alpha < min(2.0, float(space.d)):
        raise AdmissibilityError(f"riesz exponent alpha={space.alpha} must be below min(2, d)",
                                 module=MODULE, violations=[f"alpha={space.alpha} >= min(2, d)"])
    if space.kind == SpaceKind.PRODUCT:
        raise ConfigError("variational solves support dirac, riesz and smooth covariances", module=MODULE)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

class _Functional:
    """
    Objective and multiplier field N(g) for g of shape (ns, *spatial).

    Subclasses set how the interaction I = ds²Σ_ab T_ab C_ab enters, with
    C_ab = h^d Σ ρ_a·(Γρ_b) and (Γρ)_i = h^d Σ_j Γ(i−j)ρ_j.
    """

    def __init__(self, table: np.ndarray, grid: VariationalGrid, time_weights: np.ndarray):
        self.table = table
        self.grid = grid
        self.T = time_weights
        self.ns = time_weights.shape[0]
        self.ds = 1.0 / self.ns
        self.cell = grid.h ** grid.d
        self.axes = tuple(range(1, grid.d + 1))
        self.lap = dirichlet_laplacian(grid.nx, grid.h, grid.d)
        self._factors: Dict[float, Callable] = {}

    def smeared(self, rho: np.ndarray) -> np.ndarray:
        return signal.fftconvolve(rho, self.table[None], mode="same", axes=self.axes) * self.cell

    def interaction(self, rho: np.ndarray, smeared: np.ndarray) -> float:
        C = np.tensordot(rho, smeared, axes=(self.axes, self.axes)) * self.cell
        return float(self.ds ** 2 * np.sum(self.T * C))

    def laplacian(self, g: np.ndarray) -> np.ndarray:
        flat = g.reshape(self.ns, -1)
        return (self.lap @ flat.T).T.reshape(g.shape)

    def kinetic(self, g: np.ndarray) -> float:
        return float(-self.ds * self.cell * np.sum(g * self.laplacian(g)))

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Per-slice L² inner products"""
        return np.sum(u * v, axis=self.axes) * self.cell

    def normalize(self, g: np.ndarray) -> np.ndarray:
        norms = np.sqrt(self.inner(g, g))
        return g / norms.reshape((-1,) + (1,) * len(self.axes))

    def implicit_solve(self, rhs: np.ndarray, tau: float) -> np.ndarray:
        if tau not in self._factors:
            op = (sparse.identity(self.lap.shape[0]) - tau * self.lap).tocsc()
            self._factors[tau] = sparse_linalg.factorized(op)
        solve = self._factors[tau]
        flat = rhs.reshape(self.ns, -1)
        return np.stack([solve(row) for row in flat]).reshape(rhs.shape)

    def fresh(self) -> "_Functional":
        """Copy with its own factorization cache, one per worker"""
        clone = copy.copy(self)
        clone._factors = {}
        return clone

    def evaluate(self, g: np.ndarray) -> Tuple[float, np.ndarray]:
        raise NotImplementedError


class _EnergyFunctional(_Functional):
    """c·I − ½K; N = 4c·ds·Σ_b T_ab(Γρ_b)"""

    def __init__(self, table, grid, time_weights, coupling: float = 1.0):
        super().__init__(table, grid, time_weights)
        self.coupling = coupling

    def evaluate(self, g):
        rho = g * g
        sm = self.smeared(rho)
        value = self.coupling * self.interaction(rho, sm) - 0.5 * self.kinetic(g)
        mixed = np.tensordot(self.T, sm, axes=(1, 0))
        return value, 4.0 * self.coupling * self.ds * mixed


class _MFunctional(_Functional):
    """β√I − ½K; N = 2β(Γρ)/√I"""

    def __init__(self, table, grid, beta: float):
        super().__init__(table, grid, np.ones((1, 1)))
        self.beta = beta

    def evaluate(self, g):
        rho = g * g
        sm = self.smeared(rho)
        I = self.interaction(rho, sm)
        if not I > 0:
            raise NumericalError("interaction vanished; profile has left the kernel support", module=MODULE)
        root = math.sqrt(I)
        return self.beta * root - 0.5 * self.kinetic(g), 2.0 * self.beta * sm / root


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def _projected_residual(fn: _Functional, g: np.ndarray, N: np.ndarray) -> float:
    grad = N * g + fn.laplacian(g)
    along = fn.inner(grad, g).reshape((-1,) + (1,) * len(fn.axes))
    r = grad - along * g
    return math.sqrt(fn.ds * float(np.sum(fn.inner(r, r))))


def _ascent(fn: _Functional, g0: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, float, int, float, List[float]]:
    g = fn.normalize(g0)
    value, N = fn.evaluate(g)
    history = [value]
    tau = TAU_START
    residual = _projected_residual(fn, g, N)
    it = 0
    while residual > tol:
        if it >= max_iter:
            raise NumericalError(f"no convergence after {max_iter} iterations, residual {residual:.3e}", module=MODULE)
        if tau < TAU_MIN:
            raise NumericalError(f"step size collapsed at residual {residual:.3e}", module=MODULE)
        it += 1
        trial = fn.normalize(fn.implicit_solve(g + tau * N * g, tau))
        trial_value, trial_N = fn.evaluate(trial)
        if trial_value >= value - ASCENT_SLACK * (1.0 + abs(value)):
            g, value, N = trial, trial_value, trial_N
            history.append(value)
            residual = _projected_residual(fn, g, N)
            tau = min(2.0 * tau, TAU_MAX)
        else:
            tau *= 0.5
    return g, value, it, residual, history


def _starting_profiles(grid: VariationalGrid, ns: int, n_starts: int, seed: int,
                       shift: float = 0.0) -> List[np.ndarray]:
    x = grid.nodes()
    mesh = np.meshgrid(*([x] * grid.d), indexing="ij")
    width = grid.half_width / 8.0
    starts = []
    for i in range(n_starts):
        if i == 0:
            centre = np.full(grid.d, shift)
            bump = np.exp(-sum((m - c) ** 2 for m, c in zip(mesh, centre)) / (2.0 * width ** 2))
            starts.append(np.broadcast_to(bump, (ns,) + bump.shape).copy())
            continue
        gen = make_generator(seed, i)
        centre = shift + gen.uniform(-width / 2.0, width / 2.0, size=grid.d)
        w = width * gen.uniform(0.5, 1.5)
        bump = np.exp(-sum((m - c) ** 2 for m, c in zip(mesh, centre)) / (2.0 * w ** 2))
        wobble = 1.0 + 0.3 * gen.uniform(-1.0, 1.0, size=(ns,) + bump.shape)
        starts.append(bump[None] * wobble)
    return starts


def _outer_mass(g: np.ndarray, grid: VariationalGrid) -> float:
    x = grid.nodes()
    mesh = np.meshgrid(*([x] * grid.d), indexing="ij")
    outside = np.zeros(grid.spatial_shape, dtype=bool)
    for m in mesh:
        outside |= np.abs(m) > grid.half_width / 2.0
    per_slice = np.sum((g ** 2)[:, outside], axis=1) * grid.h ** grid.d
    return float(np.max(per_slice))


def _maximize(problem: str, build: Callable[[VariationalGrid], _Functional], grid: VariationalGrid,
              tol: Optional[float], seed: int, workers: Optional[int], shift: float = 0.0) -> VariationalResult:
    tol = grid.tol if tol is None else tol
    for doubling in range(grid.max_doublings + 1):
        fn = build(grid)
        starts = _starting_profiles(grid, fn.ns, grid.n_starts, seed, shift)
        runs = parallel_map(lambda g0: _ascent(fn.fresh(), g0, tol, grid.max_iter), starts, workers)
        best = max(runs, key=lambda r: r[1])
        g, value, iterations, residual, history = best
        values = [r[1] for r in runs]
        spread = max(values) - min(values)
        if spread > 10.0 * max(tol, 1e-12) * (1.0 + abs(value)):
            logger.warning(f"{problem}: multi-start values spread by {spread:.3e}")
        mass = _outer_mass(g, grid)
        if mass <= grid.mass_tol or doubling == grid.max_doublings:
            if mass > grid.mass_tol:
                logger.warning(f"{problem}: profile mass {mass:.2e} beyond L/2 after {doubling} doublings")
            logger.info(f"{problem}: value {value:.10g}, residual {residual:.2e}, {iterations} iterations, "
                        f"L={grid.half_width:g}, nx={grid.nx}")
            profile = Profile(g=g, dx=grid.h, ds=fn.ds, half_width=grid.half_width)
            return VariationalResult(problem=problem, value=value, profile=profile, iterations=iterations,
                                     residual=residual, start_values=values, history=history)
        logger.info(f"{problem}: mass {mass:.2e} beyond L/2, doubling L to {2 * grid.half_width:g}")
        grid = grid.doubled()
    raise NumericalError(f"{problem}: domain doubling exhausted", module=MODULE)  # unreachable


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

def solve_E_time_independent(space: SpaceCovariance, grid: VariationalGrid, tol: Optional[float] = None,
                             seed: int = 0, coupling: float = 1.0, workers: Optional[int] = None,
                             shift: float = 0.0) -> VariationalResult:
    """E(d,γ) (times the coupling c in front of the interaction)"""
    _admissible_space(space)
    if not coupling > 0:
        raise ConfigError(f"coupling must be positive, got {coupling}", module=MODULE)
    build = lambda gr: _EnergyFunctional(_interaction_table(space, gr), gr, np.ones((1, 1)), coupling)
    return _maximize("E", build, grid.model_copy(update={"ns": 1}), tol, seed, workers, shift)


def solve_E_time_dependent(spec: CovarianceSpec, grid: VariationalGrid, tol: Optional[float] = None,
                           seed: int = 0, workers: Optional[int] = None) -> VariationalResult:
    """E(α₀,d,γ) with g(s,·) on ns time slices of [0,1]"""
    if spec.time.kind == TimeKind.WHITE:
        raise ConfigError("time-dependent energy needs a pointwise time covariance", module=MODULE)
    if grid.d != 1:
        raise ConfigError("time-dependent energy is solved in d = 1", module=MODULE)
    report = regime_classify(spec)
    if not report.admissible:
        raise AdmissibilityError(f"inadmissible spec: {'; '.join(report.violations)}",
                                 module=MODULE, violations=report.violations)
    _admissible_space(spec.space)
    ns = grid.ns
    c0 = cell_averaged_gamma0(spec.time, 1.0 / ns, ns - 1)
    T = c0[np.abs(np.arange(ns)[:, None] - np.arange(ns)[None, :])]
    build = lambda gr: _EnergyFunctional(_interaction_table(spec.space, gr), gr, T)
    return _maximize("E_time", build, grid, tol, seed, workers)


def solve_M(beta: float, space: SpaceCovariance, grid: VariationalGrid, tol: Optional[float] = None,
            seed: int = 0, truncation: Optional[float] = None, epsilon: float = 0.0,
            workers: Optional[int] = None) -> VariationalResult:
    """
    M(β) over profiles constant in time.

    With epsilon > 0 the kernel is K_ε, optionally cut to |x| ≤ truncation,
    and γ is replaced by the lattice self-convolution of that kernel.
    """
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}", module=MODULE)
    _admissible_space(space)
    if truncation is not None and not epsilon > 0:
        raise ConfigError("truncated kernels are used with epsilon > 0", module=MODULE)
    if epsilon > 0:
        table_of = lambda gr: _truncated_kernel_table(space, gr, epsilon, truncation)
    else:
        table_of = lambda gr: _interaction_table(space, gr)
    build = lambda gr: _MFunctional(table_of(gr), gr, beta)
    return _maximize("M", build, grid.model_copy(update={"ns": 1}), tol, seed, workers)


def e_from_m(m1: float, alpha: float) -> float:
    """E(d,γ) = ((2−α)/2)·2^{α/(2−α)}·(4M(1)/(4−α))^{(4−α)/(2−α)}"""
    if not 0 < alpha < 2:
        raise ConfigError(f"E-M conversion needs 0 < alpha < 2, got {alpha}", module=MODULE)
    return (2.0 - alpha) / 2.0 * 2.0 ** (alpha / (2.0 - alpha)) * (4.0 * m1 / (4.0 - alpha)) ** ((4.0 - alpha) / (2.0 - alpha))


def m_from_e(energy: float, alpha: float) -> float:
    """Inverse of e_from_m"""
    if not 0 < alpha < 2:
        raise ConfigError(f"E-M conversion needs 0 < alpha < 2, got {alpha}", module=MODULE)
    base = energy / ((2.0 - alpha) / 2.0 * 2.0 ** (alpha / (2.0 - alpha)))
    return (4.0 - alpha) / 4.0 * base ** ((2.0 - alpha) / (4.0 - alpha))
