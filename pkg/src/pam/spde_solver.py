"""
Finite-difference solver for white-in-time noise

Explicit Euler in time, central differences in space, periodic boundary,
Itô coupling u^n_j·ΔW^n_j. Three entry points:

- `solve` / `solve_ensemble` march the lattice equation for one or many seeds.
- `picard_localized_solve` runs a few Picard sweeps of the discrete mild
  equation with a truncated kernel and a spatial window, so values at far
  apart sites depend on disjoint noise.
- `renormalized_fk_solve` is the path-integral cross-check for bounded γ.

Each step is written as c_j·u_j + a·(neighbour sum) with c_j, a ≥ 0 under
the two-point increment law, so positivity and the monotone coupling in the
initial condition hold exactly in floating point.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.errors import AdmissibilityError, ConfigError, NumericalError, PamlabError
from ..utils.io import write_field_binary
from ..utils.parallel import parallel_map
from ..utils.rng import realization_seed
from .covariance import (
    CovarianceSpec,
    SpaceKind,
    TimeKind,
    dalang_check,
    kernel_eval,
    regime_classify,
)
from .feynman_kac import PathEnsemble, evaluate_initial, potential_along_paths, sample_paths
from .noise_field import FieldRealization, GridSpec, sample_stationary_field, sample_white_sheet

logger = logging.getLogger(__name__)

MODULE = "spde-solver"

OVERFLOW_GUARD = 1e300
ENSEMBLE_BATCH = 64


class IncrementLaw(str, Enum):
    """Distribution of the lattice noise increments"""
    TWO_POINT = "two_point"
    GAUSSIAN = "gaussian"


@dataclass
class LatticeField:
    """u(t,·) on the lattice, optionally with the whole trajectory"""

    values: np.ndarray  # (nx,)*d
    grid: GridSpec
    time: float
    trajectory: Optional[np.ndarray] = None  # (nt+1, nx, ..., nx)

    def dump(self, path) -> None:
        data = self.trajectory if self.trajectory is not None else self.values[None]
        write_field_binary(path, data)


class SolveConfig(BaseModel):
    """Everything a finite-difference run needs besides the seed"""

    model_config = ConfigDict(frozen=True)

    spec: CovarianceSpec
    grid: GridSpec
    kernel_epsilon: Optional[float] = None
    increments: IncrementLaw = IncrementLaw.TWO_POINT
    initial: Union[float, Tuple[float, ...]] = 1.0
    store_trajectory: bool = False

    @field_validator("initial")
    @classmethod
    def _bounded_initial(cls, v):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if not np.all(np.isfinite(arr)) or not np.min(arr) > 0:
            raise ValueError("initial condition must satisfy 0 < inf u0 <= sup u0 < inf")
        return v

    @model_validator(mode="after")
    def _check(self) -> "SolveConfig":
        grid = self.grid
        if self.spec.time.kind != TimeKind.WHITE:
            raise ValueError("the finite-difference solver needs white-in-time noise")
        if self.white_space and grid.d != 1:
            raise ValueError("white-in-space noise is only well posed in d = 1")
        ratio = grid.d * grid.dt / grid.dx ** 2
        if ratio > 1.0:
            raise ValueError(f"stability: d*dt={grid.d * grid.dt:g} exceeds dx^2={grid.dx ** 2:g}")
        if self.white_space and self.increments == IncrementLaw.TWO_POINT:
            jump = self.spec.theta * math.sqrt(grid.dt / grid.dx ** grid.d)
            if jump > 1.0 - ratio:
                raise ValueError(
                    f"stability: theta*sqrt(dt/dx^d)={jump:g} exceeds 1 - d*dt/dx^2={1.0 - ratio:g}"
                )
        if self.kernel_epsilon is not None and self.kernel_epsilon < 0:
            raise ValueError(f"kernel_epsilon must be >= 0, got {self.kernel_epsilon}")
        if not self.white_space and self.increments == IncrementLaw.TWO_POINT:
            jump = self.correlated_jump()
            if jump is not None and jump > 1.0 - ratio:
                raise ValueError(
                    f"stability: theta*|K|_1*sqrt(dt*dx^d)={jump:g} exceeds 1 - d*dt/dx^2={1.0 - ratio:g}"
                )
        if isinstance(self.initial, tuple) and len(self.initial) != grid.sites:
            raise ValueError(f"initial condition has {len(self.initial)} values for {grid.sites} sites")
        return self

    def correlated_jump(self) -> Optional[float]:
        """Largest |θ·forcing| of a two-point step, None when the kernel cannot be built"""
        try:
            table = _kernel_values(self)
        except PamlabError:
            return None
        grid = self.grid
        return self.spec.theta * float(np.abs(table).sum()) * math.sqrt(grid.dt * grid.dx ** grid.d)

    @property
    def theta(self) -> float:
        return self.spec.theta

    @property
    def t_final(self) -> float:
        return self.grid.t_final

    @property
    def white_space(self) -> bool:
        """Dirac space covariance without kernel smoothing"""
        return self.spec.space.kind == SpaceKind.DIRAC and not self.kernel_epsilon

    def initial_values(self) -> np.ndarray:
        if isinstance(self.initial, tuple):
            return np.asarray(self.initial, dtype=float).reshape(self.grid.spatial_shape)
        return np.full(self.grid.spatial_shape, float(self.initial))


class PicardConfig(BaseModel):
    """Truncation scale β and the number of Picard sweeps"""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0)
    n_iter: Optional[int] = Field(default=None, ge=0)

    @property
    def iterations(self) -> int:
        if self.n_iter is not None:
            return self.n_iter
        return max(1, int(math.floor(math.log(self.beta))) + 1)

    def window(self, t: float) -> float:
        return self.beta * math.sqrt(t)

    def independence_radius(self, t: float) -> float:
        """Sites at least this far apart are driven by disjoint noise"""
        return 2.0 * self.beta * self.iterations * (1.0 + math.sqrt(t))


def _admit(cfg: SolveConfig) -> None:
    report = regime_classify(cfg.spec)
    if not report.admissible:
        raise AdmissibilityError(f"inadmissible spec: {'; '.join(report.violations)}",
                                 module=MODULE, violations=report.violations)
    if not dalang_check(cfg.spec):
        raise AdmissibilityError("Dalang condition fails for this covariance", module=MODULE,
                                 violations=["Dalang integral diverges"])
    if not cfg.white_space and cfg.increments == IncrementLaw.GAUSSIAN:
        logger.warning("Positivity not guaranteed for a correlated kernel with gaussian increments")


# ---------------------------------------------------------------------------
# lattice pieces
# ---------------------------------------------------------------------------

def _neighbour_sum(u: np.ndarray, d: int) -> np.ndarray:
    """Σ over the 2d nearest neighbours on the torus (last d axes)"""
    total = np.zeros_like(u)
    for axis in range(u.ndim - d, u.ndim):
        total += np.roll(u, 1, axis=axis) + np.roll(u, -1, axis=axis)
    return total


def _wrapped_offsets(grid: GridSpec) -> np.ndarray:
    """Torus displacement of every site from site 0, shape (nx,)*d + (d,)"""
    q = np.arange(grid.nx)
    axis = np.where(q <= grid.nx // 2, q, q - grid.nx) * grid.dx
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    return np.stack(mesh, axis=-1)


def _kernel_values(cfg: SolveConfig, truncation: Optional[float] = None) -> np.ndarray:
    """Lattice kernel K_ε at the torus displacements (times the tent l_β when truncated)"""
    grid = cfg.grid
    eps = cfg.kernel_epsilon
    if eps is None:
        eps = 0.0 if cfg.spec.space.kind == SpaceKind.SMOOTH else grid.dx ** 2
    if cfg.spec.space.kind != SpaceKind.SMOOTH and eps == 0:
        raise ConfigError("singular kernels need kernel_epsilon > 0 on the lattice", module=MODULE)
    kernel = kernel_eval(cfg.spec, eps)
    offsets = _wrapped_offsets(grid)
    pts = offsets[..., 0] if grid.d == 1 else offsets
    table = np.asarray(kernel.evaluate(pts), dtype=float)
    if truncation is not None:
        tent = np.prod(np.clip(1.0 - np.abs(offsets) / truncation, 0.0, None), axis=-1)
        table = table * tent
    return table


def kernel_table(cfg: SolveConfig, truncation: Optional[float] = None) -> Optional[np.ndarray]:
    """Fourier transform of the lattice kernel, None for white-in-space noise"""
    if cfg.white_space:
        return None
    return np.fft.fftn(_kernel_values(cfg, truncation))


def _forcing(dW: np.ndarray, grid: GridSpec, kernel_hat: Optional[np.ndarray]) -> np.ndarray:
    """Noise density per cell: ΔW/dx^d (white) or Σ_k K(x_j−x_k)ΔW_k (correlated)"""
    if kernel_hat is None:
        return dW / grid.dx ** grid.d
    axes = tuple(range(dW.ndim - grid.d, dW.ndim))
    return np.fft.ifftn(np.fft.fftn(dW, axes=axes) * kernel_hat, axes=axes).real


def _law_increments(raw: np.ndarray, grid: GridSpec, law: IncrementLaw) -> np.ndarray:
    if law == IncrementLaw.GAUSSIAN:
        return raw
    scale = math.sqrt(grid.dt * grid.dx ** grid.d)
    return np.where(raw >= 0.0, scale, -scale)


def _advance(u: np.ndarray, forcing: np.ndarray, theta: float, dt: float, dx: float, d: int) -> np.ndarray:
    a = dt / (2.0 * dx * dx)
    centre = (1.0 - 2.0 * d * a) + theta * forcing
    return centre * u + a * _neighbour_sum(u, d)


def _guard(u: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > OVERFLOW_GUARD:
        raise NumericalError(f"overflow at step {step}: |u| exceeds {OVERFLOW_GUARD:g}", module=MODULE)


def step_explicit(u: LatticeField, noise_slice: np.ndarray, theta: float, dt: float, dx: float,
                  kernel_hat: Optional[np.ndarray] = None) -> LatticeField:
    """One Euler step driven by the increments ΔW of one time row"""
    d = u.grid.d
    if d * dt > dx * dx:
        raise ConfigError(f"stability: d*dt={d * dt:g} exceeds dx^2={dx * dx:g}", module=MODULE)
    dW = np.asarray(noise_slice, dtype=float).reshape(u.values.shape)
    grid = u.grid.model_copy(update={"dt": dt, "dx": dx})
    values = _advance(u.values, _forcing(dW, grid, kernel_hat), theta, dt, dx, d)
    _guard(values, int(round(u.time / dt)) + 1)
    return LatticeField(values=values, grid=u.grid, time=u.time + dt)


def _evolve(u0: np.ndarray, dW: np.ndarray, cfg: SolveConfig, kernel_hat: Optional[np.ndarray],
            store: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """March a batch: u0 (B, *shape), dW (B, nt, *shape)"""
    grid = cfg.grid
    u = u0
    traj = [u.copy()] if store else None
    for k in range(grid.nt):
        u = _advance(u, _forcing(dW[:, k], grid, kernel_hat), cfg.theta, grid.dt, grid.dx, grid.d)
        _guard(u, k + 1)
        if store:
            traj.append(u.copy())
    return u, (np.stack(traj, axis=1) if store else None)


def _noise_rows(cfg: SolveConfig, seed: int) -> np.ndarray:
    sheet = sample_white_sheet(cfg.grid, seed)
    return _law_increments(sheet.values, cfg.grid, cfg.increments)


def solve(cfg: SolveConfig, seed: int) -> LatticeField:
    """u(t_final, ·) for one noise realization"""
    _admit(cfg)
    kernel_hat = kernel_table(cfg)
    dW = _noise_rows(cfg, seed)[None]
    u, traj = _evolve(cfg.initial_values()[None], dW, cfg, kernel_hat, cfg.store_trajectory)
    return LatticeField(values=u[0], grid=cfg.grid, time=cfg.t_final,
                        trajectory=None if traj is None else traj[0])


def solve_ensemble(cfg: SolveConfig, seeds: Sequence[int], workers: Optional[int] = None,
                   initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Final fields for every seed, shape (len(seeds), nx, ..., nx)"""
    _admit(cfg)
    kernel_hat = kernel_table(cfg)
    u0 = cfg.initial_values() if initial is None else np.asarray(initial, dtype=float)
    seeds = list(seeds)

    def run(chunk: List[int]) -> np.ndarray:
        dW = np.stack([_noise_rows(cfg, s) for s in chunk])
        start = np.broadcast_to(u0, (len(chunk),) + cfg.grid.spatial_shape).copy()
        return _evolve(start, dW, cfg, kernel_hat, store=False)[0]

    chunks = [seeds[i:i + ENSEMBLE_BATCH] for i in range(0, len(seeds), ENSEMBLE_BATCH)]
    parts = parallel_map(run, chunks, workers)
    logger.info(f"Solved {len(seeds)} realizations on {cfg.grid.nx}^{cfg.grid.d} sites, {cfg.grid.nt} steps")
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# Picard localization
# ---------------------------------------------------------------------------

def _picard_batch(cfg: SolveConfig, pcfg: PicardConfig, dW: np.ndarray) -> np.ndarray:
    """U^{(β,n)}(t_k, ·) for all k on a batch of noise sheets (B, nt, nx)"""
    grid = cfg.grid
    nt, nx, dt, dx = grid.nt, grid.nx, grid.dt, grid.dx
    a = dt / (2.0 * dx * dx)
    q = np.arange(nx)
    mu = 1.0 - 2.0 * a * (1.0 - np.cos(2.0 * math.pi * q / nx))
    heat = np.fft.ifft(mu[None, :] ** np.arange(nt)[:, None], axis=-1).real  # H^m rows
    dist = np.minimum(q, nx - q) * dx

    forcing = _forcing(dW, grid, kernel_table(cfg, truncation=pcfg.beta))
    u0 = cfg.initial_values()
    u0_hat = np.fft.fft(u0)
    base = np.stack([np.fft.ifft(mu ** k * u0_hat).real for k in range(nt + 1)])

    B = dW.shape[0]
    U = np.broadcast_to(base, (B, nt + 1, nx)).copy()
    for _ in range(pcfg.iterations):
        G_hat = np.fft.fft(U[:, :nt, :] * forcing, axis=-1)
        new = np.broadcast_to(base, (B, nt + 1, nx)).copy()
        for k in range(1, nt + 1):
            inside = dist <= pcfg.window(k * dt) + 1e-12 * dx
            k_hat = np.fft.fft(heat[:k] * inside[None, :], axis=-1)
            S = np.einsum("mq,bmq->bq", k_hat, G_hat[:, k - 1::-1, :])
            new[:, k] += cfg.theta * np.fft.ifft(S, axis=-1).real
        U = new
    return U


def _picard_admit(cfg: SolveConfig, pcfg: PicardConfig) -> None:
    _admit(cfg)
    if cfg.grid.d != 1:
        raise ConfigError("Picard localization is implemented for d = 1", module=MODULE)
    if 2.0 * pcfg.window(cfg.t_final) > cfg.grid.L:
        raise NumericalError(
            f"window 2*beta*sqrt(t)={2.0 * pcfg.window(cfg.t_final):g} exceeds torus L={cfg.grid.L:g}; increase domain",
            module=MODULE,
        )


def picard_localized_solve(cfg: SolveConfig, pcfg: PicardConfig, seed: int) -> LatticeField:
    """U_β(t_final, ·) on the same noise that `solve` would use for this seed"""
    _picard_admit(cfg, pcfg)
    U = _picard_batch(cfg, pcfg, _noise_rows(cfg, seed)[None])
    return LatticeField(values=U[0, -1], grid=cfg.grid, time=cfg.t_final,
                        trajectory=U[0] if cfg.store_trajectory else None)


def picard_localized_ensemble(cfg: SolveConfig, pcfg: PicardConfig, seeds: Sequence[int],
                              workers: Optional[int] = None) -> np.ndarray:
    _picard_admit(cfg, pcfg)
    seeds = list(seeds)

    def run(chunk: List[int]) -> np.ndarray:
        dW = np.stack([_noise_rows(cfg, s) for s in chunk])
        return _picard_batch(cfg, pcfg, dW)[:, -1]

    chunks = [seeds[i:i + ENSEMBLE_BATCH] for i in range(0, len(seeds), ENSEMBLE_BATCH)]
    return np.concatenate(parallel_map(run, chunks, workers), axis=0)


# ---------------------------------------------------------------------------
# renormalized Feynman–Kac
# ---------------------------------------------------------------------------

def _require_bounded(spec: CovarianceSpec) -> None:
    if spec.space.kind != SpaceKind.SMOOTH:
        raise ConfigError("renormalization undefined, gamma(0)=inf", module=MODULE)
    if spec.time.kind != TimeKind.WHITE:
        raise ConfigError("renormalized representation applies to white-in-time noise", module=MODULE)


def renormalized_fk_solve(spec: CovarianceSpec, field: FieldRealization, paths: PathEnsemble,
                          initial: Union[float, Callable] = 1.0) -> float:
    """
    e^{−θ²tγ(0)/2}·E_x exp{θ∫₀ᵗV(t−s, B(s))ds}u₀(B(t)) over the given paths.

    The paths start at x and must share the field's time grid.
    """
    _require_bounded(spec)
    grid = field.grid
    if paths.n_steps != grid.nt or not math.isclose(paths.dt, grid.dt):
        raise ConfigError(f"paths ({paths.n_steps} x {paths.dt}) do not match the field grid "
                          f"({grid.nt} x {grid.dt})", module=MODULE)
    pos = paths.positions()
    V = potential_along_paths(field.values, grid.dx, grid.origin_index, pos, reverse_time=True)
    t = grid.t_final
    log_w = spec.theta * grid.dt * V.sum(axis=1) - 0.5 * spec.theta ** 2 * t * spec.space.gamma_at_zero
    return float(np.mean(np.exp(log_w) * evaluate_initial(initial, pos[:, -1, :])))


def renormalized_fk_ensemble(spec: CovarianceSpec, grid: GridSpec, n_fields: int, n_paths: int, seed: int,
                             x: Union[float, Sequence[float]] = 0.0, initial: Union[float, Callable] = 1.0,
                             independent_pairs: bool = False, workers: Optional[int] = None) -> np.ndarray:
    """
    One estimate per field realization, shape (n_fields,).

    With `independent_pairs` each field gets two independent path ensembles and
    the result has shape (n_fields, 2); the product of a row is an unbiased
    estimate of u(t,x)² for that field.
    """
    _require_bounded(spec)
    start = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (grid.d,))
    n_sets = 2 if independent_pairs else 1

    def run(i: int) -> np.ndarray:
        field = sample_stationary_field(spec, grid, realization_seed(seed, 3 * i))
        out = []
        for j in range(n_sets):
            paths = sample_paths(n_paths, grid.nt, grid.dt, grid.d, realization_seed(seed, 3 * i + 1 + j), start=start)
            out.append(renormalized_fk_solve(spec, field, paths, initial))
        return np.asarray(out)

    rows = np.stack(parallel_map(run, range(n_fields), workers))
    return rows if independent_pairs else rows[:, 0]
