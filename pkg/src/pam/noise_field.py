"""
Discrete Gaussian noise

Two samplers live here. `sample_white_sheet` draws the Brownian sheet
increments that drive the finite-difference solver. `sample_stationary_field`
draws a stationary field V(t,x) whose lattice covariance is the cell-averaged
γ₀(s−t)γ(x−y), by circulant embedding on a padded time×space torus.

Sampling is a pure function of (spec, grid, seed): each realization owns a
counter-based Philox stream keyed by its seed.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..utils.errors import ConfigError, NumericalError
from ..utils.io import read_field_binary, write_field_binary
from ..utils.rng import make_generator
from .covariance import (
    CovarianceSpec,
    SpaceKind,
    TimeKind,
    cell_averaged_gamma,
    cell_averaged_gamma0,
    regime_classify,
)

logger = logging.getLogger(__name__)

MODULE = "noise-field"

# Negative spectral mass below this fraction of the total is clipped
NEGATIVE_MASS_TOL = 1e-8


class GridSpec(BaseModel):
    """Space-time lattice on the torus of circumference L = nx·dx"""

    model_config = ConfigDict(frozen=True)

    d: int = Field(default=1, ge=1)
    nx: int = Field(ge=1)
    dx: float = Field(gt=0)
    nt: int = Field(default=1, ge=1)
    dt: float = Field(default=1.0, gt=0)

    @property
    def L(self) -> float:
        return self.nx * self.dx

    @property
    def t_final(self) -> float:
        return self.nt * self.dt

    @property
    def origin_index(self) -> int:
        """Lattice index of x = 0 along each axis"""
        return self.nx // 2

    @property
    def sites(self) -> int:
        return self.nx ** self.d

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return (self.nx,) * self.d

    def positions(self) -> np.ndarray:
        """Coordinates of the lattice points along one axis"""
        return (np.arange(self.nx) - self.origin_index) * self.dx


@dataclass(frozen=True)
class NoiseSheet:
    """Increments of W over lattice cells, i.i.d. N(0, dt·dx^d)"""

    increments: np.ndarray  # (nt, nx^d)
    grid: GridSpec
    seed: int

    @property
    def values(self) -> np.ndarray:
        return self.increments.reshape((self.grid.nt,) + self.grid.spatial_shape)


@dataclass(frozen=True)
class FieldRealization:
    """Cell values V(t_i, x_j) of one stationary field"""

    values: np.ndarray  # (nt, nx, ..., nx)
    spec: CovarianceSpec
    grid: GridSpec
    seed: int

    def dump(self, path: Union[str, Path]) -> Path:
        return write_field_binary(path, self.values)


def load_field_values(path: Union[str, Path]) -> np.ndarray:
    """Values of a dumped field, shape (nt, nx^d)"""
    return read_field_binary(path)


def sample_white_sheet(grid: GridSpec, seed: int) -> NoiseSheet:
    """Brownian sheet increments for one realization"""
    gen = make_generator(seed)
    scale = np.sqrt(grid.dt * grid.dx ** grid.d)
    increments = scale * gen.standard_normal((grid.nt, grid.sites))
    return NoiseSheet(increments=increments, grid=grid, seed=seed)


def _embedding_lags(size: int) -> np.ndarray:
    idx = np.arange(size)
    return np.minimum(idx, size - idx)


def _embedding_eigenvalues(spec: CovarianceSpec, grid: GridSpec, padding: int) -> np.ndarray:
    """Real spectrum of the circulant embedding of the lattice covariance"""
    mt = padding * grid.nt
    mx = padding * grid.nx
    time_table = cell_averaged_gamma0(spec.time, grid.dt, mt // 2)
    space_table = cell_averaged_gamma(spec.space, grid.dx, mx // 2)
    lt = _embedding_lags(mt)
    lx = _embedding_lags(mx)
    if grid.d == 1:
        space_row = space_table[lx]
    else:
        space_row = space_table[np.ix_(*([lx] * grid.d))]
    row = time_table[lt].reshape((mt,) + (1,) * grid.d) * space_row[None, ...]
    eig = np.fft.fftn(row).real
    total = np.abs(eig).sum()
    negative = -eig[eig < 0].sum()
    if total <= 0:
        raise NumericalError("embedding has no spectral mass", module=MODULE)
    if negative / total > NEGATIVE_MASS_TOL:
        raise NumericalError(
            f"grid too coarse for this covariance: negative spectral mass {negative / total:.3e} of total",
            module=MODULE,
        )
    if negative > 0:
        logger.warning(f"Clipping negative spectral mass {negative / total:.3e} of total")
    return np.clip(eig, 0.0, None)


def sample_stationary_field(spec: CovarianceSpec, grid: GridSpec, seed: int,
                            padding: int = 2) -> FieldRealization:
    """Stationary field with cell-averaged covariance γ₀⊗γ via circulant embedding"""
    report = regime_classify(spec)
    if report.regime.white_in_time:
        raise ConfigError(
            f"stationary fields need a pointwise time covariance or bounded γ, regime is {report.regime.value}",
            module=MODULE,
        )
    if spec.space.kind == SpaceKind.SMOOTH and spec.time.kind == TimeKind.WHITE:
        logger.debug("White-in-time bounded field: time cells carry weight 1/dt")
    if padding < 2:
        raise ConfigError(f"padding must be >= 2, got {padding}", module=MODULE)

    eig = _embedding_eigenvalues(spec, grid, padding)
    gen = make_generator(seed)
    shape = eig.shape
    xi = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
    synth = np.fft.fftn(np.sqrt(eig / eig.size) * xi).real
    window = (slice(0, grid.nt),) + (slice(0, grid.nx),) * grid.d
    values = np.ascontiguousarray(synth[window])
    return FieldRealization(values=values, spec=spec, grid=grid, seed=seed)


def _lag_slices(n: int, k: int) -> Tuple[slice, slice]:
    if k >= 0:
        return slice(0, n - k), slice(k, n)
    return slice(-k, n), slice(0, n + k)


def _values_of(item) -> np.ndarray:
    if isinstance(item, (FieldRealization, NoiseSheet)):
        return item.values
    return np.asarray(item, dtype=float)


def empirical_covariance(realizations: Sequence, lag: Tuple[int, Union[int, Sequence[int]]],
                         position: Optional[Tuple[int, Union[int, Sequence[int]]]] = None) -> Tuple[float, float]:
    """
    Cross-moment E[V(t,x)V(t+Δt, x+Δx)] over realizations, with jackknife SE.

    Without `position` each realization contributes its lattice average over
    all valid pairs; with it, the single product at that (t, x).
    """
    if len(realizations) < 2:
        raise ConfigError("empirical covariance needs at least 2 realizations", module=MODULE)
    dt_lag, dx_lag = lag
    dx_lags = (dx_lag,) if np.isscalar(dx_lag) else tuple(dx_lag)

    stats = []
    for item in realizations:
        v = _values_of(item)
        if v.ndim != 1 + len(dx_lags):
            raise ConfigError(f"lag {lag} does not match field of shape {v.shape}", module=MODULE)
        if position is None:
            first, second = [], []
            for n, k in zip(v.shape, (dt_lag,) + dx_lags):
                a, b = _lag_slices(n, k)
                first.append(a)
                second.append(b)
            stats.append(float(np.mean(v[tuple(first)] * v[tuple(second)])))
        else:
            t0, x0 = position
            x0 = (x0,) if np.isscalar(x0) else tuple(x0)
            here = (t0,) + x0
            there = tuple(i + k for i, k in zip(here, (dt_lag,) + dx_lags))
            # both cells must lie inside the field
            if len(here) != v.ndim or not all(0 <= i < n and 0 <= j < n for i, j, n in zip(here, there, v.shape)):
                raise ConfigError(f"position {position} with lag {lag} falls outside field of shape {v.shape}",
                                  module=MODULE)
            stats.append(float(v[here] * v[there]))

    s = np.asarray(stats)
    n = s.size
    estimate = float(np.mean(s))
    if np.all(s == s[0]):
        return float(s[0]), 0.0
    leave_one_out = (s.sum() - s) / (n - 1)
    se = float(np.sqrt((n - 1) / n * np.sum((leave_one_out - leave_one_out.mean()) ** 2)))
    return estimate, se


def standardized_moments(values: np.ndarray) -> Tuple[float, float, float, float]:
    """(skew, skew SE, excess kurtosis, kurtosis SE) of a sample"""
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    z = (x - x.mean()) / x.std()
    skew = float(np.mean(z ** 3))
    kurt = float(np.mean(z ** 4) - 3.0)
    return skew, float(np.sqrt(6.0 / n)), kurt, float(np.sqrt(24.0 / n))
