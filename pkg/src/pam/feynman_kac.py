"""
Brownian path Monte Carlo

Quenched and annealed engines built on the Feynman–Kac representation:

- `quenched_u_estimate` averages exp{θ∫V(t−s, x+B(s))ds}u₀(x+B(t)) over paths
  for one frozen field realization.
- `annealed_moment_fractional` estimates E u(t,x)^m through the pairwise path
  interaction Q_jk = ∬γ₀(r−s)γ(B_j(r)−B_k(s))drds when the noise has a
  pointwise time covariance.
- `annealed_moment_white_time` does the same for white-in-time noise, where
  only the off-diagonal equal-time interactions survive, mollifying γ and
  extrapolating ε → 0.
- `fk_eigenvalue_bound` and `killed_path_expectation` give the two sides of
  the principal-eigenvalue bound for paths killed on leaving a box.

Ensembles are processed in fixed batches, each with its own counter-based
stream, so estimates do not depend on the worker count.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy import ndimage

from ..utils.errors import ConfigError, NumericalError
from ..utils.parallel import parallel_map
from ..utils.rng import make_generator
from .covariance import (
    CovarianceSpec,
    SpaceKind,
    TimeKind,
    cell_averaged_gamma0,
    gamma_eval,
    mollify_gamma,
    regime_classify,
)
from .noise_field import FieldRealization
from .variational import principal_eigenvalue

logger = logging.getLogger(__name__)

MODULE = "feynman-kac"

BATCH_SIZE = 256
HEAVY_TAIL_SHARE = 0.5


@dataclass(frozen=True)
class PathEnsemble:
    """m Brownian paths on a common time grid"""

    increments: np.ndarray  # (m, n_steps, d)
    dt: float
    start: np.ndarray  # (m, d)
    seed: Optional[int] = None

    @property
    def m(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    @property
    def t(self) -> float:
        return self.n_steps * self.dt

    def positions(self) -> np.ndarray:
        """Path positions at steps 0..n_steps, shape (m, n_steps+1, d)"""
        zero = np.zeros((self.m, 1, self.d))
        walk = np.concatenate([zero, np.cumsum(self.increments, axis=1)], axis=1)
        return self.start[:, None, :] + walk


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Pairwise interaction Q; the diagonal is undefined for white-in-time noise"""

    Q: np.ndarray
    white_in_time: bool

    def entry(self, j: int, k: int) -> float:
        if self.white_in_time and j == k:
            raise ConfigError("diagonal interaction is undefined for white-in-time noise", module=MODULE)
        return float(self.Q[j, k])

    def total(self) -> float:
        """Σ_{j,k}Q_jk (regime 1) or Σ_{j<k}Q_jk (white time)"""
        if self.white_in_time:
            return float(np.sum(np.triu(self.Q, k=1)))
        return float(np.sum(self.Q))


class MomentEstimate(BaseModel):
    """Monte Carlo estimate of E u(t,x)^m"""

    m: int
    value: float
    log_value: float
    stderr: float
    n_samples: int
    epsilon: float = 0.0
    max_share: float = 0.0
    ess: float = 0.0
    heavy_tail: bool = False
    extrapolated: bool = False
    smallest_epsilon_value: Optional[float] = None
    epsilon_monotone: Optional[bool] = None
    schedule: List[Tuple[float, float, float]] = []
    heuristic: Optional[str] = None

    @property
    def log_stderr(self) -> float:
        return self.stderr / self.value if self.value > 0 else math.inf


def sample_paths(m: int, n_steps: int, dt: float, d: int = 1, seed: int = 0,
                 start: Optional[np.ndarray] = None, stream: Tuple[int, ...] = ()) -> PathEnsemble:
    """m paths with i.i.d. N(0, dt·I_d) increments; B(0) = start or 0"""
    if m < 1 or n_steps < 0 or not dt > 0 or d < 1:
        raise ConfigError(f"invalid path ensemble m={m}, n_steps={n_steps}, dt={dt}, d={d}", module=MODULE)
    gen = make_generator(seed, *stream)
    increments = math.sqrt(dt) * gen.standard_normal((m, n_steps, d))
    start = np.zeros((m, d)) if start is None else np.broadcast_to(np.asarray(start, dtype=float), (m, d)).copy()
    return PathEnsemble(increments=increments, dt=dt, start=start, seed=seed)


# ---------------------------------------------------------------------------
# pairwise interactions
# ---------------------------------------------------------------------------

def _space_values(spec: CovarianceSpec, epsilon: float, diff: np.ndarray) -> np.ndarray:
    """γ or γ_ε at displacement vectors diff (..., d)"""
    space = spec.space
    if space.kind != SpaceKind.SMOOTH and not epsilon > 0:
        raise ConfigError(f"{space.kind.value} covariance needs epsilon > 0 along paths", module=MODULE)
    if epsilon > 0:
        return np.asarray(mollify_gamma(space, epsilon, diff if space.d > 1 else diff[..., 0]))
    return np.asarray(gamma_eval(space, diff if space.d > 1 else diff[..., 0]))


def _hamiltonian_batch(positions: np.ndarray, dt: float, spec: CovarianceSpec, epsilon: float) -> np.ndarray:
    """Q for a batch of ensembles, positions (B, m, n+1, d) -> (B, m, m)"""
    B, m, n1, d = positions.shape
    n = n1 - 1
    Q = np.zeros((B, m, m))
    if spec.time.kind == TimeKind.WHITE:
        weights = np.full(n1, dt)
        weights[0] = weights[-1] = dt / 2.0
        for j in range(m):
            for k in range(j + 1, m):
                vals = _space_values(spec, epsilon, positions[:, j] - positions[:, k])
                Q[:, j, k] = Q[:, k, j] = vals @ weights
        return Q
    if n == 0:
        return Q
    # cell midpoints; time weight is the exact cell-pair integral of γ₀
    mid = 0.5 * (positions[:, :, 1:, :] + positions[:, :, :-1, :])
    c0 = cell_averaged_gamma0(spec.time, dt, n - 1)
    lag = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    W = dt * dt * c0[lag]
    for j in range(m):
        for k in range(j, m):
            diff = mid[:, j, :, None, :] - mid[:, k, None, :, :]
            vals = _space_values(spec, epsilon, diff)
            Q[:, j, k] = Q[:, k, j] = np.einsum("bxy,xy->b", vals, W)
    return Q


def hamiltonian_matrix(paths: PathEnsemble, spec: CovarianceSpec, epsilon: float = 0.0) -> HamiltonianMatrix:
    """Q_jk for one ensemble"""
    Q = _hamiltonian_batch(paths.positions()[None], paths.dt, spec, epsilon)[0]
    white = spec.time.kind == TimeKind.WHITE
    if white:
        np.fill_diagonal(Q, np.nan)
    return HamiltonianMatrix(Q=Q, white_in_time=white)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _batch_slices(n_mc: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(i, min(n_mc, i + batch_size)) for i in range(0, n_mc, batch_size)]


def _summarize(log_weights: np.ndarray, m: int, epsilon: float, n_batches: int = 20) -> MomentEstimate:
    """Mean of exp(log_weights) with batch-means SE and weight diagnostics"""
    x = np.asarray(log_weights, dtype=float)
    n = x.size
    if n == 0:
        raise ConfigError("no samples", module=MODULE)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite log-weights", module=MODULE)
    shift = float(np.max(x))
    if np.all(x == x[0]):
        log_value = float(x[0])
        return MomentEstimate(m=m, value=math.exp(log_value), log_value=log_value, stderr=0.0,
                              n_samples=n, epsilon=epsilon, max_share=1.0 / n, ess=float(n))
    w = np.exp(x - shift)
    total = float(np.sum(w))
    mean_w = total / n
    nb = max(2, min(n_batches, n))
    batches = np.array_split(w, nb)
    batch_means = np.array([b.mean() for b in batches])
    se_w = float(np.std(batch_means, ddof=1) / math.sqrt(nb))
    log_value = shift + math.log(mean_w)
    value = math.exp(log_value) if log_value < 700 else math.inf
    max_share = float(np.max(w) / total)
    ess = total ** 2 / float(np.sum(w * w))
    heavy = max_share > HEAVY_TAIL_SHARE
    if heavy:
        logger.warning(f"Heavy-tailed weights for m={m}: top sample carries {max_share:.1%} of the mean")
    return MomentEstimate(m=m, value=value, log_value=log_value, stderr=se_w * math.exp(shift),
                          n_samples=n, epsilon=epsilon, max_share=max_share, ess=ess, heavy_tail=heavy)


def _interaction_log_weights(m: int, t: float, spec: CovarianceSpec, n_mc: int, seed: int,
                             n_steps: int, epsilons: Sequence[float], workers: Optional[int]) -> np.ndarray:
    """log-weights per ensemble and per ε, shape (len(epsilons), n_mc), on common paths"""
    dt = t / n_steps
    white = spec.time.kind == TimeKind.WHITE
    factor = spec.theta ** 2 if white else spec.theta ** 2 / 2.0

    def run(bounds: Tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        paths = sample_paths((hi - lo) * m, n_steps, dt, spec.d, seed, stream=(lo,))
        pos = paths.positions().reshape(hi - lo, m, n_steps + 1, spec.d)
        out = np.empty((len(epsilons), hi - lo))
        for i, eps in enumerate(epsilons):
            Q = _hamiltonian_batch(pos, dt, spec, eps)
            if white:
                iu = np.triu_indices(m, k=1)
                out[i] = factor * Q[:, iu[0], iu[1]].sum(axis=-1)
            else:
                out[i] = factor * Q.sum(axis=(1, 2))
        return out

    parts = parallel_map(run, _batch_slices(n_mc, BATCH_SIZE), workers)
    return np.concatenate(parts, axis=1)


def annealed_moment_fractional(m: int, t: float, spec: CovarianceSpec, n_mc: int, seed: int,
                               n_steps: int = 32, epsilon: float = 0.0,
                               workers: Optional[int] = None) -> MomentEstimate:
    """E u(t,x)^m = E exp{½θ²Σ_{j,k}Q_jk} for pointwise-in-time covariances"""
    report = regime_classify(spec)
    if report.regime.white_in_time or spec.time.kind == TimeKind.WHITE:
        raise ConfigError("annealed_moment_fractional needs a pointwise time covariance", module=MODULE)
    if m < 1 or n_mc < 1:
        raise ConfigError(f"invalid m={m} or n_mc={n_mc}", module=MODULE)
    logw = _interaction_log_weights(m, t, spec, n_mc, seed, n_steps, [epsilon], workers)[0]
    est = _summarize(logw, m, epsilon)
    logger.info(f"Annealed moment m={m}, t={t}: log E u^m = {est.log_value:.6g} (SE {est.stderr:.3g})")
    return est


def _extrapolation_coefficients(epsilons: Sequence[float]) -> np.ndarray:
    """Weights c with a = Σc_i y_i for the least-squares fit y = a + b√ε"""
    design = np.column_stack([np.ones(len(epsilons)), np.sqrt(np.asarray(epsilons, dtype=float))])
    return np.linalg.pinv(design)[0]


def annealed_moment_white_time(m: int, t: float, spec: CovarianceSpec, eps_schedule: Sequence[float],
                               n_mc: int, seed: int, n_steps: int = 256,
                               workers: Optional[int] = None) -> MomentEstimate:
    """
    E u(t,x)^m = E exp{θ²Σ_{j<k}∫γ_ε(B_j−B_k)ds}, extrapolated to ε = 0.

    All ε share the same paths. The fit a + b√ε uses the three smallest ε;
    both the fitted and the smallest-ε values are reported.
    """
    if spec.time.kind != TimeKind.WHITE:
        raise ConfigError("annealed_moment_white_time needs white-in-time noise", module=MODULE)
    eps = sorted(float(e) for e in eps_schedule)
    if not eps or eps[0] <= 0:
        raise ConfigError("epsilon schedule must be non-empty and positive", module=MODULE)
    if spec.space.kind != SpaceKind.SMOOTH and len(eps) < 3:
        raise ConfigError("extrapolation needs at least three epsilon values", module=MODULE)
    order = list(reversed(eps))  # largest first
    logw = _interaction_log_weights(m, t, spec, n_mc, seed, n_steps, order, workers)

    per_eps = [_summarize(row, m, e) for row, e in zip(logw, order)]
    schedule = [(e.epsilon, e.value, e.stderr) for e in per_eps]

    monotone = True
    for coarse, fine in zip(per_eps, per_eps[1:]):
        tol = 2.0 * math.hypot(coarse.stderr, fine.stderr)
        if fine.value < coarse.value - tol:
            monotone = False
    if not monotone:
        logger.warning(f"Moment m={m} is not monotone as epsilon decreases: {schedule}")

    smallest = per_eps[-1]
    if len(eps) < 3:
        est = smallest.model_copy(update={"schedule": schedule, "epsilon_monotone": monotone,
                                          "smallest_epsilon_value": smallest.value})
        return est

    fit_eps = eps[:3]
    rows = np.array([logw[order.index(e)] for e in fit_eps])
    coeffs = _extrapolation_coefficients(fit_eps)
    shift = float(np.max(rows))
    w = np.exp(rows - shift)
    combined = coeffs @ w  # per-sample extrapolated weight
    nb = max(2, min(20, combined.size))
    batch_means = np.array([b.mean() for b in np.array_split(combined, nb)])
    value = float(np.mean(combined)) * math.exp(shift)
    stderr = float(np.std(batch_means, ddof=1) / math.sqrt(nb)) * math.exp(shift)
    if value <= 0:
        raise NumericalError(f"extrapolated moment is non-positive ({value}); refine the epsilon schedule", module=MODULE)
    logger.info(f"White-time moment m={m}, t={t}: extrapolated {value:.6g} (SE {stderr:.3g}), "
                f"smallest epsilon {smallest.value:.6g}")
    return MomentEstimate(
        m=m, value=value, log_value=math.log(value), stderr=stderr, n_samples=smallest.n_samples,
        epsilon=0.0, max_share=smallest.max_share, ess=smallest.ess, heavy_tail=smallest.heavy_tail,
        extrapolated=True, smallest_epsilon_value=smallest.value, epsilon_monotone=monotone,
        schedule=schedule, heuristic="a + b*sqrt(epsilon) through the three smallest epsilon",
    )


# ---------------------------------------------------------------------------
# quenched engine
# ---------------------------------------------------------------------------

def potential_along_paths(values: np.ndarray, dx: float, origin_index: int, positions: np.ndarray,
                          reverse_time: bool = True) -> np.ndarray:
    """
    V at (t−s_k, x+B(s_k)) (or (s_k, ·) when not reversed) for k = 0..nt−1.

    values has shape (nt, nx, ..., nx); positions (n_paths, ≥nt, d). Space is
    interpolated multilinearly; time uses the cell containing the instant.
    """
    nt = values.shape[0]
    nx = values.shape[1]
    d = values.ndim - 1
    pts = positions[:, :nt, :]
    idx = pts / dx + origin_index
    if np.any(idx < 0) or np.any(idx > nx - 1):
        raise NumericalError("path left the field domain; enlarge field grid", module=MODULE)
    k = np.arange(nt)
    cells = (nt - 1 - k) if reverse_time else k
    tcoord = np.broadcast_to(cells[None, :], pts.shape[:2]).astype(float)
    coords = [tcoord.ravel()] + [idx[..., j].ravel() for j in range(d)]
    out = ndimage.map_coordinates(values, coords, order=1, mode="nearest")
    return out.reshape(pts.shape[:2])


def evaluate_initial(initial: Union[float, Callable[[np.ndarray], np.ndarray]], points: np.ndarray) -> np.ndarray:
    if callable(initial):
        return np.asarray(initial(points), dtype=float)
    return np.full(points.shape[0], float(initial))


def quenched_u_estimate(field: FieldRealization, x: Union[float, Sequence[float]], n_paths: int, seed: int,
                        theta: Optional[float] = None, initial: Union[float, Callable] = 1.0,
                        reverse_time: bool = True) -> float:
    """Path average of exp{θΣ_k V(t−s_k, x+B(s_k))dt}·u₀(x+B(t)) for one field"""
    grid = field.grid
    theta = field.spec.theta if theta is None else theta
    start = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (grid.d,))
    paths = sample_paths(n_paths, grid.nt, grid.dt, grid.d, seed, start=start)
    pos = paths.positions()
    V = potential_along_paths(field.values, grid.dx, grid.origin_index, pos, reverse_time)
    exponent = theta * grid.dt * V.sum(axis=1)
    weights = np.exp(exponent) * evaluate_initial(initial, pos[:, -1, :])
    return float(np.mean(weights))


# ---------------------------------------------------------------------------
# killed paths and the eigenvalue bound
# ---------------------------------------------------------------------------

def _box_grid(n: int, half_width: float) -> Tuple[np.ndarray, float]:
    h = 2.0 * half_width / (n + 1)
    return -half_width + h * np.arange(1, n + 1), h


def fk_eigenvalue_bound(f: np.ndarray, half_width: float, t: float, d: Optional[int] = None) -> float:
    """
    |D|·exp{∫₀ᵗλ_D(f(s,·))ds} on D = (−L, L)^d.

    f is tabulated on the interior nodes of D, either time-independent with
    shape (n,)*d or as time slices (ns, n, ..., n) over cells of [0, t].
    Pass d when a square table could be read either way.
    """
    f = np.asarray(f, dtype=float)
    d, slices = _box_slices(f, d)
    volume = (2.0 * half_width) ** d
    lams = [principal_eigenvalue(s, half_width) for s in slices]
    integral = t * float(np.mean(lams))
    return volume * math.exp(integral)


def _box_dimension(f: np.ndarray) -> int:
    # (n,) / (n, n) are time-independent in d = 1 / 2; (ns, n) is read as time slices in d = 1
    if f.ndim == 1:
        return 1
    if f.ndim == 2 and f.shape[0] == f.shape[1]:
        return 2
    return f.ndim - 1


def _box_slices(f: np.ndarray, d: Optional[int]) -> Tuple[int, np.ndarray]:
    d = d or _box_dimension(f)
    if f.ndim not in (d, d + 1):
        raise ConfigError(f"potential of shape {f.shape} is not a d={d} table", module=MODULE)
    return d, (f[None] if f.ndim == d else f)


def killed_path_expectation(f: np.ndarray, half_width: float, t: float, n_paths: int, seed: int,
                            n_steps: Optional[int] = None, d: Optional[int] = None) -> Tuple[float, float]:
    """
    Monte Carlo of ∫_D E_x[exp{∫₀ᵗf(t−s, B(s))ds}; τ_D ≥ t]dx with x uniform on D.

    Returns (estimate, standard error). Exits are checked on the time grid.
    """
    f = np.asarray(f, dtype=float)
    d, slices = _box_slices(f, d)
    ns = slices.shape[0]
    n = slices.shape[1]
    steps = n_steps or ns
    if steps % ns:
        raise ConfigError(f"n_steps={steps} must be a multiple of the {ns} time slices", module=MODULE)
    dt = t / steps
    _, h = _box_grid(n, half_width)
    gen = make_generator(seed, 1)
    x0 = gen.uniform(-half_width, half_width, size=(n_paths, d))
    paths = sample_paths(n_paths, steps, dt, d, seed, start=x0)
    pos = paths.positions()
    inside = np.all(np.abs(pos) < half_width, axis=(1, 2))
    # pad the zero boundary so interpolation near the walls tends to 0
    padded = np.pad(slices, [(0, 0)] + [(1, 1)] * d)
    idx = (pos[:, :steps, :] + half_width) / h
    k = np.arange(steps)
    cells = (ns - 1 - (k * ns) // steps).astype(float)
    tcoord = np.broadcast_to(cells[None, :], idx.shape[:2])
    coords = [tcoord.ravel()] + [np.clip(idx[..., j], 0, n + 1).ravel() for j in range(d)]
    vals = ndimage.map_coordinates(padded, coords, order=1, mode="nearest").reshape(idx.shape[:2])
    weights = np.where(inside, np.exp(dt * vals.sum(axis=1)), 0.0)
    volume = (2.0 * half_width) ** d
    est = volume * float(np.mean(weights))
    se = volume * float(np.std(weights, ddof=1) / math.sqrt(n_paths))
    return est, se
