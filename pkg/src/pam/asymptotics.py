"""
Limit constants, tail rates and the desk-scale experiments

Every spatial-asymptotics constant, moment-growth constant and tail rate is
available as a literal formula. Where a rate is the Legendre transform of a
moment-growth law, `tail_rate_via_legendre` recomputes it numerically so the
two can be compared.

The experiment helpers (`spatial_scan`, `fit_exponent`,
`moment_growth_experiment`) turn simulation output into fitted exponents.
"""

import logging
import math
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import optimize, special, stats

from ..utils.errors import ConfigError, NumericalError
from ..utils.parallel import parallel_map
from ..utils.rng import make_generator
from .covariance import Regime, TimeCovariance, time_double_integral
from .feynman_kac import MomentEstimate
from .spde_solver import LatticeField, SolveConfig, solve

logger = logging.getLogger(__name__)

MODULE = "asymptotics"

DIRAC_ENERGY = 1.0 / 6.0


class TheoremId(str, Enum):
    TH1_1 = "th1.1"
    TH1_2 = "th1.2"
    TH1_3 = "th1.3"
    COR1_4A = "cor1.4a"
    COR1_4B = "cor1.4b"
    COR1_4C = "cor1.4c"
    COR1_5A = "cor1.5a"
    COR1_5B = "cor1.5b"
    COR1_5C = "cor1.5c"
    TH1_6 = "th1.6"
    TH1_7 = "th1.7"
    COR1_8 = "cor1.8"
    PROP3_1 = "prop3.1"
    PROP3_2 = "prop3.2"
    PROP3_3 = "prop3.3"
    TH5_1 = "th5.1"
    TH5_2 = "th5.2"
    TH5_3 = "th5.3"
    TH5_4 = "th5.4"


_FRACTIONAL = {Regime.FRACTIONAL_RIESZ, Regime.FRACTIONAL_PRODUCT}
_WHITE = {Regime.WHITE_RIESZ, Regime.WHITE_PRODUCT}

# regime(s) in which each statement holds
THEOREM_REGIMES: Dict[TheoremId, frozenset] = {
    TheoremId.TH1_1: frozenset({Regime.BOUNDED}),
    TheoremId.COR1_4A: frozenset({Regime.BOUNDED}),
    TheoremId.COR1_5A: frozenset({Regime.BOUNDED}),
    TheoremId.PROP3_1: frozenset({Regime.BOUNDED}),
    TheoremId.TH5_1: frozenset({Regime.BOUNDED}),
    TheoremId.TH1_2: frozenset(_FRACTIONAL),
    TheoremId.COR1_4B: frozenset(_FRACTIONAL),
    TheoremId.COR1_5B: frozenset(_FRACTIONAL),
    TheoremId.TH1_3: frozenset({Regime.FRACTIONAL_DIRAC}),
    TheoremId.COR1_4C: frozenset({Regime.FRACTIONAL_DIRAC}),
    TheoremId.COR1_5C: frozenset({Regime.FRACTIONAL_DIRAC}),
    TheoremId.PROP3_2: frozenset(_FRACTIONAL | {Regime.FRACTIONAL_DIRAC}),
    TheoremId.TH5_2: frozenset(_FRACTIONAL | {Regime.FRACTIONAL_DIRAC}),
    TheoremId.TH1_6: frozenset(_WHITE),
    TheoremId.TH5_3: frozenset(_WHITE),
    TheoremId.PROP3_3: frozenset(_WHITE | {Regime.WHITE_DIRAC}),
    TheoremId.TH1_7: frozenset({Regime.WHITE_DIRAC}),
    TheoremId.COR1_8: frozenset({Regime.WHITE_DIRAC}),
    TheoremId.TH5_4: frozenset({Regime.WHITE_DIRAC}),
}


def holds_in(theorem: TheoremId, regime: Regime) -> bool:
    return regime in THEOREM_REGIMES[theorem]


class TheoremParams(BaseModel):
    """Inputs to the constant formulas; unused fields are ignored"""

    theta: float = Field(default=1.0, gt=0)
    t: float = Field(default=1.0, gt=0)
    d: int = Field(default=1, ge=1)
    alpha0: float = Field(default=0.0, ge=0, lt=1)
    alpha: Optional[float] = None
    gamma_zero: Optional[float] = None
    time_integral: Optional[float] = None
    energy: Optional[float] = None
    dirac: bool = False

    def require_alpha(self) -> float:
        if self.dirac:
            return 1.0
        if self.alpha is None:
            raise ConfigError("missing input: scaling exponent alpha", module=MODULE)
        if not 0 < self.alpha < 2:
            raise ConfigError(f"alpha must lie in (0, 2), got {self.alpha}", module=MODULE)
        return float(self.alpha)

    def require_energy(self, problem: str, time_independent: bool = False) -> float:
        if self.energy is not None:
            return float(self.energy)
        if self.dirac and time_independent:
            return DIRAC_ENERGY
        raise ConfigError(f"missing variational input: solve {problem} first", module=MODULE)

    def require_gamma_zero(self) -> float:
        if self.gamma_zero is None:
            raise ConfigError("missing input: gamma(0)", module=MODULE)
        return float(self.gamma_zero)

    def double_integral(self) -> float:
        """∬γ₀ over [0,t]²; defaults to the fractional (or constant) time kernel"""
        if self.time_integral is not None:
            return float(self.time_integral)
        time = TimeCovariance.fractional(self.alpha0) if self.alpha0 > 0 else TimeCovariance.constant()
        return time_double_integral(time, self.t)


# ---------------------------------------------------------------------------
# spatial asymptotics
# ---------------------------------------------------------------------------

def _scaling_constant(alpha: float, energy_term: float, theta: float, d: int) -> float:
    """((4−α)/4)(energy_term/(2−α))^{(2−α)/(4−α)}θ^{4/(4−α)}d^{2/(4−α)}"""
    return ((4.0 - alpha) / 4.0 * (energy_term / (2.0 - alpha)) ** ((2.0 - alpha) / (4.0 - alpha))
            * theta ** (4.0 / (4.0 - alpha)) * d ** (2.0 / (4.0 - alpha)))


def limit_constant(theorem: TheoremId, params: TheoremParams) -> float:
    """Right-hand side of lim (log R)^{−κ} log max_{|x|≤R} u(t,x)"""
    theorem = TheoremId(theorem)
    p = params
    if theorem in (TheoremId.TH1_1, TheoremId.COR1_4A):
        return p.theta * (2.0 * p.d * p.require_gamma_zero() * p.double_integral()) ** 0.5
    if theorem == TheoremId.COR1_5A:
        return p.t * p.theta * (2.0 * p.d * p.require_gamma_zero()) ** 0.5
    if theorem in (TheoremId.TH1_2, TheoremId.COR1_4B):
        a = p.require_alpha()
        E = p.require_energy("E(alpha0,d,gamma)")
        return _scaling_constant(a, 4.0 * E, p.theta, p.d) * p.t ** ((4.0 - a - 2.0 * p.alpha0) / (4.0 - a))
    if theorem == TheoremId.COR1_5B:
        a = p.require_alpha()
        E = p.require_energy("E(d,gamma)", time_independent=True)
        return _scaling_constant(a, 4.0 * E, p.theta, p.d) * p.t
    if theorem in (TheoremId.TH1_3, TheoremId.COR1_4C):
        E = p.require_energy("E(alpha0,1,delta)")
        return 0.75 * p.theta ** (4.0 / 3.0) * p.t ** ((3.0 - 2.0 * p.alpha0) / 3.0) * (4.0 * E) ** (1.0 / 3.0)
    if theorem == TheoremId.COR1_5C:
        return 0.75 * p.t * p.theta ** (4.0 / 3.0) * (2.0 / 3.0) ** (1.0 / 3.0)
    if theorem == TheoremId.TH1_6:
        a = p.require_alpha()
        E = p.require_energy("E(d,gamma)", time_independent=True)
        return _scaling_constant(a, 4.0 * p.t * E, p.theta, p.d)
    if theorem in (TheoremId.TH1_7, TheoremId.COR1_8):
        return 0.75 * (2.0 * p.t / 3.0) ** (1.0 / 3.0) * p.theta ** (4.0 / 3.0) * p.d ** (2.0 / 3.0)
    raise ConfigError(f"{theorem.value} is not a spatial limit law", module=MODULE)


def long_time_constant(kind: str, params: TheoremParams) -> float:
    """Per-unit-time constants of the time-independent potential laws"""
    p = params
    if kind == "bounded":
        return p.theta * math.sqrt(2.0 * p.d * p.require_gamma_zero())
    if kind == "scaling":
        a = p.require_alpha()
        return _scaling_constant(a, 4.0 * p.require_energy("E(d,gamma)", True), p.theta, p.d)
    if kind == "dirac":
        return 0.75 * p.theta ** (4.0 / 3.0) * (2.0 / 3.0) ** (1.0 / 3.0)
    raise ConfigError(f"unknown long-time kind {kind!r}; expected bounded, scaling or dirac", module=MODULE)


def sobolev_energy(alpha: float, kappa: float) -> float:
    """E(d,γ) from the best constant κ of the matching Sobolev-type inequality"""
    if not 0 < alpha < 2 or not kappa > 0:
        raise ConfigError(f"need 0 < alpha < 2 and kappa > 0, got {alpha}, {kappa}", module=MODULE)
    return (2.0 - alpha) / 2.0 * alpha ** (alpha / (2.0 - alpha)) * kappa ** (2.0 / (2.0 - alpha))


# ---------------------------------------------------------------------------
# moment growth and tails
# ---------------------------------------------------------------------------

def moment_exponent(theorem: TheoremId, params: TheoremParams) -> float:
    """Power p of m in log E u(t,0)^m ~ C·m^p"""
    theorem = TheoremId(theorem)
    if theorem == TheoremId.PROP3_1:
        return 2.0
    if theorem in (TheoremId.PROP3_2, TheoremId.PROP3_3):
        a = params.require_alpha()
        return (4.0 - a) / (2.0 - a)
    raise ConfigError(f"{theorem.value} is not a moment-growth statement", module=MODULE)


def moment_constant(theorem: TheoremId, params: TheoremParams) -> float:
    """C in log E u(t,0)^m ~ C·m^p"""
    theorem = TheoremId(theorem)
    p = params
    if theorem == TheoremId.PROP3_1:
        return 0.5 * p.theta ** 2 * p.require_gamma_zero() * p.double_integral()
    if theorem == TheoremId.PROP3_2:
        a = p.require_alpha()
        E = p.require_energy("E(alpha0,d,gamma)")
        return (p.theta ** 2 / 2.0) ** (2.0 / (2.0 - a)) * p.t ** ((4.0 - a - 2.0 * p.alpha0) / (2.0 - a)) * E
    if theorem == TheoremId.PROP3_3:
        if p.dirac and p.energy is None:
            return p.t * p.theta ** 4 / 24.0
        a = p.require_alpha()
        E = p.require_energy("E(d,gamma)", time_independent=True)
        return p.t * (p.theta ** 2 / 2.0) ** (2.0 / (2.0 - a)) * E
    raise ConfigError(f"{theorem.value} is not a moment-growth statement", module=MODULE)


def long_time_moment_rate(m: int, params: TheoremParams) -> float:
    """lim_{t→∞} t^{−(4−α−2α₀)/(2−α)} log E u(t,0)^m"""
    a = params.require_alpha()
    E = params.require_energy("E(alpha0,d,gamma)")
    return m ** ((4.0 - a) / (2.0 - a)) * (params.theta ** 2 / 2.0) ** (2.0 / (2.0 - a)) * E


def legendre(p: float, C0: float, lam: float) -> Tuple[float, float]:
    """sup_β{βλ − C₀β^p} and its maximizer, p > 1"""
    if not p > 1 or not C0 > 0:
        raise ConfigError(f"legendre needs p > 1 and C0 > 0, got p={p}, C0={C0}", module=MODULE)
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}", module=MODULE)
    if lam == 0:
        return 0.0, 0.0
    value = (p - 1.0) / p * (C0 * p) ** (-1.0 / (p - 1.0)) * lam ** (p / (p - 1.0))
    argmax = (lam / (C0 * p)) ** (1.0 / (p - 1.0))
    return value, argmax


def _maximize_concave(objective: Callable[[float], float]) -> Tuple[float, float]:
    """Maximize a concave function on [0, ∞) by bracketing then bounded Brent"""
    hi = 1.0
    while objective(2.0 * hi) > objective(hi) and hi < 1e150:
        hi *= 2.0
    res = optimize.minimize_scalar(lambda b: -objective(b), bounds=(0.0, 2.0 * hi), method="bounded",
                                   options={"xatol": 1e-14 * hi, "maxiter": 2000})
    return -float(res.fun), float(res.x)


def legendre_numeric(p: float, C0: float, lam: float) -> Tuple[float, float]:
    """sup_β{βλ − C₀β^p} by numerical maximization"""
    if not p > 1 or not C0 > 0 or lam < 0:
        raise ConfigError(f"legendre needs p > 1, C0 > 0, lambda >= 0; got {p}, {C0}, {lam}", module=MODULE)
    return _maximize_concave(lambda b: b * lam - C0 * b ** p)


def half_moment_rate(p: float, C0: float, beta: float) -> float:
    """((p+1)/p)(pC₀)^{1/(p+1)}(β/2)^{2p/(p+1)}"""
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}", module=MODULE)
    return (p + 1.0) / p * (p * C0) ** (1.0 / (p + 1.0)) * (beta / 2.0) ** (2.0 * p / (p + 1.0))


def half_moment_rate_numeric(p: float, C0: float, beta: float) -> float:
    """sup_λ{βλ^{1/2} − legendre(p, C₀, λ)}"""
    if beta == 0:
        return 0.0
    value, _ = _maximize_concave(lambda lam: beta * math.sqrt(lam) - legendre(p, C0, lam)[0])
    return value


_TAIL_MOMENTS = {
    TheoremId.TH5_1: TheoremId.PROP3_1,
    TheoremId.TH5_2: TheoremId.PROP3_2,
    TheoremId.TH5_3: TheoremId.PROP3_3,
    TheoremId.TH5_4: TheoremId.PROP3_3,
}


def _tail_params(theorem: TheoremId, params: TheoremParams) -> TheoremParams:
    if theorem == TheoremId.TH5_4:
        return params.model_copy(update={"dirac": True, "energy": None, "d": 1})
    return params


def tail_rate(theorem: TheoremId, params: TheoremParams, lam: float) -> float:
    """lim a^{−κ} log P{log u(t,0) ≥ λa}, literal formula"""
    theorem = TheoremId(theorem)
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}", module=MODULE)
    p = params
    th2 = p.theta ** 2
    if theorem == TheoremId.TH5_1:
        return -lam ** 2 / (2.0 * th2) / (p.require_gamma_zero() * p.double_integral())
    if theorem == TheoremId.TH5_2:
        a = p.require_alpha()
        E = p.require_energy("E(alpha0,d,gamma)")
        return (-4.0 / th2 * ((2.0 - a) / E) ** ((2.0 - a) / 2.0) * (lam / (4.0 - a)) ** ((4.0 - a) / 2.0)
                * p.t ** (-(4.0 - a - 2.0 * p.alpha0) / 2.0))
    if theorem == TheoremId.TH5_3:
        a = p.require_alpha()
        E = p.require_energy("E(d,gamma)", time_independent=True)
        return -4.0 / th2 * ((2.0 - a) / (p.t * E)) ** ((2.0 - a) / 2.0) * (lam / (4.0 - a)) ** ((4.0 - a) / 2.0)
    if theorem == TheoremId.TH5_4:
        return -4.0 / th2 * (6.0 / p.t) ** 0.5 * (lam / 3.0) ** 1.5
    raise ConfigError(f"{theorem.value} is not a tail statement", module=MODULE)


def tail_rate_via_legendre(theorem: TheoremId, params: TheoremParams, lam: float) -> float:
    """−sup_β{βλ − C·β^p} with (p, C) from the matching moment-growth law"""
    theorem = TheoremId(theorem)
    if theorem not in _TAIL_MOMENTS:
        raise ConfigError(f"{theorem.value} is not a tail statement", module=MODULE)
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}", module=MODULE)
    moments = _TAIL_MOMENTS[theorem]
    mp = _tail_params(theorem, params)
    value, _ = legendre_numeric(moment_exponent(moments, mp), moment_constant(moments, mp), lam)
    return -value


# ---------------------------------------------------------------------------
# second moment in the white/white setting
# ---------------------------------------------------------------------------

def second_moment_closed_form(theta: float, t: float) -> float:
    """E u(t,0)² = 2e^{θ⁴t/4}Φ(θ²√(t/2)) for space-time white noise, u₀ ≡ 1"""
    return 2.0 * math.exp(theta ** 4 * t / 4.0) * float(special.ndtr(theta ** 2 * math.sqrt(t / 2.0)))


def second_moment_quadrature(theta: float, t: float, n_nodes: int = 200) -> float:
    """E exp{(θ²/√2)|B(t)|} by Gauss–Legendre quadrature of the half-line integral"""
    a = theta ** 2 * math.sqrt(t / 2.0)
    upper = a + 40.0
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    z = 0.5 * upper * (x + 1.0)
    density = np.exp(a * z - 0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return float(2.0 * 0.5 * upper * np.sum(w * density))


def second_moment_rates(theta: float) -> Dict[str, object]:
    """Long-time growth of E u(t,0)² next to what the large-m law would predict at m = 2"""
    exact = theta ** 4 / 4.0
    return {
        "exact": exact,
        "written_as": 8.0 * theta ** 4 / 32.0,
        "large_m_prediction": 8.0 * theta ** 4 / 24.0,
        "note": "m=2 grows at theta^4/4, not the m^3*theta^4/24 law extrapolated to m=2",
    }


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

class ScanRecord(BaseModel):
    R: float
    max_log_u: float
    seed: Optional[int] = None
    t: Optional[float] = None
    dx: Optional[float] = None


class FitResult(BaseModel):
    exponent: float
    intercept: float
    half_width: float = Field(ge=0)
    bootstrap_half_width: float = Field(default=0.0, ge=0)
    n_points: int
    nonlinear: bool = False


def spatial_scan(field: LatticeField, radii: Sequence[float], x0: float = 0.0,
                 seed: Optional[int] = None) -> List[ScanRecord]:
    """log max_{|x−x₀|≤R} u(t,x) for each R; nondecreasing in R"""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError("scan radii must be increasing", module=MODULE)
    grid = field.grid
    axis = grid.positions()
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    shifted = [m - x0 if i == 0 else m for i, m in enumerate(mesh)]
    dist = np.sqrt(sum(s ** 2 for s in shifted)).ravel()
    covered = min(x0 - axis[0], axis[-1] - x0)
    if radii and radii[-1] > covered:
        raise ConfigError(f"scan radius {radii[-1]:g} exceeds covered half-width {covered:g}", module=MODULE)
    values = np.asarray(field.values, dtype=float).ravel()
    order = np.argsort(dist, kind="stable")
    running = np.maximum.accumulate(values[order])
    sorted_dist = dist[order]
    records = []
    for R in radii:
        k = int(np.searchsorted(sorted_dist, R, side="right")) - 1
        best = running[k]
        if not best > 0:
            raise NumericalError(f"non-positive maximum {best} within R={R:g}", module=MODULE)
        records.append(ScanRecord(R=R, max_log_u=math.log(best), seed=seed, t=field.time, dx=grid.dx))
    return records


def _power_law(log_r: np.ndarray, a: float, b: float) -> np.ndarray:
    return a * log_r ** b


def fit_exponent(records: Sequence[ScanRecord], n_boot: int = 1000, seed: int = 0,
                 confidence: float = 0.95) -> FitResult:
    """Fit max_log_u = a·(log R)^b by least squares on (log log R, log max_log_u)"""
    if len(records) < 4:
        raise ConfigError(f"insufficient spread: {len(records)} records, need at least 4", module=MODULE)
    R = np.array([r.R for r in records], dtype=float)
    y = np.array([r.max_log_u for r in records], dtype=float)
    if np.any(R <= 1.0):
        raise ConfigError("radii must exceed 1 for the log-log model", module=MODULE)
    if R.max() / R.min() < 100.0:
        raise ConfigError("insufficient spread: radii must span at least two decades", module=MODULE)
    x = np.log(np.log(R))
    n = len(records)
    tq = float(stats.t.ppf(0.5 + confidence / 2.0, max(n - 2, 1)))

    if np.any(y <= 0):
        logger.warning("Non-positive max log u in scan; falling back to a direct nonlinear fit")
        (a, b), cov = optimize.curve_fit(_power_law, np.log(R), y, p0=(1.0, 0.5), maxfev=20000)
        half = tq * float(math.sqrt(max(cov[1, 1], 0.0))) if np.all(np.isfinite(cov)) else math.inf
        return FitResult(exponent=float(b), intercept=float(a), half_width=half, n_points=n, nonlinear=True)

    ly = np.log(y)
    fit = stats.linregress(x, ly)
    half = tq * float(fit.stderr) if n > 2 else 0.0

    gen = make_generator(seed, 7)
    slopes = []
    for _ in range(n_boot):
        idx = gen.integers(0, n, size=n)
        if np.ptp(x[idx]) == 0:
            continue
        slopes.append(np.polyfit(x[idx], ly[idx], 1)[0])
    boot = 0.0
    if slopes:
        lo, hi = np.quantile(slopes, [0.5 - confidence / 2.0, 0.5 + confidence / 2.0])
        boot = float(hi - lo) / 2.0
    return FitResult(exponent=float(fit.slope), intercept=float(math.exp(fit.intercept)), half_width=half,
                     bootstrap_half_width=boot, n_points=n)


class MomentRow(BaseModel):
    m: int
    log_moment: float
    stderr: float
    reliable: bool = True


class MomentGrowthResult(BaseModel):
    regime: str
    t: float
    theta: float
    rows: List[MomentRow]
    exponent: float
    constant: float
    half_width: float


def moment_growth_experiment(regime: str, t: float, theta: float, m_values: Sequence[int],
                             estimator: Callable[[int], MomentEstimate]) -> MomentGrowthResult:
    """Tabulate log Ê u^m and fit log E u^m = c·m^q on the reliable rows"""
    rows = []
    for m in m_values:
        est = estimator(int(m))
        reliable = not est.heavy_tail
        if not reliable:
            logger.warning(f"Moment m={m} flagged unreliable: heavy-tailed weights")
        rows.append(MomentRow(m=int(m), log_moment=est.log_value, stderr=est.log_stderr, reliable=reliable))
    usable = [r for r in rows if r.reliable and r.log_moment > 0]
    if len(usable) < 2:
        raise NumericalError("fewer than two reliable positive moments to fit", module=MODULE)
    lm = np.log([r.m for r in usable])
    ll = np.log([r.log_moment for r in usable])
    fit = stats.linregress(lm, ll)
    half = 0.0
    if len(usable) > 2:
        half = float(stats.t.ppf(0.975, len(usable) - 2)) * float(fit.stderr)
    logger.info(f"Moment growth ({regime}): q = {fit.slope:.4f} +/- {half:.4f}, c = {math.exp(fit.intercept):.6g}")
    return MomentGrowthResult(regime=regime, t=t, theta=theta, rows=rows, exponent=float(fit.slope),
                              constant=float(math.exp(fit.intercept)), half_width=half)


def spatial_max_experiment(cfg: SolveConfig, seeds: Sequence[int], radii: Sequence[float],
                           workers: Optional[int] = None) -> List[ScanRecord]:
    """Solve one realization per seed and scan each; realizations run concurrently"""

    def run(seed: int) -> List[ScanRecord]:
        return spatial_scan(solve(cfg, seed), radii, seed=seed)

    per_seed = parallel_map(run, list(seeds), workers)
    records = [r for rows in per_seed for r in rows]
    logger.info(f"Scanned {len(per_seed)} realizations at {len(radii)} radii")
    return records
