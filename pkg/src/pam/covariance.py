"""
Covariance structures of the Gaussian potential

The potential V(t,x) is a centered Gaussian field with covariance
Cov(V(s,x), V(t,y)) = γ₀(s−t)γ(x−y). This module defines the time factor γ₀
(fractional, white, constant) and the space factor γ (Riesz, product
fractional, Dirac, smooth Gaussian bump), evaluates them pointwise and in
Fourier space, builds the square-root kernel K with γ = K∗K, applies heat
kernel mollification, and classifies a spec into its noise regime with a
list of violated constraints.

Everything here is immutable and pure, so it is safe to share across workers.
"""

import logging
import math
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from ..utils.errors import ConfigError

logger = logging.getLogger(__name__)

MODULE = "covariance"

# Evaluation this close to a singular point is refused
SINGULAR_TOL = 1e-12

ArrayLike = Union[float, Sequence[float], np.ndarray]


class TimeKind(str, Enum):
    """Time covariance families"""
    FRACTIONAL = "fractional"
    WHITE = "white"
    CONSTANT = "constant"


class SpaceKind(str, Enum):
    """Space covariance families"""
    RIESZ = "riesz"
    PRODUCT = "product"
    DIRAC = "dirac"
    SMOOTH = "smooth"


class Regime(str, Enum):
    """Noise regime labels: time row (1)/(2) by space column (I)/(II)/(III)"""
    FRACTIONAL_RIESZ = "(1)x(I)"
    FRACTIONAL_PRODUCT = "(1)x(II)"
    FRACTIONAL_DIRAC = "(1)x(III)"
    WHITE_RIESZ = "(2)x(I)"
    WHITE_PRODUCT = "(2)x(II)"
    WHITE_DIRAC = "(2)x(III)"
    BOUNDED = "theorem-1.1-class"

    @property
    def white_in_time(self) -> bool:
        return self in (Regime.WHITE_RIESZ, Regime.WHITE_PRODUCT, Regime.WHITE_DIRAC)


class TimeCovariance(BaseModel):
    """γ₀: |u|^{−α₀}, δ₀ or the constant 1. α₀ = 2 − 2H₀."""

    model_config = ConfigDict(frozen=True)

    kind: TimeKind
    alpha0: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "TimeCovariance":
        if self.kind == TimeKind.FRACTIONAL and not (0.0 <= self.alpha0 < 1.0):
            raise ValueError(f"fractional time requires 0 <= alpha0 < 1, got {self.alpha0}")
        if self.kind != TimeKind.FRACTIONAL and self.alpha0 != 0.0:
            raise ValueError(f"alpha0 is only meaningful for fractional time, got {self.alpha0}")
        return self

    @classmethod
    def fractional(cls, alpha0: float) -> "TimeCovariance":
        return cls(kind=TimeKind.FRACTIONAL, alpha0=alpha0)

    @classmethod
    def white(cls) -> "TimeCovariance":
        return cls(kind=TimeKind.WHITE)

    @classmethod
    def constant(cls) -> "TimeCovariance":
        return cls(kind=TimeKind.CONSTANT)

    @property
    def hurst0(self) -> float:
        return 1.0 - self.alpha0 / 2.0


class SpaceCovariance(BaseModel):
    """γ: |x|^{−α}, Π|x_j|^{2H_j−2}, δ₀ (d=1) or γ(0)exp(−|x|²/(2w²))"""

    model_config = ConfigDict(frozen=True)

    kind: SpaceKind
    d: int = 1
    alpha: Optional[float] = None
    hurst: Tuple[float, ...] = ()
    amplitude: float = 1.0
    width: float = 1.0

    @model_validator(mode="after")
    def _check(self) -> "SpaceCovariance":
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.kind == SpaceKind.RIESZ:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError(f"riesz covariance requires alpha > 0, got {self.alpha}")
        elif self.kind == SpaceKind.PRODUCT:
            if len(self.hurst) != self.d:
                raise ValueError(f"product covariance needs {self.d} Hurst exponents, got {len(self.hurst)}")
            bad = [h for h in self.hurst if not (0.5 < h < 1.0)]
            if bad:
                raise ValueError(f"product covariance requires 1/2 < H_j < 1, got {bad}")
        elif self.kind == SpaceKind.DIRAC:
            if self.d != 1:
                raise ValueError(f"dirac space covariance requires d = 1, got {self.d}")
        elif self.kind == SpaceKind.SMOOTH:
            if not (self.amplitude > 0 and self.width > 0):
                raise ValueError("smooth covariance requires positive amplitude and width")
        return self

    @classmethod
    def riesz(cls, alpha: float, d: int = 1) -> "SpaceCovariance":
        return cls(kind=SpaceKind.RIESZ, alpha=alpha, d=d)

    @classmethod
    def product(cls, hurst: Sequence[float]) -> "SpaceCovariance":
        return cls(kind=SpaceKind.PRODUCT, hurst=tuple(hurst), d=len(hurst))

    @classmethod
    def dirac(cls) -> "SpaceCovariance":
        return cls(kind=SpaceKind.DIRAC, d=1)

    @classmethod
    def smooth(cls, amplitude: float = 1.0, width: float = 1.0, d: int = 1) -> "SpaceCovariance":
        return cls(kind=SpaceKind.SMOOTH, amplitude=amplitude, width=width, d=d)

    @property
    def scaling_exponent(self) -> Optional[float]:
        """α with γ(cx) = c^{−α}γ(x); None for the smooth bump"""
        if self.kind == SpaceKind.RIESZ:
            return float(self.alpha)
        if self.kind == SpaceKind.PRODUCT:
            return 2.0 * self.d - 2.0 * sum(self.hurst)
        if self.kind == SpaceKind.DIRAC:
            return 1.0
        return None

    @property
    def axis_exponents(self) -> Tuple[float, ...]:
        """Per-axis exponents α_j = 2 − 2H_j of the product kind"""
        return tuple(2.0 - 2.0 * h for h in self.hurst)

    @property
    def gamma_at_zero(self) -> float:
        return float(self.amplitude) if self.kind == SpaceKind.SMOOTH else math.inf


class CovarianceSpec(BaseModel):
    """The (γ₀, γ, θ) triple"""

    model_config = ConfigDict(frozen=True)

    time: TimeCovariance
    space: SpaceCovariance
    theta: float = Field(default=1.0, gt=0)

    @property
    def d(self) -> int:
        return self.space.d


class KernelSpec(BaseModel):
    """
    Square-root kernel K with γ = K∗K, optionally heat-smoothed to K_ε = p_ε∗K.

    K is |x|^{−(d+α)/2} (riesz), Π|x_j|^{−(1+α_j)/2} (product), δ₀ (dirac) or a
    Gaussian of width w/√2 (smooth), times `normalization`.
    """

    model_config = ConfigDict(frozen=True)

    space: SpaceCovariance
    normalization: float
    epsilon: float = 0.0
    distributional: bool = False

    @property
    def base(self) -> SpaceKind:
        return self.space.kind

    @property
    def exponent(self) -> Optional[float]:
        if self.space.kind == SpaceKind.RIESZ:
            return (self.space.d + self.space.alpha) / 2.0
        if self.space.kind == SpaceKind.PRODUCT:
            return None
        return None

    def evaluate(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """Pointwise K(x) (ε=0) or K_ε(x)"""
        if self.distributional:
            raise ConfigError("kernel is the Dirac mass; use epsilon > 0 for pointwise values", module=MODULE)
        pts, scalar = _as_points(x, self.space.d)
        eps = self.epsilon
        sp = self.space
        if sp.kind == SpaceKind.RIESZ:
            b = self.exponent
            r = np.linalg.norm(pts, axis=-1)
            if eps > 0:
                vals = _smoothed_power(b, sp.d, eps, r)
            else:
                _refuse_singular(r, "riesz kernel")
                vals = r ** (-b)
        elif sp.kind == SpaceKind.PRODUCT:
            vals = np.ones(pts.shape[:-1])
            for j, aj in enumerate(sp.axis_exponents):
                bj = (1.0 + aj) / 2.0
                xj = np.abs(pts[..., j])
                if eps > 0:
                    vals = vals * _smoothed_power(bj, 1, eps, xj)
                else:
                    _refuse_singular(xj, "product kernel")
                    vals = vals * xj ** (-bj)
        elif sp.kind == SpaceKind.DIRAC:
            vals = _heat_density(pts, eps)
        else:
            w2 = sp.width ** 2
            r2 = np.sum(pts ** 2, axis=-1)
            vals = (w2 / (w2 + 2.0 * eps)) ** (sp.d / 2.0) * np.exp(-r2 / (w2 + 2.0 * eps))
        vals = self.normalization * vals
        return float(vals) if scalar else vals


class RegimeReport(BaseModel):
    """Regime label plus violated constraints (empty iff admissible)"""

    regime: Regime
    violations: List[str] = []

    @property
    def admissible(self) -> bool:
        return not self.violations


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _as_points(x: ArrayLike, d: int) -> Tuple[np.ndarray, bool]:
    """Return points with a trailing axis of length d and whether input was one point"""
    arr = np.asarray(x, dtype=float)
    if d == 1:
        if arr.ndim == 0:
            return arr.reshape(1), True
        return arr[..., None], False
    if arr.ndim == 0 or arr.shape[-1] != d:
        raise ConfigError(f"expected points with {d} coordinates, got shape {arr.shape}", module=MODULE)
    return arr, arr.ndim == 1


def _refuse_singular(r: np.ndarray, what: str) -> None:
    if np.any(np.abs(r) < SINGULAR_TOL):
        raise ConfigError(f"singularity: {what} evaluated at the singular set", module=MODULE)


def _heat_density(pts: np.ndarray, variance: float) -> np.ndarray:
    """Density of N(0, variance·I_d) at pts"""
    d = pts.shape[-1]
    r2 = np.sum(pts ** 2, axis=-1)
    return (2.0 * math.pi * variance) ** (-d / 2.0) * np.exp(-r2 / (2.0 * variance))


def _smoothed_power(a: float, d: int, variance: float, r: np.ndarray) -> np.ndarray:
    """
    E|x + σZ|^{−a} for Z standard normal in R^d, σ² = variance, |x| = r.

    Closed form σ^{−a}2^{−a/2}Γ((d−a)/2)/Γ(d/2)·₁F₁(a/2; d/2; −r²/(2σ²)),
    valid for 0 < a < d; for large arguments the asymptotic series of ₁F₁ is used.
    """
    if not (0 < a < d):
        raise ConfigError(f"heat smoothing of |x|^-{a} needs 0 < a < d={d}", module=MODULE)
    shape = np.shape(r)
    r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    z = r ** 2 / (2.0 * variance)
    prefactor = variance ** (-a / 2.0) * 2.0 ** (-a / 2.0) * special.gamma((d - a) / 2.0) / special.gamma(d / 2.0)
    out = np.empty_like(z)
    near = z <= 200.0
    out[near] = prefactor * special.hyp1f1(a / 2.0, d / 2.0, -z[near])
    if np.any(~near):
        zf = z[~near]
        p, c = a / 2.0, a / 2.0 - d / 2.0 + 1.0
        series = np.ones_like(zf)
        term = np.ones_like(zf)
        for n in range(1, 5):
            term = term * (p + n - 1) * (c + n - 1) / (n * zf)
            series = series + term
        out[~near] = r[~near] ** (-a) * series
    return out.reshape(shape)


def _riesz_fourier_constant(d: int, a: float) -> float:
    """c(d,a) with ∫|x|^{−a}e^{iλ·x}dx = c(d,a)|λ|^{a−d}, 0 < a < d"""
    return math.pi ** (d / 2.0) * 2.0 ** (d - a) * math.gamma((d - a) / 2.0) / math.gamma(a / 2.0)


def _power_self_convolution_1d(b: float, x: float) -> float:
    """∫|y|^{−b}|x−y|^{−b}dy for 1/2 < b < 1 and x > 0, by quadrature"""
    middle, _ = integrate.quad(lambda y: 1.0, 0.0, x, weight="alg", wvar=(-b, -b))
    # outside [0, x] both halves are equal by the reflection y -> x - y
    near, _ = integrate.quad(lambda y: (x + y) ** (-b), 0.0, x, weight="alg", wvar=(-b, 0.0))
    far, _ = integrate.quad(lambda y: y ** (-b) * (x + y) ** (-b), x, np.inf)
    return middle + 2.0 * (near + far)


@lru_cache(maxsize=64)
def _fitted_power_normalization(alpha: float) -> float:
    """
    Constant a with a²(|·|^{−b} ∗ |·|^{−b})(x) ≈ |x|^{−α}, b=(1+α)/2, in d=1.

    Least squares in log space on a log-spaced validation grid.
    """
    b = (1.0 + alpha) / 2.0
    xs = np.logspace(-2, 2, 9)
    raw = np.array([_power_self_convolution_1d(b, float(x)) for x in xs])
    log_a2 = float(np.mean(-alpha * np.log(xs) - np.log(raw)))
    a = math.exp(0.5 * log_a2)
    logger.debug(f"Fitted kernel normalization for alpha={alpha}: {a}")
    return a


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def gamma0_eval(time: TimeCovariance, u: float) -> float:
    """γ₀(u)"""
    if time.kind == TimeKind.WHITE:
        raise ConfigError("distributional covariance; use weighted quadrature", module=MODULE)
    if time.kind == TimeKind.CONSTANT or time.alpha0 == 0.0:
        return 1.0
    if abs(u) < SINGULAR_TOL:
        raise ConfigError(f"singularity: gamma0 evaluated at u={u}", module=MODULE)
    return abs(u) ** (-time.alpha0)


def gamma_eval(space: SpaceCovariance, x: ArrayLike) -> Union[float, np.ndarray]:
    """γ(x); x is one point or an array of points (trailing axis d, or plain array when d=1)"""
    if space.kind == SpaceKind.DIRAC:
        raise ConfigError("distributional: the Dirac covariance has no pointwise values", module=MODULE)
    pts, scalar = _as_points(x, space.d)
    if space.kind == SpaceKind.RIESZ:
        r = np.linalg.norm(pts, axis=-1)
        _refuse_singular(r, "riesz covariance")
        vals = r ** (-space.alpha)
    elif space.kind == SpaceKind.PRODUCT:
        vals = np.ones(pts.shape[:-1])
        for j, h in enumerate(space.hurst):
            xj = np.abs(pts[..., j])
            _refuse_singular(xj, "product covariance")
            vals = vals * xj ** (2.0 * h - 2.0)
    else:
        r2 = np.sum(pts ** 2, axis=-1)
        vals = space.amplitude * np.exp(-r2 / (2.0 * space.width ** 2))
    return float(vals) if scalar else vals


def gamma_fourier(space: SpaceCovariance, lam: ArrayLike) -> Union[float, np.ndarray]:
    """γ̂(λ) = ∫γ(x)e^{iλ·x}dx"""
    pts, scalar = _as_points(lam, space.d)
    d = space.d
    if space.kind == SpaceKind.DIRAC:
        vals = np.ones(pts.shape[:-1])
    elif space.kind == SpaceKind.RIESZ:
        if space.alpha >= d:
            raise ConfigError(f"Fourier transform of |x|^-{space.alpha} undefined for alpha >= d={d}", module=MODULE)
        r = np.linalg.norm(pts, axis=-1)
        _refuse_singular(r, "riesz spectrum")
        vals = _riesz_fourier_constant(d, space.alpha) * r ** (space.alpha - d)
    elif space.kind == SpaceKind.PRODUCT:
        vals = np.ones(pts.shape[:-1])
        for j, aj in enumerate(space.axis_exponents):
            lj = np.abs(pts[..., j])
            _refuse_singular(lj, "product spectrum")
            vals = vals * _riesz_fourier_constant(1, aj) * lj ** (aj - 1.0)
    else:
        w2 = space.width ** 2
        r2 = np.sum(pts ** 2, axis=-1)
        vals = space.amplitude * (2.0 * math.pi * w2) ** (d / 2.0) * np.exp(-w2 * r2 / 2.0)
    return float(vals) if scalar else vals


def kernel_eval(spec: Union[CovarianceSpec, SpaceCovariance], epsilon: float = 0.0) -> KernelSpec:
    """Square-root kernel K of γ, heat-smoothed by p_ε when ε > 0"""
    space = spec.space if isinstance(spec, CovarianceSpec) else spec
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}", module=MODULE)
    d = space.d
    if space.kind == SpaceKind.DIRAC:
        return KernelSpec(space=space, normalization=1.0, epsilon=epsilon, distributional=epsilon == 0.0)
    if space.kind == SpaceKind.RIESZ:
        if space.alpha >= d:
            raise ConfigError(f"riesz kernel needs alpha < d, got alpha={space.alpha}, d={d}", module=MODULE)
        if d == 1:
            norm = _fitted_power_normalization(float(space.alpha))
        else:
            b = (d + space.alpha) / 2.0
            norm = math.sqrt(_riesz_fourier_constant(d, space.alpha)) / _riesz_fourier_constant(d, b)
        return KernelSpec(space=space, normalization=norm, epsilon=epsilon)
    if space.kind == SpaceKind.PRODUCT:
        norm = 1.0
        for aj in space.axis_exponents:
            norm *= _fitted_power_normalization(float(aj))
        return KernelSpec(space=space, normalization=norm, epsilon=epsilon)
    norm = math.sqrt(space.amplitude / (math.pi * space.width ** 2 / 2.0) ** (d / 2.0))
    return KernelSpec(space=space, normalization=norm, epsilon=epsilon)


def verify_factorization(kernel: KernelSpec, points: Sequence[float]) -> np.ndarray:
    """Relative errors |(K∗K)(x)/γ(x) − 1| at d=1 points, self-convolution by quadrature"""
    space = kernel.space
    if space.d != 1 or kernel.distributional:
        raise ConfigError("factorization check is available for pointwise kernels in d=1", module=MODULE)
    if kernel.epsilon != 0.0:
        raise ConfigError("factorization check applies to the unmollified kernel", module=MODULE)
    errors = []
    for x in points:
        x = abs(float(x))
        if space.kind == SpaceKind.SMOOTH:
            f = lambda y: float(kernel.evaluate(y)) * float(kernel.evaluate(x - y))
            conv, _ = integrate.quad(f, -np.inf, np.inf)
        else:
            b = (1.0 + space.scaling_exponent) / 2.0
            conv = kernel.normalization ** 2 * _power_self_convolution_1d(b, x)
        errors.append(abs(conv / float(gamma_eval(space, x)) - 1.0))
    return np.asarray(errors)


def mollify_gamma(spec: Union[CovarianceSpec, SpaceCovariance], epsilon: float,
                  x: ArrayLike) -> Union[float, np.ndarray]:
    """γ_ε(x) = ∫p_{2ε}(x−y)γ(y)dy"""
    space = spec.space if isinstance(spec, CovarianceSpec) else spec
    if not epsilon > 0:
        raise ConfigError(f"mollification needs epsilon > 0, got {epsilon}", module=MODULE)
    pts, scalar = _as_points(x, space.d)
    if space.kind == SpaceKind.DIRAC:
        vals = _heat_density(pts, 2.0 * epsilon)
    elif space.kind == SpaceKind.RIESZ:
        if space.alpha >= space.d:
            raise ConfigError(f"riesz mollification needs alpha < d, got alpha={space.alpha}", module=MODULE)
        vals = _smoothed_power(space.alpha, space.d, 2.0 * epsilon, np.linalg.norm(pts, axis=-1))
    elif space.kind == SpaceKind.PRODUCT:
        vals = np.ones(pts.shape[:-1])
        for j, aj in enumerate(space.axis_exponents):
            vals = vals * _smoothed_power(aj, 1, 2.0 * epsilon, np.abs(pts[..., j]))
    else:
        w2 = space.width ** 2
        r2 = np.sum(pts ** 2, axis=-1)
        vals = space.amplitude * (w2 / (w2 + 2.0 * epsilon)) ** (space.d / 2.0) \
            * np.exp(-r2 / (2.0 * (w2 + 2.0 * epsilon)))
    return float(vals) if scalar else vals


def dalang_check(spec: Union[CovarianceSpec, SpaceCovariance]) -> bool:
    """∫γ̂(λ)/(1+|λ|²)dλ < ∞, decided from the parameters"""
    space = spec.space if isinstance(spec, CovarianceSpec) else spec
    if space.kind == SpaceKind.RIESZ:
        return space.alpha < 2.0
    if space.kind == SpaceKind.PRODUCT:
        return sum(space.axis_exponents) < 2.0
    if space.kind == SpaceKind.DIRAC:
        return space.d == 1
    return True


def dalang_partial_integral(space: SpaceCovariance, cutoff: float) -> float:
    """∫_{|λ|≤cutoff} γ̂(λ)/(1+|λ|²)dλ by radial quadrature"""
    d = space.d
    sphere = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    if space.kind == SpaceKind.DIRAC:
        return 2.0 * math.atan(cutoff)
    if space.kind == SpaceKind.PRODUCT:
        if d != 1:
            raise ConfigError("partial Dalang integral is radial; product kind only in d=1", module=MODULE)
        space = SpaceCovariance.riesz(space.axis_exponents[0], 1)
    if space.kind == SpaceKind.RIESZ:
        a = space.alpha
        c = _riesz_fourier_constant(d, a)
        # integrand c r^{a-1}/(1+r^2): algebraic weight at the origin
        head_end = min(1.0, cutoff)
        head, _ = integrate.quad(lambda r: 1.0 / (1.0 + r * r), 0.0, head_end, weight="alg", wvar=(a - 1.0, 0.0))
        tail = 0.0
        if cutoff > 1.0:
            tail, _ = integrate.quad(lambda r: r ** (a - 1.0) / (1.0 + r * r), 1.0, cutoff, limit=200)
        return sphere * c * (head + tail)
    f = lambda r: float(gamma_fourier(space, np.full(d, r / math.sqrt(d)))) * r ** (d - 1) / (1.0 + r * r)
    val, _ = integrate.quad(f, 0.0, cutoff, limit=200)
    return sphere * val


def regime_classify(spec: CovarianceSpec) -> RegimeReport:
    """Regime label and every violated constraint; never raises"""
    time, space = spec.time, spec.space
    violations: List[str] = []
    if space.kind == SpaceKind.SMOOTH:
        return RegimeReport(regime=Regime.BOUNDED, violations=[])

    if time.kind == TimeKind.WHITE:
        if space.kind == SpaceKind.RIESZ:
            bound = min(2.0, float(space.d))
            if not (0.0 < space.alpha < bound):
                violations.append(f"white time with riesz space requires 0 < alpha < min(2, d) = {bound:g}, got alpha={space.alpha:g}")
            regime = Regime.WHITE_RIESZ
        elif space.kind == SpaceKind.PRODUCT:
            bad = [h for h in space.hurst if not (0.5 < h < 1.0)]
            if bad:
                violations.append(f"white time with product space requires 1/2 < H_j < 1, got {bad}")
            regime = Regime.WHITE_PRODUCT
        else:
            if space.d != 1:
                violations.append(f"white time with dirac space requires d = 1, got d={space.d}")
            regime = Regime.WHITE_DIRAC
        return RegimeReport(regime=regime, violations=violations)

    alpha0 = time.alpha0
    if space.kind == SpaceKind.RIESZ:
        if not (0.0 < space.alpha < space.d):
            violations.append(f"fractional time with riesz space requires 0 < alpha < d = {space.d}, got alpha={space.alpha:g}")
        if not (2.0 * alpha0 + space.alpha < 2.0):
            violations.append(f"constraint 2*alpha0 + alpha < 2 violated: 2*{alpha0:g} + {space.alpha:g} = {2 * alpha0 + space.alpha:g}")
        regime = Regime.FRACTIONAL_RIESZ
    elif space.kind == SpaceKind.PRODUCT:
        h0 = time.hurst0
        if not (0.5 < h0 <= 1.0):
            violations.append(f"fractional time requires 1/2 < H0 <= 1, got H0={h0:g}")
        total = 2.0 * h0 + sum(space.hurst)
        if not (total > space.d + 1):
            violations.append(f"constraint 2*H0 + sum(H_j) > d + 1 violated: {total:g} <= {space.d + 1}")
        regime = Regime.FRACTIONAL_PRODUCT
    else:
        # dirac space read as the product kind with H_1 = 1/2
        if not (2.0 * alpha0 + 1.0 < 2.0):
            violations.append(f"constraint 2*alpha0 + 1 < 2 violated for dirac space: alpha0={alpha0:g}")
        regime = Regime.FRACTIONAL_DIRAC
    return RegimeReport(regime=regime, violations=violations)


# ---------------------------------------------------------------------------
# lattice projections
# ---------------------------------------------------------------------------

def _power_antiderivative(a: float, u: np.ndarray) -> np.ndarray:
    """Even G with G'' = |u|^{−a}"""
    return np.abs(u) ** (2.0 - a) / ((1.0 - a) * (2.0 - a))


def _gaussian_antiderivative(amplitude: float, width: float, u: np.ndarray) -> np.ndarray:
    """Even G with G'' = A exp(−u²/(2w²))"""
    s = width * math.sqrt(2.0)
    return amplitude * (u * width * math.sqrt(math.pi / 2.0) * special.erf(u / s) + width ** 2 * np.exp(-u ** 2 / (2.0 * width ** 2)))


def _cell_pair_average(antiderivative, h: float, n_lags: int) -> np.ndarray:
    """(1/h²)∫∫ f(y−x) over cells at lags 0..n_lags, as a second difference of G"""
    k = np.arange(n_lags + 1, dtype=float)
    return (antiderivative((k + 1.0) * h) - 2.0 * antiderivative(k * h) + antiderivative((k - 1.0) * h)) / h ** 2


def cell_averaged_gamma0(time: TimeCovariance, dt: float, n_lags: int) -> np.ndarray:
    """Cell-pair averages of γ₀ at time lags 0..n_lags"""
    if time.kind == TimeKind.WHITE:
        out = np.zeros(n_lags + 1)
        out[0] = 1.0 / dt
        return out
    if time.kind == TimeKind.CONSTANT or time.alpha0 == 0.0:
        return np.ones(n_lags + 1)
    a = time.alpha0
    return _cell_pair_average(lambda u: _power_antiderivative(a, u), dt, n_lags)


def _axis_table(space: SpaceCovariance, axis_alpha: Optional[float], dx: float, n_lags: int) -> np.ndarray:
    if space.kind == SpaceKind.SMOOTH:
        # amplitude^{1/d} per axis so the product carries γ(0)
        amp = space.amplitude ** (1.0 / space.d)
        return _cell_pair_average(lambda u: _gaussian_antiderivative(amp, space.width, u), dx, n_lags)
    return _cell_pair_average(lambda u: _power_antiderivative(axis_alpha, u), dx, n_lags)


def cell_averaged_gamma(space: SpaceCovariance, dx: float, n_lags: int, n_sub: int = 16) -> np.ndarray:
    """
    Cell-pair averages of γ at non-negative lags, shape (n_lags+1,)*d.

    Separable kinds use exact one-dimensional second differences per axis; the
    riesz kind in d ≥ 2 integrates the lag density against the tent weight
    with an even midpoint rule that never samples the origin.
    """
    d = space.d
    if space.kind == SpaceKind.DIRAC:
        out = np.zeros(n_lags + 1)
        out[0] = 1.0 / dx
        return out
    if space.kind == SpaceKind.RIESZ and d == 1:
        if space.alpha >= 1.0:
            raise ConfigError(f"cell averages of |x|^-{space.alpha} diverge for alpha >= 1 in d=1", module=MODULE)
        return _axis_table(space, space.alpha, dx, n_lags)
    if space.kind in (SpaceKind.PRODUCT, SpaceKind.SMOOTH):
        alphas = space.axis_exponents if space.kind == SpaceKind.PRODUCT else (None,) * d
        table = np.ones((n_lags + 1,) * d)
        for j, aj in enumerate(alphas):
            shape = [1] * d
            shape[j] = n_lags + 1
            table = table * _axis_table(space, aj, dx, n_lags).reshape(shape)
        return table
    if space.alpha >= d:
        raise ConfigError(f"cell averages of |x|^-{space.alpha} diverge for alpha >= d={d}", module=MODULE)
    # riesz, d >= 2
    nodes = (np.arange(2 * n_sub) + 0.5) / n_sub - 1.0  # midpoints on [-1, 1], never 0
    tent = 1.0 - np.abs(nodes)
    tent = tent / tent.sum()
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    weights = np.ones_like(grids[0])
    for g in np.meshgrid(*([tent] * d), indexing="ij"):
        weights = weights * g
    offsets = np.stack(grids, axis=-1) * dx
    lags = np.stack(np.meshgrid(*([np.arange(n_lags + 1)] * d), indexing="ij"), axis=-1) * dx
    table = np.empty(lags.shape[:-1])
    flat_lags = lags.reshape(-1, d)
    flat = np.empty(flat_lags.shape[0])
    for i, lag in enumerate(flat_lags):
        r = np.linalg.norm(lag + offsets, axis=-1)
        flat[i] = np.sum(weights * r ** (-space.alpha))
    table[...] = flat.reshape(table.shape)
    return table


def reflect_lag_table(table: np.ndarray) -> np.ndarray:
    """Extend a non-negative-lag table to lags −n..n along every axis"""
    out = table
    for axis in range(table.ndim):
        mirrored = np.flip(np.delete(out, 0, axis=axis), axis=axis)
        out = np.concatenate([mirrored, out], axis=axis)
    return out


def time_double_integral(time: TimeCovariance, t: float) -> float:
    """∫₀ᵗ∫₀ᵗγ₀(r−s)drds"""
    if time.kind == TimeKind.WHITE:
        return float(t)
    if time.kind == TimeKind.CONSTANT or time.alpha0 == 0.0:
        return float(t) ** 2
    a = time.alpha0
    return 2.0 * float(t) ** (2.0 - a) / ((1.0 - a) * (2.0 - a))
