"""
Ornstein-Uhlenbeck process parameters and age-penalty functionals.

The long-term average MMSE of a remotely estimated OU process is the time
average of an increasing function of the age-of-information (AoI). This module
provides:

- OUParams: process parameters (theta, sigma) and steady-state statistics.
- The rate-distortion model of an ell-bit quantizer in steady state.
- AgePenalty: interface of increasing age-penalty functionals g(age), with
  an exact integral when available and quadrature otherwise.
- Concrete penalties: OUMsePenalty (the MMSE h_ell), LinearAgePenalty (the
  age itself), ConstantPenalty, and CallablePenalty (user functions).

All penalties accept scalars or NumPy arrays of ages.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union
import numpy as np
from scipy import integrate

QUADRATURE_ABS_TOL = 1e-12
QUADRATURE_SUBINTERVALS = 200

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class OUParams:
    """
    Parameters of an Ornstein-Uhlenbeck process dX = -theta X dt + sigma dW.

    Attributes:
        theta: Mean-reversion rate (1/time), strictly positive.
        sigma: Diffusion scale (value/sqrt(time)), strictly positive.
    """
    theta: float
    sigma: float

    def __post_init__(self):
        for name in ('theta', 'sigma'):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
                raise TypeError(f'{name} must be a number, got {type(value).__name__}')
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f'{name} must be positive, got {value}')
        object.__setattr__(self, 'theta', float(self.theta))
        object.__setattr__(self, 'sigma', float(self.sigma))

    @property
    def variance(self) -> float:
        """Steady-state variance sigma^2/(2 theta)."""
        return steady_state_variance(self)


def steady_state_variance(p: OUParams) -> float:
    """
    Return the steady-state variance of the OU process, sigma^2/(2 theta).
    """
    return p.sigma**2 / (2 * p.theta)


def _check_bits(ell) -> int:
    if isinstance(ell, bool) or not isinstance(ell, (int, np.integer)):
        raise TypeError(f'ell must be an integer number of bits, got {type(ell).__name__}')
    if ell < 1:
        raise ValueError(f'ell must be at least 1 bit, got {ell}')
    return int(ell)


def quantization_mse(p: OUParams, ell: int) -> float:
    """
    Steady-state mean-square quantization error of an ell-bit quantizer.

    Follows the Gaussian rate-distortion function: each bit reduces the
    distortion by a factor of four.

    Args:
        p: OU process parameters.
        ell: Number of quantization bits (>= 1).

    Returns:
        (sigma^2/2 theta) * 2^(-2 ell)

    Raises:
        ValueError: If ell < 1.
    """
    ell = _check_bits(ell)
    return steady_state_variance(p) * 2.0**(-2 * ell)


def mse_penalty(p: OUParams, ell: int, delta: ArrayLike) -> ArrayLike:
    """
    Steady-state MMSE of the OU estimate as a function of the age delta.

    h_ell(delta) = (sigma^2/2 theta) * (1 - (1 - 2^(-2 ell)) exp(-2 theta delta))

    Args:
        p: OU process parameters.
        ell: Number of quantization bits (>= 1).
        delta: Age (scalar or array), non-negative.

    Returns:
        MMSE value(s), same shape as delta.

    Raises:
        ValueError: If any delta is negative.
    """
    ell = _check_bits(ell)
    age = np.asarray(delta, dtype=float)
    if np.any(age < 0):
        raise ValueError(f'age must be non-negative, got {np.min(age)}')
    # exp underflows to 0 for large theta*delta, which is the correct limit
    decay = np.exp(-2 * p.theta * age)
    value = steady_state_variance(p) * (1 - (1 - 2.0**(-2 * ell)) * decay)
    return float(value) if value.ndim == 0 else value


def transient_mse(p: OUParams, ell: int, t: ArrayLike, s: float) -> ArrayLike:
    """
    MMSE at time t of an estimate built from a sample taken at time s >= 0,
    for a process started at X_0 = 0 (before reaching steady state).

    Only used to cross-check mse_penalty, which is its limit for large s.
    """
    ell = _check_bits(ell)
    t = np.asarray(t, dtype=float)
    if s < 0 or np.any(t < s):
        raise ValueError(f'need 0 <= s <= t, got s={s}, min(t)={np.min(t)}')
    quant = 2.0**(-2 * ell) * (1 - np.exp(-2 * p.theta * s))
    value = steady_state_variance(p) * (1 - (1 - quant) * np.exp(-2 * p.theta * (t - s)))
    return float(value) if value.ndim == 0 else value


class AgePenalty(ABC):
    """
    Increasing age-penalty functional g(age).

    Subclasses implement __call__ (vectorized over NumPy arrays). Those with
    a closed-form antiderivative set `has_exact_integral = True` and implement
    `exact_integral`; all others are integrated by adaptive quadrature.

    Attributes:
        has_exact_integral: Whether exact_integral() is implemented.
        derivative: Optional derivative g'(age). Not needed by the solvers.
    """
    has_exact_integral = False
    derivative: Optional[Callable[[ArrayLike], ArrayLike]] = None

    @abstractmethod
    def __call__(self, delta: ArrayLike) -> ArrayLike:
        """Evaluate g at one or more ages."""

    @property
    def sup(self) -> float:
        """Least upper bound of g over [0, inf) (inf when unbounded)."""
        return np.inf

    @property
    def inf(self) -> float:
        """Greatest lower bound of g over [0, inf), i.e. g(0)."""
        return float(self(0.0))

    @property
    def envelope(self) -> Optional[Tuple[float, float]]:
        """
        Linear upper envelope (c0, slope) with g(t) <= c0 + slope*t for all t,
        or None if no such bound is known. Used to bound truncated series.
        """
        if np.isfinite(self.sup):
            return (self.sup, 0.0)
        return None

    def exact_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        raise NotImplementedError(f'{type(self).__name__} has no closed-form integral')

    def quadrature_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        """Integral of g over [a, b] by adaptive quadrature (elementwise)."""
        def one_integral(lo, hi):
            if hi == lo:
                return 0.0
            value, _ = integrate.quad(lambda t: float(self(t)), lo, hi,
                                      epsabs=QUADRATURE_ABS_TOL, epsrel=1e-13,
                                      limit=QUADRATURE_SUBINTERVALS)
            return value
        result = np.vectorize(one_integral, otypes=[float])(a, b)
        return float(result) if result.ndim == 0 else result


def penalty_integral(g: AgePenalty, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    Accumulated penalty: integral of g(t) over [a, b].

    Uses the exact antiderivative when the penalty provides one, and
    adaptive quadrature otherwise. Works elementwise on arrays.

    Args:
        g: Age-penalty functional.
        a: Lower limit(s), non-negative.
        b: Upper limit(s), b >= a.

    Returns:
        Integral value(s).

    Raises:
        ValueError: If a < 0 or a > b.
    """
    lower = np.asarray(a, dtype=float)
    upper = np.asarray(b, dtype=float)
    if np.any(lower < 0):
        raise ValueError(f'lower limit must be non-negative, got {np.min(lower)}')
    if np.any(lower > upper):
        raise ValueError('lower limit must not exceed upper limit')
    if g.has_exact_integral:
        result = np.asarray(g.exact_integral(lower, upper), dtype=float)
        result = np.where(upper == lower, 0.0, result)
        return float(result) if result.ndim == 0 else result
    return g.quadrature_integral(lower, upper)


class OUMsePenalty(AgePenalty):
    """
    MMSE of the OU estimate built from an ell-bit quantized sample, as a
    function of the age of that sample (steady state).

    Args:
        params: OU process parameters.
        ell: Number of quantization bits.
    """
    has_exact_integral = True

    def __init__(self, params: OUParams, ell: int):
        self.params = params
        self.ell = _check_bits(ell)
        self.variance = steady_state_variance(params)
        self._rate = 2 * params.theta
        self._gain = 1 - 2.0**(-2 * self.ell)

    def __call__(self, delta: ArrayLike) -> ArrayLike:
        return mse_penalty(self.params, self.ell, delta)

    @property
    def sup(self) -> float:
        return self.variance

    @property
    def inf(self) -> float:
        return quantization_mse(self.params, self.ell)

    def exact_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        decay_diff = np.exp(-self._rate * b) - np.exp(-self._rate * a)
        return self.variance * ((b - a) + self._gain * decay_diff / self._rate)

    def __repr__(self) -> str:
        return (f'OUMsePenalty(theta={self.params.theta}, sigma={self.params.sigma}, '
                f'ell={self.ell})')


class LinearAgePenalty(AgePenalty):
    """The age itself, g(age) = age (plain average AoI)."""
    has_exact_integral = True

    def __call__(self, delta: ArrayLike) -> ArrayLike:
        age = np.asarray(delta, dtype=float)
        return float(age) if age.ndim == 0 else age

    @property
    def envelope(self) -> Tuple[float, float]:
        return (0.0, 1.0)

    def exact_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        return (b**2 - a**2) / 2

    def __repr__(self) -> str:
        return 'LinearAgePenalty()'


class ConstantPenalty(AgePenalty):
    """Constant penalty g(age) = value (nondecreasing, trivially)."""
    has_exact_integral = True

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, delta: ArrayLike) -> ArrayLike:
        age = np.asarray(delta, dtype=float)
        result = np.full(age.shape, self.value)
        return float(result) if result.ndim == 0 else result

    @property
    def sup(self) -> float:
        return self.value

    def exact_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        return self.value * (b - a)

    def __repr__(self) -> str:
        return f'ConstantPenalty({self.value})'


class CallablePenalty(AgePenalty):
    """
    User-supplied increasing penalty.

    Args:
        func: Function of the age. Must be nondecreasing on [0, inf).
        integral: Optional antiderivative rule integral(a, b).
        sup: Least upper bound of func, if bounded.
        growth_rate: Lipschitz constant L with func(t) <= func(0) + L*t,
            for unbounded functions (enables truncated series).
        vectorized: Whether func accepts NumPy arrays.
    """

    def __init__(self, func: Callable[[ArrayLike], ArrayLike],
                 integral: Optional[Callable[[ArrayLike, ArrayLike], ArrayLike]] = None,
                 sup: Optional[float] = None,
                 growth_rate: Optional[float] = None,
                 vectorized: bool = False):
        self.func = func if vectorized else np.vectorize(func, otypes=[float])
        self._integral = integral
        self.has_exact_integral = integral is not None
        self._sup = np.inf if sup is None else float(sup)
        self.growth_rate = growth_rate

    def __call__(self, delta: ArrayLike) -> ArrayLike:
        age = np.asarray(delta, dtype=float)
        result = np.asarray(self.func(age), dtype=float)
        return float(result) if result.ndim == 0 else result

    @property
    def sup(self) -> float:
        return self._sup

    @property
    def envelope(self) -> Optional[Tuple[float, float]]:
        if np.isfinite(self._sup):
            return (self._sup, 0.0)
        if self.growth_rate is not None:
            return (self.inf, float(self.growth_rate))
        return None

    def exact_integral(self, a: ArrayLike, b: ArrayLike) -> ArrayLike:
        if self._integral is None:
            return super().exact_integral(a, b)
        return self._integral(a, b)
