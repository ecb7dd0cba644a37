"""
Optimal sampling for the IIR coding scheme.

Each epoch starts at a delivery with age y_bar, waits w(y_bar), then takes
a fresh sample that reaches the receiver after a random IIR delay Y. The
long-term average penalty is the ratio

    E[ integral_{y_bar}^{y_bar + w + Y} g(t) dt ] / E[w + Y]

which is minimized with Dinkelbach's method: for a level lambda, the
auxiliary p(lambda) = E[integral] - lambda E[w + Y] is minimized by the
threshold rule w*(y_bar) = [G^{-1}(lambda)]^+, with G(x) = E[g(y_bar + x + Y)],
and the optimal average lambda* is the root of the decreasing map p.

Since G depends on y_bar + x only, the optimal rule waits until the age
reaches a fixed threshold tau (and samples at once when the age is already
past it): w*(y_bar) = max(tau - y_bar, 0).

For the OU MMSE penalty the threshold has a closed form and the bisection
bracket is [2^(-2 ell), 1] * sigma^2/(2 theta).
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union
import numpy as np
from scipy import optimize
from ouestimation.penalty import (AgePenalty, OUMsePenalty, OUParams,
                                  penalty_integral, quantization_mse,
                                  steady_state_variance)
from ouestimation.channel import IIRDelayPmf, exp_moment_iir
from ouestimation.utils import (BracketError, ConvergenceError,
                                NonInvertibleLevelError)

PREFIX = " IIR:"

LAMBDA_TOL = 1e-9       # outer bisection on lambda
WAIT_TOL = 1e-11        # inner bisection on the waiting time
LEVEL_MARGIN = 1e-12    # level must exceed the supremum by this to be non-invertible
MAX_DOUBLINGS = 200     # geometric growth of the inversion search bound
MAX_BISECTIONS = 500
BRACKET_MARGIN = 1e-9   # relative gap below sigma^2/2theta for the open upper end


def expected_penalty_G(g: AgePenalty, pmf: IIRDelayPmf, y_bar: float,
                       x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Expected penalty at the end of the epoch, G(x) = E[g(y_bar + x + Y)].

    The truncated tail of the delay pmf is placed at the penalty's supremum
    when it is finite (so G stays an upper bound), and dropped otherwise.

    Args:
        g: Age-penalty functional.
        pmf: IIR delay pmf.
        y_bar: Starting age of the epoch.
        x: Waiting time(s), non-negative.

    Returns:
        G(x), same shape as x.
    """
    waits = np.asarray(x, dtype=float)
    if y_bar < 0 or np.any(waits < 0):
        raise ValueError(f'y_bar and x must be non-negative, got y_bar={y_bar}, x={np.min(waits)}')
    ages = y_bar + waits[..., np.newaxis] + pmf.support
    value = np.asarray(g(ages), dtype=float) @ pmf.probs
    if np.isfinite(g.sup):
        value = value + pmf.tail_mass * g.sup
    return float(value) if value.ndim == 0 else value


def _supremum_G(g: AgePenalty, pmf: IIRDelayPmf) -> float:
    return g.sup * (pmf.total_mass + pmf.tail_mass)


def solve_increasing(func: Callable[[float], float], level: float, supremum: float,
                     xtol: float = WAIT_TOL) -> float:
    """
    Smallest x >= 0 with func(x) = level for an increasing func with
    func(0) < level, found by bisection after growing the search bound.

    Raises:
        NonInvertibleLevelError: If func stays below level (bounded func).
        ConvergenceError: If the search bound cannot be found.
    """
    if level >= supremum - LEVEL_MARGIN:
        raise NonInvertibleLevelError(level, supremum)
    upper = 1.0
    for _ in range(MAX_DOUBLINGS):
        if func(upper) >= level:
            break
        upper *= 2
    else:
        raise ConvergenceError(f'No waiting time reaches level {level:.12g} '
                               f'(searched up to {upper:.3g})')
    return optimize.bisect(lambda wait: func(wait) - level, 0.0, upper,
                           xtol=xtol, maxiter=MAX_BISECTIONS)


def invert_G(g: AgePenalty, pmf: IIRDelayPmf, y_bar: float, level: float,
             xtol: float = WAIT_TOL) -> float:
    """
    Optimal waiting time [G^{-1}(level)]^+ for a starting age y_bar.

    Args:
        g: Age-penalty functional.
        pmf: IIR delay pmf.
        y_bar: Starting age of the epoch.
        level: The Dinkelbach level lambda.
        xtol: Absolute tolerance on the waiting time.

    Returns:
        0 when G(0) >= level, otherwise the root of G(x) = level.

    Raises:
        NonInvertibleLevelError: If level is at or above sup_x G(x).
    """
    if expected_penalty_G(g, pmf, y_bar, 0.0) >= level:
        return 0.0
    return solve_increasing(lambda wait: expected_penalty_G(g, pmf, y_bar, wait),
                            level, _supremum_G(g, pmf), xtol)


def _threshold_numeric(g: AgePenalty, pmf: IIRDelayPmf, level: float) -> float:
    """Age tau with E[g(tau + Y)] = level (0 when already exceeded at age 0)."""
    return invert_G(g, pmf, 0.0, level)


def ou_threshold_age(ou: OUParams, ell: int, pmf: IIRDelayPmf, level: float) -> float:
    """
    Closed-form threshold age tau for the OU MMSE penalty:
    tau = log( v (1 - 2^(-2 ell)) E[exp(-2 theta Y)] / (v - level) ) / (2 theta),
    with v = sigma^2/(2 theta). May be negative (never wait).

    Raises:
        NonInvertibleLevelError: If level >= v.
    """
    variance = steady_state_variance(ou)
    if level >= variance:
        raise NonInvertibleLevelError(level, variance)
    rate = 2 * ou.theta
    moment = exp_moment_iir(pmf, rate)
    numerator = variance * (1 - 2.0**(-2 * ell)) * moment
    if numerator <= 0:
        return -np.inf
    return np.log(numerator / (variance - level)) / rate


def ou_threshold_wait(ou: OUParams, ell: int, pmf: IIRDelayPmf, level: float,
                      y_bar: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Closed-form optimal IIR waiting time for the OU MMSE penalty.

    Args:
        ou: OU process parameters.
        ell: Quantization bits.
        pmf: IIR delay pmf.
        level: The Dinkelbach level lambda (< sigma^2/2theta).
        y_bar: Starting age(s) of the epoch.

    Returns:
        max(tau - y_bar, 0).

    Raises:
        NonInvertibleLevelError: If level >= sigma^2/(2 theta).
    """
    tau = ou_threshold_age(ou, ell, pmf, level)
    wait = np.maximum(tau - np.asarray(y_bar, dtype=float), 0.0)
    return float(wait) if wait.ndim == 0 else wait


def ou_lambda_bounds(ou: OUParams, ell: int) -> Tuple[float, float]:
    """
    Bisection bracket for the OU MMSE penalty: the quantization floor and
    (just below) the steady-state variance.
    """
    variance = steady_state_variance(ou)
    return quantization_mse(ou, ell), variance * (1 - BRACKET_MARGIN)


def _uses_closed_form(g: AgePenalty, method: str) -> bool:
    if method not in ('auto', 'closed_form', 'numeric'):
        raise ValueError(f"method must be 'auto', 'closed_form' or 'numeric', got {method!r}")
    if method == 'closed_form' and not isinstance(g, OUMsePenalty):
        raise ValueError('the closed-form threshold only applies to OUMsePenalty')
    return method == 'closed_form' or (method == 'auto' and isinstance(g, OUMsePenalty))


def _threshold(g: AgePenalty, pmf: IIRDelayPmf, level: float, closed_form: bool) -> float:
    if closed_form:
        return ou_threshold_age(g.params, g.ell, pmf, level)
    return _threshold_numeric(g, pmf, level)


def _epoch_moments(g: AgePenalty, pmf: IIRDelayPmf, tau: float) -> Tuple[float, float]:
    """
    Expected reward and length of an epoch under the threshold rule tau,
    with the starting age distributed as the delay (stationarity).
    """
    start = pmf.support[:, np.newaxis]                        # y_bar over rows
    waits = np.maximum(tau - pmf.support, 0.0)[:, np.newaxis]
    end = start + waits + pmf.support[np.newaxis, :]          # Y over columns
    weights = np.outer(pmf.probs, pmf.probs)
    reward = float(np.sum(weights * penalty_integral(g, np.broadcast_to(start, end.shape), end)))
    length = float(np.sum(weights * (waits + pmf.support[np.newaxis, :])))
    return reward, length


def dinkelbach_value_iir(g: AgePenalty, pmf: IIRDelayPmf, level: float,
                         method: str = 'auto') -> float:
    """
    Dinkelbach auxiliary p(lambda) = E[reward] - lambda E[length] under the
    optimal threshold rule for lambda.

    Args:
        g: Age-penalty functional.
        pmf: IIR delay pmf (also the law of the starting age).
        level: lambda >= 0.
        method: 'auto' (closed form for OUMsePenalty), 'closed_form' or 'numeric'.

    Returns:
        p(lambda), decreasing in lambda.

    Raises:
        NonInvertibleLevelError: Propagated from the waiting-time inversion.
    """
    if level < 0:
        raise ValueError(f'lambda must be non-negative, got {level}')
    tau = _threshold(g, pmf, level, _uses_closed_form(g, method))
    reward, length = _epoch_moments(g, pmf, tau)
    return reward - level * length


@dataclass(frozen=True)
class IIRSolution:
    """
    Optimal IIR waiting policy and long-term average penalty.

    Attributes:
        lambda_star: Optimal long-term average penalty.
        threshold: Age tau beyond which no waiting occurs; w*(y) = max(tau - y, 0).
        iterations: Bisection iterations on lambda.
        residual: |p(lambda_star)|.
        tail_bound: Bound on the pmf-truncation error of expected penalties.
        bracket: (low, high) lambda bracket used.
        method: 'closed_form' or 'numeric'.
    """
    lambda_star: float
    threshold: float
    iterations: int
    residual: float
    tail_bound: float
    bracket: Tuple[float, float]
    method: str

    def wait(self, y_bar: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Optimal waiting time(s) for starting age(s) y_bar."""
        waits = np.maximum(self.threshold - np.asarray(y_bar, dtype=float), 0.0)
        return float(waits) if waits.ndim == 0 else waits


def waiting_rule(solution: IIRSolution) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized waiting rule y_bar -> w*(y_bar) of a solved policy."""
    return solution.wait


def solve_iir(g: AgePenalty, pmf: IIRDelayPmf,
              bounds: Optional[Tuple[float, float]] = None,
              tol: float = LAMBDA_TOL, method: str = 'auto',
              debug: bool = False) -> IIRSolution:
    """
    Optimal long-term average penalty for IIR by bisection on lambda.

    Args:
        g: Age-penalty functional.
        pmf: IIR delay pmf.
        bounds: (low, high) bracket with p(low) >= 0 >= p(high). Defaults to
            the OU bracket for OUMsePenalty, and otherwise to [g(0), r0 + tol] where
            r0 is the average penalty of the zero-wait policy.
        tol: Absolute tolerance on lambda.
        method: 'auto', 'closed_form' or 'numeric' threshold computation.
        debug: Print bracket and result.

    Returns:
        IIRSolution.

    Raises:
        BracketError: If p does not change sign over the bracket.
    """
    closed_form = _uses_closed_form(g, method)
    if bounds is None:
        if isinstance(g, OUMsePenalty):
            bounds = ou_lambda_bounds(g.params, g.ell)
        else:
            reward, length = _epoch_moments(g, pmf, -np.inf)
            bounds = (g.inf, reward / length + tol)
    low, high = float(bounds[0]), float(bounds[1])
    if not low <= high:
        raise ValueError(f'bracket must satisfy low <= high, got [{low}, {high}]')

    def auxiliary(level):
        reward, length = _epoch_moments(g, pmf, _threshold(g, pmf, level, closed_form))
        return reward - level * length

    values = (auxiliary(low), auxiliary(high))
    if debug:
        print(f'{PREFIX} bracket [{low:.12g}, {high:.12g}] -> p = ({values[0]:.6g}, {values[1]:.6g})')
    if values[0] < 0 or values[1] > 0:
        raise BracketError((low, high), values)
    if values[0] == 0:
        lambda_star, iterations = low, 0
    elif values[1] == 0:
        lambda_star, iterations = high, 0
    else:
        lambda_star, info = optimize.bisect(auxiliary, low, high, xtol=tol,
                                            maxiter=MAX_BISECTIONS, full_output=True)
        iterations = info.iterations
    residual = abs(auxiliary(lambda_star))
    threshold = _threshold(g, pmf, lambda_star, closed_form)
    tail_bound = pmf.tail_mass * (g.sup - g.inf) if np.isfinite(g.sup) else np.inf
    if debug:
        print(f'{PREFIX} lambda*={lambda_star:.12g} threshold={threshold:.6g} '
              f'iterations={iterations} residual={residual:.3g}')
    return IIRSolution(lambda_star=float(lambda_star), threshold=float(threshold),
                       iterations=int(iterations), residual=float(residual),
                       tail_bound=float(tail_bound), bracket=(low, high),
                       method='closed_form' if closed_form else 'numeric')
