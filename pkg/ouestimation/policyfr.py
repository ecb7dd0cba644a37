"""
Optimal sampling for the FR (fixed redundancy) coding scheme.

Every attempt sends a fresh n-bit codeword. After a NACK the message is
dropped, so the number of attempts M per delivered message is geometric
with parameter p_0. Attempts are spaced K = max(beta, n*t_b) apart when the
transmitter updates just in time (pipelined), or n_bar apart otherwise.
A delivered message has age n_bar, so an epoch with first wait w1 accrues

    integral_{n_bar}^{n_bar + w1 + M*s} g(t) dt   over a length w1 + M*s

with s the attempt spacing. Waiting is never useful after the first
attempt, and at the optimal average the first wait is zero as well.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple
import numpy as np
from ouestimation.penalty import (AgePenalty, OUMsePenalty, OUParams,
                                  penalty_integral, steady_state_variance)
from ouestimation.channel import CodingConfig, FRAttemptDist, fr_attempt_dist
from ouestimation.policyiir import solve_increasing
from ouestimation.utils import ConvergenceError, SolverError

PREFIX = " FR:"

SERIES_TOL = 1e-12
MAX_SERIES_TERMS = 10_000_000
ZERO_WAIT_TOL = 1e-9


def just_in_time_gap(cfg: CodingConfig) -> float:
    """Post-delivery gap [beta - n*t_b]^+ before the next transmission ends."""
    return max(cfg.beta - cfg.n * cfg.t_b, 0.0)


def attempt_spacing(cfg: CodingConfig, pipelined: bool = True) -> float:
    """Time between consecutive attempt deliveries: K when pipelined, n_bar otherwise."""
    return cfg.k_spacing if pipelined else cfg.n_bar


def _tail_moments(p0: float, terms: int) -> Tuple[float, float, float]:
    """P(M > N), E[M; M > N] and E[M^2; M > N] for a geometric M."""
    r = 1 - p0
    if r == 0:
        return 0.0, 0.0, 0.0
    mass = r**terms
    first = mass * (terms + 1 / p0)
    second = mass * (terms**2 + 2 * terms / p0 + (2 - p0) / p0**2)
    return mass, first, second


def _series_terms(p0: float, bound_at, tol: float = SERIES_TOL) -> int:
    """Smallest doubling N with bound_at(N) <= tol."""
    if p0 == 1:
        return 1
    terms = max(1, int(np.ceil(np.log(tol) / np.log1p(-p0))))
    while terms > MAX_SERIES_TERMS or bound_at(terms) > tol:
        terms *= 2
        if terms > MAX_SERIES_TERMS:
            raise ConvergenceError(f'FR series needs more than {MAX_SERIES_TERMS} terms '
                                   f'(p0={p0:.6g})')
    return terms


def _require_envelope(g: AgePenalty) -> Tuple[float, float]:
    envelope = g.envelope
    if envelope is None:
        raise ConvergenceError(f'{g!r} has no known bound; cannot truncate the FR series '
                               '(give the penalty a sup or a growth rate)')
    return envelope


def _penalty_series(g: AgePenalty, cfg: CodingConfig, attempts: FRAttemptDist,
                    x: float, spacing: float) -> Tuple[float, float]:
    """E[g(n_bar + x + M*s)] truncated, and the bound on the neglected terms."""
    c0, slope = _require_envelope(g)
    offset = cfg.n_bar + x

    def bound_at(terms):
        mass, first, _ = _tail_moments(attempts.p0, terms)
        return mass * (c0 + slope * offset) + slope * spacing * first

    terms = _series_terms(attempts.p0, bound_at)
    m = np.arange(1, terms + 1)
    value = float(np.dot(attempts.pmf(m), g(offset + m * spacing)))
    return value, bound_at(terms)


def _reward_series(g: AgePenalty, cfg: CodingConfig, attempts: FRAttemptDist,
                   first_wait: float, spacing: float) -> Tuple[float, float]:
    """E[integral of g over one epoch] truncated, and the bound on the neglected terms."""
    c0, slope = _require_envelope(g)
    # integral over [n_bar, n_bar + T] <= T * (c0 + slope*(n_bar + T)), T = w1 + M*s
    base = c0 + slope * (cfg.n_bar + first_wait)

    def bound_at(terms):
        mass, first, second = _tail_moments(attempts.p0, terms)
        return (first_wait * base * mass + (first_wait * slope + base) * spacing * first
                + slope * spacing**2 * second)

    terms = _series_terms(attempts.p0, bound_at)
    m = np.arange(1, terms + 1)
    upper = cfg.n_bar + first_wait + m * spacing
    rewards = penalty_integral(g, np.full(m.shape, cfg.n_bar), upper)
    return float(np.dot(attempts.pmf(m), rewards)), bound_at(terms)


def fr_expected_penalty_G0(g: AgePenalty, cfg: CodingConfig,
                           attempts: Optional[FRAttemptDist] = None,
                           x: float = 0.0, pipelined: bool = True) -> float:
    """
    Expected penalty at the end of an FR epoch, G(x) = E[g(n_bar + x + M*s)].

    Args:
        g: Age-penalty functional.
        cfg: Coding configuration.
        attempts: Attempt-count law (defaults to fr_attempt_dist(cfg)).
        x: First waiting time, non-negative.
        pipelined: Use the just-in-time spacing K instead of n_bar.

    Returns:
        G(x), with the neglected series terms bounded by 1e-12.
    """
    if x < 0:
        raise ValueError(f'x must be non-negative, got {x}')
    attempts = fr_attempt_dist(cfg) if attempts is None else attempts
    value, _ = _penalty_series(g, cfg, attempts, x, attempt_spacing(cfg, pipelined))
    return value


def fr_dinkelbach_value(g: AgePenalty, cfg: CodingConfig, level: float,
                        w1: float = 0.0, pipelined: bool = True) -> float:
    """
    Dinkelbach auxiliary p(lambda) for FR with waits (w1, 0, 0, ...):
    E[reward] - lambda * (w1 + s/p0).
    """
    if w1 < 0:
        raise ValueError(f'w1 must be non-negative, got {w1}')
    attempts = fr_attempt_dist(cfg)
    spacing = attempt_spacing(cfg, pipelined)
    reward, _ = _reward_series(g, cfg, attempts, w1, spacing)
    return reward - level * (w1 + spacing * attempts.mean())


class FRWaits(NamedTuple):
    """Optimal waits: before the first attempt, and before every later attempt."""
    first: float
    subsequent: float


def fr_optimal_waits(g: AgePenalty, cfg: CodingConfig, level: float,
                     pipelined: bool = True) -> FRWaits:
    """
    Optimal FR waits for a Dinkelbach level: w1 = [G^{-1}(level)]^+ and zero
    before every retransmission.

    Raises:
        NonInvertibleLevelError: If level is at or above sup_x G(x).
    """
    if level < 0:
        raise ValueError(f'lambda must be non-negative, got {level}')
    attempts = fr_attempt_dist(cfg)
    if fr_expected_penalty_G0(g, cfg, attempts, 0.0, pipelined) >= level:
        return FRWaits(0.0, 0.0)
    first = solve_increasing(lambda wait: fr_expected_penalty_G0(g, cfg, attempts, wait, pipelined),
                             level, g.sup)
    return FRWaits(first, 0.0)


def fr_lambda_closed_form(ou: OUParams, cfg: CodingConfig, pipelined: bool = True) -> float:
    """
    Optimal long-term average MMSE of FR for the OU penalty:

        v * (1 - (1 - 2^(-2 ell)) e^(-2 theta n_bar) p0/(2 theta s)
                 * (1 - e^(-2 theta s)) / (1 - (1 - p0) e^(-2 theta s)))

    with v = sigma^2/(2 theta) and s = K = max(beta, n*t_b) (pipelined) or n_bar.
    """
    variance = steady_state_variance(ou)
    rate = 2 * ou.theta
    p0 = fr_attempt_dist(cfg).p0
    spacing = attempt_spacing(cfg, pipelined)
    decay = np.exp(-rate * spacing)
    gain = 1 - 2.0**(-2 * cfg.ell)
    factor = (np.exp(-rate * cfg.n_bar) * p0 / (rate * spacing)
              * (-np.expm1(-rate * spacing)) / (1 - (1 - p0) * decay))
    return float(variance * (1 - gain * factor))


def _lambda_series(g: AgePenalty, cfg: CodingConfig, pipelined: bool) -> Tuple[float, float]:
    attempts = fr_attempt_dist(cfg)
    spacing = attempt_spacing(cfg, pipelined)
    reward, bound = _reward_series(g, cfg, attempts, 0.0, spacing)
    length = spacing * attempts.mean()
    return reward / length, bound / length


def fr_lambda_general(g: AgePenalty, cfg: CodingConfig, pipelined: bool = True) -> float:
    """
    Optimal long-term average penalty of FR for any increasing penalty: the
    zero-wait renewal ratio E[integral] / E[M*s], by geometric series.

    Raises:
        ConvergenceError: If the penalty has no bound to truncate the series.
    """
    value, _ = _lambda_series(g, cfg, pipelined)
    return value


@dataclass(frozen=True)
class FRSolution:
    """
    Optimal FR policy.

    Attributes:
        lambda_star: Optimal long-term average penalty.
        wait_gap: Just-in-time post-delivery gap [beta - n*t_b]^+ (0 when not pipelined).
        k_spacing: max(beta, n*t_b).
        spacing: Attempt spacing used (k_spacing, or n_bar when not pipelined).
        first_wait: Optimal first wait at lambda_star (always 0).
        series_bound: Bound on the truncated series (0 for the closed form).
        p0: Per-attempt success probability.
        method: 'closed_form' or 'series'.
        pipelined: Whether the just-in-time timeline was used.
    """
    lambda_star: float
    wait_gap: float
    k_spacing: float
    spacing: float
    first_wait: float
    series_bound: float
    p0: float
    method: str
    pipelined: bool


def solve_fr(g: AgePenalty, cfg: CodingConfig, pipelined: bool = True,
             method: str = 'auto', debug: bool = False) -> FRSolution:
    """
    Optimal FR average penalty and waits.

    Args:
        g: Age-penalty functional.
        cfg: Coding configuration.
        pipelined: Just-in-time spacing K (True) or n_bar (False).
        method: 'auto' (closed form for OUMsePenalty), 'closed_form' or 'series'.
        debug: Print the result.

    Returns:
        FRSolution.

    Raises:
        SolverError: If the zero first wait is not optimal at the solved average.
    """
    if method not in ('auto', 'closed_form', 'series'):
        raise ValueError(f"method must be 'auto', 'closed_form' or 'series', got {method!r}")
    closed_form = (method == 'closed_form' or
                   (method == 'auto' and isinstance(g, OUMsePenalty)))
    if closed_form:
        if not isinstance(g, OUMsePenalty):
            raise ValueError('the closed-form FR average only applies to OUMsePenalty')
        lambda_star, bound = fr_lambda_closed_form(g.params, cfg, pipelined), 0.0
    else:
        lambda_star, bound = _lambda_series(g, cfg, pipelined)
    attempts = fr_attempt_dist(cfg)
    at_zero = fr_expected_penalty_G0(g, cfg, attempts, 0.0, pipelined)
    if at_zero < lambda_star - ZERO_WAIT_TOL * max(1.0, abs(lambda_star)):
        raise SolverError(f'Zero first wait is not optimal: G(0)={at_zero:.12g} '
                          f'< lambda*={lambda_star:.12g}')
    solution = FRSolution(lambda_star=float(lambda_star),
                          wait_gap=just_in_time_gap(cfg) if pipelined else 0.0,
                          k_spacing=cfg.k_spacing,
                          spacing=attempt_spacing(cfg, pipelined),
                          first_wait=0.0, series_bound=float(bound), p0=attempts.p0,
                          method='closed_form' if closed_form else 'series',
                          pipelined=pipelined)
    if debug:
        print(f'{PREFIX} lambda*={solution.lambda_star:.12g} p0={solution.p0:.6g} '
              f'spacing={solution.spacing:.6g} G(0)={at_zero:.6g}')
    return solution
