"""
Coding configuration and channel delay models.

Samples are quantized to ell bits and sent as n-bit codewords over a binary
symmetric channel (BSC). Each decoding attempt (and its ACK/NACK feedback)
takes beta time units at the receiver.

- IIR (infinite incremental redundancy): after a NACK, one more redundancy
  bit of the same message is sent, until decoding succeeds. The channel delay
  is Y = n_bar + k*(t_b + beta), with k the number of IR bits used.
- FR (fixed redundancy): after a NACK the message is dropped and a fresh
  sample is encoded. The number of attempts M is geometric with parameter p_0.

The decoding-success probability p_j (with j IR bits accumulated) defaults to
an MDS code over a BSC, and can be replaced by any user sequence.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd
from scipy import stats
from ouestimation.utils import NonMonotoneAckError, ConvergenceError

DEFAULT_TAIL_TOL = 1e-12
MAX_SUPPORT_POINTS = 1_000_000
ACK_BLOCK_SIZE = 256  # p_j values computed per vectorized block
MONOTONE_TOLERANCE = 1e-15
DEFAULT_MONOTONE_RANGE = 50

AckSequence = Union[Sequence[float], Callable[[int], float]]


@dataclass(frozen=True)
class CodingConfig:
    """
    Quantization and channel-coding configuration.

    Attributes:
        ell: Message (quantization) bits, >= 1.
        n: Codeword bits, >= ell.
        t_b: Time units per transmitted bit, > 0.
        beta: Receiver processing time per decoding attempt, >= 0.
        epsilon: BSC crossover probability in (0, 0.5).
        ack_sequence: Optional replacement for the BSC+MDS success
            probabilities: a sequence (p_0, p_1, ...) or a function j -> p_j.
            A finite sequence is extended with its last value.
    """
    ell: int
    n: int
    t_b: float
    beta: float
    epsilon: float
    ack_sequence: Optional[AckSequence] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ('ell', 'n'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f'{name} must be an integer, got {type(value).__name__}')
        if self.ell < 1:
            raise ValueError(f'ell must be at least 1, got {self.ell}')
        if self.n < self.ell:
            raise ValueError(f'n must be at least ell={self.ell}, got {self.n}')
        if not self.t_b > 0:
            raise ValueError(f't_b must be positive, got {self.t_b}')
        if not self.beta >= 0:
            raise ValueError(f'beta must be non-negative, got {self.beta}')
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f'epsilon must be in (0, 0.5), got {self.epsilon}')
        object.__setattr__(self, 'ell', int(self.ell))
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 't_b', float(self.t_b))
        object.__setattr__(self, 'beta', float(self.beta))
        object.__setattr__(self, 'epsilon', float(self.epsilon))

    @property
    def n_bar(self) -> float:
        """Time to send one n-bit codeword plus one decoding interval."""
        return self.n * self.t_b + self.beta

    @property
    def ir_step(self) -> float:
        """Extra delay of each incremental-redundancy bit (one bit plus one decoding)."""
        return self.t_b + self.beta

    @property
    def k_spacing(self) -> float:
        """Just-in-time spacing between FR attempts, max(beta, n*t_b)."""
        return max(self.beta, self.n * self.t_b)

    def replace(self, **changes) -> 'CodingConfig':
        """Return a copy with some fields changed."""
        values = dict(ell=self.ell, n=self.n, t_b=self.t_b, beta=self.beta,
                      epsilon=self.epsilon, ack_sequence=self.ack_sequence)
        values.update(changes)
        return CodingConfig(**values)


def _check_index(j) -> int:
    if isinstance(j, bool) or not isinstance(j, (int, np.integer)):
        raise TypeError(f'j must be an integer, got {type(j).__name__}')
    if j < 0:
        raise ValueError(f'j must be non-negative, got {j}')
    return int(j)


def _custom_probs(cfg: CodingConfig, indices: np.ndarray) -> np.ndarray:
    seq = cfg.ack_sequence
    if callable(seq):
        probs = np.array([float(seq(int(j))) for j in indices])
    else:
        table = np.asarray(seq, dtype=float)
        if table.size == 0:
            raise ValueError('ack_sequence must not be empty')
        probs = table[np.minimum(indices, table.size - 1)]
    if np.any((probs < 0) | (probs > 1)) or np.any(~np.isfinite(probs)):
        raise ValueError('ack_sequence values must be probabilities in [0, 1]')
    return probs


def _bsc_radius(cfg: CodingConfig, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    lengths = cfg.n + indices
    return (lengths - cfg.ell) // 2, lengths


def ack_probs(cfg: CodingConfig, count: int, start: int = 0) -> np.ndarray:
    """
    Decoding-success probabilities p_start, ..., p_{start+count-1}.

    For the BSC+MDS default, p_j is the probability that at most
    floor((n + j - ell)/2) of the n + j received bits are flipped.
    """
    indices = np.arange(start, start + count)
    if cfg.ack_sequence is not None:
        return _custom_probs(cfg, indices)
    radius, lengths = _bsc_radius(cfg, indices)
    return stats.binom.cdf(radius, lengths, cfg.epsilon)


def _nack_probs(cfg: CodingConfig, count: int, start: int = 0) -> np.ndarray:
    """1 - p_j, computed directly from the upper binomial tail for accuracy."""
    indices = np.arange(start, start + count)
    if cfg.ack_sequence is not None:
        return 1 - _custom_probs(cfg, indices)
    radius, lengths = _bsc_radius(cfg, indices)
    return stats.binom.sf(radius, lengths, cfg.epsilon)


def ack_prob(cfg: CodingConfig, j: int) -> float:
    """
    Probability that decoding succeeds with j incremental-redundancy bits.

    Args:
        cfg: Coding configuration.
        j: Number of IR bits accumulated so far (>= 0).

    Returns:
        p_j in [0, 1].

    Raises:
        ValueError: If j < 0.
    """
    j = _check_index(j)
    return float(ack_probs(cfg, 1, start=j)[0])


def ack_prob_monotone_check(cfg: CodingConfig, j_max: int = DEFAULT_MONOTONE_RANGE) -> Tuple[int, int]:
    """
    Verify p_j <= p_{j+1} for j = 0..j_max.

    The BSC+MDS probabilities only grow every second IR bit (the correction
    radius increases on even steps), so this check fails for them when the
    odd step lowers p_j. It passes for monotone user-supplied sequences.

    Returns:
        The verified index range (0, j_max).

    Raises:
        NonMonotoneAckError: At the first decrease.
    """
    j_max = _check_index(j_max)
    probs = ack_probs(cfg, j_max + 1)
    drops = np.flatnonzero(np.diff(probs) < -MONOTONE_TOLERANCE)
    if drops.size:
        first = int(drops[0]) + 1
        raise NonMonotoneAckError(first, (probs[first - 1], probs[first]))
    return (0, j_max)


@dataclass(frozen=True, eq=False)
class IIRDelayPmf:
    """
    Truncated probability mass function of the IIR channel delay Y.

    Attributes:
        support: Delay values y_k = n_bar + k*(t_b + beta), k = 0..K.
        probs: q_k = p_k * prod_{j<k} (1 - p_j).
        tail_mass: Probability of more than K IR bits (not renormalized).
        config: Coding configuration the pmf was built from.
    """
    support: np.ndarray
    probs: np.ndarray
    tail_mass: float
    config: Optional[CodingConfig] = field(default=None, compare=False, repr=False)

    @property
    def gap(self) -> float:
        return self.support[1] - self.support[0] if self.support.size > 1 else np.nan

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.probs))

    def mean(self) -> float:
        """Mean delay over the retained support (tail excluded)."""
        return float(np.dot(self.probs, self.support))

    def expect(self, func: Callable[[np.ndarray], np.ndarray],
               bound: float = np.inf) -> Tuple[float, float]:
        """
        Expectation of func(Y) over the retained support.

        Args:
            func: Vectorized function of the delay.
            bound: Bound on |func| used for the tail error.

        Returns:
            (value, tail_bound) where tail_bound = tail_mass * bound.
        """
        value = float(np.dot(self.probs, func(self.support)))
        tail_bound = self.tail_mass * bound if self.tail_mass > 0 else 0.0
        return value, tail_bound

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'k': np.arange(self.support.size),
                             'delay': self.support,
                             'prob': self.probs})


def iir_delay_pmf(cfg: CodingConfig, tail_tol: float = DEFAULT_TAIL_TOL,
                  max_support: int = MAX_SUPPORT_POINTS) -> IIRDelayPmf:
    """
    Build the IIR channel-delay pmf, truncated once the residual mass
    prod_{j<=K} (1 - p_j) drops to tail_tol.

    Args:
        cfg: Coding configuration.
        tail_tol: Maximum probability mass left beyond the support.
        max_support: Hard cap on the number of support points.

    Returns:
        IIRDelayPmf with the residual recorded in tail_mass.

    Raises:
        ValueError: If tail_tol is not in (0, 1).
        ConvergenceError: If max_support points do not reach tail_tol.
    """
    if not 0 < tail_tol < 1:
        raise ValueError(f'tail_tol must be in (0, 1), got {tail_tol}')
    survival_blocks = []
    survival = 1.0
    start = 0
    while True:
        count = min(ACK_BLOCK_SIZE, max_support - start)
        if count <= 0:
            raise ConvergenceError(f'IIR delay pmf needs more than {max_support} support '
                                   f'points to reach tail mass {tail_tol} '
                                   f'(residual {survival:.3g})')
        block = survival * np.cumprod(_nack_probs(cfg, count, start))
        done = np.flatnonzero(block <= tail_tol)
        if done.size:
            survival_blocks.append(block[:done[0] + 1])
            break
        survival_blocks.append(block)
        survival = block[-1]
        start += count
    # survival[k] = P(Y > y_k); q_k is the drop in survival at step k
    survivals = np.concatenate(survival_blocks)
    probs = -np.diff(np.concatenate(([1.0], survivals)))
    support = cfg.n_bar + np.arange(survivals.size) * cfg.ir_step
    return IIRDelayPmf(support=support, probs=probs,
                       tail_mass=float(survivals[-1]), config=cfg)


@dataclass(frozen=True)
class FRAttemptDist:
    """
    Geometric law of the number of FR attempts per delivered message.

    Attributes:
        p0: Success probability of each attempt, in (0, 1].
    """
    p0: float

    def __post_init__(self):
        if not 0 < self.p0 <= 1:
            raise ValueError(f'p0 must be in (0, 1], got {self.p0}')

    def pmf(self, m: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        """P(M = m) = (1 - p0)^(m-1) p0, for m >= 1."""
        m = np.asarray(m)
        value = np.where(m >= 1, (1 - self.p0)**(m - 1) * self.p0, 0.0)
        return float(value) if value.ndim == 0 else value

    def mean(self) -> float:
        return 1 / self.p0


def fr_attempt_dist(cfg: CodingConfig) -> FRAttemptDist:
    """Geometric attempt-count law with parameter p_0 = ack_prob(cfg, 0)."""
    return FRAttemptDist(p0=ack_prob(cfg, 0))


def exp_moment_iir(pmf: IIRDelayPmf, rate: float) -> float:
    """
    E[exp(-rate * Y)] over the retained support of the IIR delay pmf.

    The neglected tail contributes at most pmf.tail_mass.

    Raises:
        ValueError: If rate is not positive.
    """
    if not rate > 0:
        raise ValueError(f'rate must be positive, got {rate}')
    return float(np.dot(pmf.probs, np.exp(-rate * pmf.support)))


def sample_iir_delay(cfg: CodingConfig, rng: np.random.Generator,
                     size: Optional[int] = None) -> Union[float, np.ndarray]:
    """
    Draw IIR channel delays by simulating the sequential ACK/NACK process.

    Every outstanding message draws a Bernoulli(p_k) decoding outcome at IR
    step k; the loop runs until all messages are decoded, so the samples are
    exact regardless of any pmf truncation.

    Args:
        cfg: Coding configuration.
        rng: Seeded NumPy random generator.
        size: Number of delays (None for a single float).

    Returns:
        Delay(s) n_bar + k*(t_b + beta).
    """
    count = 1 if size is None else int(size)
    steps = np.zeros(count, dtype=np.int64)
    pending = np.arange(count)
    probs = np.empty(0)
    k = 0
    while pending.size:
        if k >= probs.size:
            probs = np.concatenate((probs, ack_probs(cfg, ACK_BLOCK_SIZE, start=probs.size)))
        decoded = rng.random(pending.size) < probs[k]
        steps[pending[decoded]] = k
        pending = pending[~decoded]
        k += 1
        if k >= MAX_SUPPORT_POINTS:
            raise ConvergenceError(f'IIR delay sampling did not terminate within {k} IR bits')
    delays = cfg.n_bar + steps * cfg.ir_step
    return float(delays[0]) if size is None else delays


def sample_fr_attempts(cfg: CodingConfig, rng: np.random.Generator,
                       size: Optional[int] = None) -> Union[int, np.ndarray]:
    """Draw geometric FR attempt counts (>= 1) with parameter p_0."""
    attempts = rng.geometric(ack_prob(cfg, 0), size=size)
    return int(attempts) if size is None else attempts
