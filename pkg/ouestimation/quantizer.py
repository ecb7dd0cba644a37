"""
Lloyd-Max scalar quantizer for a zero-mean Gaussian source.

Used to compare the idealized rate-distortion model of an ell-bit quantizer
(distortion 2^(-2 ell) times the variance) against a real scalar quantizer.
"""

from dataclasses import dataclass
import numpy as np
from scipy import stats
from ouestimation.utils import ConvergenceError

MAX_ITERATIONS = 100_000
LEVEL_SHIFT_TOL = 1e-10
MAX_BITS = 8


@dataclass(frozen=True, eq=False)
class LloydMaxQuantizer:
    """
    Codebook of a Lloyd-Max quantizer.

    Attributes:
        levels: Reconstruction levels (increasing, 2^ell values).
        thresholds: Decision thresholds between levels (2^ell - 1 values).
        distortion: Mean-square quantization error.
        mean_error: Mean quantization error (0 for a symmetric source).
        variance: Variance of the source the codebook was designed for.
        iterations: Lloyd iterations until the level shift fell below tolerance.
    """
    levels: np.ndarray
    thresholds: np.ndarray
    distortion: float
    mean_error: float
    variance: float
    iterations: int

    @property
    def bits(self) -> int:
        return int(np.log2(self.levels.size))

    def quantize(self, values):
        """Map values to their reconstruction levels."""
        indices = np.searchsorted(self.thresholds, np.asarray(values, dtype=float))
        result = self.levels[indices]
        return float(result) if result.ndim == 0 else result


def _cell_moments(edges):
    """Probability and first moment of a standard normal over each cell."""
    cdf = stats.norm.cdf(edges)
    pdf = stats.norm.pdf(edges)
    prob = np.diff(cdf)
    first = -np.diff(pdf)
    return prob, first


def lloyd_max_quantizer(variance: float, ell: int) -> LloydMaxQuantizer:
    """
    Design the 2^ell-level Lloyd-Max quantizer for a Normal(0, variance) source.

    Levels start at the high-resolution compander points (quantiles of a
    Normal with three times the variance) and alternate
    between nearest-neighbor thresholds and cell centroids until no level
    moves by more than 1e-10 (in units of the standard deviation).

    Args:
        variance: Source variance, positive.
        ell: Bits, in [1, 8].

    Returns:
        LloydMaxQuantizer scaled to the source variance.

    Raises:
        ValueError: If ell is outside [1, 8] or the variance is not positive.
        ConvergenceError: If the level shift is still above tolerance after
            the iteration cap.
    """
    if isinstance(ell, bool) or not isinstance(ell, (int, np.integer)):
        raise TypeError(f'ell must be an integer, got {type(ell).__name__}')
    if not 1 <= ell <= MAX_BITS:
        raise ValueError(f'ell must be in [1, {MAX_BITS}], got {ell}')
    if not variance > 0:
        raise ValueError(f'variance must be positive, got {variance}')
    n_levels = 2**ell
    quantiles = (np.arange(n_levels) + 0.5) / n_levels
    levels = np.sqrt(3.0) * stats.norm.ppf(quantiles)
    for iteration in range(1, MAX_ITERATIONS + 1):
        thresholds = (levels[:-1] + levels[1:]) / 2
        edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
        prob, first = _cell_moments(edges)
        new_levels = first / prob
        shift = np.max(np.abs(new_levels - levels))
        levels = new_levels
        if shift < LEVEL_SHIFT_TOL:
            break
    else:
        raise ConvergenceError(f'Lloyd-Max did not converge after {MAX_ITERATIONS} iterations '
                               f'(last shift {shift:.3g})')
    thresholds = (levels[:-1] + levels[1:]) / 2
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
    prob, first = _cell_moments(edges)
    # E[(X - c)^2] over all cells, using E[X c] = c * first and centroid c = first/prob
    distortion = 1.0 - np.sum(levels * first)
    mean_error = -np.sum(first - levels * prob)
    scale = np.sqrt(variance)
    return LloydMaxQuantizer(levels=levels * scale, thresholds=thresholds * scale,
                             distortion=float(distortion * variance),
                             mean_error=float(mean_error * scale),
                             variance=float(variance), iterations=iteration)
