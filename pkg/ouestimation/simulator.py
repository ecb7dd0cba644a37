"""
Monte Carlo simulation of the IIR and FR status-update systems.

Epochs are simulated as a renewal-reward process: each epoch contributes the
integral of the age penalty over its duration and its length, and the
long-term average penalty is the ratio of the sums. Standard errors come
from batch means of the ratio estimator.

This module also samples exact OU paths and runs an end-to-end check that
simulates the physical system (OU source, quantizer, MMSE estimator) and
compares the empirical squared error with the analytic average.

Random numbers come from numpy's PCG64 generator, seeded per run through
numpy.random.SeedSequence.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence
import h5py
import numpy as np
import pandas as pd
from ouestimation.penalty import (AgePenalty, OUMsePenalty, OUParams,
                                  penalty_integral, steady_state_variance)
from ouestimation.channel import (CodingConfig, iir_delay_pmf, sample_fr_attempts,
                                  sample_iir_delay)
from ouestimation.policyiir import solve_iir
from ouestimation.policyfr import attempt_spacing, fr_lambda_closed_form
from ouestimation.quantizer import MAX_BITS, lloyd_max_quantizer
from ouestimation import utils

PREFIX = " SIM:"

DEFAULT_BATCHES = 100
WARMUP_FRACTION = 0.01
POINTS_PER_EPOCH = 16
TRACE_COLUMNS = ['epoch', 'start_age', 'wait', 'delay', 'attempts', 'reward', 'length']


@dataclass(frozen=True)
class SimConfig:
    """
    Settings of one simulation run.

    Attributes:
        num_epochs: Epochs kept for the average (>= 1).
        seed: Seed of the random generator.
        scheme: 'IIR' or 'FR'.
        warmup_epochs: Epochs simulated and discarded first (default 1% of num_epochs).
        batches: Number of batches for the batch-means standard error.
        keep_trace: Keep the per-epoch trace in the result.
    """
    num_epochs: int
    seed: int = 0
    scheme: str = 'IIR'
    warmup_epochs: Optional[int] = None
    batches: int = DEFAULT_BATCHES
    keep_trace: bool = False

    def __post_init__(self):
        if isinstance(self.num_epochs, bool) or not isinstance(self.num_epochs, (int, np.integer)):
            raise TypeError(f'num_epochs must be an integer, got {type(self.num_epochs).__name__}')
        if self.num_epochs < 1:
            raise ValueError(f'num_epochs must be at least 1, got {self.num_epochs}')
        if self.scheme not in utils.SCHEME_LABELS:
            raise ValueError(f'scheme must be one of {list(utils.SCHEME_LABELS)}, got {self.scheme!r}')
        if self.warmup_epochs is not None and self.warmup_epochs < 0:
            raise ValueError(f'warmup_epochs must be non-negative, got {self.warmup_epochs}')
        if self.batches < 1:
            raise ValueError(f'batches must be at least 1, got {self.batches}')

    @property
    def warmup(self) -> int:
        if self.warmup_epochs is None:
            return int(self.num_epochs * WARMUP_FRACTION)
        return int(self.warmup_epochs)

    @property
    def total_epochs(self) -> int:
        return self.num_epochs + self.warmup


@dataclass(frozen=True, eq=False)
class SimResult:
    """
    Long-term average estimate from a simulation run.

    Attributes:
        avg_penalty: Sum of epoch rewards over sum of epoch lengths.
        total_time: Sum of the retained epoch lengths.
        epoch_count: Number of retained epochs.
        std_error: Batch-means standard error (inf with a single batch).
        batch_rewards: Reward sum of each batch.
        batch_times: Length sum of each batch.
        trace: Per-epoch trace (only when requested).
    """
    avg_penalty: float
    total_time: float
    epoch_count: int
    std_error: float
    batch_rewards: np.ndarray
    batch_times: np.ndarray
    trace: Optional[pd.DataFrame] = field(default=None, repr=False)

    def within(self, value: float, n_std: float = 3.0) -> bool:
        """True if value lies within n_std standard errors of the estimate."""
        return abs(self.avg_penalty - value) <= n_std * self.std_error

    def trace_frame(self) -> pd.DataFrame:
        if self.trace is None:
            raise ValueError('No trace was kept (run with keep_trace=True)')
        return self.trace

    def summary(self) -> dict:
        return {'avg_penalty': self.avg_penalty, 'std_error': self.std_error,
                'total_time': self.total_time, 'epoch_count': self.epoch_count,
                'batches': int(self.batch_rewards.size)}

    def append_to_file(self, h5file: h5py.File) -> h5py.Group:
        """
        Save the summary, the batch sums and (if kept) the trace under '/simulation'.

        Raises:
            UserWarning: If the result holds no epochs.
        """
        if self.epoch_count < 1:
            raise UserWarning('No simulated epochs. Nothing was saved.')
        sim_group = h5file.require_group('/simulation')
        utils.append_dict_to_hdf5(sim_group, 'summary', self.summary())
        sim_group.create_dataset('batchRewards', data=self.batch_rewards)
        sim_group.create_dataset('batchTimes', data=self.batch_times)
        if self.trace is not None:
            trace_group = sim_group.create_group('trace')
            for colname, vals in self.trace.items():
                trace_group.create_dataset(colname, data=np.asarray(vals))
        return sim_group


def batch_statistics(rewards: np.ndarray, lengths: np.ndarray, batches: int):
    """
    Ratio estimate and batch-means standard error.

    Returns:
        (ratio, std_error, batch_rewards, batch_times). The standard error is
        inf when fewer than two batches are available.
    """
    n_batches = max(1, min(int(batches), rewards.size))
    batch_rewards = np.array([chunk.sum() for chunk in np.array_split(rewards, n_batches)])
    batch_times = np.array([chunk.sum() for chunk in np.array_split(lengths, n_batches)])
    return _pooled_statistics(batch_rewards, batch_times)


def _pooled_statistics(batch_rewards, batch_times):
    ratio = batch_rewards.sum() / batch_times.sum()
    n_batches = batch_rewards.size
    if n_batches < 2:
        return float(ratio), np.inf, batch_rewards, batch_times
    residuals = batch_rewards - ratio * batch_times
    std_error = np.sqrt(np.sum(residuals**2) / (n_batches * (n_batches - 1))) / batch_times.mean()
    return float(ratio), float(std_error), batch_rewards, batch_times


def _finish(rewards, lengths, sim: SimConfig, trace: Optional[pd.DataFrame]) -> SimResult:
    keep = slice(sim.warmup, None)
    ratio, std_error, batch_rewards, batch_times = batch_statistics(rewards[keep], lengths[keep],
                                                                    sim.batches)
    if trace is not None:
        trace = trace.iloc[sim.warmup:].reset_index(drop=True)
    return SimResult(avg_penalty=ratio, total_time=float(lengths[keep].sum()),
                     epoch_count=int(lengths[keep].size), std_error=std_error,
                     batch_rewards=batch_rewards, batch_times=batch_times, trace=trace)


def simulate_iir(g: AgePenalty, cfg: CodingConfig, waiting_rule: Callable[[np.ndarray], np.ndarray],
                 sim: SimConfig, debug: bool = False) -> SimResult:
    """
    Simulate the IIR scheme under a waiting rule of the starting age.

    The first epoch starts right after a delivery of age n_bar; each later
    epoch starts at the age of the previous delivery (its channel delay).

    Args:
        g: Age-penalty functional.
        cfg: Coding configuration.
        waiting_rule: Vectorized map from starting ages to waits (>= 0).
        sim: Simulation settings.
        debug: Print a summary.

    Returns:
        SimResult.
    """
    rng = np.random.default_rng(sim.seed)
    delays = sample_iir_delay(cfg, rng, size=sim.total_epochs)
    starts = np.concatenate(([cfg.n_bar], delays[:-1]))
    waits = np.broadcast_to(np.asarray(waiting_rule(starts), dtype=float), starts.shape)
    if np.any(waits < 0):
        raise ValueError(f'waiting rule returned a negative wait ({np.min(waits)})')
    lengths = waits + delays
    rewards = penalty_integral(g, starts, starts + lengths)
    trace = None
    if sim.keep_trace:
        trace = pd.DataFrame({'epoch': np.arange(sim.total_epochs), 'start_age': starts,
                              'wait': waits, 'delay': delays,
                              'attempts': np.round((delays - cfg.n_bar) / cfg.ir_step).astype(int) + 1,
                              'reward': rewards, 'length': lengths})
    result = _finish(np.asarray(rewards), lengths, sim, trace)
    if debug:
        print(f'{PREFIX} IIR {result.epoch_count} epochs: '
              f'{result.avg_penalty:.8g} +/- {result.std_error:.3g}')
    return result


def simulate_fr(g: AgePenalty, cfg: CodingConfig, sim: SimConfig, pipelined: bool = True,
                first_wait: float = 0.0, debug: bool = False) -> SimResult:
    """
    Simulate the FR scheme: delivered age n_bar, a first wait, then geometric
    attempts spaced K (pipelined) or n_bar apart with no further waits.

    Args:
        g: Age-penalty functional.
        cfg: Coding configuration.
        sim: Simulation settings.
        pipelined: Use the just-in-time spacing.
        first_wait: Wait before the first attempt of every epoch.
        debug: Print a summary.
    """
    if first_wait < 0:
        raise ValueError(f'first_wait must be non-negative, got {first_wait}')
    rng = np.random.default_rng(sim.seed)
    attempts = sample_fr_attempts(cfg, rng, size=sim.total_epochs)
    lengths = first_wait + attempts * attempt_spacing(cfg, pipelined)
    starts = np.full(lengths.shape, cfg.n_bar)
    rewards = penalty_integral(g, starts, starts + lengths)
    trace = None
    if sim.keep_trace:
        trace = pd.DataFrame({'epoch': np.arange(sim.total_epochs), 'start_age': starts,
                              'wait': np.full(lengths.shape, float(first_wait)),
                              'delay': starts + lengths - first_wait, 'attempts': attempts,
                              'reward': rewards, 'length': lengths})
    result = _finish(np.asarray(rewards), lengths, sim, trace)
    if debug:
        print(f'{PREFIX} FR {result.epoch_count} epochs: '
              f'{result.avg_penalty:.8g} +/- {result.std_error:.3g}')
    return result


def write_trace_csv(result: SimResult, filepath: str) -> None:
    """Write the per-epoch trace as CSV (12 significant digits)."""
    result.trace_frame().to_csv(filepath, index=False, float_format=utils.CSV_FLOAT_FORMAT)


def read_trace_csv(filepath: str) -> pd.DataFrame:
    """Read a trace written by write_trace_csv."""
    trace = pd.read_csv(filepath)
    missing = [col for col in TRACE_COLUMNS if col not in trace.columns]
    if missing:
        raise ValueError(f'Not an epoch trace, missing columns: {missing}')
    return trace[TRACE_COLUMNS]


def _run_with_seed(run, sim, seed):
    return run(SimConfig(num_epochs=sim.num_epochs, seed=seed, scheme=sim.scheme,
                         warmup_epochs=sim.warmup_epochs, batches=sim.batches,
                         keep_trace=False))


def child_seeds(seed: int, replications: int) -> List[int]:
    """Independent 64-bit seeds spawned from one seed."""
    children = np.random.SeedSequence(seed).spawn(replications)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def pool_results(results: Sequence[SimResult]) -> SimResult:
    """Merge runs by pooled ratio estimation over all their batches."""
    batch_rewards = np.concatenate([res.batch_rewards for res in results])
    batch_times = np.concatenate([res.batch_times for res in results])
    ratio, std_error, _, _ = _pooled_statistics(batch_rewards, batch_times)
    return SimResult(avg_penalty=ratio, total_time=float(batch_times.sum()),
                     epoch_count=sum(res.epoch_count for res in results),
                     std_error=std_error, batch_rewards=batch_rewards,
                     batch_times=batch_times)


def replicate(run: Callable[[SimConfig], SimResult], sim: SimConfig, replications: int,
              workers: Optional[int] = 1) -> SimResult:
    """
    Run independent replications with seeds spawned from sim.seed and pool them.

    Args:
        run: Picklable function of a SimConfig (e.g. functools.partial of simulate_fr).
        sim: Base settings; each replication gets its own seed.
        replications: Number of runs.
        workers: Worker processes (1 runs serially, None uses all cores).
    """
    if replications < 1:
        raise ValueError(f'replications must be at least 1, got {replications}')
    seeds = child_seeds(sim.seed, replications)
    if workers == 1:
        results = [_run_with_seed(run, sim, seed) for seed in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_with_seed, [run] * replications,
                                        [sim] * replications, seeds))
    return pool_results(results)


def ou_path(p: OUParams, x0, times, rng: np.random.Generator,
            num_paths: Optional[int] = None) -> np.ndarray:
    """
    Sample an OU process exactly at the given times, starting from x0 at t=0.

    Uses the Gaussian transition X(t+d) | X(t) ~ Normal(X(t) e^(-theta d),
    v (1 - e^(-2 theta d))), so there is no discretization error.

    Args:
        p: OU parameters.
        x0: Value at time 0 (scalar, or one value per path).
        times: Nondecreasing non-negative times (repeated times give equal values).
        rng: Random generator.
        num_paths: Number of independent paths (None for a single path).

    Returns:
        Array of shape (len(times),) or (num_paths, len(times)).

    Raises:
        ValueError: If times are negative or decreasing.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError('times must be one-dimensional')
    if times.size and times[0] < 0:
        raise ValueError(f'times must be non-negative, got {times[0]}')
    steps = np.diff(np.concatenate(([0.0], times)))
    if np.any(steps < 0):
        raise ValueError('times must be nondecreasing')
    n_paths = 1 if num_paths is None else int(num_paths)
    decay = np.exp(-p.theta * steps)
    scale = np.sqrt(steady_state_variance(p) * -np.expm1(-2 * p.theta * steps))
    noise = rng.standard_normal((n_paths, times.size)) * scale
    values = np.empty((n_paths, times.size))
    current = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)).copy()
    for ind in range(times.size):
        current = current * decay[ind] + noise[:, ind]
        values[:, ind] = current
    return values[0] if num_paths is None else values


@dataclass(frozen=True)
class QuantizerCheck:
    """Empirical time-average squared error for one quantizer model."""
    quantizer: str
    empirical_mse: float
    std_error: float
    predicted: float
    relative_gap: float


@dataclass(frozen=True)
class EndToEndReport:
    """
    Physical-system simulation compared with the analytic optimum.

    Attributes:
        scheme: 'IIR' or 'FR'.
        lambda_star: Analytic optimal average MMSE.
        ideal: Check with the additive-noise quantizer model.
        lloyd_max: Check with a Lloyd-Max quantizer (None above 8 bits).
    """
    scheme: str
    lambda_star: float
    ideal: QuantizerCheck
    lloyd_max: Optional[QuantizerCheck]


def _timeline(ou: OUParams, cfg: CodingConfig, sim: SimConfig, rng, pipelined: bool):
    """Sample and delivery times of every epoch, and the analytic lambda*."""
    total = sim.total_epochs
    if sim.scheme == 'IIR':
        penalty = OUMsePenalty(ou, cfg.ell)
        solution = solve_iir(penalty, iir_delay_pmf(cfg))
        delays = sample_iir_delay(cfg, rng, size=total)
        starts = np.concatenate(([cfg.n_bar], delays[:-1]))
        lengths = solution.wait(starts) + delays
        deliveries = cfg.n_bar + np.cumsum(lengths)
        samples = deliveries - delays
        lambda_star = solution.lambda_star
    else:
        attempts = sample_fr_attempts(cfg, rng, size=total)
        deliveries = cfg.n_bar + np.cumsum(attempts * attempt_spacing(cfg, pipelined))
        samples = deliveries - cfg.n_bar
        lambda_star = fr_lambda_closed_form(ou, cfg, pipelined)
    # epoch 0 runs from the first delivery at n_bar, with a sample taken at time 0
    samples = np.concatenate(([0.0], samples))
    deliveries = np.concatenate(([cfg.n_bar], deliveries))
    return samples, deliveries, lambda_star


def _check(name, errors, lengths, sim, predicted, lambda_star):
    rewards = np.sum(errors**2, axis=1) * lengths / errors.shape[1]
    mse, std_error, _, _ = batch_statistics(rewards[sim.warmup:], lengths[sim.warmup:], sim.batches)
    return QuantizerCheck(quantizer=name, empirical_mse=mse, std_error=std_error,
                          predicted=predicted, relative_gap=(mse - lambda_star) / lambda_star)


def end_to_end_mse_check(ou: OUParams, cfg: CodingConfig, sim: SimConfig,
                         pipelined: bool = True, include_lloyd_max: bool = True,
                         points_per_epoch: int = POINTS_PER_EPOCH,
                         debug: bool = False) -> EndToEndReport:
    """
    Simulate the OU source, the quantizer and the MMSE estimator, and compare
    the time-average squared error with the analytic optimum.

    The optimal policy of sim.scheme is solved first. Every delivered sample
    X(S) is reconstructed as X~ and the receiver estimates X(t) by
    X~ exp(-theta (t - S)) until the next delivery. Squared errors are averaged
    with a midpoint rule over each epoch.

    The ideal quantizer model is the Gaussian test channel with distortion
    d = 2^(-2 ell): X~ = (1 - d) X + sqrt((1 - d) d v) Z. The Lloyd-Max model
    quantizes X with the codebook of a Normal(0, v) source, and its prediction
    replaces d with the codebook distortion.
    """
    if points_per_epoch < 1:
        raise ValueError(f'points_per_epoch must be positive, got {points_per_epoch}')
    rng = np.random.default_rng(sim.seed)
    variance = steady_state_variance(ou)
    samples, deliveries, lambda_star = _timeline(ou, cfg, sim, rng, pipelined)
    n_epochs = deliveries.size - 1
    lengths = np.diff(deliveries)
    fractions = (np.arange(points_per_epoch) + 0.5) / points_per_epoch
    grid = deliveries[:-1, np.newaxis] + lengths[:, np.newaxis] * fractions

    times = np.concatenate((samples, grid.ravel()))
    order = np.argsort(times, kind='stable')
    x0 = rng.normal(0.0, np.sqrt(variance))
    path = np.empty(times.size)
    path[order] = ou_path(ou, x0, times[order], rng)
    at_samples = path[:samples.size]
    at_grid = path[samples.size:].reshape(n_epochs, points_per_epoch)
    # the estimate during epoch i uses the sample delivered at its start
    decay = np.exp(-ou.theta * (grid - samples[:-1, np.newaxis]))

    distortion = 2.0**(-2 * cfg.ell)
    noise = rng.standard_normal(samples.size)
    ideal_values = (1 - distortion) * at_samples + np.sqrt((1 - distortion) * distortion * variance) * noise
    ideal_errors = at_grid - ideal_values[:-1, np.newaxis] * decay
    ideal = _check('ideal', ideal_errors, lengths, sim, lambda_star, lambda_star)

    lloyd = None
    if include_lloyd_max and cfg.ell <= MAX_BITS:
        codebook = lloyd_max_quantizer(variance, cfg.ell)
        lloyd_values = codebook.quantize(at_samples)
        lloyd_errors = at_grid - lloyd_values[:-1, np.newaxis] * decay
        # same policy, with the codebook distortion in place of 2^(-2 ell)
        predicted = predicted_mse(variance, cfg.ell, lambda_star, codebook.distortion / variance)
        lloyd = _check('lloyd_max', lloyd_errors, lengths, sim, predicted, lambda_star)
    report = EndToEndReport(scheme=sim.scheme, lambda_star=lambda_star, ideal=ideal, lloyd_max=lloyd)
    if debug:
        print(f'{PREFIX} end-to-end {sim.scheme}: lambda*={lambda_star:.6g} '
              f'ideal={ideal.empirical_mse:.6g} +/- {ideal.std_error:.3g}')
        if lloyd is not None:
            print(f'{PREFIX} Lloyd-Max={lloyd.empirical_mse:.6g} +/- {lloyd.std_error:.3g} '
                  f'(gap {100 * lloyd.relative_gap:.3g}%)')
    return report


def predicted_mse(variance, ell, lambda_star, relative_distortion):
    """
    Average MMSE of the same policy when the quantizer distortion is
    relative_distortion * v instead of 2^(-2 ell) v.

    The MMSE is affine in the factor (1 - d), so the average is
    v - (v - lambda*) (1 - d') / (1 - d).
    """
    ideal_gain = 1 - 2.0**(-2 * ell)
    return variance - (variance - lambda_star) * (1 - relative_distortion) / ideal_gain
