"""
Unit tests for simulator module.

Tests cover:
- SimConfig validation and warm-up
- Batch-means ratio estimation
- IIR and FR renewal-reward simulation against known averages, over random configurations
- Reproducibility from the seed
- Per-epoch traces (CSV) and saving to HDF5
- Pooled replications
- Exact OU path sampling
- End-to-end check of the physical system
"""

import os
import tempfile
from functools import partial
import pytest
import numpy as np
from ouestimation import simulator
from ouestimation.simulator import SimConfig
from ouestimation.penalty import OUParams, OUMsePenalty, LinearAgePenalty, penalty_integral
from ouestimation.channel import CodingConfig, iir_delay_pmf
from ouestimation.policyiir import solve_iir
from ouestimation.policyfr import fr_lambda_closed_form
from ouestimation.savedata import to_file
from ouestimation.utils import ResultsFile


@pytest.fixture
def ou():
    return OUParams(theta=0.5, sigma=1.0)


@pytest.fixture
def cfg():
    return CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=0.1)


@pytest.fixture
def noiseless():
    """Configuration whose first attempt always decodes."""
    return CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=1e-12)


def zero_wait(ages):
    return np.zeros_like(ages)


def random_cases(count, seed):
    """Seeded draws of (OU process, coding configuration)."""
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count):
        ell = int(rng.integers(1, 5))
        cfg = CodingConfig(ell=ell, n=ell + int(rng.integers(0, 5)), t_b=0.05,
                           beta=float(rng.uniform(0.0, 1.0)), epsilon=float(rng.uniform(0.05, 0.4)))
        cases.append((OUParams(theta=float(rng.uniform(0.05, 1.0)), sigma=1.0), cfg))
    return cases


RANDOM_CASES = random_cases(6, seed=2024)


class TestSimConfig:
    """Test simulation settings."""

    def test_default_warmup(self):
        """One percent of the epochs are discarded by default."""
        sim = SimConfig(num_epochs=10_000)
        assert sim.warmup == 100
        assert sim.total_epochs == 10_100

    def test_explicit_warmup(self):
        sim = SimConfig(num_epochs=500, warmup_epochs=0)
        assert sim.total_epochs == 500

    def test_invalid(self):
        """Bad epoch counts and schemes are rejected."""
        with pytest.raises(TypeError):
            SimConfig(num_epochs=10.0)
        with pytest.raises(ValueError, match='at least 1'):
            SimConfig(num_epochs=0)
        with pytest.raises(ValueError, match='scheme'):
            SimConfig(num_epochs=10, scheme='HARQ')


class TestBatchStatistics:
    """Test the ratio estimator and its standard error."""

    def test_ratio(self):
        """The estimate is the ratio of sums, not the mean of ratios."""
        rewards = np.array([1.0, 3.0, 2.0, 6.0])
        lengths = np.array([1.0, 1.0, 2.0, 2.0])
        ratio, std_error, batch_rewards, batch_times = simulator.batch_statistics(rewards, lengths, 2)
        assert ratio == pytest.approx(2.0)
        assert batch_rewards == pytest.approx([4.0, 8.0])
        assert batch_times == pytest.approx([2.0, 4.0])
        assert std_error == pytest.approx(0.0)

    def test_single_batch(self):
        """One batch gives no error estimate."""
        ratio, std_error, _, _ = simulator.batch_statistics(np.array([2.0]), np.array([1.0]), 100)
        assert ratio == 2.0
        assert np.isinf(std_error)


class TestRenewalSimulation:
    """Test IIR and FR simulation against known averages."""

    def test_iir_deterministic_linear(self, noiseless):
        """Fixed delay and zero wait: the average age is 3 n_bar / 2."""
        sim = SimConfig(num_epochs=1000)
        result = simulator.simulate_iir(LinearAgePenalty(), noiseless, zero_wait, sim)
        assert result.avg_penalty == pytest.approx(1.5 * noiseless.n_bar, rel=1e-12)
        assert result.epoch_count == 1000
        assert result.total_time == pytest.approx(1000 * noiseless.n_bar)

    def test_fr_certain_delivery(self, ou, cfg):
        """With p0 = 1 every epoch is one spacing long."""
        certain = cfg.replace(ack_sequence=[1.0])
        g = OUMsePenalty(ou, certain.ell)
        result = simulator.simulate_fr(g, certain, SimConfig(num_epochs=500, scheme='FR'))
        spacing = certain.k_spacing
        expected = penalty_integral(g, certain.n_bar, certain.n_bar + spacing) / spacing
        assert result.avg_penalty == pytest.approx(expected, rel=1e-12)
        assert result.avg_penalty == pytest.approx(fr_lambda_closed_form(ou, certain), rel=1e-12)

    def test_same_seed_same_result(self, ou, cfg):
        """Runs are reproducible from the seed."""
        g = OUMsePenalty(ou, cfg.ell)
        first = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=2000, seed=5, scheme='FR'))
        second = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=2000, seed=5, scheme='FR'))
        other = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=2000, seed=6, scheme='FR'))
        assert first.avg_penalty == second.avg_penalty
        assert first.avg_penalty != other.avg_penalty

    def test_one_epoch(self, ou, cfg):
        """A single epoch has an infinite standard error."""
        g = OUMsePenalty(ou, cfg.ell)
        result = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=1, warmup_epochs=0, scheme='FR'))
        assert result.epoch_count == 1
        assert np.isinf(result.std_error)

    def test_negative_wait(self, noiseless):
        """A waiting rule may not return negative waits."""
        with pytest.raises(ValueError, match='negative wait'):
            simulator.simulate_iir(LinearAgePenalty(), noiseless, lambda ages: -ages,
                                   SimConfig(num_epochs=10))

    def test_fr_matches_closed_form(self, ou, cfg):
        """Simulated FR average agrees with the closed form."""
        g = OUMsePenalty(ou, cfg.ell)
        result = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=200_000, seed=11, scheme='FR'))
        assert result.within(fr_lambda_closed_form(ou, cfg), n_std=3)

    @pytest.mark.slow
    @pytest.mark.parametrize('case', range(len(RANDOM_CASES)))
    def test_fr_random_configurations(self, case):
        """FR agrees with the closed form within 3 standard errors and 0.5%."""
        ou, cfg = RANDOM_CASES[case]
        g = OUMsePenalty(ou, cfg.ell)
        expected = fr_lambda_closed_form(ou, cfg)
        result = simulator.simulate_fr(g, cfg, SimConfig(num_epochs=1_000_000, seed=100 + case,
                                                         scheme='FR'))
        assert result.within(expected, n_std=3)
        assert result.avg_penalty == pytest.approx(expected, rel=5e-3)

    @pytest.mark.parametrize('factor', [0.1, 0.5, 1.0])
    def test_fr_first_wait_never_helps(self, ou, cfg, factor):
        """Waiting before the first attempt does not beat zero wait (beyond noise)."""
        g = OUMsePenalty(ou, cfg.ell)
        sim = SimConfig(num_epochs=100_000, seed=21, scheme='FR')
        eager = simulator.simulate_fr(g, cfg, sim)
        delayed = simulator.simulate_fr(g, cfg, sim, first_wait=factor * cfg.k_spacing)
        assert delayed.avg_penalty >= eager.avg_penalty - 3 * eager.std_error

    @pytest.mark.slow
    @pytest.mark.parametrize('case', range(len(RANDOM_CASES)))
    def test_iir_random_configurations(self, case):
        """IIR under the optimal rule agrees with lambda* within 3 standard errors and 0.5%."""
        ou, cfg = RANDOM_CASES[case]
        g = OUMsePenalty(ou, cfg.ell)
        solution = solve_iir(g, iir_delay_pmf(cfg))
        result = simulator.simulate_iir(g, cfg, solution.wait,
                                        SimConfig(num_epochs=1_000_000, seed=200 + case))
        assert result.within(solution.lambda_star, n_std=3)
        assert result.avg_penalty == pytest.approx(solution.lambda_star, rel=5e-3)

    @pytest.mark.slow
    def test_iir_waiting_helps_little_and_never_hurts(self, ou, cfg):
        """The optimal rule does no worse than zero wait (beyond noise)."""
        g = OUMsePenalty(ou, cfg.ell)
        solution = solve_iir(g, iir_delay_pmf(cfg))
        sim = SimConfig(num_epochs=500_000, seed=4)
        optimal = simulator.simulate_iir(g, cfg, solution.wait, sim)
        eager = simulator.simulate_iir(g, cfg, zero_wait, sim)
        assert optimal.avg_penalty <= eager.avg_penalty + 3 * eager.std_error


class TestTrace:
    """Test per-epoch traces."""

    def test_iir_trace(self, cfg, ou):
        """The trace has one row per epoch after warm-up."""
        g = OUMsePenalty(ou, cfg.ell)
        sim = SimConfig(num_epochs=300, warmup_epochs=10, keep_trace=True)
        result = simulator.simulate_iir(g, cfg, zero_wait, sim)
        trace = result.trace_frame()
        assert list(trace.columns) == simulator.TRACE_COLUMNS
        assert len(trace) == 300
        assert np.all(trace['attempts'] >= 1)
        assert trace['length'].sum() == pytest.approx(result.total_time)

    def test_no_trace(self, cfg, ou):
        """Asking for a trace that was not kept is an error."""
        result = simulator.simulate_fr(OUMsePenalty(ou, 2), cfg, SimConfig(num_epochs=10, scheme='FR'))
        with pytest.raises(ValueError, match='No trace'):
            result.trace_frame()

    def test_csv(self, cfg, ou, tmp_path):
        """Traces written as CSV read back with the same values."""
        sim = SimConfig(num_epochs=200, scheme='FR', keep_trace=True)
        result = simulator.simulate_fr(OUMsePenalty(ou, 2), cfg, sim)
        filepath = os.path.join(tmp_path, 'trace.csv')
        simulator.write_trace_csv(result, filepath)
        loaded = simulator.read_trace_csv(filepath)
        assert np.allclose(loaded.to_numpy(dtype=float), result.trace.to_numpy(dtype=float),
                           rtol=1e-11, atol=0)

    def test_csv_wrong_columns(self, tmp_path):
        """Files without the trace columns are rejected."""
        filepath = os.path.join(tmp_path, 'other.csv')
        with open(filepath, 'w') as csvfile:
            csvfile.write('a,b\n1,2\n')
        with pytest.raises(ValueError, match='missing columns'):
            simulator.read_trace_csv(filepath)


class TestSaveResults:
    """Test saving simulation results to HDF5."""

    def test_save_and_load(self, cfg, ou):
        """Summary, batches and trace are stored under /simulation."""
        sim = SimConfig(num_epochs=400, scheme='FR', keep_trace=True)
        result = simulator.simulate_fr(OUMsePenalty(ou, 2), cfg, sim)
        with tempfile.TemporaryDirectory() as tmpdir:
            filepath = os.path.join(tmpdir, 'sim.h5')
            assert to_file([result], filepath)
            rdata = ResultsFile(filepath)
        assert rdata.simulation['avg_penalty'] == pytest.approx(result.avg_penalty)
        assert rdata.simulation['epoch_count'] == 400
        assert len(rdata.trace['epoch']) == 400
        assert 'Simulation' in repr(rdata)


class TestReplications:
    """Test pooled independent runs."""

    def test_child_seeds(self):
        """Spawned seeds are distinct and reproducible."""
        seeds = simulator.child_seeds(0, 4)
        assert len(set(seeds)) == 4
        assert seeds == simulator.child_seeds(0, 4)

    def test_pooled(self, cfg, ou):
        """Pooling keeps every epoch and every batch."""
        run = partial(simulator.simulate_fr, OUMsePenalty(ou, 2), cfg)
        sim = SimConfig(num_epochs=1000, seed=2, scheme='FR', batches=10)
        pooled = simulator.replicate(run, sim, replications=3, workers=1)
        assert pooled.epoch_count == 3000
        assert pooled.batch_rewards.size == 30
        again = simulator.replicate(run, sim, replications=3, workers=1)
        assert pooled.avg_penalty == again.avg_penalty

    def test_invalid_replications(self, cfg, ou):
        run = partial(simulator.simulate_fr, OUMsePenalty(ou, 2), cfg)
        with pytest.raises(ValueError):
            simulator.replicate(run, SimConfig(num_epochs=10, scheme='FR'), replications=0)


class TestOUPath:
    """Test exact OU sampling."""

    def test_moments(self, ou):
        """X(t) from X(0) = 1 is Normal(e^(-theta t), v (1 - e^(-2 theta t)))."""
        rng = np.random.default_rng(0)
        values = simulator.ou_path(ou, 1.0, [1.0], rng, num_paths=40_000)[:, 0]
        mean = np.exp(-0.5)
        var = ou.variance * (1 - np.exp(-1.0))
        assert values.mean() == pytest.approx(mean, abs=5 * np.sqrt(var / values.size))
        assert values.var() == pytest.approx(var, rel=0.03)

    def test_repeated_times(self, ou):
        """Equal times give equal values."""
        path = simulator.ou_path(ou, 0.0, [0.5, 0.5, 1.0], np.random.default_rng(1))
        assert path.shape == (3,)
        assert path[0] == path[1]

    def test_invalid_times(self, ou):
        """Times must be non-negative and nondecreasing."""
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match='nondecreasing'):
            simulator.ou_path(ou, 0.0, [1.0, 0.5], rng)
        with pytest.raises(ValueError, match='non-negative'):
            simulator.ou_path(ou, 0.0, [-1.0], rng)


class TestEndToEnd:
    """Test the physical-system simulation."""

    @pytest.mark.slow
    def test_fr_ideal_quantizer(self, ou, cfg):
        """With the ideal quantizer the squared error averages to lambda*."""
        report = simulator.end_to_end_mse_check(ou, cfg, SimConfig(num_epochs=100_000, seed=8,
                                                                   scheme='FR'))
        assert report.ideal.empirical_mse == pytest.approx(report.lambda_star,
                                                           abs=5 * report.ideal.std_error)
        assert report.lloyd_max is not None
        assert report.lloyd_max.predicted > report.lambda_star

    @pytest.mark.slow
    def test_iir_ideal_quantizer(self, ou, cfg):
        report = simulator.end_to_end_mse_check(ou, cfg, SimConfig(num_epochs=100_000, seed=9),
                                                include_lloyd_max=False)
        assert report.lloyd_max is None
        assert report.ideal.empirical_mse == pytest.approx(report.lambda_star,
                                                           abs=5 * report.ideal.std_error)

    def test_small_run(self, ou, cfg):
        """A short run returns both checks with finite values."""
        report = simulator.end_to_end_mse_check(ou, cfg, SimConfig(num_epochs=500, seed=1,
                                                                   scheme='FR'),
                                                points_per_epoch=4)
        assert report.scheme == 'FR'
        assert np.isfinite(report.ideal.empirical_mse)
        assert report.lloyd_max.quantizer == 'lloyd_max'

    def test_invalid_grid(self, ou, cfg):
        with pytest.raises(ValueError, match='points_per_epoch'):
            simulator.end_to_end_mse_check(ou, cfg, SimConfig(num_epochs=10), points_per_epoch=0)
