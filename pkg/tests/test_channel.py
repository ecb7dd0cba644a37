"""
Unit tests for channel module.

Tests cover:
- CodingConfig validation and derived timings
- BSC+MDS decoding-success probabilities
- Parity sawtooth of p_j and the monotonicity check
- IIR delay pmf truncation and tail mass
- FR attempt law
- Random sampling of delays and attempts
"""

import pytest
import numpy as np
from ouestimation import channel
from ouestimation.channel import CodingConfig, iir_delay_pmf
from ouestimation.utils import NonMonotoneAckError, ConvergenceError


@pytest.fixture
def cfg():
    """Default coding configuration (ell=2, n=4)."""
    return CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=0.1)


@pytest.fixture
def geometric_cfg():
    """Configuration with a constant success probability of 0.3."""
    return CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=0.1, ack_sequence=[0.3])


class TestCodingConfig:
    """Test coding configuration."""

    def test_timings(self, cfg):
        """n_bar, IR step and FR spacing follow from n, t_b and beta."""
        assert cfg.n_bar == pytest.approx(0.35)
        assert cfg.ir_step == pytest.approx(0.2)
        assert cfg.k_spacing == pytest.approx(0.2)
        assert cfg.replace(beta=0.5).k_spacing == pytest.approx(0.5)

    def test_codeword_shorter_than_message(self):
        """n must be at least ell."""
        with pytest.raises(ValueError, match='n must be at least ell'):
            CodingConfig(ell=4, n=3, t_b=0.05, beta=0.15, epsilon=0.1)

    @pytest.mark.parametrize('epsilon', [0.0, 0.5, 0.7])
    def test_epsilon_range(self, epsilon):
        """The crossover probability must be in (0, 0.5)."""
        with pytest.raises(ValueError, match='epsilon'):
            CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=epsilon)

    def test_integer_bits(self):
        """ell and n must be integers."""
        with pytest.raises(TypeError):
            CodingConfig(ell=2.0, n=4, t_b=0.05, beta=0.15, epsilon=0.1)

    def test_replace_keeps_other_fields(self, cfg):
        """replace() changes only the given fields."""
        other = cfg.replace(n=6)
        assert (other.ell, other.n, other.epsilon) == (2, 6, 0.1)


class TestAckProbabilities:
    """Test decoding-success probabilities."""

    def test_no_redundancy(self):
        """With n = ell no error can be corrected: p_0 = (1 - eps)^n."""
        cfg = CodingConfig(ell=2, n=2, t_b=0.05, beta=0.15, epsilon=0.1)
        assert channel.ack_prob(cfg, 0) == pytest.approx(0.81)

    def test_one_correctable_error(self):
        """Three bits for one message bit correct a single flip."""
        cfg = CodingConfig(ell=1, n=3, t_b=0.05, beta=0.15, epsilon=0.1)
        assert channel.ack_prob(cfg, 0) == pytest.approx(0.972)

    def test_same_parity_monotone(self, cfg):
        """Two more IR bits never lower the success probability."""
        probs = channel.ack_probs(cfg, 60)
        assert np.all(probs[2:] >= probs[:-2] - 1e-15)
        assert probs[-1] == pytest.approx(1.0)

    def test_odd_step_drop(self):
        """One extra bit without a larger correction radius lowers p_j."""
        cfg = CodingConfig(ell=5, n=7, t_b=0.05, beta=0.15, epsilon=0.1)
        with pytest.raises(NonMonotoneAckError, match='j=1') as excinfo:
            channel.ack_prob_monotone_check(cfg)
        assert excinfo.value.index == 1
        assert excinfo.value.values[1] < excinfo.value.values[0]

    def test_monotone_sequence_passes(self, cfg):
        """A nondecreasing user sequence passes the check."""
        custom = cfg.replace(ack_sequence=[0.5, 0.6, 0.9])
        assert channel.ack_prob_monotone_check(custom, j_max=20) == (0, 20)
        assert channel.ack_prob(custom, 10) == pytest.approx(0.9)

    def test_callable_sequence(self, cfg):
        """The success probability may be given as a function of j."""
        custom = cfg.replace(ack_sequence=lambda j: 1 - 0.5**(j + 1))
        assert channel.ack_probs(custom, 3) == pytest.approx([0.5, 0.75, 0.875])

    def test_invalid_sequence(self, cfg):
        """User probabilities must lie in [0, 1]."""
        with pytest.raises(ValueError, match='probabilities'):
            channel.ack_prob(cfg.replace(ack_sequence=[1.5]), 0)

    def test_negative_index(self, cfg):
        """j must be non-negative."""
        with pytest.raises(ValueError):
            channel.ack_prob(cfg, -1)


class TestIIRDelayPmf:
    """Test the truncated IIR delay pmf."""

    def test_mass_and_tail(self, cfg):
        """Retained mass plus tail is one, with the tail below tolerance."""
        pmf = iir_delay_pmf(cfg, tail_tol=1e-12)
        assert pmf.total_mass + pmf.tail_mass == pytest.approx(1.0, abs=1e-14)
        assert pmf.tail_mass <= 1e-12
        assert np.all(pmf.probs >= 0)

    def test_support_grid(self, cfg):
        """Delays are n_bar plus whole IR steps."""
        pmf = iir_delay_pmf(cfg)
        assert pmf.support[0] == pytest.approx(cfg.n_bar)
        assert pmf.gap == pytest.approx(cfg.ir_step)
        assert np.diff(pmf.support) == pytest.approx(np.full(pmf.support.size - 1, cfg.ir_step))

    def test_geometric_law(self, geometric_cfg):
        """A constant success probability gives a geometric number of IR bits."""
        pmf = iir_delay_pmf(geometric_cfg)
        k = np.arange(pmf.probs.size)
        assert pmf.probs == pytest.approx(0.3 * 0.7**k, rel=1e-10)
        expected_mean = geometric_cfg.n_bar + geometric_cfg.ir_step * 0.7 / 0.3
        assert pmf.mean() == pytest.approx(expected_mean, rel=1e-9)

    def test_point_mass(self):
        """A nearly noiseless channel decodes at the first attempt."""
        cfg = CodingConfig(ell=2, n=4, t_b=0.05, beta=0.15, epsilon=1e-12)
        pmf = iir_delay_pmf(cfg)
        assert pmf.support.size == 1
        assert pmf.probs[0] == pytest.approx(1.0)
        assert np.isnan(pmf.gap)

    def test_expect_reports_tail(self, geometric_cfg):
        """expect() returns the tail bound along with the value."""
        pmf = iir_delay_pmf(geometric_cfg, tail_tol=1e-6)
        value, tail_bound = pmf.expect(np.ones_like, bound=2.0)
        assert value == pytest.approx(pmf.total_mass)
        assert tail_bound == pytest.approx(2.0 * pmf.tail_mass)

    def test_to_frame(self, cfg):
        """The pmf converts to a table with one row per support point."""
        frame = iir_delay_pmf(cfg).to_frame()
        assert list(frame.columns) == ['k', 'delay', 'prob']

    def test_support_cap(self, cfg):
        """A support cap that cannot reach the tolerance is an error."""
        slow = cfg.replace(ack_sequence=[0.01])
        with pytest.raises(ConvergenceError, match='support'):
            iir_delay_pmf(slow, max_support=10)

    def test_invalid_tail_tol(self, cfg):
        """The tail tolerance must be in (0, 1)."""
        with pytest.raises(ValueError, match='tail_tol'):
            iir_delay_pmf(cfg, tail_tol=0.0)

    def test_exp_moment(self, geometric_cfg):
        """E[exp(-rate Y)] of the geometric delay has a closed form."""
        pmf = iir_delay_pmf(geometric_cfg)
        rate = 1.0
        step = np.exp(-rate * geometric_cfg.ir_step)
        expected = np.exp(-rate * geometric_cfg.n_bar) * 0.3 / (1 - 0.7 * step)
        assert channel.exp_moment_iir(pmf, rate) == pytest.approx(expected, rel=1e-10)
        with pytest.raises(ValueError, match='rate must be positive'):
            channel.exp_moment_iir(pmf, 0.0)


class TestFRAttempts:
    """Test the geometric FR attempt law."""

    def test_pmf(self, cfg):
        """P(M = m) = (1 - p0)^(m-1) p0, summing to one."""
        dist = channel.fr_attempt_dist(cfg)
        assert dist.p0 == pytest.approx(channel.ack_prob(cfg, 0))
        assert np.sum(dist.pmf(np.arange(1, 200))) == pytest.approx(1.0)
        assert dist.pmf(0) == 0.0
        assert dist.mean() == pytest.approx(1 / dist.p0)

    def test_invalid_p0(self):
        """p0 must be in (0, 1]."""
        with pytest.raises(ValueError, match='p0'):
            channel.FRAttemptDist(p0=0.0)


class TestSampling:
    """Test random delays and attempt counts."""

    def test_same_seed_same_delays(self, cfg):
        """Samples are reproducible from the seed."""
        first = channel.sample_iir_delay(cfg, np.random.default_rng(7), size=1000)
        second = channel.sample_iir_delay(cfg, np.random.default_rng(7), size=1000)
        assert np.array_equal(first, second)

    def test_delay_mean(self, geometric_cfg):
        """The sample mean of the delay matches the pmf mean."""
        pmf = iir_delay_pmf(geometric_cfg)
        delays = channel.sample_iir_delay(geometric_cfg, np.random.default_rng(1), size=200_000)
        std = np.sqrt(np.dot(pmf.probs, (pmf.support - pmf.mean())**2))
        assert abs(delays.mean() - pmf.mean()) < 5 * std / np.sqrt(delays.size)

    def test_single_delay(self, cfg):
        """Without size a single float is returned."""
        delay = channel.sample_iir_delay(cfg, np.random.default_rng(0))
        assert isinstance(delay, float)
        assert delay >= cfg.n_bar

    def test_attempt_mean(self, cfg):
        """FR attempts average 1/p0."""
        p0 = channel.ack_prob(cfg, 0)
        attempts = channel.sample_fr_attempts(cfg, np.random.default_rng(3), size=200_000)
        assert attempts.min() >= 1
        std = np.sqrt(1 - p0) / p0
        assert abs(attempts.mean() - 1 / p0) < 5 * std / np.sqrt(attempts.size)
