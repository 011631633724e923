"""Tests for the channel processes."""

import numpy as np
import pytest
from pydantic import ValidationError

from specrec.channel import (
    ChannelParams,
    ChannelState,
    InitialState,
    MatrixFamily,
    MatrixType,
    family_params,
    initial_idle,
    sample_idle_paths,
    stationary_idle_prob,
    step_channel,
    step_channels,
)
from specrec.errors import ConfigurationError


@pytest.fixture
def rng():
    """Seeded random stream."""
    return np.random.default_rng(1234)


class TestChannelParams:
    """Test cases for ChannelParams."""

    def test_idle_prob(self):
        """Test stationary idle probability p / (p + q)."""
        params = ChannelParams(p=0.2, q=0.6)
        assert params.idle_prob == pytest.approx(0.25)
        assert stationary_idle_prob(params) == pytest.approx(0.25)

    def test_default_rate(self):
        """Test the data rate defaults to 1."""
        assert ChannelParams(p=0.1, q=0.1).rate_b == 1.0

    @pytest.mark.parametrize("p,q", [(0.0, 0.5), (0.5, 0.0), (1.5, 0.5), (-0.1, 0.2)])
    def test_invalid_probabilities(self, p, q):
        """Test probabilities outside (0, 1] are rejected."""
        with pytest.raises(ValidationError):
            ChannelParams(p=p, q=q)

    def test_frozen(self):
        """Test parameters are immutable."""
        params = ChannelParams(p=0.1, q=0.2)
        with pytest.raises(ValidationError):
            params.p = 0.3


class TestFamilyParams:
    """Test cases for the Type 1 / Type 2 families."""

    def test_type1(self):
        """Test Type 1 scales p=0.005 and q=0.025 by epsilon."""
        params = family_params(MatrixFamily(family=MatrixType.TYPE1, epsilon=4.0))
        assert params.p == pytest.approx(0.02)
        assert params.q == pytest.approx(0.1)

    def test_type2(self):
        """Test Type 2 scales p=q=0.01 by epsilon."""
        params = family_params(MatrixFamily(family=MatrixType.TYPE2, epsilon=10.0), rate_b=2.0)
        assert params.p == pytest.approx(0.1)
        assert params.q == pytest.approx(0.1)
        assert params.rate_b == 2.0

    def test_upper_bounds(self):
        """Test the largest admissible epsilon of each family."""
        assert family_params(MatrixFamily(family=MatrixType.TYPE1, epsilon=40.0)).q == pytest.approx(1.0)
        assert family_params(MatrixFamily(family=MatrixType.TYPE2, epsilon=100.0)).p == pytest.approx(1.0)

    def test_out_of_range(self):
        """Test epsilon beyond the family bound raises ConfigurationError."""
        with pytest.raises(ConfigurationError, match="type1"):
            family_params(MatrixFamily(family=MatrixType.TYPE1, epsilon=41.0))

    def test_nonpositive_epsilon(self):
        """Test epsilon must be positive."""
        with pytest.raises(ValidationError):
            MatrixFamily(family=MatrixType.TYPE2, epsilon=0.0)


class TestStepChannel:
    """Test cases for single and vectorised channel steps."""

    def test_certain_transitions(self, rng):
        """Test p=q=1 flips the state every slot."""
        params = ChannelParams(p=1.0, q=1.0)
        assert step_channel(ChannelState.BUSY, params, rng) == ChannelState.IDLE
        assert step_channel(ChannelState.IDLE, params, rng) == ChannelState.BUSY

    def test_vectorised_flip(self, rng):
        """Test step_channels with p=q=1 negates the indicators."""
        idle = np.array([True, False, True, False])
        nxt = step_channels(idle, np.ones(4), np.ones(4), rng)
        np.testing.assert_array_equal(nxt, ~idle)

    def test_vectorised_frequency(self, rng):
        """Test the idle->busy frequency matches q within 3 SE."""
        n = 200_000
        nxt = step_channels(np.ones(n, dtype=bool), np.full(n, 0.3), np.full(n, 0.2), rng)
        busy = 1.0 - nxt.mean()
        assert abs(busy - 0.2) <= 3 * np.sqrt(0.2 * 0.8 / n)


class TestPaths:
    """Test cases for path sampling."""

    def test_shape_and_dtype(self, rng):
        """Test sample_idle_paths returns a (T, M) boolean array."""
        params = [ChannelParams(p=0.1, q=0.1)] * 3
        paths = sample_idle_paths(params, 50, rng)
        assert paths.shape == (50, 3)
        assert paths.dtype == bool

    def test_initial_idle(self, rng):
        """Test the idle start puts every channel idle."""
        params = [ChannelParams(p=0.1, q=0.9)] * 5
        assert initial_idle(params, InitialState.IDLE, rng).all()

    def test_stationary_fraction(self, rng):
        """Test long paths spend p / (p + q) of the time idle."""
        params = [ChannelParams(p=0.3, q=0.1)] * 20
        paths = sample_idle_paths(params, 5000, rng, initial=InitialState.STATIONARY)
        assert paths.mean() == pytest.approx(0.75, abs=0.02)

    def test_reproducible(self):
        """Test equal seeds give equal paths."""
        params = [ChannelParams(p=0.2, q=0.4)] * 4
        a = sample_idle_paths(params, 100, np.random.default_rng(7))
        b = sample_idle_paths(params, 100, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)
