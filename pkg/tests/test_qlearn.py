"""Tests for the Q-learning baseline."""

from unittest.mock import Mock, patch

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from specrec.channel import ChannelParams, MatrixFamily, MatrixType, family_params
from specrec.mdp import MdpModel, Policy, policy_throughput
from specrec.mras import MrasConfig, solve
from specrec.qlearn import (
    ACTION_GRID,
    QConfig,
    QTable,
    boltzmann_probs,
    q_update,
    softmax_action,
    train,
)


@pytest.fixture
def model():
    """Three channels, two users."""
    return MdpModel(m_channels=3, n_users=2, channel=ChannelParams(p=0.3, q=0.2))


class TestQConfig:
    """Test cases for QConfig."""

    def test_defaults(self):
        """Test the default grid and parameters."""
        cfg = QConfig()
        assert cfg.actions == list(ACTION_GRID)
        assert ACTION_GRID[0] == 0.1 and ACTION_GRID[-1] == 1.0 and len(ACTION_GRID) == 10
        assert cfg.discount == 1.0

    def test_step_size_decay(self):
        """Test alpha / (1 + t / decay)."""
        cfg = QConfig(alpha=0.2, alpha_decay=1e4)
        assert cfg.step_size(0) == pytest.approx(0.2)
        assert cfg.step_size(10_000) == pytest.approx(0.1)

    def test_constant_step_size(self):
        """Test no decay keeps alpha fixed."""
        assert QConfig(alpha=0.3, alpha_decay=None).step_size(10**6) == 0.3

    @pytest.mark.parametrize("actions", [[0.0, 0.5], [0.5, 1.2]])
    def test_invalid_actions(self, actions):
        """Test actions outside (0, 1] are rejected."""
        with pytest.raises(ValidationError):
            QConfig(actions=actions)


class TestUpdate:
    """Test cases for the tabular update and the Boltzmann rule."""

    def test_q_update(self):
        """Test (1 - alpha) Q + alpha (reward + discount max Q')."""
        table = QTable.zeros(3)
        table.q[2] = [0.0, 4.0] + [0.0] * 8
        q_update(table, 0, 1, 2.0, 2, QConfig(), alpha=0.5)
        assert table.q[0, 1] == pytest.approx(3.0)

    def test_q_update_discount(self):
        """Test the discount scales the bootstrap term."""
        table = QTable.zeros(2, [0.5])
        table.q[1, 0] = 10.0
        q_update(table, 0, 0, 1.0, 1, QConfig(actions=[0.5], discount=0.5), alpha=1.0)
        assert table.q[0, 0] == pytest.approx(6.0)

    def test_boltzmann_uniform(self):
        """Test equal values give a uniform distribution."""
        np.testing.assert_allclose(boltzmann_probs(np.zeros(4), 5.0), np.full(4, 0.25))

    def test_boltzmann_stable(self):
        """Test huge values neither overflow nor lose normalisation."""
        probs = boltzmann_probs(np.array([1e6, 1e6 - 1.0]), 5.0)
        assert probs.sum() == pytest.approx(1.0)
        assert probs[0] > probs[1]

    def test_softmax_frequencies(self):
        """Test sampled actions follow the Boltzmann probabilities."""
        table = QTable.zeros(1, [0.1, 0.2])
        table.q[0] = [0.0, np.log(3.0) / 5.0]
        rng = np.random.default_rng(0)
        draws = np.array([softmax_action(table, 0, 5.0, rng) for _ in range(20_000)])
        assert draws.mean() == pytest.approx(0.75, abs=0.015)

    def test_softmax_inverse_cdf(self):
        """Test a supplied uniform picks the action whose CDF interval holds it."""
        table = QTable.zeros(1, [0.1, 0.2, 0.3])
        rng = Mock(spec=np.random.Generator)
        assert softmax_action(table, 0, 5.0, rng, u=0.0) == 0
        assert softmax_action(table, 0, 5.0, rng, u=0.5) == 1
        assert softmax_action(table, 0, 5.0, rng, u=1.0) == 2
        rng.random.assert_not_called()

    def test_greedy_ties_to_smaller_action(self):
        """Test ties resolve to the smaller action."""
        table = QTable.zeros(2, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(table.greedy_actions(), [0.1, 0.1])


class TestTrain:
    """Test cases for training."""

    def test_train_returns_grid_policy(self, model):
        """Test the policy is the clamped greedy grid policy."""
        table, policy = train(model, QConfig(steps=20_000), np.random.default_rng(0))
        assert isinstance(policy, Policy)
        assert len(policy) == model.n_states
        expected = np.clip(table.greedy_actions(), 1e-6, 1 - 1e-6)
        np.testing.assert_allclose(policy.p_rec, expected)
        assert table.metadata["discount"] == 1.0
        assert table.metadata["steps"] == 20_000

    def test_train_deterministic(self, model):
        """Test equal seeds give equal tables."""
        a, _ = train(model, QConfig(steps=5_000), np.random.default_rng(3))
        b, _ = train(model, QConfig(steps=5_000), np.random.default_rng(3))
        np.testing.assert_array_equal(a.q, b.q)

    def test_train_samples_with_softmax_action(self, model):
        """Test every training step draws its action through softmax_action."""
        with patch("specrec.qlearn.softmax_action", wraps=softmax_action) as draw:
            train(model, QConfig(steps=300), np.random.default_rng(1))
        assert draw.call_count == 300
        assert all(call.args[2] == 5.0 for call in draw.call_args_list)

    def test_to_csv(self, model, tmp_path):
        """Test the table exports one row per (state, action)."""
        table, _ = train(model, QConfig(steps=1_000), np.random.default_rng(0))
        path = tmp_path / "q.csv"
        table.to_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["state", "action_value", "q"]
        assert len(frame) == model.n_states * len(ACTION_GRID)

    @pytest.mark.slow
    @pytest.mark.parametrize("family", [MatrixType.TYPE1, MatrixType.TYPE2])
    @pytest.mark.parametrize("epsilon", [1.0, 4.0, 8.0])
    def test_mras_not_worse_than_q_learning(self, family, epsilon):
        """Test the MRAS policy is at least as good as the learned grid policy."""
        channel = family_params(MatrixFamily(family=family, epsilon=epsilon))
        model = MdpModel(m_channels=10, n_users=5, channel=channel)
        _, q_policy = train(model, QConfig(steps=200_000), np.random.default_rng(0))
        _, trace = solve(model, MrasConfig(), np.random.default_rng(0))
        assert trace.final_phi >= policy_throughput(model, q_policy) - 0.01 * trace.final_phi
