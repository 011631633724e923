"""Tests for campaign expansion, execution and result emission."""

import json
from unittest.mock import Mock, patch

import pandas as pd
import pytest
from pydantic import ValidationError

from specrec.campaign import (
    CSV_COLUMNS,
    CampaignRunner,
    ResultRow,
    check_golden_values,
    check_irreducibility,
    check_supermodularity,
    emit_results,
    gain_table,
    load_results,
    run_campaign,
)
from specrec.config import Campaign, Config, ExperimentConfig
from specrec.hetero import HeteroEnvironment, hetero_mras_config
from specrec.mras import MrasConfig
from specrec.qlearn import QConfig


def make_row(scheme, throughput, seed=0, epsilon=1.0):
    return ResultRow(campaign="sweep", scheme=scheme, family="type2", epsilon=epsilon, seed=seed,
                     horizon=100, throughput=throughput)


@pytest.fixture
def runtime():
    """Two-thread runtime without a ledger."""
    return Config(threads=2)


@pytest.fixture
def tiny_mras():
    """Small MRAS budget."""
    return MrasConfig(num_candidates=20, max_iterations=3)


@pytest.fixture
def sweep_experiment(tmp_path, tiny_mras):
    """Small sweep over four schemes and two seeds."""
    return ExperimentConfig(campaign=Campaign.SWEEP, m_channels=3, n_users=2, horizon=50,
                            epsilons=[1.0], seeds=[0, 1], schemes=["random", "static", "heuristic", "mras"],
                            mras=tiny_mras, output=tmp_path / "results.csv")


class TestResults:
    """Test cases for result rows and emission."""

    def test_throughput_nonnegative(self):
        """Test negative throughput is rejected."""
        with pytest.raises(ValidationError):
            make_row("random", -0.1)

    def test_emit_csv(self, tmp_path):
        """Test CSV output has the fixed header and one line per row."""
        path = emit_results([make_row("random", 1.25)], "csv", tmp_path / "out" / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2
        assert lines[1].startswith("sweep,random,type2,1.0,0,100,1.25")

    def test_emit_json(self, tmp_path):
        """Test JSON output reads back into equal rows."""
        rows = [make_row("random", 1.25), make_row("static", 1.5)]
        path = emit_results(rows, "json", tmp_path / "r.json")
        assert isinstance(json.loads(path.read_text()), list)
        assert load_results(path) == rows

    def test_load_csv(self, tmp_path):
        """Test CSV results read back into rows without extras."""
        rows = [make_row("random", 1.25, seed=3, epsilon=2.0), make_row("static", 1.5)]
        path = emit_results(rows, "csv", tmp_path / "r.csv")
        assert load_results(path) == rows

    def test_emit_empty(self, tmp_path):
        """Test emitting nothing is an error."""
        with pytest.raises(ValueError):
            emit_results([], "csv", tmp_path / "r.csv")

    def test_gain_table(self):
        """Test gains are computed on medians against the baseline."""
        rows = [make_row("random", v, seed=s) for s, v in enumerate([1.0, 2.0, 3.0])]
        rows += [make_row("mras", v, seed=s) for s, v in enumerate([2.0, 3.0, 4.0])]
        frame = gain_table(rows, "random").set_index("scheme")
        assert frame.loc["random", "gain"] == pytest.approx(0.0)
        assert frame.loc["mras", "throughput"] == pytest.approx(3.0)
        assert frame.loc["mras", "gain"] == pytest.approx(0.5)


class TestValidationChecks:
    """Test cases for individual validation checks."""

    def test_golden_values(self):
        """Test the two-user enumerations match the kernel."""
        result = check_golden_values()
        assert result.passed
        assert result.statistic <= 1e-12

    def test_irreducibility(self):
        """Test random interior policies give irreducible chains."""
        assert check_irreducibility(10, 0).passed

    def test_supermodularity_informational(self):
        """Test the supermodularity check never fails the suite."""
        result = check_supermodularity()
        assert result.informational
        assert result.passed


class TestCampaignRunner:
    """Test cases for CampaignRunner."""

    def test_sweep_rows(self, sweep_experiment, runtime):
        """Test one sorted row per scheme and seed, with cached policies."""
        rows = run_campaign(sweep_experiment, runtime)
        assert len(rows) == 8
        assert rows == sorted(rows, key=ResultRow.sort_key)
        assert {r.scheme for r in rows} == {"random", "static", "heuristic", "mras"}
        assert all(0.0 <= r.throughput <= 2.0 for r in rows)
        static = next(r for r in rows if r.scheme == "static")
        assert static.extra["p_rec"] == 0.7
        out = sweep_experiment.output.parent
        assert (out / "policies" / "mras-type2-eps1.json").exists()
        assert (out / "traces" / "mras-type2-eps1.csv").exists()

    def test_sweep_deterministic(self, sweep_experiment, runtime, tmp_path):
        """Test equal configurations produce byte-identical results."""
        first = emit_results(run_campaign(sweep_experiment, runtime), "csv", tmp_path / "a.csv")
        second = emit_results(run_campaign(sweep_experiment, runtime), "csv", tmp_path / "b.csv")
        assert first.read_bytes() == second.read_bytes()

    def test_ledger(self, sweep_experiment, runtime):
        """Test a completed run is recorded with its rows."""
        database = Mock()
        database.create_run.return_value = Mock(run_id="run-1")
        experiment = sweep_experiment.model_copy(update={"schemes": ["random"], "seeds": [0]})
        rows = CampaignRunner(experiment, runtime, database).run()
        database.create_run.assert_called_once_with("sweep", experiment.to_dict())
        database.add_rows.assert_called_once()
        assert len(database.add_rows.call_args[0][1]) == len(rows)
        database.complete_run.assert_called_once_with("run-1", "completed")

    def test_ledger_failure(self, sweep_experiment, runtime):
        """Test a failing job marks the run failed and re-raises unwrapped."""
        database = Mock()
        database.create_run.return_value = Mock(run_id="run-1")
        experiment = sweep_experiment.model_copy(update={"schemes": ["random"], "seeds": [0]})
        with patch("specrec.campaign.run_simulation", side_effect=RuntimeError("boom")):
            with pytest.raises(RuntimeError, match="boom"):
                CampaignRunner(experiment, runtime, database).run()
        database.complete_run.assert_called_once_with("run-1", "failed")
        database.add_rows.assert_not_called()

    def test_solve_mdp(self, tmp_path, runtime, tiny_mras):
        """Test solve-mdp reports MRAS and relative value iteration per seed."""
        experiment = ExperimentConfig(campaign=Campaign.SOLVE_MDP, m_channels=3, n_users=2, epsilons=[1.0],
                                      mras=tiny_mras, dp_grid_step=0.1, output=tmp_path / "solve.csv")
        rows = run_campaign(experiment, runtime)
        assert [r.scheme for r in rows] == ["mras", "rvi"]
        assert all(r.horizon == 0 and r.throughput > 0 for r in rows)
        assert len(rows[1].extra["policy"]) == 3
        assert (tmp_path / "policies" / "mras-type2-eps1-seed0.json").exists()

    def test_train_q(self, tmp_path, runtime):
        """Test train-q evaluates the greedy policy and writes the table."""
        experiment = ExperimentConfig(campaign=Campaign.TRAIN_Q, m_channels=3, n_users=2, epsilons=[1.0],
                                      qlearn=QConfig(steps=2000), output=tmp_path / "q.csv")
        rows = run_campaign(experiment, runtime)
        assert len(rows) == 1
        assert rows[0].scheme == "qlearn"
        assert len(rows[0].extra["greedy_actions"]) == 3
        frame = pd.read_csv(tmp_path / "qtables" / "qlearn-type2-eps1-seed0.csv")
        assert len(frame) > 0

    def test_hetero(self, tmp_path, runtime):
        """Test the hetero campaign reports every hetero scheme."""
        tiny = MrasConfig(num_candidates=10, max_iterations=2)
        hetero_tiny = hetero_mras_config(num_candidates=10, max_iterations=2)
        experiment = ExperimentConfig(campaign=Campaign.HETERO, n_users=2, epsilons=[1.0],
                                      hetero_environments=[HeteroEnvironment.MIXED_FIRST],
                                      hetero_horizon=100, hetero_search_horizon=50, hetero_replications=2,
                                      mras=tiny, hetero_mras=hetero_tiny, output=tmp_path / "hetero.csv")
        rows = run_campaign(experiment, runtime)
        assert [r.scheme for r in rows] == ["mras-hetero", "mras-homogeneous", "static-best"]
        assert all(r.family == HeteroEnvironment.MIXED_FIRST.value for r in rows)
        assert len(rows[0].extra["w_rec"]) == 10

    def test_validate(self, tmp_path, runtime):
        """Test validation rows carry each check's verdict."""
        experiment = ExperimentConfig(campaign=Campaign.VALIDATE, output=tmp_path / "checks.csv")
        with patch("specrec.campaign.validation_checks", return_value=[check_golden_values]):
            rows = run_campaign(experiment, runtime)
        assert [r.scheme for r in rows] == ["golden-values"]
        assert rows[0].extra["passed"] is True
        assert rows[0].family == "-"

    def test_phases(self, sweep_experiment, runtime):
        """Test policies are solved in a phase before the simulations."""
        phases = CampaignRunner(sweep_experiment, runtime).jobs()
        assert [j.name for j in phases[0]] == ["mras-policy-type2-1"]
        assert len(phases[1]) == 8
