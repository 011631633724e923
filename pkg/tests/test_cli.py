"""Tests for the command-line interface."""

from unittest.mock import patch

import pytest
from click.testing import CliRunner

from specrec.campaign import ResultRow, emit_results
from specrec.cli import cli, main
from specrec.database import Database


def make_row(scheme, throughput, **extra):
    return ResultRow(campaign="sweep", scheme=scheme, family="type2", epsilon=1.0, seed=0,
                     horizon=100, throughput=throughput, extra=extra)


@pytest.fixture
def runner():
    """Click runner."""
    return CliRunner()


@pytest.fixture(autouse=True)
def quiet_logging():
    """Keep the package logger untouched."""
    with patch("specrec.cli.configure_logging") as configure:
        yield configure


class TestCampaignCommands:
    """Test cases for campaign subcommands."""

    def test_sweep_writes_results(self, runner, tmp_path):
        """Test a sweep writes its results and reports gains."""
        out = tmp_path / "sweep.csv"
        rows = [make_row("random", 1.0), make_row("mras", 1.5)]
        with patch("specrec.cli.run_campaign", return_value=rows) as run:
            result = runner.invoke(cli, ["sweep", "-e", "2", "--seed", "3", "-o", str(out)])
        assert result.exit_code == 0, result.output
        experiment = run.call_args[0][0]
        assert experiment.epsilons == [2.0]
        assert experiment.seeds == [3]
        assert out.read_text().splitlines()[0].startswith("campaign,scheme")
        assert "Median gain over random" in result.output

    def test_json_format(self, runner, tmp_path):
        """Test --format json."""
        out = tmp_path / "r.json"
        with patch("specrec.cli.run_campaign", return_value=[make_row("random", 1.0)]):
            result = runner.invoke(cli, ["simulate", "--format", "json", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert out.read_text().lstrip().startswith("[")

    def test_config_file(self, runner, tmp_path):
        """Test the experiment file is read and flags override it."""
        config = tmp_path / "exp.json"
        config.write_text('{"n_users": 3, "seeds": [4, 5]}')
        with patch("specrec.cli.run_campaign", return_value=[make_row("random", 1.0)]) as run:
            result = runner.invoke(cli, ["-c", str(config), "simulate", "--seed", "9",
                                         "-o", str(tmp_path / "r.csv")])
        assert result.exit_code == 0, result.output
        experiment = run.call_args[0][0]
        assert experiment.n_users == 3
        assert experiment.seeds == [9]

    def test_invalid_epsilon(self, runner, tmp_path):
        """Test an out-of-range epsilon exits with code 1 before running."""
        with patch("specrec.cli.run_campaign") as run:
            result = runner.invoke(cli, ["sweep", "-e", "500", "-o", str(tmp_path / "r.csv")])
        assert result.exit_code == 1
        assert "epsilons" in result.output
        run.assert_not_called()

    def test_unknown_scheme(self, runner, tmp_path):
        """Test an unknown scheme exits with code 1."""
        result = runner.invoke(cli, ["hetero", "-s", "random", "-o", str(tmp_path / "r.csv")])
        assert result.exit_code == 1

    def test_log_file_option(self, runner, tmp_path, quiet_logging):
        """Test --log-file reaches the logging setup."""
        log_file = tmp_path / "logs" / "run.log"
        with patch("specrec.cli.run_campaign", return_value=[make_row("random", 1.0)]):
            result = runner.invoke(cli, ["--log-file", str(log_file), "-v", "simulate",
                                         "-o", str(tmp_path / "r.csv")])
        assert result.exit_code == 0, result.output
        quiet_logging.assert_called_once_with("DEBUG", log_file)


class TestReportCommand:
    """Test cases for the report subcommand."""

    def test_gain_summary(self, runner, tmp_path):
        """Test a saved results file is summarised against the baseline."""
        path = emit_results([make_row("random", 1.0), make_row("mras", 1.5)], "csv", tmp_path / "r.csv")
        result = runner.invoke(cli, ["report", str(path), "-b", "random"])
        assert result.exit_code == 0, result.output
        assert "Median gain over random" in result.output
        assert "+50.0%" in result.output

    def test_missing_baseline(self, runner, tmp_path):
        """Test a baseline absent from the file exits with code 1."""
        path = emit_results([make_row("random", 1.0)], "json", tmp_path / "r.json")
        result = runner.invoke(cli, ["report", str(path), "-b", "static"])
        assert result.exit_code == 1

    def test_unreadable_file(self, runner, tmp_path):
        """Test a malformed results file exits with code 1."""
        path = tmp_path / "r.json"
        path.write_text("{oops")
        result = runner.invoke(cli, ["report", str(path)])
        assert result.exit_code == 1


class TestRunsCommand:
    """Test cases for the runs subcommand."""

    @pytest.fixture
    def ledger(self, tmp_path):
        """Ledger holding one finished sweep run with two rows."""
        url = f"sqlite:///{tmp_path / 'ledger.db'}"
        database = Database(url)
        run = database.create_run("sweep")
        database.add_rows(run.run_id, [make_row("random", 1.0).model_dump(), make_row("mras", 1.5).model_dump()])
        database.complete_run(run.run_id)
        return url, run.run_id

    def test_needs_ledger(self, runner):
        """Test listing runs without --db exits with code 1."""
        result = runner.invoke(cli, ["runs"])
        assert result.exit_code == 1
        assert "--db" in result.output

    def test_lists_runs(self, runner, ledger):
        """Test recorded runs are listed."""
        url, run_id = ledger
        result = runner.invoke(cli, ["--db", url, "runs"])
        assert result.exit_code == 0, result.output
        assert run_id in result.output
        assert "completed" in result.output

    def test_campaign_filter(self, runner, ledger):
        """Test runs of other campaigns are hidden."""
        url, run_id = ledger
        result = runner.invoke(cli, ["--db", url, "runs", "--campaign", "hetero"])
        assert result.exit_code == 0, result.output
        assert run_id not in result.output

    def test_run_rows(self, runner, ledger):
        """Test --run-id shows the rows of that run."""
        url, run_id = ledger
        result = runner.invoke(cli, ["--db", url, "runs", "--run-id", run_id])
        assert result.exit_code == 0, result.output
        assert "random" in result.output
        assert "1.5000" in result.output

    def test_unknown_run(self, runner, ledger):
        """Test an unknown run id exits with code 1."""
        url, _ = ledger
        result = runner.invoke(cli, ["--db", url, "runs", "--run-id", "run-missing"])
        assert result.exit_code == 1


class TestValidateCommand:
    """Test cases for the validate subcommand."""

    def test_all_pass(self, runner, tmp_path):
        """Test passing checks exit with code 0."""
        rows = [make_row("golden-values", 0.0, passed=True, statistic=0.0, detail="ok"),
                make_row("supermodularity", 0.0, passed=True, statistic=-0.1, informational=True)]
        with patch("specrec.cli.run_campaign", return_value=rows):
            result = runner.invoke(cli, ["validate", "-o", str(tmp_path / "v.csv")])
        assert result.exit_code == 0, result.output

    def test_failure_exit_code(self, runner, tmp_path):
        """Test a failed check exits with code 2."""
        rows = [make_row("oracle-triangle", 0.0, passed=False, statistic=7.5, detail="max |z|")]
        with patch("specrec.cli.run_campaign", return_value=rows):
            result = runner.invoke(cli, ["validate", "-o", str(tmp_path / "v.csv")])
        assert result.exit_code == 2
        assert "oracle-triangle" in result.output


class TestMain:
    """Test cases for the console entry point."""

    def test_help(self):
        """Test --help returns 0."""
        assert main(["--help"]) == 0

    def test_unknown_command(self):
        """Test a usage error returns 1."""
        assert main(["bogus"]) == 1

    def test_validation_failure(self, tmp_path):
        """Test the entry point propagates the validation exit code."""
        rows = [make_row("saturation", 0.0, passed=False, statistic=1.0)]
        with patch("specrec.cli.run_campaign", return_value=rows):
            assert main(["validate", "-o", str(tmp_path / "v.csv")]) == 2
