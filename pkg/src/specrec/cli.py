"""Command-line interface for specrec."""

from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
from pydantic import ValidationError
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .campaign import ResultRow, emit_results, gain_table, load_results, run_campaign
from .channel import MatrixType
from .config import Campaign, Config, ExperimentConfig, OutputFormat, configure_logging, describe_validation_error
from .database import Database
from .errors import SpecrecError

console = Console()


def campaign_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Overrides shared by every campaign subcommand."""
    options = [
        click.option('--epsilon', '-e', 'epsilons', type=float, multiple=True, help='Dynamic factor (repeatable)'),
        click.option('--family', 'families', type=click.Choice([t.value for t in MatrixType]),
                     multiple=True, help='Transition matrix family (repeatable)'),
        click.option('--scheme', '-s', 'schemes', multiple=True, help='Scheme to run (repeatable)'),
        click.option('--seed', 'seeds', type=int, multiple=True, help='Random seed (repeatable)'),
        click.option('--horizon', type=int, help='Simulated slots per run'),
        click.option('--out', '-o', 'output', type=click.Path(dir_okay=False, path_type=Path),
                     help='Results file'),
        click.option('--format', 'fmt', type=click.Choice([f.value for f in OutputFormat]),
                     help='Results format'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Experiment configuration file (JSON)')
@click.option('--db', help='Results ledger URL, e.g. sqlite:///specrec.db')
@click.option('--log-file', type=click.Path(dir_okay=False, path_type=Path), help='Also write logs to this file')
@click.option('--verbose', '-v', is_flag=True, help='Verbose output')
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, db: str | None, log_file: Path | None,
        verbose: bool) -> None:
    """specrec - adaptive channel recommendation for dynamic spectrum access."""
    ctx.ensure_object(dict)
    try:
        runtime = Config(database_url=db, log_level="DEBUG" if verbose else "INFO", log_file=log_file)
    except (ValidationError, SpecrecError) as e:
        console.print(f"[red]Error: {e}[/red]")
        ctx.exit(1)
    configure_logging(runtime.log_level, runtime.log_file)
    ctx.obj['runtime'] = runtime
    ctx.obj['config_path'] = config_path


def _experiment(ctx: click.Context, campaign: Campaign, overrides: dict[str, Any]) -> ExperimentConfig:
    flags = dict(overrides)
    if flags.get('fmt') is not None:
        flags['format'] = flags.pop('fmt')
    else:
        flags.pop('fmt', None)
    try:
        experiment = ExperimentConfig.for_campaign(campaign, ctx.obj['config_path'])
        return experiment.with_overrides(**flags)
    except ValidationError as e:
        console.print("[red]Invalid configuration:[/red]")
        console.print(describe_validation_error(e))
    except SpecrecError as e:
        console.print(f"[red]Error: {e}[/red]")
    ctx.exit(1)


def _execute(ctx: click.Context, experiment: ExperimentConfig) -> list[ResultRow]:
    runtime: Config = ctx.obj['runtime']
    database = Database(runtime.database_url) if runtime.database_url else None
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console
    ) as progress:
        task = progress.add_task(f"Running {experiment.campaign.value} campaign...", total=None)
        try:
            rows = run_campaign(experiment, runtime, database)
        except (SpecrecError, ValidationError) as e:
            progress.update(task, description="Campaign failed")
            console.print(f"[red]Error: {e}[/red]")
            ctx.exit(1)
        progress.update(task, description=f"Campaign finished: {len(rows)} rows")
    try:
        path = emit_results(rows, experiment.format, experiment.output)
    except (OSError, ValueError) as e:
        console.print(f"[red]Error writing results: {e}[/red]")
        ctx.exit(1)
    console.print(f"[green]✓[/green] Results written to [bold]{path}[/bold]")
    return rows


def _results_table(rows: list[ResultRow], title: str) -> Table:
    table = Table(title=title)
    table.add_column("Scheme", style="cyan", no_wrap=True)
    table.add_column("Family", style="green")
    table.add_column("ε", justify="right")
    table.add_column("Seed", justify="right", style="yellow")
    table.add_column("Throughput", justify="right", style="magenta")
    for row in rows:
        table.add_row(row.scheme, row.family, f"{row.epsilon:g}", str(row.seed), f"{row.throughput:.4f}")
    return table


def _gain_summary(rows: list[ResultRow], baseline: str) -> Table | None:
    if not any(r.scheme == baseline for r in rows):
        return None
    frame = gain_table(rows, baseline)
    table = Table(title=f"Median gain over {baseline}")
    table.add_column("Family", style="green")
    table.add_column("ε", justify="right")
    table.add_column("Scheme", style="cyan")
    table.add_column("Throughput", justify="right")
    table.add_column("Gain", justify="right", style="magenta")
    for rec in frame.itertuples(index=False):
        if rec.scheme == baseline:
            continue
        table.add_row(rec.family, f"{rec.epsilon:g}", rec.scheme, f"{rec.throughput:.4f}", f"{rec.gain:+.1%}")
    return table


def _run_and_report(ctx: click.Context, campaign: Campaign, overrides: dict[str, Any],
                    baselines: tuple[str, ...] = ()) -> None:
    experiment = _experiment(ctx, campaign, overrides)
    rows = _execute(ctx, experiment)
    console.print(_results_table(rows, f"{campaign.value} results"))
    for baseline in baselines:
        summary = _gain_summary(rows, baseline)
        if summary is not None:
            console.print(summary)


@cli.command('solve-mdp')
@campaign_options
@click.pass_context
def solve_mdp(ctx: click.Context, **overrides: Any) -> None:
    """Solve the recommendation MDP with MRAS and relative value iteration."""
    _run_and_report(ctx, Campaign.SOLVE_MDP, overrides)


@cli.command('train-q')
@campaign_options
@click.pass_context
def train_q(ctx: click.Context, **overrides: Any) -> None:
    """Train the tabular Q-learning baseline."""
    _run_and_report(ctx, Campaign.TRAIN_Q, overrides)


@cli.command()
@campaign_options
@click.pass_context
def simulate(ctx: click.Context, **overrides: Any) -> None:
    """Simulate access schemes on the slotted network."""
    _run_and_report(ctx, Campaign.SIMULATE, overrides)


@cli.command()
@campaign_options
@click.pass_context
def sweep(ctx: click.Context, **overrides: Any) -> None:
    """Compare schemes over the dynamic-factor grid."""
    _run_and_report(ctx, Campaign.SWEEP, overrides, baselines=("random", "static"))


@cli.command()
@campaign_options
@click.pass_context
def hetero(ctx: click.Context, **overrides: Any) -> None:
    """Compare schemes on heterogeneous channels."""
    _run_and_report(ctx, Campaign.HETERO, overrides, baselines=("static-best",))


@cli.command()
@campaign_options
@click.pass_context
def validate(ctx: click.Context, **overrides: Any) -> None:
    """Run the model validation suite; exits with code 2 on any failed check."""
    experiment = _experiment(ctx, Campaign.VALIDATE, overrides)
    rows = _execute(ctx, experiment)

    table = Table(title="Validation checks")
    table.add_column("Check", style="cyan", no_wrap=True)
    table.add_column("Result")
    table.add_column("Statistic", justify="right")
    table.add_column("Detail", style="blue")
    failed = []
    for row in rows:
        passed = bool(row.extra.get("passed"))
        if row.extra.get("informational"):
            verdict = "[yellow]info[/yellow]"
        elif passed:
            verdict = "[green]pass[/green]"
        else:
            verdict = "[red]FAIL[/red]"
            failed.append(row.scheme)
        table.add_row(row.scheme, verdict, f"{row.extra.get('statistic', 0.0):.3e}", str(row.extra.get("detail", "")))
    console.print(table)

    if failed:
        console.print(f"[red]{len(failed)} check(s) failed: {', '.join(failed)}[/red]")
        ctx.exit(2)
    console.print("[green]✓[/green] All checks passed")


@cli.command()
@click.argument('results', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--baseline', '-b', default='static', show_default=True, help='Scheme to compare against')
@click.pass_context
def report(ctx: click.Context, results: Path, baseline: str) -> None:
    """Summarise a results file as median gains over a baseline scheme."""
    try:
        rows = load_results(results)
    except (OSError, ValueError, ValidationError) as e:
        console.print(f"[red]Error reading {results}: {e}[/red]")
        ctx.exit(1)
    summary = _gain_summary(rows, baseline)
    if summary is None:
        console.print(f"[red]Error: no rows for baseline scheme {baseline!r}[/red]")
        ctx.exit(1)
    console.print(summary)


@cli.command()
@click.option('--campaign', type=click.Choice([c.value for c in Campaign]), help='Only runs of this campaign')
@click.option('--run-id', help='Show the rows of one run')
@click.pass_context
def runs(ctx: click.Context, campaign: str | None, run_id: str | None) -> None:
    """List campaign runs recorded in the results ledger."""
    runtime: Config = ctx.obj['runtime']
    if not runtime.database_url:
        console.print("[red]Error: no results ledger, pass --db[/red]")
        ctx.exit(1)
    database = Database(runtime.database_url)

    if run_id:
        run = database.get_run(run_id)
        if run is None:
            console.print(f"[red]Error: unknown run {run_id}[/red]")
            ctx.exit(1)
        rows = [ResultRow(campaign=r.campaign, scheme=r.scheme, family=r.family, epsilon=r.epsilon,
                          seed=r.seed, horizon=r.horizon, throughput=r.throughput)
                for r in database.list_rows(run_id)]
        console.print(_results_table(rows, f"{run.run_id} ({run.campaign}, {run.status})"))
        return

    table = Table(title="Campaign runs")
    table.add_column("Run", style="cyan", no_wrap=True)
    table.add_column("Campaign", style="green")
    table.add_column("Status")
    table.add_column("Started (UTC)", style="blue")
    for run in database.list_runs(campaign):
        table.add_row(run.run_id, run.campaign, run.status, f"{run.created_at:%Y-%m-%d %H:%M}")
    console.print(table)


def main(argv: list[str] | None = None) -> int:
    """Console entry point; returns the process exit code."""
    try:
        result = cli.main(args=argv, prog_name="specrec", standalone_mode=False)
    except click.exceptions.Abort:
        console.print("[red]Aborted[/red]")
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    raise SystemExit(main())
