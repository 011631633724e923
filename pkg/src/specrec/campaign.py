"""Campaign runner: expands an experiment into jobs and runs them on a worker pool."""

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import anyio
import anyio.to_thread
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .channel import ChannelParams, MatrixFamily, MatrixType, family_params
from .config import Campaign, Config, ExperimentConfig, OutputFormat
from .database import Database
from .hetero import (
    STATIC_GRID,
    HeteroEnvironment,
    HeteroModel,
    best_static_throughput,
    evaluate_hetero,
    evaluate_policy_vector,
    homogeneous_surrogate,
    mras_solve_hetero,
)
from .mdp import (
    MdpModel,
    Policy,
    TransitionKernel,
    build_chain,
    load_policy,
    policy_throughput,
    relative_value_iteration,
    reverse_cdf_monotonicity_gap,
    save_policy,
    stationary_distribution,
    supermodularity_gap,
    transition_prob_infinite_m,
    transition_prob_mc,
    transition_row,
    unreachable_states,
)
from .mras import solve
from .qlearn import train
from .simulator import Scheme, SimConfig, recommended_channel_load, run_simulation
from .utils import FileUtils, SeedUtils, StatsUtils

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["campaign", "scheme", "family", "epsilon", "seed", "horizon", "throughput"]


class ResultRow(BaseModel):
    """One measured throughput with its provenance."""
    campaign: str
    scheme: str
    family: str
    epsilon: float
    seed: int
    horizon: int
    throughput: float = Field(ge=0.0)
    extra: dict[str, Any] = Field(default_factory=dict)

    def sort_key(self) -> tuple[str, float, int, str]:
        return (self.scheme, self.epsilon, self.seed, self.family)


class CheckResult(BaseModel):
    """Outcome of one validation check."""
    name: str
    passed: bool
    statistic: float
    detail: str
    informational: bool = False


@dataclass
class Job:
    """A unit of work for the pool."""
    name: str
    fn: Callable[[], list[ResultRow]]


def emit_results(rows: list[ResultRow], fmt: OutputFormat | str, path: Path) -> Path:
    """Write rows as CSV (fixed header) or as a JSON array.

    Raises:
        ValueError: no rows
        OSError: the path is not writable
    """
    if not rows:
        raise ValueError("no result rows to emit")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if OutputFormat(fmt) == OutputFormat.CSV:
        frame = pd.DataFrame([r.model_dump(include=set(CSV_COLUMNS)) for r in rows], columns=CSV_COLUMNS)
        frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    else:
        FileUtils.write_json(path, [r.model_dump(mode="json") for r in rows])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def load_results(path: Path) -> list[ResultRow]:
    """Read rows back from a results file written by ``emit_results``.

    CSV files carry no ``extra`` column, so those rows come back without it.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        frame = pd.read_csv(path, dtype={"scheme": str, "family": str, "campaign": str})
        return [ResultRow(**record) for record in frame.to_dict(orient="records")]
    return [ResultRow(**item) for item in json.loads(path.read_text(encoding="utf-8"))]


def gain_table(rows: list[ResultRow], baseline: str) -> pd.DataFrame:
    """Relative gain of each scheme's median throughput over a baseline scheme.

    One line per (family, epsilon, scheme) that has a baseline measurement.
    """
    frame = pd.DataFrame([r.model_dump(include=set(CSV_COLUMNS)) for r in rows], columns=CSV_COLUMNS)
    medians = frame.groupby(["family", "epsilon", "scheme"], as_index=False)["throughput"].median()
    base = medians[medians["scheme"] == baseline][["family", "epsilon", "throughput"]]
    merged = medians.merge(base.rename(columns={"throughput": "baseline"}), on=["family", "epsilon"])
    merged["gain"] = np.where(merged["baseline"] > 0,
                              merged["throughput"] / merged["baseline"].where(merged["baseline"] > 0) - 1.0,
                              np.nan)
    return merged.sort_values(["family", "epsilon", "scheme"]).reset_index(drop=True)


# Validation suite --------------------------------------------------------

def _golden_n2(p_rec: float, p: float, q: float) -> np.ndarray:
    """Hand enumeration of the two-user, infinitely-many-channel transitions."""
    s, z = p / (p + q), q / (p + q)
    a, b, mix = p_rec ** 2, (1 - p_rec) ** 2, 2 * p_rec * (1 - p_rec)
    return np.array([
        [a + b * z ** 2 + mix * z, b * 2 * p * q / (p + q) ** 2 + mix * s, b * s ** 2],
        [a * q + b * z ** 2 + mix * q ** 2 / (p + q),
         a * (1 - q) + b * 2 * p * q / (p + q) ** 2 + mix * ((1 - q) * q + p * q) / (p + q),
         b * s ** 2 + mix * (1 - q) * p / (p + q)],
        [a * (q + q ** 2) / 2 + b * z ** 2 + mix * q ** 2 / (p + q),
         a * (1 - q + 2 * q * (1 - q)) / 2 + b * 2 * p * q / (p + q) ** 2
         + mix * ((1 - q) * q + p * q) / (p + q),
         a * (1 - q) ** 2 / 2 + b * s ** 2 + mix * (1 - q) * p / (p + q)],
    ])


def check_golden_values() -> CheckResult:
    grid = (0.2, 0.5, 0.8)
    worst = 0.0
    for p_rec in grid:
        for p in grid:
            for q in grid:
                expected = _golden_n2(p_rec, p, q)
                got = np.array([[transition_prob_infinite_m(2, r, r2, p_rec, p, q) for r2 in range(3)]
                                for r in range(3)])
                worst = max(worst, float(np.max(np.abs(got - expected))))
    return CheckResult(name="golden-values", passed=worst <= 1e-12, statistic=worst,
                       detail="two-user enumerations, max abs error")


def _random_model(rng: np.random.Generator, max_m: int = 20, max_n: int = 6) -> MdpModel:
    return MdpModel(
        m_channels=int(rng.integers(1, max_m + 1)),
        n_users=int(rng.integers(1, max_n + 1)),
        channel=ChannelParams(p=float(rng.uniform(0.05, 0.95)), q=float(rng.uniform(0.05, 0.95))),
    )


def check_oracle_triangle(configs: int, samples: int, seed: int, k: float = 4.0) -> CheckResult:
    """Exact rows against the Monte-Carlo process oracle on random configurations.

    ``k`` standard errors per entry; the default keeps the family-wise false
    alarm rate low across all compared entries.
    """
    rng = SeedUtils.generator(seed, 1)
    worst_sum, worst_z = 0.0, 0.0
    for _ in range(configs):
        model = _random_model(rng)
        r = int(rng.integers(0, model.n_states))
        p_rec = float(rng.uniform(0.05, 0.95))
        exact = transition_row(model, r, p_rec)
        mc = transition_prob_mc(model, r, p_rec, samples, rng)
        worst_sum = max(worst_sum, abs(float(exact.sum()) - 1.0))
        z = np.abs(mc - exact) / StatsUtils.proportion_se(exact, samples)
        worst_z = max(worst_z, float(z.max()))
    passed = worst_sum <= 1e-12 and worst_z <= k
    return CheckResult(name="oracle-triangle", passed=passed, statistic=worst_z,
                       detail=f"max |z| over entries (limit {k:g}); max row-sum error {worst_sum:.1e}")


def check_irreducibility(count: int, seed: int) -> CheckResult:
    rng = SeedUtils.generator(seed, 2)
    worst_residual = 0.0
    reducible = 0
    for _ in range(count):
        model = _random_model(rng)
        policy = Policy(p_rec=rng.uniform(0.01, 0.99, model.n_states).tolist())
        chain = build_chain(model, policy)
        if unreachable_states(chain):
            reducible += 1
            continue
        pi = stationary_distribution(chain)
        worst_residual = max(worst_residual, float(np.max(np.abs(pi @ chain.rows - pi))))
    return CheckResult(name="irreducibility", passed=reducible == 0 and worst_residual <= 1e-10,
                       statistic=worst_residual,
                       detail=f"{reducible} reducible chains of {count}; max stationary residual")


def check_recommended_load(slots: int, seed: int) -> CheckResult:
    cfg = SimConfig(m_channels=10, n_users=5, horizon_t=slots, scheme=Scheme.heuristic(), seed=seed,
                    channels=family_params(MatrixFamily(family=MatrixType.TYPE2, epsilon=1.0)),
                    record_trace=True)
    mean, se = recommended_channel_load(run_simulation(cfg).trace or [])
    return CheckResult(name="recommended-load", passed=StatsUtils.within_se(mean, 1.0, se),
                       statistic=mean, detail=f"users per recommended channel (se {se:.2e})")


def check_saturation(samples: int, seed: int) -> CheckResult:
    rng = SeedUtils.generator(seed, 3)
    channel = ChannelParams(p=0.3, q=0.4)
    model = MdpModel(m_channels=4, n_users=500, channel=channel)
    r = 2
    low = transition_prob_mc(model, r, 0.3, samples, rng)
    high = transition_prob_mc(model, r, 0.7, samples, rng)
    exact = np.array([TransitionKernel.saturation(4, channel.p, channel.q).tensor[r, 0, k] for k in range(5)])
    se = StatsUtils.proportion_se(exact, samples)
    passed = (StatsUtils.within_se(low, high, np.sqrt(2) * se)
              and StatsUtils.within_se(low, exact, se) and StatsUtils.within_se(high, exact, se))
    return CheckResult(name="saturation", passed=passed, statistic=float(np.max(np.abs(low - high))),
                       detail="N=500, M=4 rows at p_rec 0.3 and 0.7 against the saturated law")


def _structure_kernels() -> list[TransitionKernel]:
    values = (0.2, 0.5, 0.8)
    return [TransitionKernel.infinite_m(n, p, q) for n in range(1, 7) for p in values for q in values]


def check_reverse_cdf_monotonicity() -> CheckResult:
    grid = np.linspace(0.05, 0.95, 19)
    gap = min(reverse_cdf_monotonicity_gap(k, grid) for k in _structure_kernels())
    return CheckResult(name="reverse-cdf-monotonicity", passed=gap >= -1e-9, statistic=gap,
                       detail="most negative increment in R")


def check_supermodularity() -> CheckResult:
    grid = np.linspace(0.05, 0.95, 19)
    gap = min(supermodularity_gap(k, grid) for k in _structure_kernels())
    return CheckResult(name="supermodularity", passed=True, statistic=gap, informational=True,
                       detail="most negative cross-difference (reported only)")


def validation_checks(experiment: ExperimentConfig) -> list[Callable[[], CheckResult]]:
    seed = experiment.seeds[0]
    return [
        lambda: check_oracle_triangle(experiment.validation_configs, experiment.validation_samples, seed),
        check_golden_values,
        lambda: check_irreducibility(100, seed),
        lambda: check_recommended_load(experiment.validation_slots, seed),
        lambda: check_saturation(max(100, experiment.validation_samples // 10), seed),
        check_reverse_cdf_monotonicity,
        check_supermodularity,
    ]


def run_validation_suite(experiment: ExperimentConfig, config: Config | None = None) -> list[CheckResult]:
    """Run every validation check on the job pool, in a fixed order."""
    config = config or Config()
    checks = validation_checks(experiment)
    results: list[CheckResult | None] = [None] * len(checks)

    async def run_all() -> None:
        limiter = anyio.CapacityLimiter(config.threads)
        async with anyio.create_task_group() as tg:
            for i, check in enumerate(checks):
                tg.start_soon(_store, i, check, limiter)

    async def _store(i: int, check: Callable[[], CheckResult], limiter: anyio.CapacityLimiter) -> None:
        try:
            results[i] = await anyio.to_thread.run_sync(check, limiter=limiter)
        except Exception as e:
            errors.append(e)

    errors: list[Exception] = []
    anyio.run(run_all)
    if errors:
        raise errors[0]
    done = [r for r in results if r is not None]
    for r in done:
        level = logging.INFO if r.passed else logging.ERROR
        logger.log(level, f"check {r.name}: {'pass' if r.passed else 'FAIL'} ({r.statistic:.3e})")
    return done


# Campaign runner ---------------------------------------------------------

class CampaignRunner:
    """Runs one experiment campaign on a bounded worker pool."""

    def __init__(self, experiment: ExperimentConfig, config: Config | None = None,
                 database: Database | None = None):
        """Initialize the runner.

        Args:
            experiment: Campaign definition
            config: Runtime settings (pool size, ledger URL)
            database: Results ledger; built from ``config.database_url`` when omitted
        """
        self.experiment = experiment
        self.config = config or Config()
        if database is None and self.config.database_url:
            database = Database(self.config.database_url)
        self.database = database
        self.output_dir = Path(experiment.output).parent
        self._policies: dict[tuple[str, str, float], Policy] = {}

    # Models and policies

    def model_for(self, family: MatrixType, epsilon: float) -> MdpModel:
        exp = self.experiment
        channel = family_params(MatrixFamily(family=family, epsilon=epsilon), rate_b=exp.rate_b)
        return MdpModel(m_channels=exp.m_channels, n_users=exp.n_users, channel=channel,
                        zero_state=exp.zero_state)

    def policy_path(self, kind: str, family: MatrixType, epsilon: float) -> Path:
        return self.output_dir / "policies" / f"{kind}-{family.value}-eps{epsilon:g}.json"

    def _solve_policy(self, kind: str, fi: int, family: MatrixType, ei: int, epsilon: float) -> Policy:
        """MRAS or Q-learning policy for (family, epsilon), cached in the output directory."""
        path = self.policy_path(kind, family, epsilon)
        model = self.model_for(family, epsilon)
        if path.exists():
            cached_model, policy = load_policy(path)
            if (cached_model.m_channels, cached_model.n_users, cached_model.channel) == (
                    model.m_channels, model.n_users, model.channel):
                logger.info(f"Using cached {kind} policy {path}")
                return policy
        rng = SeedUtils.generator(self.experiment.seeds[0], fi, ei, 0 if kind == "mras" else 1)
        if kind == "mras":
            policy, trace = solve(model, self.experiment.mras, rng, self.experiment.formula)
            trace.to_csv(self.output_dir / "traces" / f"mras-{family.value}-eps{epsilon:g}.csv")
        else:
            _, policy = train(model, self.experiment.qlearn, rng)
        save_policy(model, policy, path)
        return policy

    def _policy_jobs(self) -> list[Job]:
        exp = self.experiment
        kinds = [k for k in ("mras", "qlearn") if k in exp.schemes]
        jobs = []
        for kind in kinds:
            for fi, family in enumerate(exp.families):
                for ei, eps in enumerate(exp.epsilons):
                    def job(kind: str = kind, fi: int = fi, family: MatrixType = family,
                            ei: int = ei, eps: float = eps) -> list[ResultRow]:
                        self._policies[(kind, family.value, eps)] = self._solve_policy(kind, fi, family, ei, eps)
                        return []
                    jobs.append(Job(name=f"{kind}-policy-{family.value}-{eps:g}", fn=job))
        return jobs

    def _scheme(self, name: str, family: MatrixType, epsilon: float) -> Scheme:
        if name == "random":
            return Scheme.random()
        if name == "static":
            return Scheme.static(self.experiment.static_p_rec)
        if name == "heuristic":
            return Scheme.heuristic()
        return Scheme.policy_driven(self._policies[(name, family.value, epsilon)].p_rec)

    # Job builders

    def _simulation_jobs(self) -> list[Job]:
        exp = self.experiment
        jobs = []
        for scheme_name in exp.schemes:
            for family in exp.families:
                for eps in exp.epsilons:
                    for seed in exp.seeds:
                        def job(scheme_name: str = scheme_name, family: MatrixType = family,
                                eps: float = eps, seed: int = seed) -> list[ResultRow]:
                            model = self.model_for(family, eps)
                            scheme = self._scheme(scheme_name, family, eps)
                            cfg = SimConfig(m_channels=exp.m_channels, n_users=exp.n_users,
                                            horizon_t=exp.horizon, buffer_w=exp.buffer_w, scheme=scheme,
                                            contention=exp.contention, backoff_slots=exp.backoff_slots,
                                            seed=seed, channels=model.channel)
                            result = run_simulation(cfg)
                            extra: dict[str, Any] = {}
                            if scheme.p_rec is not None:
                                extra["p_rec"] = scheme.p_rec
                            if scheme.policy is not None:
                                extra["policy"] = scheme.policy
                            return [ResultRow(campaign=exp.campaign.value, scheme=scheme_name,
                                              family=family.value, epsilon=eps, seed=seed,
                                              horizon=exp.horizon, throughput=result.throughput,
                                              extra=extra)]
                        jobs.append(Job(name=f"sim-{scheme_name}-{family.value}-{eps:g}-{seed}", fn=job))
        return jobs

    def _solve_jobs(self) -> list[Job]:
        exp = self.experiment
        grid = np.round(np.arange(exp.dp_grid_step, 1.0 - 1e-9, exp.dp_grid_step), 10)
        jobs = []
        for fi, family in enumerate(exp.families):
            for ei, eps in enumerate(exp.epsilons):
                for seed in exp.seeds:
                    def job(fi: int = fi, family: MatrixType = family, ei: int = ei, eps: float = eps,
                            seed: int = seed) -> list[ResultRow]:
                        model = self.model_for(family, eps)
                        policy, trace = solve(model, exp.mras, SeedUtils.generator(seed, fi, ei),
                                              exp.formula)
                        trace.to_csv(self.output_dir / "traces"
                                     / f"mras-{family.value}-eps{eps:g}-seed{seed}.csv")
                        save_policy(model, policy, self.output_dir / "policies"
                                    / f"mras-{family.value}-eps{eps:g}-seed{seed}.json")
                        rvi_policy, gain = relative_value_iteration(model, grid, formula=exp.formula)
                        common = {"campaign": exp.campaign.value, "family": family.value,
                                  "epsilon": eps, "seed": seed, "horizon": 0}
                        return [
                            ResultRow(scheme="mras", throughput=trace.final_phi, **common,
                                      extra={"policy": policy.p_rec, "iterations": trace.iterations,
                                             "converged": trace.converged}),
                            ResultRow(scheme="rvi", throughput=gain, **common,
                                      extra={"policy": rvi_policy.p_rec}),
                        ]
                    jobs.append(Job(name=f"solve-{family.value}-{eps:g}-{seed}", fn=job))
        return jobs

    def _qlearn_jobs(self) -> list[Job]:
        exp = self.experiment
        jobs = []
        for fi, family in enumerate(exp.families):
            for ei, eps in enumerate(exp.epsilons):
                for seed in exp.seeds:
                    def job(fi: int = fi, family: MatrixType = family, ei: int = ei, eps: float = eps,
                            seed: int = seed) -> list[ResultRow]:
                        model = self.model_for(family, eps)
                        table, policy = train(model, exp.qlearn, SeedUtils.generator(seed, fi, ei, 1))
                        table.to_csv(self.output_dir / "qtables"
                                     / f"qlearn-{family.value}-eps{eps:g}-seed{seed}.csv")
                        return [ResultRow(campaign=exp.campaign.value, scheme="qlearn",
                                          family=family.value, epsilon=eps, seed=seed, horizon=0,
                                          throughput=policy_throughput(model, policy),
                                          extra={"greedy_actions": table.greedy_actions().tolist(),
                                                 **table.metadata})]
                    jobs.append(Job(name=f"qlearn-{family.value}-{eps:g}-{seed}", fn=job))
        return jobs

    def _hetero_jobs(self) -> list[Job]:
        exp = self.experiment
        jobs = []
        for vi, env in enumerate(exp.hetero_environments):
            for ei, eps in enumerate(exp.epsilons):
                for seed in exp.seeds:
                    def job(vi: int = vi, env: HeteroEnvironment = env, ei: int = ei, eps: float = eps,
                            seed: int = seed) -> list[ResultRow]:
                        return self._hetero_rows(vi, env, ei, eps, seed)
                    jobs.append(Job(name=f"hetero-{env.value}-{eps:g}-{seed}", fn=job))
        return jobs

    def _hetero_rows(self, vi: int, env: HeteroEnvironment, ei: int, eps: float,
                     seed: int) -> list[ResultRow]:
        exp = self.experiment
        model = HeteroModel.environment(env, eps, exp.n_users)
        horizon, reps = exp.hetero_horizon, exp.hetero_replications
        rng = SeedUtils.generator(seed, vi, ei)
        rows = []
        for scheme in exp.schemes:
            extra: dict[str, Any] = {}
            if scheme == "static-best":
                p_best, phi = best_static_throughput(model, STATIC_GRID, horizon, seed, reps)
                extra["p_rec"] = p_best
            elif scheme == "mras-homogeneous":
                surrogate = homogeneous_surrogate(model)
                policy, _ = solve(surrogate, exp.mras, rng)
                phi = evaluate_policy_vector(model, policy.p_rec, horizon, seed, reps)
                extra["policy"] = policy.p_rec
            else:
                weights, trace = mras_solve_hetero(model, exp.hetero_mras, exp.hetero_search_horizon,
                                                   rng, reps)
                phi = evaluate_hetero(model, weights, horizon, seed, reps)
                extra.update(w_rec=weights.w_rec, w_unrec=weights.w_unrec,
                             iterations=trace.iterations)
            rows.append(ResultRow(campaign=exp.campaign.value, scheme=scheme, family=env.value,
                                  epsilon=eps, seed=seed, horizon=horizon, throughput=phi,
                                  extra=extra))
        return rows

    def _validation_jobs(self) -> list[Job]:
        exp = self.experiment

        def job() -> list[ResultRow]:
            return [ResultRow(campaign=exp.campaign.value, scheme=c.name, family="-", epsilon=0.0,
                              seed=exp.seeds[0], horizon=0, throughput=0.0,
                              extra=c.model_dump(exclude={"name"}))
                    for c in run_validation_suite(exp, self.config)]
        return [Job(name="validate", fn=job)]

    def jobs(self) -> list[list[Job]]:
        """Jobs grouped in phases; a phase starts when the previous one is done."""
        campaign = self.experiment.campaign
        if campaign in (Campaign.SIMULATE, Campaign.SWEEP):
            return [self._policy_jobs(), self._simulation_jobs()]
        if campaign == Campaign.SOLVE_MDP:
            return [self._solve_jobs()]
        if campaign == Campaign.TRAIN_Q:
            return [self._qlearn_jobs()]
        if campaign == Campaign.HETERO:
            return [self._hetero_jobs()]
        return [self._validation_jobs()]

    # Execution

    async def run_async(self) -> list[ResultRow]:
        limiter = anyio.CapacityLimiter(self.config.threads)
        rows: list[ResultRow] = []
        errors: list[Exception] = []

        async def run_job(job: Job) -> None:
            logger.debug(f"Starting job {job.name}")
            try:
                rows.extend(await anyio.to_thread.run_sync(job.fn, limiter=limiter))
            except Exception as e:
                logger.error(f"Job {job.name} failed: {e}")
                errors.append(e)

        for phase in self.jobs():
            async with anyio.create_task_group() as tg:
                for job in phase:
                    tg.start_soon(run_job, job)
            # re-raise unwrapped
            if errors:
                raise errors[0]
        return sorted(rows, key=ResultRow.sort_key)

    def run(self) -> list[ResultRow]:
        """Run the campaign and record it in the ledger when one is configured."""
        exp = self.experiment
        logger.info(f"Starting {exp.campaign.value} campaign with {self.config.threads} threads")
        run_id = None
        if self.database is not None:
            run_id = self.database.create_run(exp.campaign.value, exp.to_dict()).run_id
        try:
            rows = anyio.run(self.run_async)
        except Exception:
            if run_id is not None:
                self.database.complete_run(run_id, "failed")
            raise
        if run_id is not None:
            self.database.add_rows(run_id, [r.model_dump(mode="json") for r in rows])
            self.database.complete_run(run_id, "completed")
            logger.info(f"Recorded {len(rows)} rows under {run_id}")
        logger.info(f"Finished {exp.campaign.value} campaign: {len(rows)} rows")
        return rows


def run_campaign(experiment: ExperimentConfig, config: Config | None = None,
                 database: Database | None = None) -> list[ResultRow]:
    return CampaignRunner(experiment, config, database).run()
