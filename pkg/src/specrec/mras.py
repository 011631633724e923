"""Model reference adaptive search over stationary recommendation policies."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import NoFeasibleCandidateError
from .mdp import (
    MdpModel,
    Policy,
    TransitionFormula,
    TransitionKernel,
    clamp_action,
    policy_throughput,
    policy_throughput_batch,
)

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray], np.ndarray]

TRACE_COLUMNS = ["iteration", "gamma", "best_phi", "max_sigma", "feasible_count"]


class MrasConfig(BaseModel):
    """Search parameters."""
    num_candidates: int = Field(default=500, ge=2)
    elite_ratio: float = Field(default=0.1, gt=0.0, lt=1.0)
    stop_sigma: float = Field(default=1e-3, gt=0.0)
    max_iterations: int = Field(default=200, ge=1)
    mu_init: float = 0.5
    sigma_init: float = Field(default=0.5, gt=0.0)
    sigma_floor: float = Field(default=1e-12, ge=0.0)
    max_resamples: int = Field(default=5, ge=0)


@dataclass
class GaussianPolicyModel:
    """Independent Gaussian per decision variable."""

    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def initial(cls, dim: int, mu: float, sigma: float) -> "GaussianPolicyModel":
        return cls(mu=np.full(dim, mu, dtype=float), sigma=np.full(dim, sigma, dtype=float))

    @property
    def max_sigma(self) -> float:
        return float(np.max(self.sigma))

    @property
    def dim(self) -> int:
        return len(self.mu)


@dataclass
class IterationRecord:
    iteration: int
    gamma: float
    best_phi: float
    max_sigma: float
    feasible_count: int
    mu: list[float]
    sigma: list[float]


@dataclass
class MrasTrace:
    """Per-iteration history of one search."""

    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    final_phi: float = float("-inf")
    # Highest-scoring feasible candidate sampled so far
    best_candidate: np.ndarray | None = None
    best_score: float = float("-inf")

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{c: getattr(r, c) for c in TRACE_COLUMNS} for r in self.records],
                            columns=TRACE_COLUMNS)

    def to_csv(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


class ConvergenceReport(BaseModel):
    """Summary of a finished search."""
    converged: bool
    final_max_sigma: float
    iterations: int
    final_phi: float
    best_phi_series: list[float]


def sample_policies(gm: GaussianPolicyModel, l: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``l`` candidates, one per row; entries may leave the feasible region."""
    return gm.mu + gm.sigma * rng.standard_normal((l, gm.dim))


def elite_index(n: int, rho: float) -> int:
    """1-based position ceil((1 - rho) n) in ascending order."""
    return max(1, math.ceil(round((1.0 - rho) * n, 9)))


def elite_threshold(scores: np.ndarray, rho: float, gamma_prev: float) -> float:
    """Monotone elite threshold from ascending scores.

    Raises:
        NoFeasibleCandidateError: every score is -inf
    """
    scores = np.asarray(scores, dtype=float)
    if not np.isfinite(scores).any():
        raise NoFeasibleCandidateError("no candidate has a finite score")
    return max(float(scores[elite_index(len(scores), rho) - 1]), gamma_prev)


def update_params(candidates: np.ndarray, scores: np.ndarray, k: int,
                  sigma_floor: float = 0.0) -> GaussianPolicyModel:
    """Weighted mean and deviation of elites with weights exp((k - 1) * score).

    Args:
        candidates: Elite candidates, one per row
        scores: Their finite scores
        k: Iteration number, starting at 1
        sigma_floor: Lower bound applied to every deviation

    Returns:
        Updated sampling model
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    log_w = (k - 1) * np.asarray(scores, dtype=float)
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    mu = w @ candidates
    var = w @ (candidates - mu) ** 2
    return GaussianPolicyModel(mu=mu, sigma=np.maximum(np.sqrt(var), sigma_floor))


def run_mras(score_fn: ScoreFn, dim: int, cfg: MrasConfig,
             rng: np.random.Generator) -> tuple[np.ndarray, MrasTrace]:
    """Iterate sample, score, threshold and update until every sigma is below the stop level.

    Args:
        score_fn: Maps an (L, dim) candidate array to L scores, -inf for infeasible rows
        dim: Number of decision variables
        cfg: Search parameters
        rng: Random stream

    Returns:
        Final mean vector and the iteration trace, which also holds the best
        candidate sampled
    """
    gm = GaussianPolicyModel.initial(dim, cfg.mu_init, cfg.sigma_init)
    trace = MrasTrace()
    gamma = float("-inf")

    for k in range(1, cfg.max_iterations + 1):
        for attempt in range(cfg.max_resamples + 1):
            candidates = sample_policies(gm, cfg.num_candidates, rng)
            scores = np.asarray(score_fn(candidates), dtype=float)
            if np.isfinite(scores).any():
                break
            logger.debug(f"Iteration {k}: no feasible candidate, resampling ({attempt + 1})")
        else:
            raise NoFeasibleCandidateError(
                f"iteration {k} produced no feasible candidate after {cfg.max_resamples} resamples"
            )

        order = np.argsort(scores, kind="stable")
        gamma = elite_threshold(scores[order], cfg.elite_ratio, gamma)
        elite = np.isfinite(scores) & (scores >= gamma)
        if elite.any():
            gm = update_params(candidates[elite], scores[elite], k, cfg.sigma_floor)

        top = int(np.argmax(scores))
        if scores[top] > trace.best_score:
            trace.best_score = float(scores[top])
            trace.best_candidate = candidates[top].copy()

        feasible = int(np.isfinite(scores).sum())
        trace.records.append(IterationRecord(
            iteration=k, gamma=gamma, best_phi=float(scores.max()), max_sigma=gm.max_sigma,
            feasible_count=feasible, mu=gm.mu.tolist(), sigma=gm.sigma.tolist(),
        ))
        logger.debug(f"Iteration {k}: gamma={gamma:.6f}, elites={int(elite.sum())}, "
                     f"feasible={feasible}, max sigma={gm.max_sigma:.3e}")

        if gm.max_sigma < cfg.stop_sigma:
            trace.converged = True
            break

    if not trace.converged:
        logger.warning(f"MRAS stopped after {cfg.max_iterations} iterations with "
                       f"max sigma {gm.max_sigma:.3e} >= {cfg.stop_sigma:g}")
    return gm.mu, trace


def solve(model: MdpModel, cfg: MrasConfig | None = None,
          rng: np.random.Generator | None = None,
          formula: TransitionFormula = TransitionFormula.EXACT) -> tuple[Policy, MrasTrace]:
    """Search for the throughput-maximising stationary policy of ``model``.

    Returns the final mean vector once the search converges. A search cut off
    by ``max_iterations`` returns the better of that mean and the best
    candidate it sampled, with ``trace.converged`` left False.
    """
    cfg = cfg or MrasConfig()
    rng = rng or np.random.default_rng()
    kernel = TransitionKernel.build(model, formula)
    rewards = model.rewards

    def score(candidates: np.ndarray) -> np.ndarray:
        return policy_throughput_batch(kernel, rewards, candidates)

    mu, trace = run_mras(score, model.n_states, cfg, rng)
    policy = Policy(p_rec=np.asarray(clamp_action(mu)).tolist())
    trace.final_phi = policy_throughput(model, policy, formula)
    if not trace.converged and trace.best_score > trace.final_phi:
        policy = Policy(p_rec=trace.best_candidate.tolist())
        trace.final_phi = policy_throughput(model, policy, formula)
    logger.info(f"MRAS on {model}: phi={trace.final_phi:.6f} after {trace.iterations} "
                f"iterations (converged={trace.converged})")
    return policy, trace


def convergence_report(trace: MrasTrace, xi: float) -> ConvergenceReport:
    if not trace.records:
        raise ValueError("trace is empty")
    final_sigma = trace.records[-1].max_sigma
    return ConvergenceReport(
        converged=final_sigma < xi,
        final_max_sigma=final_sigma,
        iterations=trace.iterations,
        final_phi=trace.final_phi,
        best_phi_series=[r.best_phi for r in trace.records],
    )
