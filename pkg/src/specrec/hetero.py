"""Recommendation with heterogeneous channels.

Each channel m carries two access weights, one used while it is recommended
and one otherwise; a user picks channel m with probability proportional to
its current weight. Policies are scored by simulation with common random
numbers: replication j of a base seed fixes the channel paths and every
user draw, and all candidates scored against that seed see the same ones.
"""

import logging
from collections.abc import Callable, Sequence
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .channel import ChannelParams, MatrixFamily, MatrixType, family_params, sample_idle_paths
from .errors import ConfigurationError
from .mdp import ACTION_EPS, MdpModel, is_feasible
from .mras import MrasConfig, MrasTrace, run_mras
from .network import (
    Selector,
    advance_lanes,
    branch_probabilities,
    policy_selector,
    start_lanes,
    table_selector,
    weight_selector,
)

logger = logging.getLogger(__name__)

HETERO_RATES: tuple[float, ...] = (0.2, 0.6, 0.8, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 20.0)
STATIC_GRID: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
MAX_FULL_ORACLE_CHANNELS = 4
# Initial spread of the weight searches; keeps whole candidates inside (0, 1) with 2M or M*2^M entries
HETERO_SIGMA_INIT = 0.15


def hetero_mras_config(**overrides: Any) -> MrasConfig:
    """Default search settings for the heterogeneous solvers."""
    return MrasConfig(**{"num_candidates": 100, "sigma_init": HETERO_SIGMA_INIT, **overrides})


class HeteroEnvironment(str, Enum):
    """Channel environments of the heterogeneous campaigns."""
    MIXED_FIRST = "mixed-first"
    MIXED_SECOND = "mixed-second"
    TYPE1 = "type1"
    TYPE2 = "type2"


class HeteroModel(BaseModel):
    """Channels with individual dynamics and rates, shared by N users."""

    channels: list[ChannelParams] = Field(min_length=1)
    n_users: int = Field(ge=1)

    @property
    def m_channels(self) -> int:
        return len(self.channels)

    @property
    def rates(self) -> np.ndarray:
        return np.array([c.rate_b for c in self.channels])

    @classmethod
    def homogeneous(cls, family: MatrixType, epsilon: float, m_channels: int, n_users: int,
                    rates: Sequence[float] | None = None) -> "HeteroModel":
        rates = list(rates) if rates is not None else [1.0] * m_channels
        params = MatrixFamily(family=family, epsilon=epsilon)
        return cls(channels=[family_params(params, rate_b=b) for b in rates], n_users=n_users)

    @classmethod
    def mixed(cls, kind: HeteroEnvironment, epsilon: float, n_users: int = 5,
              rates: Sequence[float] = HETERO_RATES) -> "HeteroModel":
        """First half and second half of the channels on different families.

        ``mixed-first`` puts Type 2 dynamics on the low-rate half and Type 1 on
        the high-rate half; ``mixed-second`` swaps them.
        """
        half = len(rates) // 2
        low, high = ((MatrixType.TYPE2, MatrixType.TYPE1) if kind == HeteroEnvironment.MIXED_FIRST
                     else (MatrixType.TYPE1, MatrixType.TYPE2))
        channels = [
            family_params(MatrixFamily(family=low if i < half else high, epsilon=epsilon), rate_b=b)
            for i, b in enumerate(rates)
        ]
        return cls(channels=channels, n_users=n_users)

    @classmethod
    def environment(cls, env: HeteroEnvironment, epsilon: float, n_users: int = 5,
                    rates: Sequence[float] = HETERO_RATES) -> "HeteroModel":
        if env in (HeteroEnvironment.MIXED_FIRST, HeteroEnvironment.MIXED_SECOND):
            return cls.mixed(env, epsilon, n_users, rates)
        return cls.homogeneous(MatrixType(env.value), epsilon, len(rates), n_users, rates)


class HeteroWeightPolicy(BaseModel):
    """Access weights per channel while recommended (w_rec) and otherwise (w_unrec)."""

    w_rec: list[float] = Field(min_length=1)
    w_unrec: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def validate_weights(self) -> "HeteroWeightPolicy":
        if len(self.w_rec) != len(self.w_unrec):
            raise ValueError(f"w_rec has {len(self.w_rec)} entries, w_unrec {len(self.w_unrec)}")
        for name, ws in (("w_rec", self.w_rec), ("w_unrec", self.w_unrec)):
            for m, w in enumerate(ws):
                if not 0.0 < w < 1.0:
                    raise ValueError(f"{name}[{m}]={w} must lie strictly inside (0, 1)")
        return self

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.w_rec, self.w_unrec])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "HeteroWeightPolicy":
        v = np.clip(np.asarray(v, dtype=float), ACTION_EPS, 1.0 - ACTION_EPS)
        m = len(v) // 2
        return cls(w_rec=v[:m].tolist(), w_unrec=v[m:].tolist())

    @classmethod
    def uniform(cls, m_channels: int, weight: float = 0.5) -> "HeteroWeightPolicy":
        return cls(w_rec=[weight] * m_channels, w_unrec=[weight] * m_channels)


class FullHeteroPolicy(BaseModel):
    """Access probability vector for each of the 2^M recommendation states.

    Row ``s`` belongs to the indicator vector whose bit m (lowest first) is
    I_{m+1}.
    """

    table: list[list[float]]

    @classmethod
    def from_vector(cls, v: np.ndarray, m_channels: int) -> "FullHeteroPolicy":
        rows = np.clip(np.asarray(v, dtype=float), ACTION_EPS, None).reshape(2 ** m_channels, m_channels)
        return cls(table=(rows / rows.sum(axis=1, keepdims=True)).tolist())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=float)


def access_probs(policy: HeteroWeightPolicy, state: Sequence[int] | np.ndarray) -> np.ndarray:
    """P_m = w_{I_m}^m / sum_m' w_{I_m'}^m'."""
    indicators = np.asarray(state, dtype=bool)[None, :]
    return access_probs_batch(np.asarray(policy.w_rec), np.asarray(policy.w_unrec), indicators)[0]


def access_probs_batch(w_rec: np.ndarray, w_unrec: np.ndarray, states: np.ndarray) -> np.ndarray:
    return weight_selector(w_rec, w_unrec)(np.asarray(states, dtype=bool))


# Monte-Carlo evaluation --------------------------------------------------

LaneSelectorFactory = Callable[[int], Selector]


def simulate_lanes(model: HeteroModel, make_selector: LaneSelectorFactory, n_policies: int,
                   horizon: int, seed: int, replications: int) -> np.ndarray:
    """Time-average throughput of ``n_policies`` policies under shared randomness.

    Args:
        model: Channels and users
        make_selector: Builds the selector for ``replications`` lanes per policy,
            lane index = policy * replications + replication
        n_policies: Number of policies simulated side by side
        horizon: Slots per replication
        seed: Base seed of the common random numbers
        replications: Independent replications per policy

    Returns:
        Array of shape (n_policies, replications)
    """
    if horizon < 1:
        raise ConfigurationError(f"horizon={horizon} must be at least 1")
    n, m = model.n_users, model.m_channels
    children = np.random.SeedSequence(seed).spawn(replications)
    init_u, paths, keys, select_u = [], [], [], []
    for child in children:
        rng = np.random.default_rng(child)
        init_u.append(rng.random(n))
        paths.append(sample_idle_paths(model.channels, horizon, rng))
        keys.append(rng.random((horizon, n)))
        select_u.append(rng.random((horizon, n)))
    paths_arr = np.stack(paths, axis=1)      # (T, reps, M)
    keys_arr = np.stack(keys, axis=1)        # (T, reps, N)
    select_arr = np.stack(select_u, axis=1)  # (T, reps, N)

    lanes = n_policies * replications
    selector = make_selector(lanes)
    state = start_lanes(lanes, n, m, selector, np.tile(np.stack(init_u), (n_policies, 1)))
    rates = model.rates
    total = np.zeros(lanes)
    for t in range(horizon):
        outcome = advance_lanes(
            state,
            np.tile(paths_arr[t], (n_policies, 1)),
            rates,
            np.tile(keys_arr[t], (n_policies, 1)),
            np.tile(select_arr[t], (n_policies, 1)),
            selector,
            buffer_w=1,
        )
        total += outcome.throughput
    return (total / horizon).reshape(n_policies, replications)


def hetero_throughput_samples(model: HeteroModel, candidates: np.ndarray, horizon: int,
                              seed: int, replications: int = 10) -> np.ndarray:
    """Per-replication throughput of each weight vector (rows of 2M entries).

    Infeasible rows get -inf in every replication.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    m = model.m_channels
    if candidates.shape[1] != 2 * m:
        raise ConfigurationError(f"weight vectors need {2 * m} entries, got {candidates.shape[1]}")
    out = np.full((candidates.shape[0], replications), -np.inf)
    feasible = is_feasible(candidates)
    if not feasible.any():
        return out
    chosen = candidates[feasible]

    def make_selector(lanes: int) -> Selector:
        w = np.repeat(chosen, replications, axis=0)
        return weight_selector(w[:, :m], w[:, m:])

    out[feasible] = simulate_lanes(model, make_selector, len(chosen), horizon, seed, replications)
    return out


def evaluate_hetero(model: HeteroModel, policy: HeteroWeightPolicy | np.ndarray,
                    horizon: int = 20_000, seed: int = 0, replications: int = 10) -> float:
    """Time-average throughput of a weight policy; -inf for infeasible weights."""
    vector = policy.as_vector() if isinstance(policy, HeteroWeightPolicy) else policy
    return float(hetero_throughput_samples(model, vector, horizon, seed, replications).mean())


def evaluate_static(model: HeteroModel, grid: Sequence[float], horizon: int = 20_000,
                    seed: int = 0, replications: int = 10) -> np.ndarray:
    """Per-replication throughput of static branching probabilities, shape (len(grid), reps)."""
    actions = np.asarray(grid, dtype=float)

    def make_selector(lanes: int) -> Selector:
        p_rec = np.repeat(actions, replications)
        return lambda recommended: branch_probabilities(recommended, p_rec)

    return simulate_lanes(model, make_selector, len(actions), horizon, seed, replications)


def best_static_throughput(model: HeteroModel, grid: Sequence[float] = STATIC_GRID,
                           horizon: int = 20_000, seed: int = 0,
                           replications: int = 10) -> tuple[float, float]:
    """Best constant branching probability on the grid.

    Returns:
        (p_rec, mean throughput)
    """
    means = evaluate_static(model, grid, horizon, seed, replications).mean(axis=1)
    best = int(np.argmax(means))
    return float(grid[best]), float(means[best])


def evaluate_policy_vector(model: HeteroModel, p_rec: Sequence[float], horizon: int = 20_000,
                           seed: int = 0, replications: int = 10) -> float:
    """Throughput of a per-state branching policy run on heterogeneous channels."""
    vector = np.asarray(p_rec, dtype=float)
    samples = simulate_lanes(model, lambda lanes: policy_selector(vector), 1,
                             horizon, seed, replications)
    return float(samples.mean())


def homogeneous_surrogate(model: HeteroModel) -> MdpModel:
    """Homogeneous MDP with the channels' mean dynamics and rate."""
    channel = ChannelParams(
        p=float(np.mean([c.p for c in model.channels])),
        q=float(np.mean([c.q for c in model.channels])),
        rate_b=float(model.rates.mean()),
    )
    return MdpModel(m_channels=model.m_channels, n_users=model.n_users, channel=channel)


def mras_solve_hetero(model: HeteroModel, cfg: MrasConfig | None = None, horizon: int = 20_000,
                      rng: np.random.Generator | None = None,
                      replications: int = 10) -> tuple[HeteroWeightPolicy, MrasTrace]:
    """Search the 2M access weights.

    The evaluation seed is drawn once from ``rng`` so every iteration scores
    its candidates against the same channel realisations.
    A search cut off by ``max_iterations`` returns the best candidate sampled
    when it beats the final mean.
    """
    cfg = cfg or hetero_mras_config()
    rng = rng or np.random.default_rng()
    seed = int(rng.integers(2**32))

    def score(candidates: np.ndarray) -> np.ndarray:
        return hetero_throughput_samples(model, candidates, horizon, seed, replications).mean(axis=1)

    mu, trace = run_mras(score, 2 * model.m_channels, cfg, rng)
    policy = HeteroWeightPolicy.from_vector(mu)
    trace.final_phi = evaluate_hetero(model, policy, horizon, seed, replications)
    if not trace.converged and trace.best_score > trace.final_phi:
        policy = HeteroWeightPolicy.from_vector(trace.best_candidate)
        trace.final_phi = evaluate_hetero(model, policy, horizon, seed, replications)
    logger.info(f"Hetero MRAS on M={model.m_channels} N={model.n_users}: "
                f"phi={trace.final_phi:.4f} after {trace.iterations} iterations")
    return policy, trace


def evaluate_full_hetero(model: HeteroModel, policies: FullHeteroPolicy | np.ndarray,
                         horizon: int = 20_000, seed: int = 0,
                         replications: int = 10) -> np.ndarray:
    """Per-replication throughput of per-state access tables.

    ``policies`` is a single policy or raw candidates with M * 2^M entries per
    row; rows with any entry outside (0, 1) score -inf, the rest are
    normalised per state.
    """
    m = model.m_channels
    if isinstance(policies, FullHeteroPolicy):
        tables = policies.as_array()[None]
        feasible = np.ones(1, dtype=bool)
    else:
        raw = np.atleast_2d(np.asarray(policies, dtype=float))
        feasible = is_feasible(raw)
        tables = raw.reshape(-1, 2 ** m, m)
    out = np.full((len(tables), replications), -np.inf)
    if not feasible.any():
        return out
    chosen = tables[feasible]
    chosen = chosen / chosen.sum(axis=2, keepdims=True)
    out[feasible] = simulate_lanes(
        model, lambda lanes: table_selector(np.repeat(chosen, replications, axis=0)),
        len(chosen), horizon, seed, replications,
    )
    return out


def tiny_full_hetero_oracle(model: HeteroModel, cfg: MrasConfig | None = None,
                            horizon: int = 20_000, rng: np.random.Generator | None = None,
                            replications: int = 10) -> tuple[FullHeteroPolicy, MrasTrace]:
    """Search over all M * 2^M per-state access probabilities.

    Raises:
        ConfigurationError: more than four channels
    """
    m = model.m_channels
    if m > MAX_FULL_ORACLE_CHANNELS:
        raise ConfigurationError(
            f"full heterogeneous oracle supports at most {MAX_FULL_ORACLE_CHANNELS} channels, got {m}"
        )
    cfg = cfg or hetero_mras_config(num_candidates=500)
    rng = rng or np.random.default_rng()
    seed = int(rng.integers(2**32))

    def score(candidates: np.ndarray) -> np.ndarray:
        return evaluate_full_hetero(model, candidates, horizon, seed, replications).mean(axis=1)

    mu, trace = run_mras(score, m * 2 ** m, cfg, rng)
    policy = FullHeteroPolicy.from_vector(mu, m)
    trace.final_phi = float(evaluate_full_hetero(model, policy, horizon, seed, replications).mean())
    if not trace.converged and trace.best_score > trace.final_phi:
        policy = FullHeteroPolicy.from_vector(trace.best_candidate, m)
        trace.final_phi = float(evaluate_full_hetero(model, policy, horizon, seed, replications).mean())
    logger.info(f"Full hetero oracle on M={m}: phi={trace.final_phi:.4f}")
    return policy, trace
