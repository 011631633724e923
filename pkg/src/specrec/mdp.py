"""Adaptive channel recommendation MDP.

The state R is the number of distinct recommended channels at the end of a
slot, the action P_rec is the probability that a user picks its next channel
from the recommended set, and the reward of landing in R' is R' * B.

Every transition law used here factorises as

    P[R, R'](P_rec) = sum_{n_r} Binom(N, n_r; P_rec) * D[R, n_r, R']

where D does not depend on the action. ``TransitionKernel`` stores D once per
model so that rows, whole chains and batches of chains are a single
contraction with a binomial weight vector.
"""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import comb, gammaln
from scipy.stats import binom

from .channel import ChannelParams
from .errors import ChainConsistencyError, ConvergenceError, DomainError, ReducibleChainError
from .utils import StatsUtils

logger = logging.getLogger(__name__)

ACTION_EPS = 1e-6
EXACT_SUM_TOL = 1e-12
COMPOSITION_SUM_TOL = 1e-9
CHAIN_SUM_TOL = 1e-9
RESIDUAL_TOL = 1e-10


class ZeroStateSemantics(str, Enum):
    """Behaviour of users whose branch holds no channels (R=0 or R=M)."""
    IDLE_BRANCH = "idle-branch"
    RANDOM_ACCESS = "random-access"


class TransitionFormula(str, Enum):
    """Which occupancy law drives the transition probabilities."""
    COMPOSITION = "composition"
    EXACT = "exact"


class MdpModel(BaseModel):
    """Homogeneous recommendation MDP with M channels and N users."""

    model_config = ConfigDict(frozen=True)

    m_channels: int = Field(ge=1)
    n_users: int = Field(ge=1)
    channel: ChannelParams
    zero_state: ZeroStateSemantics = ZeroStateSemantics.IDLE_BRANCH

    @property
    def n_states(self) -> int:
        return min(self.m_channels, self.n_users) + 1

    @property
    def rewards(self) -> np.ndarray:
        """Per-state rewards U_R = R * B."""
        return np.arange(self.n_states, dtype=float) * self.channel.rate_b

    def __str__(self) -> str:
        c = self.channel
        return f"MdpModel(M={self.m_channels}, N={self.n_users}, p={c.p:g}, q={c.q:g}, B={c.rate_b:g})"


class Policy(BaseModel):
    """Stationary policy: branching probability per state, indexed by R ascending."""

    p_rec: list[float] = Field(min_length=1)

    @field_validator("p_rec")
    @classmethod
    def validate_interior(cls, v: list[float]) -> list[float]:
        for r, action in enumerate(v):
            if not 0.0 < action < 1.0:
                raise ValueError(f"p_rec[{r}]={action} must lie strictly inside (0, 1)")
        return v

    @classmethod
    def constant(cls, model: MdpModel, p_rec: float) -> "Policy":
        return cls(p_rec=[p_rec] * model.n_states)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p_rec, dtype=float)

    def __len__(self) -> int:
        return len(self.p_rec)


def heuristic_branching(r: int, n_users: int) -> float:
    """Branching probability that puts one expected user on each recommended channel."""
    return r / n_users


def clamp_action(p_rec: float | np.ndarray) -> float | np.ndarray:
    """Clamp an action into the open action space."""
    return np.clip(p_rec, ACTION_EPS, 1.0 - ACTION_EPS)


def heuristic_policy(model: MdpModel) -> Policy:
    """Heuristic adaptive scheme expressed as an MDP policy."""
    return Policy(p_rec=[float(clamp_action(heuristic_branching(r, model.n_users)))
                         for r in range(model.n_states)])


def save_policy(model: MdpModel, policy: Policy, path: Path) -> None:
    """Write a policy together with the model it was solved for."""
    c = model.channel
    data = {"m": model.m_channels, "n": model.n_users, "p": c.p, "q": c.q,
            "b": c.rate_b, "p_rec": list(policy.p_rec)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def load_policy(path: Path) -> tuple[MdpModel, Policy]:
    """Read a policy file written by ``save_policy``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    model = MdpModel(m_channels=data["m"], n_users=data["n"],
                     channel=ChannelParams(p=data["p"], q=data["q"], rate_b=data["b"]))
    return model, Policy(p_rec=data["p_rec"])


def _check_action(p_rec: float, allow_boundary: bool = False) -> None:
    ok = 0.0 <= p_rec <= 1.0 if allow_boundary else 0.0 < p_rec < 1.0
    if not ok:
        interval = "[0, 1]" if allow_boundary else "(0, 1)"
        raise DomainError(f"p_rec={p_rec} outside the action space {interval}")


def _check_state(r: int, n_states: int) -> None:
    if not 0 <= r < n_states:
        raise DomainError(f"state R={r} outside 0..{n_states - 1}")


# Occupancy laws ---------------------------------------------------------

@lru_cache(maxsize=4096)
def _surjections(n: int, k: int) -> int:
    """Number of maps from n labelled users onto exactly k labelled channels."""
    return sum((-1) ** j * comb(k, j, exact=True) * (k - j) ** n for j in range(k + 1))


def _occupancy_exact(n: int, c: int) -> np.ndarray:
    """P(n users spread uniformly over c channels occupy exactly k channels), k=0..min(n,c)."""
    if n == 0:
        return np.ones(1)
    total = c ** n
    return np.array([comb(c, k, exact=True) * _surjections(n, k) / total
                     for k in range(min(n, c) + 1)])


def _occupancy_composition(n: int, c: int) -> np.ndarray:
    """Occupancy term of the composition-count closed form: c!/(c-k)! * C(n-1, k-1) * c^-n.

    Uses C(n-1, -1) = 1 iff n = 0.
    """
    if n == 0:
        return np.ones(1)
    out = np.zeros(min(n, c) + 1)
    for k in range(1, min(n, c) + 1):
        log_term = (gammaln(c + 1) - gammaln(c - k + 1)
                    + gammaln(n) - gammaln(k) - gammaln(n - k + 1)
                    - n * np.log(c))
        out[k] = np.exp(log_term)
    return out


@lru_cache(maxsize=4096)
def _side_successes(n: int, c: int, success: float, formula: TransitionFormula) -> np.ndarray:
    """Distribution of successful channels on one side of the branch.

    ``n`` users choose uniformly among ``c`` channels, each occupied channel
    is idle (and so yields one success) with probability ``success``.
    """
    if n == 0 or c == 0:
        return np.ones(1)
    occ = _occupancy_exact(n, c) if formula == TransitionFormula.EXACT else _occupancy_composition(n, c)
    m = np.arange(len(occ))
    dist = np.zeros(len(occ))
    for k, weight in enumerate(occ):
        if weight:
            dist += weight * binom.pmf(m, k, success)
    dist.setflags(write=False)
    return dist


def _branches(m: int, n: int, r: int, n_r: int,
              zero_state: ZeroStateSemantics) -> tuple[tuple[int, int], tuple[int, int]]:
    """(users, channels) on the recommended and unrecommended side given n_r branch picks."""
    n_u = n - n_r
    if r == 0:
        if zero_state == ZeroStateSemantics.RANDOM_ACCESS:
            return (0, 0), (n, m)
        return (0, 0), (n_u, m)
    if r == m:
        if zero_state == ZeroStateSemantics.RANDOM_ACCESS:
            return (n, m), (0, 0)
        return (n_r, m), (0, 0)
    return (n_r, r), (n_u, m - r)


def _pad(dist: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    k = min(size, len(dist))
    out[:k] = dist[:k]
    return out


# Transition kernel -------------------------------------------------------

@dataclass(frozen=True)
class TransitionKernel:
    """Action-independent decomposition of a transition law.

    ``tensor[R, n_r, R']`` is the probability of moving to R' when n_r of the
    ``n_users`` users pick the recommended branch. Saturation kernels carry a
    single branching slot (``n_users == 0``) since they ignore the action.
    """

    tensor: np.ndarray
    n_users: int
    allow_boundary: bool = False

    @property
    def n_states(self) -> int:
        return self.tensor.shape[0]

    def weights(self, p_rec: np.ndarray | float) -> np.ndarray:
        """Binomial branching weights, trailing axis over n_r."""
        n_r = np.arange(self.n_users + 1)
        return binom.pmf(n_r, self.n_users, np.asarray(p_rec, dtype=float)[..., None])

    def row(self, r: int, p_rec: float) -> np.ndarray:
        _check_action(p_rec, self.allow_boundary)
        _check_state(r, self.n_states)
        return self.weights(p_rec) @ self.tensor[r]

    def rows(self, actions: np.ndarray) -> np.ndarray:
        """Transition matrix under a per-state action vector."""
        return np.einsum("rk,rks->rs", self.weights(actions), self.tensor)

    def chains(self, candidates: np.ndarray) -> np.ndarray:
        """Transition matrices for a batch of policies, shape (L, S, S)."""
        return np.einsum("lrk,rks->lrs", self.weights(candidates), self.tensor)

    def action_chains(self, grid: np.ndarray) -> np.ndarray:
        """Transition matrices under each constant action of a grid, shape (A, S, S)."""
        return np.einsum("ak,rks->ars", self.weights(grid), self.tensor)

    @classmethod
    def build(cls, model: MdpModel,
              formula: TransitionFormula = TransitionFormula.EXACT) -> "TransitionKernel":
        return _cached_kernel(model, formula)

    @classmethod
    def infinite_m(cls, n_users: int, p: float, q: float,
                   zero_state: ZeroStateSemantics = ZeroStateSemantics.IDLE_BRANCH
                   ) -> "TransitionKernel":
        return _cached_infinite_m_kernel(n_users, p, q, zero_state)

    @classmethod
    def saturation(cls, m_channels: int, p: float, q: float) -> "TransitionKernel":
        size = m_channels + 1
        tensor = np.zeros((size, 1, size))
        for r in range(size):
            tensor[r, 0] = [saturation_transition(m_channels, r, r_next, p, q) for r_next in range(size)]
        tensor.setflags(write=False)
        return cls(tensor=tensor, n_users=0, allow_boundary=True)


@lru_cache(maxsize=64)
def _cached_kernel(model: MdpModel, formula: TransitionFormula) -> TransitionKernel:
    m, n, size = model.m_channels, model.n_users, model.n_states
    rec_idle = 1.0 - model.channel.q
    unrec_idle = model.channel.idle_prob
    tensor = np.zeros((size, n + 1, size))
    for r in range(size):
        for n_r in range(n + 1):
            (nr_eff, c_rec), (nu_eff, c_unrec) = _branches(m, n, r, n_r, model.zero_state)
            dist = np.convolve(_side_successes(nr_eff, c_rec, rec_idle, formula),
                               _side_successes(nu_eff, c_unrec, unrec_idle, formula))
            tensor[r, n_r] = _pad(dist, size)
    tensor.setflags(write=False)
    logger.debug(f"Built {formula.value} kernel for {model}")
    return TransitionKernel(tensor=tensor, n_users=n)


@lru_cache(maxsize=64)
def _cached_infinite_m_kernel(n: int, p: float, q: float,
                              zero_state: ZeroStateSemantics) -> TransitionKernel:
    size = n + 1
    s = p / (p + q)
    tensor = np.zeros((size, n + 1, size))
    for r in range(size):
        for n_r in range(n + 1):
            n_u = n - n_r
            if r == 0:
                rec = np.ones(1)
                if zero_state == ZeroStateSemantics.RANDOM_ACCESS:
                    n_u = n
            else:
                rec = _side_successes(n_r, r, 1.0 - q, TransitionFormula.EXACT)
            unrec = binom.pmf(np.arange(n_u + 1), n_u, s)
            tensor[r, n_r] = _pad(np.convolve(rec, unrec), size)
    tensor.setflags(write=False)
    return TransitionKernel(tensor=tensor, n_users=n, allow_boundary=True)


# Transition operations ---------------------------------------------------

def transition_row(model: MdpModel, r: int, p_rec: float,
                   formula: TransitionFormula = TransitionFormula.EXACT) -> np.ndarray:
    """Distribution of R' from state r under action p_rec."""
    return TransitionKernel.build(model, formula).row(r, p_rec)


def transition_prob_exact(model: MdpModel, r: int, r_next: int, p_rec: float) -> float:
    """Transition probability with distinguishable users (surjection counts)."""
    row = transition_row(model, r, p_rec, TransitionFormula.EXACT)
    return float(row[r_next]) if 0 <= r_next < len(row) else 0.0


def transition_prob_composition(model: MdpModel, r: int, r_next: int, p_rec: float) -> float:
    """Transition probability from the composition-count closed form, summed term by term.

    Loop order: users on the recommended branch, then occupied recommended
    channels, then idle recommended channels, mirrored on the unrecommended
    side.
    """
    _check_action(p_rec)
    _check_state(r, model.n_states)
    if not 0 <= r_next < model.n_states:
        return 0.0
    m, n, q = model.m_channels, model.n_users, model.channel.q
    s = model.channel.idle_prob
    total = 0.0
    for n_r in range(n + 1):
        weight = comb(n, n_r, exact=True) * p_rec ** n_r * (1.0 - p_rec) ** (n - n_r)
        (nr_eff, c_rec), (nu_eff, c_unrec) = _branches(m, n, r, n_r, model.zero_state)
        occ_rec = _occupancy_composition(nr_eff, c_rec)
        occ_unrec = _occupancy_composition(nu_eff, c_unrec)
        for mbar_r, occ_r in enumerate(occ_rec):
            for m_r in range(mbar_r + 1):
                m_u = r_next - m_r
                if m_u < 0:
                    break
                rec = comb(mbar_r, m_r, exact=True) * (1.0 - q) ** m_r * q ** (mbar_r - m_r) * occ_r
                for mbar_u in range(m_u, len(occ_unrec)):
                    unrec = (comb(mbar_u, m_u, exact=True) * s ** m_u
                             * (1.0 - s) ** (mbar_u - m_u) * occ_unrec[mbar_u])
                    total += weight * rec * unrec
    return total


def transition_prob_infinite_m(n_users: int, r: int, r_next: int, p_rec: float,
                               p: float, q: float,
                               zero_state: ZeroStateSemantics = ZeroStateSemantics.IDLE_BRANCH
                               ) -> float:
    """Transition probability when unrecommended users never share a channel."""
    row = TransitionKernel.infinite_m(n_users, p, q, zero_state).row(r, p_rec)
    return float(row[r_next]) if 0 <= r_next < len(row) else 0.0


def saturation_transition(m_channels: int, r: int, r_next: int, p: float, q: float) -> float:
    """Transition probability with infinitely many users: every channel is accessed."""
    if r_next > m_channels or r_next < 0:
        return 0.0
    s = p / (p + q)
    rec = binom.pmf(np.arange(r + 1), r, 1.0 - q)
    unrec = binom.pmf(np.arange(m_channels - r + 1), m_channels - r, s)
    return float(np.convolve(rec, unrec)[r_next])


def transition_prob_mc(model: MdpModel, r: int, p_rec: float, samples: int,
                       rng: np.random.Generator, chunk_cells: int = 4_000_000) -> np.ndarray:
    """Empirical distribution of R' from simulating the one-slot process.

    Args:
        model: MDP instance
        r: Current state; channels 0..r-1 are the recommended ones
        p_rec: Branching probability
        samples: Number of simulated slots
        rng: Random stream
        chunk_cells: Upper bound on users x samples held in memory at once

    Returns:
        Probability vector over 0..min(M, N)
    """
    if samples < 1:
        raise DomainError(f"samples={samples} must be at least 1")
    m, n = model.m_channels, model.n_users
    _check_state(r, model.n_states)
    idle_prob = np.where(np.arange(m) < r, 1.0 - model.channel.q, model.channel.idle_prob)
    random_access = model.zero_state == ZeroStateSemantics.RANDOM_ACCESS and r in (0, m)

    counts = np.zeros(model.n_states, dtype=np.int64)
    chunk = max(1, chunk_cells // max(n, m))
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        u = rng.random((size, n))
        if random_access:
            chosen = np.minimum((u * m).astype(np.int64), m - 1)
        else:
            on_rec = rng.random((size, n)) < p_rec
            rec_ch = np.minimum((u * max(r, 1)).astype(np.int64), max(r, 1) - 1)
            unrec_ch = r + np.minimum((u * max(m - r, 1)).astype(np.int64), max(m - r, 1) - 1)
            chosen = np.where(on_rec, rec_ch, unrec_ch)
            silent = (on_rec & (r == 0)) | (~on_rec & (r == m))
            chosen = np.where(silent, -1, chosen)
        occupied = np.zeros((size, m + 1), dtype=bool)
        rows = np.broadcast_to(np.arange(size)[:, None], chosen.shape)
        occupied[rows, chosen] = True
        idle = rng.random((size, m)) < idle_prob
        r_next = (occupied[:, :m] & idle).sum(axis=1)
        counts += np.bincount(r_next, minlength=model.n_states)
        done += size
    return counts / samples


def reward(r_next: int, rate_b: float) -> float:
    return r_next * rate_b


def expected_reward(model: MdpModel, r: int, p_rec: float,
                    formula: TransitionFormula = TransitionFormula.EXACT) -> float:
    """Expected throughput of the next slot."""
    return float(transition_row(model, r, p_rec, formula) @ model.rewards)


def row_sum_discrepancy(model: MdpModel, formula: TransitionFormula,
                        grid: Sequence[float] | None = None) -> float:
    """Largest |sum of a row - 1| over all states and a grid of actions."""
    actions = np.asarray(grid if grid is not None else np.linspace(0.05, 0.95, 19))
    chains = TransitionKernel.build(model, formula).action_chains(actions)
    worst = float(np.max(np.abs(chains.sum(axis=2) - 1.0)))
    tol = COMPOSITION_SUM_TOL if formula == TransitionFormula.COMPOSITION else EXACT_SUM_TOL
    if worst > tol:
        logger.warning(f"{formula.value} rows of {model} miss unit sum by up to {worst:.3e}")
    return worst


# Policy evaluation -------------------------------------------------------

@dataclass
class TransitionMatrix:
    """Row-stochastic matrix over recommendation states."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.rows.shape[1]:
            raise ChainConsistencyError(f"transition matrix must be square, got {self.rows.shape}")
        if np.any(self.rows < -EXACT_SUM_TOL):
            raise ChainConsistencyError("transition matrix has negative entries")
        sums = self.rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > CHAIN_SUM_TOL)
        if bad.size:
            raise ChainConsistencyError(
                f"rows {bad.tolist()} are not stochastic (sums {sums[bad].tolist()})"
            )

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]


def build_chain(model: MdpModel, policy: Policy,
                formula: TransitionFormula = TransitionFormula.EXACT) -> TransitionMatrix:
    """Markov chain induced on the states by a stationary policy."""
    if len(policy) != model.n_states:
        raise DomainError(f"policy has {len(policy)} entries, model has {model.n_states} states")
    kernel = TransitionKernel.build(model, formula)
    return TransitionMatrix(kernel.rows(policy.as_array()))


def unreachable_states(chain: TransitionMatrix) -> list[int]:
    """States outside the largest strongly connected component; empty iff irreducible."""
    graph = sparse.csr_matrix(chain.rows > 0)
    n_components, labels = csgraph.connected_components(graph, directed=True, connection="strong")
    if n_components == 1:
        return []
    main = np.argmax(np.bincount(labels))
    return np.flatnonzero(labels != main).tolist()


def stationary_distribution(chain: TransitionMatrix) -> np.ndarray:
    """Solve pi Q = pi, sum(pi) = 1 with the normalisation replacing one balance equation."""
    unreachable = unreachable_states(chain)
    if unreachable:
        raise ReducibleChainError(unreachable)
    size = chain.n_states
    a = chain.rows.T - np.eye(size)
    a[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.max(np.abs(pi @ chain.rows - pi)))
    if residual > RESIDUAL_TOL:
        raise ChainConsistencyError(f"stationary residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")
    return pi


def power_iteration(chain: TransitionMatrix, tol: float = 1e-14,
                    max_iters: int = 1_000_000) -> np.ndarray:
    pi = np.full(chain.n_states, 1.0 / chain.n_states)
    for _ in range(max_iters):
        nxt = pi @ chain.rows
        diff = float(np.max(np.abs(nxt - pi)))
        pi = nxt
        if diff < tol:
            return pi / pi.sum()
    raise ConvergenceError("power iteration did not converge", diff)


def _as_actions(policy: Policy | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(policy, Policy):
        return policy.as_array()
    return np.asarray(policy, dtype=float)


def is_feasible(actions: np.ndarray) -> np.ndarray:
    """Row-wise check that every entry lies strictly inside (0, 1)."""
    return np.all((actions > 0.0) & (actions < 1.0), axis=-1)


def policy_throughput(model: MdpModel, policy: Policy | Sequence[float] | np.ndarray,
                      formula: TransitionFormula = TransitionFormula.EXACT) -> float:
    """Long-run average throughput of a stationary policy; -inf when infeasible."""
    actions = _as_actions(policy)
    if actions.shape != (model.n_states,) or not is_feasible(actions):
        return float("-inf")
    chain = build_chain(model, Policy(p_rec=actions.tolist()), formula)
    return float(stationary_distribution(chain) @ model.rewards)


def policy_throughput_batch(kernel: TransitionKernel, rewards: np.ndarray,
                            candidates: np.ndarray) -> np.ndarray:
    """Average throughput of each row of ``candidates``; infeasible rows score -inf."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    scores = np.full(candidates.shape[0], -np.inf)
    feasible = is_feasible(candidates)
    if not feasible.any():
        return scores
    chains = kernel.chains(candidates[feasible])
    size = kernel.n_states
    a = np.transpose(chains, (0, 2, 1)) - np.eye(size)
    a[:, -1, :] = 1.0
    b = np.zeros((a.shape[0], size, 1))
    b[:, -1, 0] = 1.0
    pi = np.linalg.solve(a, b)[..., 0]
    scores[feasible] = pi @ rewards
    return scores


def simulate_chain(chain: TransitionMatrix, rewards: np.ndarray, steps: int,
                   rng: np.random.Generator, start: int = 0,
                   n_batches: int = 50) -> tuple[float, float]:
    """Time-average reward along a sampled trajectory.

    Returns:
        (mean reward, batch-means standard error)
    """
    cdf = np.cumsum(chain.rows, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(steps)
    visited = np.empty(steps, dtype=np.int64)
    state = start
    for t in range(steps):
        state = int(np.searchsorted(cdf[state], u[t], side="right"))
        visited[t] = state
    path = np.asarray(rewards)[visited]
    batches = np.array_split(path, n_batches)
    _, se = StatsUtils.mean_se([b.mean() for b in batches])
    return float(path.mean()), se


# Dynamic-programming oracles ---------------------------------------------

def _grid(action_grid: Sequence[float], allow_boundary: bool = False) -> np.ndarray:
    grid = np.asarray(action_grid, dtype=float)
    if grid.size == 0:
        raise DomainError("action grid is empty")
    for a in grid:
        _check_action(float(a), allow_boundary)
    return grid


def relative_value_iteration(model: MdpModel, action_grid: Sequence[float],
                             tol: float = 1e-9, max_iters: int = 100_000,
                             formula: TransitionFormula = TransitionFormula.EXACT
                             ) -> tuple[Policy, float]:
    """Grid-optimal stationary policy of the average-reward problem.

    Returns:
        The greedy policy at convergence and its gain evaluated exactly
    """
    grid = _grid(action_grid)
    chains = TransitionKernel.build(model, formula).action_chains(grid)
    rewards = model.rewards
    expected = chains @ rewards
    h = np.zeros(model.n_states)
    residual = float("inf")
    for it in range(max_iters):
        values = np.max(expected + chains @ h, axis=0)
        diff = values - h
        residual = float(diff.max() - diff.min())
        h = values - values[0]
        if residual < tol:
            logger.debug(f"RVI converged after {it + 1} iterations for {model}")
            break
    else:
        raise ConvergenceError(f"relative value iteration did not converge in {max_iters} iterations",
                               residual)
    greedy = np.argmax(expected + chains @ h, axis=0)
    policy = Policy(p_rec=grid[greedy].tolist())
    return policy, policy_throughput(model, policy, formula)


@dataclass
class DiscountedValues:
    """Finite-horizon discounted values and greedy actions per stage."""

    values: np.ndarray
    actions: np.ndarray

    @property
    def greedy_policy(self) -> np.ndarray:
        """Greedy actions of the first stage."""
        return self.actions[0]


def discounted_value_iteration(model: MdpModel | TransitionKernel, beta: float,
                               action_grid: Sequence[float], horizon: int,
                               rate_b: float = 1.0,
                               formula: TransitionFormula = TransitionFormula.EXACT
                               ) -> DiscountedValues:
    """Backward recursion V_t(R) = max_a sum_R' P[R, R'](a) (U_R' + beta V_{t+1}(R')).

    ``values[-1]`` is the terminal stage V_T(R) = R * B; ``actions[t]`` is the
    greedy action at stage t (ties toward the smaller action), defined for
    t < horizon - 1.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta={beta} must lie in (0, 1)")
    if horizon < 1:
        raise DomainError(f"horizon={horizon} must be at least 1")
    if isinstance(model, MdpModel):
        kernel = TransitionKernel.build(model, formula)
        rate_b = model.channel.rate_b
    else:
        kernel = model
    grid = _grid(action_grid, kernel.allow_boundary)
    chains = kernel.action_chains(grid)
    rewards = np.arange(kernel.n_states, dtype=float) * rate_b
    values = np.zeros((horizon, kernel.n_states))
    actions = np.zeros((horizon - 1, kernel.n_states))
    values[-1] = rewards
    for t in range(horizon - 2, -1, -1):
        q_values = chains @ (rewards + beta * values[t + 1])
        best = np.argmax(q_values, axis=0)
        values[t] = q_values[best, np.arange(kernel.n_states)]
        actions[t] = grid[best]
    return DiscountedValues(values=values, actions=actions)


# Structural diagnostics --------------------------------------------------

def reverse_cdf(rows: np.ndarray) -> np.ndarray:
    """f_r = P(R' >= r) along the last axis."""
    return np.flip(np.cumsum(np.flip(rows, axis=-1), axis=-1), axis=-1)


def reverse_cdf_monotonicity_gap(kernel: TransitionKernel, grid: Sequence[float]) -> float:
    """Most negative f_r(R+1, P) - f_r(R, P) over all r, R and actions in the grid."""
    f = reverse_cdf(kernel.action_chains(_grid(grid, kernel.allow_boundary)))
    return float(np.min(np.diff(f, axis=1)))


def supermodularity_gap(kernel: TransitionKernel, grid: Sequence[float]) -> float:
    """Most negative cross-difference of the reverse CDF in (R, P_rec).

    A negative gap means f_r is not supermodular on the grid.
    """
    f = reverse_cdf(kernel.action_chains(np.sort(_grid(grid, kernel.allow_boundary))))
    cross = np.diff(np.diff(f, axis=0), axis=1)
    gap = float(np.min(cross))
    if gap < -1e-9:
        logger.warning(f"reverse CDF is not supermodular on the grid (gap {gap:.3e})")
    return gap
