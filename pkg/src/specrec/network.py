"""Slot-by-slot sensing, contention and recommendation for many independent lanes.

A lane is one copy of the network (N users, M channels). The homogeneous
simulator runs a single lane; heterogeneous policy evaluation runs one lane
per (candidate, replication) pair so that a whole MRAS population advances
together.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

# last_success value meaning "never used"
NEVER = -(10**9)


@dataclass
class LaneState:
    """Per-lane user choices and recommendation buffer.

    ``choice[b, n]`` is the channel user n senses in the coming slot and
    ``last_success[b, m]`` the last slot with a successful transmission on
    channel m.
    """

    choice: np.ndarray
    last_success: np.ndarray
    t: int = 0

    @classmethod
    def empty(cls, lanes: int, n_users: int, m_channels: int) -> "LaneState":
        return cls(
            choice=np.zeros((lanes, n_users), dtype=np.int64),
            last_success=np.full((lanes, m_channels), NEVER, dtype=np.int64),
        )

    @property
    def lanes(self) -> int:
        return self.choice.shape[0]

    def recommended(self, buffer_w: int) -> np.ndarray:
        """Channels with a success in the most recent ``buffer_w`` slots."""
        return (self.t - 1 - self.last_success) < buffer_w


@dataclass
class SlotOutcome:
    """Result of advancing every lane by one slot."""

    success: np.ndarray       # (B, M) idle channel won by exactly one user
    winners: np.ndarray       # (B, M) winning user index, -1 when none
    occupied: np.ndarray      # (B, M) at least one user sensed the channel
    throughput: np.ndarray    # (B,) system throughput of the slot
    recommended: np.ndarray   # (B, M) buffer after the slot
    r_next: np.ndarray        # (B,) distinct recommended channels


# Selector: recommended mask (B, M) -> channel probabilities (B, M)
Selector = Callable[[np.ndarray], np.ndarray]


def uniform_selector(recommended: np.ndarray) -> np.ndarray:
    m = recommended.shape[1]
    return np.full(recommended.shape, 1.0 / m)


def branch_probabilities(recommended: np.ndarray, p_rec: np.ndarray) -> np.ndarray:
    """Split ``p_rec`` evenly over recommended channels and the rest over the others.

    Lanes with no recommended channel, or with every channel recommended,
    access uniformly.
    """
    m = recommended.shape[1]
    r = recommended.sum(axis=1)
    p_rec = np.broadcast_to(np.asarray(p_rec, dtype=float), r.shape)
    degenerate = (r == 0) | (r == m)
    safe_r = np.where(r == 0, 1, r)
    safe_u = np.where(r == m, 1, m - r)
    probs = np.where(recommended, (p_rec / safe_r)[:, None], ((1.0 - p_rec) / safe_u)[:, None])
    return np.where(degenerate[:, None], 1.0 / m, probs)


def static_selector(p_rec: float) -> Selector:
    def select(recommended: np.ndarray) -> np.ndarray:
        return branch_probabilities(recommended, np.full(recommended.shape[0], p_rec))
    return select


def heuristic_selector(n_users: int) -> Selector:
    """Branching probability r / N, one expected user per recommended channel."""
    def select(recommended: np.ndarray) -> np.ndarray:
        return branch_probabilities(recommended, recommended.sum(axis=1) / n_users)
    return select


def policy_selector(p_rec: np.ndarray) -> Selector:
    """Branching probability read from a per-state policy vector."""
    table = np.asarray(p_rec, dtype=float)

    def select(recommended: np.ndarray) -> np.ndarray:
        r = np.minimum(recommended.sum(axis=1), len(table) - 1)
        return branch_probabilities(recommended, table[r])
    return select


def weight_selector(w_rec: np.ndarray, w_unrec: np.ndarray) -> Selector:
    """Channel probability proportional to its weight for its recommendation status.

    Weights are (M,) for a shared policy or (B, M) for one policy per lane.
    """
    def select(recommended: np.ndarray) -> np.ndarray:
        w = np.where(recommended, w_rec, w_unrec)
        return w / w.sum(axis=1, keepdims=True)
    return select


def state_index(recommended: np.ndarray) -> np.ndarray:
    """Indicator vector (I_1, ..., I_M) as an integer with I_1 as the lowest bit."""
    powers = 1 << np.arange(recommended.shape[1])
    return recommended.astype(np.int64) @ powers


def table_selector(table: np.ndarray) -> Selector:
    """Per-state access vectors, (2^M, M) shared or (B, 2^M, M) per lane."""
    def select(recommended: np.ndarray) -> np.ndarray:
        idx = state_index(recommended)
        if table.ndim == 2:
            return table[idx]
        return table[np.arange(len(idx)), idx]
    return select


def choose_channels(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF channel choice; ``u`` holds one uniform per (lane, user)."""
    cdf = np.cumsum(probs, axis=1)
    choice = (u[:, :, None] >= cdf[:, None, :]).sum(axis=2)
    return np.minimum(choice, probs.shape[1] - 1)


def start_lanes(lanes: int, n_users: int, m_channels: int, selector: Selector,
                u: np.ndarray) -> LaneState:
    """Lanes at slot 0 with first-slot choices made from an empty buffer."""
    state = LaneState.empty(lanes, n_users, m_channels)
    state.choice = choose_channels(selector(np.zeros((lanes, m_channels), dtype=bool)), u)
    return state


def contend(choice: np.ndarray, keys: np.ndarray, m_channels: int
            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Resolve contention on every channel of every lane.

    The user with the strictly smallest key wins; equal smallest keys collide.

    Returns:
        (won, winner, occupied), each (B, M)
    """
    on_channel = choice[:, :, None] == np.arange(m_channels)[None, None, :]
    masked = np.where(on_channel, keys[:, :, None], np.inf)
    best = masked.min(axis=1)
    occupied = np.isfinite(best)
    ties = (masked == best[:, None, :]).sum(axis=1)
    won = occupied & (ties == 1)
    winner = np.where(won, masked.argmin(axis=1), -1)
    return won, winner, occupied


def advance_lanes(state: LaneState, idle: np.ndarray, rates: np.ndarray, keys: np.ndarray,
                  select_u: np.ndarray, selector: Selector, buffer_w: int) -> SlotOutcome:
    """Run one slot in place: contention, transmission, recommendation and selection.

    Args:
        state: Lanes to advance; mutated
        idle: Channel idle indicators of this slot, (B, M) or (M,)
        rates: Channel data rates, (M,)
        keys: Contention keys, (B, N); smaller wins
        select_u: Uniforms for next-slot channel choice, (B, N)
        selector: Maps the recommendation buffer to channel probabilities
        buffer_w: Slots a recommendation stays in the buffer

    Returns:
        Outcome of the slot
    """
    m = state.last_success.shape[1]
    won, winner, occupied = contend(state.choice, keys, m)
    success = won & np.broadcast_to(idle, won.shape)
    winner = np.where(success, winner, -1)
    state.last_success = np.where(success, state.t, state.last_success)
    state.t += 1
    recommended = state.recommended(buffer_w)
    state.choice = choose_channels(selector(recommended), select_u)
    return SlotOutcome(
        success=success,
        winners=winner,
        occupied=occupied,
        throughput=success @ np.asarray(rates, dtype=float),
        recommended=recommended,
        r_next=recommended.sum(axis=1),
    )
