"""Slotted network simulator for the channel access schemes."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .channel import ChannelParams, InitialState, initial_idle, step_channels
from .errors import ConfigurationError
from .network import (
    LaneState,
    Selector,
    advance_lanes,
    heuristic_selector,
    policy_selector,
    start_lanes,
    static_selector,
    uniform_selector,
    weight_selector,
)
from .utils import StatsUtils

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "idle_count", "used_count", "system_throughput", "r_next"]


class ContentionMode(str, Enum):
    IDEALIZED = "idealized"
    MINI_SLOTS = "mini-slots"


class SchemeKind(str, Enum):
    RANDOM = "random"
    STATIC = "static"
    HEURISTIC = "heuristic"
    POLICY = "policy"
    HETERO = "hetero"


class Scheme(BaseModel):
    """Channel access scheme and its parameters."""

    kind: SchemeKind
    p_rec: float | None = None
    policy: list[float] | None = None
    w_rec: list[float] | None = None
    w_unrec: list[float] | None = None

    @model_validator(mode="after")
    def validate_payload(self) -> "Scheme":
        if self.kind == SchemeKind.STATIC and (self.p_rec is None or not 0.0 < self.p_rec < 1.0):
            raise ValueError(f"static scheme needs p_rec in (0, 1), got {self.p_rec}")
        if self.kind == SchemeKind.POLICY and not self.policy:
            raise ValueError("policy scheme needs a non-empty policy vector")
        if self.kind == SchemeKind.HETERO:
            if not self.w_rec or not self.w_unrec or len(self.w_rec) != len(self.w_unrec):
                raise ValueError("hetero scheme needs w_rec and w_unrec of equal length")
            if any(not 0.0 < w < 1.0 for w in self.w_rec + self.w_unrec):
                raise ValueError("hetero weights must lie strictly inside (0, 1)")
        return self

    @classmethod
    def random(cls) -> "Scheme":
        return cls(kind=SchemeKind.RANDOM)

    @classmethod
    def static(cls, p_rec: float) -> "Scheme":
        return cls(kind=SchemeKind.STATIC, p_rec=p_rec)

    @classmethod
    def heuristic(cls) -> "Scheme":
        return cls(kind=SchemeKind.HEURISTIC)

    @classmethod
    def policy_driven(cls, p_rec: list[float]) -> "Scheme":
        return cls(kind=SchemeKind.POLICY, policy=list(p_rec))

    @classmethod
    def hetero(cls, w_rec: list[float], w_unrec: list[float]) -> "Scheme":
        return cls(kind=SchemeKind.HETERO, w_rec=list(w_rec), w_unrec=list(w_unrec))

    def selector(self, m_channels: int, n_users: int) -> Selector:
        if self.kind == SchemeKind.RANDOM:
            return uniform_selector
        if self.kind == SchemeKind.STATIC:
            return static_selector(self.p_rec)
        if self.kind == SchemeKind.HEURISTIC:
            return heuristic_selector(n_users)
        if self.kind == SchemeKind.POLICY:
            return policy_selector(np.asarray(self.policy))
        if len(self.w_rec) != m_channels:
            raise ConfigurationError(f"hetero weights cover {len(self.w_rec)} channels, "
                                     f"network has {m_channels}")
        return weight_selector(np.asarray(self.w_rec), np.asarray(self.w_unrec))

    @property
    def label(self) -> str:
        if self.kind == SchemeKind.STATIC:
            return f"static-{self.p_rec:g}"
        return self.kind.value


class SimConfig(BaseModel):
    """Simulation parameters."""

    m_channels: int = Field(ge=1)
    n_users: int = Field(ge=1)
    horizon_t: int = Field(default=2000, ge=1)
    buffer_w: int = Field(default=1, ge=1)
    scheme: Scheme = Field(default_factory=Scheme.random)
    contention: ContentionMode = ContentionMode.IDEALIZED
    backoff_slots: int = Field(default=16, ge=1)
    seed: int = 0
    channels: ChannelParams | list[ChannelParams]
    initial_state: InitialState = InitialState.IDLE
    record_trace: bool = False

    @model_validator(mode="after")
    def validate_channels(self) -> "SimConfig":
        if isinstance(self.channels, list) and len(self.channels) != self.m_channels:
            raise ValueError(f"{len(self.channels)} channel parameter sets given for "
                             f"{self.m_channels} channels")
        return self

    def channel_list(self) -> list[ChannelParams]:
        if isinstance(self.channels, list):
            return list(self.channels)
        return [self.channels] * self.m_channels


def select_channel_static(recommended: list[int] | set[int], m: int, p_rec: float,
                          rng: np.random.Generator) -> int:
    """Pick one channel with the static split of ``p_rec`` over the recommended set."""
    mask = np.zeros((1, m), dtype=bool)
    mask[0, sorted(recommended)] = True
    probs = static_selector(p_rec)(mask)[0]
    return int(rng.choice(m, p=probs))


def contention_keys(lanes: int, n_users: int, mode: ContentionMode, backoff_slots: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Float keys for the idealised limit, integer backoffs in [1, backoff_slots] otherwise."""
    if mode == ContentionMode.IDEALIZED:
        return rng.random((lanes, n_users))
    return rng.integers(1, backoff_slots + 1, size=(lanes, n_users)).astype(float)


def contention(k: int, mode: ContentionMode, rng: np.random.Generator,
               backoff_slots: int = 16) -> int | None:
    """Winner among ``k`` contenders on one idle channel, or None on collision."""
    if k < 1:
        raise ValueError(f"contention needs at least one user, got {k}")
    keys = contention_keys(1, k, mode, backoff_slots, rng)[0]
    best = keys.min()
    if np.count_nonzero(keys == best) > 1:
        return None
    return int(keys.argmin())


def success_probability(k: int, backoff_slots: int) -> float:
    """Probability that a given user of ``k`` contenders wins a mini-slot contention."""
    lam = np.arange(1, backoff_slots + 1)
    return float(np.sum(((backoff_slots - lam) / backoff_slots) ** (k - 1)) / backoff_slots)


@dataclass
class SlotRecord:
    """What happened in one slot."""

    t: int
    idle: list[bool]
    choice: list[int]
    winners: dict[int, int]
    user_throughput: list[float]
    recommended: list[int]
    next_choice: list[int]
    system_throughput: float

    @property
    def idle_count(self) -> int:
        return sum(self.idle)

    @property
    def used_count(self) -> int:
        return len(self.winners)

    @property
    def r_next(self) -> int:
        return len(self.recommended)


@dataclass
class NetworkState:
    """Channel states and user lanes of a running simulation."""

    config: SimConfig
    idle: np.ndarray
    lanes: LaneState
    p: np.ndarray
    q: np.ndarray
    rates: np.ndarray
    selector: Selector

    @classmethod
    def initial(cls, cfg: SimConfig, rng: np.random.Generator) -> "NetworkState":
        channels = cfg.channel_list()
        selector = cfg.scheme.selector(cfg.m_channels, cfg.n_users)
        idle = initial_idle(channels, cfg.initial_state, rng)
        lanes = start_lanes(1, cfg.n_users, cfg.m_channels, selector, rng.random((1, cfg.n_users)))
        return cls(
            config=cfg, idle=idle, lanes=lanes,
            p=np.array([c.p for c in channels]), q=np.array([c.q for c in channels]),
            rates=np.array([c.rate_b for c in channels]), selector=selector,
        )


def run_slot(state: NetworkState, rng: np.random.Generator) -> tuple[NetworkState, SlotRecord]:
    """Advance channels, then contend, transmit, recommend and select.

    Random draws per slot, in order: channel transitions, contention keys,
    channel selection uniforms.
    """
    cfg = state.config
    state.idle = step_channels(state.idle, state.p, state.q, rng)
    keys = contention_keys(1, cfg.n_users, cfg.contention, cfg.backoff_slots, rng)
    select_u = rng.random((1, cfg.n_users))
    choice = state.lanes.choice[0].tolist()
    t = state.lanes.t + 1
    outcome = advance_lanes(state.lanes, state.idle[None, :], state.rates, keys, select_u,
                            state.selector, cfg.buffer_w)

    winners = {int(m): int(n) for m, n in enumerate(outcome.winners[0]) if n >= 0}
    user_throughput = [0.0] * cfg.n_users
    for m, n in winners.items():
        user_throughput[n] = float(state.rates[m])
    record = SlotRecord(
        t=t,
        idle=state.idle.tolist(),
        choice=choice,
        winners=winners,
        user_throughput=user_throughput,
        recommended=np.flatnonzero(outcome.recommended[0]).tolist(),
        next_choice=state.lanes.choice[0].tolist(),
        system_throughput=float(outcome.throughput[0]),
    )
    return state, record


@dataclass
class SimulationResult:
    """Time-average throughput plus per-slot series."""

    throughput: float
    per_slot: np.ndarray
    trace: list[SlotRecord] | None = None
    metadata: dict[str, object] = field(default_factory=dict)

    def trace_frame(self) -> pd.DataFrame:
        if self.trace is None:
            raise ValueError("simulation was run without record_trace")
        return pd.DataFrame(
            [{"t": r.t, "idle_count": r.idle_count, "used_count": r.used_count,
              "system_throughput": r.system_throughput, "r_next": r.r_next}
             for r in self.trace],
            columns=TRACE_COLUMNS,
        )

    def trace_to_csv(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.trace_frame().to_csv(path, index=False, lineterminator="\n")


def run_simulation(cfg: SimConfig) -> SimulationResult:
    """Simulate ``cfg.horizon_t`` slots and average the system throughput."""
    rng = np.random.default_rng(cfg.seed)
    state = NetworkState.initial(cfg, rng)
    per_slot = np.zeros(cfg.horizon_t)
    trace: list[SlotRecord] | None = [] if cfg.record_trace else None
    for i in range(cfg.horizon_t):
        state, record = run_slot(state, rng)
        per_slot[i] = record.system_throughput
        if trace is not None:
            trace.append(record)
    result = SimulationResult(throughput=float(per_slot.mean()), per_slot=per_slot, trace=trace,
                              metadata={"scheme": cfg.scheme.label, "seed": cfg.seed})
    logger.debug(f"Simulated {cfg.scheme.label} M={cfg.m_channels} N={cfg.n_users} "
                 f"T={cfg.horizon_t} seed={cfg.seed}: U={result.throughput:.4f}")
    return result


def recommended_channel_load(trace: list[SlotRecord]) -> tuple[float, float]:
    """Mean number of users choosing each recommended channel for the following slot.

    Averages, over slots that end with at least one recommendation, the users
    whose next choice is recommended divided by the number of recommended
    channels.

    Returns:
        (mean, standard error)
    """
    loads = []
    for record in trace:
        if record.recommended:
            rec = set(record.recommended)
            loads.append(sum(c in rec for c in record.next_choice) / len(rec))
    if len(loads) < 2:
        raise ValueError("trace has fewer than two slots with recommendations")
    return StatsUtils.mean_se(loads)
