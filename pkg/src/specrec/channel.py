"""Two-state Markov channel processes and the Type 1 / Type 2 parameter families."""

from collections.abc import Sequence
from enum import Enum, IntEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ConfigurationError


class ChannelState(IntEnum):
    """Primary-user occupancy of a channel."""
    BUSY = 0
    IDLE = 1


class MatrixType(str, Enum):
    """Channel transition families used in the experiments."""
    TYPE1 = "type1"
    TYPE2 = "type2"


class InitialState(str, Enum):
    """How channel states are drawn before the first slot."""
    IDLE = "idle"
    STATIONARY = "stationary"


# Largest dynamic factor keeping every matrix entry inside [0, 1].
EPSILON_LIMITS: dict[MatrixType, float] = {
    MatrixType.TYPE1: 40.0,
    MatrixType.TYPE2: 100.0,
}


class ChannelParams(BaseModel):
    """Markov parameters and data rate of one channel.

    ``p`` is the busy->idle and ``q`` the idle->busy probability per slot.
    """

    model_config = ConfigDict(frozen=True)

    p: float = Field(gt=0.0, le=1.0)
    q: float = Field(gt=0.0, le=1.0)
    rate_b: float = Field(default=1.0, gt=0.0)

    @property
    def idle_prob(self) -> float:
        """Stationary probability that the channel is idle."""
        return stationary_idle_prob(self)


class MatrixFamily(BaseModel):
    """A transition family together with its dynamic factor."""

    model_config = ConfigDict(frozen=True)

    family: MatrixType
    epsilon: float = Field(gt=0.0)


def step_channel(state: ChannelState, params: ChannelParams,
                 rng: np.random.Generator) -> ChannelState:
    """Advance a single channel by one slot."""
    u = rng.random()
    if state == ChannelState.BUSY:
        return ChannelState.IDLE if u < params.p else ChannelState.BUSY
    return ChannelState.BUSY if u < params.q else ChannelState.IDLE


def step_channels(idle: np.ndarray, p: np.ndarray, q: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Advance an array of channels by one slot.

    Args:
        idle: Boolean idle indicators, any shape broadcastable with ``p`` and ``q``
        p: Busy->idle probabilities
        q: Idle->busy probabilities
        rng: Random stream

    Returns:
        Boolean idle indicators for the next slot
    """
    u = rng.random(np.shape(idle))
    return np.where(idle, u >= q, u < p)


def stationary_idle_prob(params: ChannelParams) -> float:
    """Long-run fraction of slots in which the channel is idle."""
    return params.p / (params.p + params.q)


def family_params(family: MatrixFamily, rate_b: float = 1.0) -> ChannelParams:
    """Channel parameters of a Type 1 or Type 2 matrix at dynamic factor epsilon."""
    limit = EPSILON_LIMITS[family.family]
    if family.epsilon > limit:
        raise ConfigurationError(
            f"epsilon={family.epsilon} out of range for {family.family.value} "
            f"(must be in (0, {limit:g}])"
        )
    if family.family == MatrixType.TYPE1:
        return ChannelParams(p=0.005 * family.epsilon, q=0.025 * family.epsilon, rate_b=rate_b)
    return ChannelParams(p=0.01 * family.epsilon, q=0.01 * family.epsilon, rate_b=rate_b)


def initial_idle(params: Sequence[ChannelParams], initial: InitialState,
                 rng: np.random.Generator) -> np.ndarray:
    """Idle indicators for the slot before the first one."""
    if initial == InitialState.IDLE:
        return np.ones(len(params), dtype=bool)
    stationary = np.array([stationary_idle_prob(c) for c in params])
    return rng.random(len(params)) < stationary


def sample_idle_paths(params: Sequence[ChannelParams], horizon: int,
                      rng: np.random.Generator,
                      initial: InitialState = InitialState.IDLE) -> np.ndarray:
    """Simulate the idle indicators of independent channels.

    Returns:
        Boolean array of shape (horizon, len(params)); row t holds slot t + 1
    """
    p = np.array([c.p for c in params])
    q = np.array([c.q for c in params])
    idle = initial_idle(params, initial, rng)
    paths = np.empty((horizon, len(params)), dtype=bool)
    for t in range(horizon):
        idle = step_channels(idle, p, q, rng)
        paths[t] = idle
    return paths
