"""Tabular Q-learning baseline over a discretised branching-probability grid."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from .mdp import MdpModel, Policy, TransitionKernel, clamp_action

logger = logging.getLogger(__name__)

ACTION_GRID: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 11))

# Uniform draws are generated in blocks to keep the training loop scalar-only.
_BLOCK = 65_536


class QConfig(BaseModel):
    """Training parameters.

    ``alpha`` is the initial smoothing factor; when ``alpha_decay`` is set the
    step size at step t is alpha / (1 + t / alpha_decay).
    """
    alpha: float = Field(default=0.1, ge=0.0, le=1.0)
    tau: float = Field(default=5.0, gt=0.0)
    steps: int = Field(default=2_000_000, ge=1)
    discount: float = Field(default=1.0, gt=0.0, le=1.0)
    alpha_decay: float | None = Field(default=1e4, gt=0.0)
    actions: list[float] = Field(default_factory=lambda: list(ACTION_GRID), min_length=1)

    @field_validator("actions")
    @classmethod
    def validate_actions(cls, v: list[float]) -> list[float]:
        for a in v:
            if not 0.0 < a <= 1.0:
                raise ValueError(f"action {a} must lie in (0, 1]")
        return v

    def step_size(self, t: int) -> float:
        if self.alpha_decay is None:
            return self.alpha
        return self.alpha / (1.0 + t / self.alpha_decay)


@dataclass
class QTable:
    """Q-values indexed by (state R, action index)."""

    q: np.ndarray
    actions: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_states: int, actions: list[float] | tuple[float, ...] = ACTION_GRID) -> "QTable":
        acts = np.asarray(actions, dtype=float)
        return cls(q=np.zeros((n_states, len(acts))), actions=acts)

    def greedy_indices(self) -> np.ndarray:
        """Argmax per state; ties go to the smaller action index."""
        return np.argmax(self.q, axis=1)

    def greedy_actions(self) -> np.ndarray:
        return self.actions[self.greedy_indices()]

    def to_frame(self) -> pd.DataFrame:
        states, idx = np.indices(self.q.shape)
        return pd.DataFrame({
            "state": states.ravel(),
            "action_value": self.actions[idx.ravel()],
            "q": self.q.ravel(),
        })

    def to_csv(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def q_update(table: QTable, r: int, a: int, reward: float, r_next: int,
             cfg: QConfig, alpha: float | None = None) -> QTable:
    """Q(r, a) <- (1 - alpha) Q(r, a) + alpha (reward + discount * max Q(r_next, .))."""
    step = cfg.alpha if alpha is None else alpha
    target = reward + cfg.discount * table.q[r_next].max()
    table.q[r, a] = (1.0 - step) * table.q[r, a] + step * target
    return table


def boltzmann_probs(q_row: np.ndarray, tau: float) -> np.ndarray:
    """Action probabilities proportional to exp(tau * Q)."""
    logits = tau * np.asarray(q_row, dtype=float)
    w = np.exp(logits - logits.max())
    return w / w.sum()


def softmax_action(table: QTable, r: int, tau: float, rng: np.random.Generator,
                   u: float | None = None) -> int:
    """Boltzmann draw from row ``r`` by inverse CDF; ``u`` replaces the draw from ``rng``."""
    probs = boltzmann_probs(table.q[r], tau)
    u = rng.random() if u is None else u
    return min(int(np.searchsorted(np.cumsum(probs), u, side="right")), len(probs) - 1)


def train(model: MdpModel, cfg: QConfig | None = None,
          rng: np.random.Generator | None = None) -> tuple[QTable, Policy]:
    """Learn a grid policy by simulating the MDP chain.

    Returns:
        The final table and its greedy policy, with action 1.0 clamped into (0, 1)
    """
    cfg = cfg or QConfig()
    rng = rng or np.random.default_rng()
    table = QTable.zeros(model.n_states, cfg.actions)
    table.metadata = {"discount": cfg.discount, "alpha0": cfg.alpha,
                      "alpha_decay": cfg.alpha_decay, "tau": cfg.tau, "steps": cfg.steps}

    kernel = TransitionKernel.build(model)
    chains = kernel.action_chains(np.asarray(clamp_action(table.actions)))
    cdf = np.cumsum(chains, axis=2)
    cdf[..., -1] = 1.0
    rate_b = model.channel.rate_b

    state = 0
    for start in range(0, cfg.steps, _BLOCK):
        n = min(_BLOCK, cfg.steps - start)
        u_action = rng.random(n)
        u_next = rng.random(n)
        for i in range(n):
            a = softmax_action(table, state, cfg.tau, rng, u_action[i])
            nxt = int(np.searchsorted(cdf[a, state], u_next[i], side="right"))
            q_update(table, state, a, nxt * rate_b, nxt, cfg, alpha=cfg.step_size(start + i))
            state = nxt

    policy = Policy(p_rec=np.asarray(clamp_action(table.greedy_actions())).tolist())
    logger.info(f"Q-learning on {model} finished after {cfg.steps} steps; "
                f"greedy actions {table.greedy_actions().tolist()}")
    return table, policy
