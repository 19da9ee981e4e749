"""
cdeh/agents/branching_agent.py
DQN-only learner: every continuous coordinate is cut to a grid and gets its
own Q branch, the decoding order is one more branch over the N! orders
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from cdeh.agents.dqn_agent import linear_epsilon
from cdeh.agents.replay_buffer import Batch
from cdeh.core.config import AgentConfig, SystemConfig
from cdeh.nn.layers import mse_loss
from cdeh.nn.network import Network, build_branching_q_network
from cdeh.nn.optim import Adam
from cdeh.utils.exceptions import StructuralError


# =============================================================================
# ACTION GRID
# =============================================================================

@dataclass(frozen=True)
class ActionGrid:
    """Levels per raw action coordinate (phases wrap, scalars span [-1, 1]) plus the order branch"""

    counts: np.ndarray
    phase: np.ndarray
    order_count: int

    @classmethod
    def for_system(cls, system: SystemConfig, agent: AgentConfig) -> "ActionGrid":
        phase = np.zeros(system.action_dim, dtype=bool)
        phase[3 * system.N:3 * system.N + system.K] = True
        counts = np.where(phase, agent.PHASE_LEVELS, agent.DISCRETE_LEVELS).astype(np.int64)
        return cls(counts=counts, phase=phase, order_count=math.factorial(system.N))

    @property
    def starts(self) -> np.ndarray:
        """First output column of each branch; the order branch comes last"""
        return np.concatenate([[0], np.cumsum(self.counts)]).astype(np.int64)

    @property
    def branches(self) -> int:
        return int(self.counts.shape[0]) + 1

    @property
    def out_dim(self) -> int:
        return int(self.starts[-1]) + self.order_count

    def raw_action(self, levels: np.ndarray) -> np.ndarray:
        # phase level j maps to theta = 2*pi*j/P after decoding
        scalar = -1.0 + 2.0 * levels / (self.counts - 1)
        phase = -1.0 + 2.0 * levels / self.counts
        return np.where(self.phase, phase, scalar)

    def levels_of(self, raw: np.ndarray) -> np.ndarray:
        """Nearest level of every coordinate; accepts a batch of raw actions"""
        unit = (np.clip(raw, -1.0, 1.0) + 1.0) / 2.0
        scalar = np.rint(unit * (self.counts - 1))
        phase = np.rint(unit * self.counts) % self.counts
        return np.where(self.phase, phase, scalar).astype(np.int64)

    def columns(self, raw: np.ndarray, order_indices: np.ndarray) -> np.ndarray:
        """Output column picked in each branch, shape (batch, branches)"""
        raw = np.atleast_2d(raw)
        if raw.shape[1] != self.counts.shape[0]:
            raise StructuralError(f"grid expects raw width {self.counts.shape[0]}, got {raw.shape[1]}")
        order_cols = self.starts[-1] + np.asarray(order_indices, dtype=np.int64).reshape(-1, 1)
        return np.concatenate([self.levels_of(raw) + self.starts[:-1], order_cols], axis=1)

    def branch_max(self, q: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(q, self.starts, axis=1)

    def greedy(self, q_row: np.ndarray) -> Tuple[np.ndarray, int]:
        """Per-branch argmax, ties to the lowest level"""
        bounds = np.append(self.starts, q_row.shape[0])
        picks = np.array([int(np.argmax(q_row[lo:hi])) for lo, hi in zip(bounds[:-1], bounds[1:])])
        return self.raw_action(picks[:-1]), int(picks[-1])

    def random(self, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
        return self.raw_action(rng.integers(self.counts)), int(rng.integers(self.order_count))


# =============================================================================
# LEARNER
# =============================================================================

def branching_select(
    state, qnet: Network, grid: ActionGrid, epsilon: float, rng: np.random.Generator
) -> Tuple[np.ndarray, int]:
    """Epsilon-greedy over the whole grid action"""
    if rng.random() < epsilon:
        return grid.random(rng)
    return grid.greedy(np.asarray(qnet(state)[0], dtype=float))


def branching_target_values(
    rewards: np.ndarray, dones: np.ndarray, next_branch_max: np.ndarray, discount: float
) -> np.ndarray:
    """y = r + discount * mean_d max_a Q'_d(s', a), shared by every branch"""
    return rewards + discount * (1.0 - dones) * np.mean(next_branch_max, axis=1)


class BranchingDqnAgent:
    def __init__(self, system: SystemConfig, agent: AgentConfig, seed: int):
        self.cfg = agent
        self.grid = ActionGrid.for_system(system, agent)
        rng = np.random.default_rng(seed)
        self.qnet = build_branching_q_network(system, agent, self.grid.out_dim, int(rng.integers(0, 2**31 - 1)))
        self.qnet_target = self.qnet.clone()
        self.optimizer = Adam(self.qnet.params, agent.Q_LR)
        self.explore_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        self.epsilon = agent.EPSILON_START
        self.updates = 0

    def networks(self) -> Dict[str, Network]:
        return {"branching_qnet": self.qnet, "branching_qnet_target": self.qnet_target}

    def optimizers(self) -> Dict[str, Adam]:
        return {"branching_qnet": self.optimizer}

    def set_progress(self, step: int, total_steps: int) -> None:
        self.epsilon = linear_epsilon(
            step, total_steps, self.cfg.EPSILON_START, self.cfg.EPSILON_END, self.cfg.EPSILON_DECAY_FRACTION
        )

    def select(self, state, explore: bool = True) -> Tuple[np.ndarray, int]:
        return branching_select(state, self.qnet, self.grid, self.epsilon if explore else 0.0, self.explore_rng)

    def update(self, batch: Batch) -> float:
        next_q = np.asarray(self.qnet_target(batch.next_states), dtype=float)
        y = branching_target_values(batch.rewards, batch.dones, self.grid.branch_max(next_q), self.cfg.DISCOUNT)

        self.qnet.params.zero_grad()
        graph = self.qnet.forward(batch.states, train=True)
        rows = np.arange(len(batch))[:, None]
        cols = self.grid.columns(batch.actions, batch.order_indices)
        taken = np.asarray(graph.output[rows, cols], dtype=float)
        loss, d_taken = mse_loss(taken, np.repeat(y[:, None], self.grid.branches, axis=1))
        d_out = np.zeros(graph.output.shape)
        d_out[rows, cols] = d_taken
        self.qnet.backward(graph, d_out)
        self.optimizer.step()
        self.qnet_target.params.soft_update_from(self.qnet.params, self.cfg.SOFT_UPDATE)
        self.updates += 1
        return loss
