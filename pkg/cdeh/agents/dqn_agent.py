"""
cdeh/agents/dqn_agent.py
Q-network over the N! public-message decoding orders
"""

from __future__ import annotations

import math
from typing import Dict

import numpy as np

from cdeh.agents.replay_buffer import Batch
from cdeh.core.config import AgentConfig, SystemConfig
from cdeh.nn.layers import mse_loss
from cdeh.nn.network import Network, build_q_network
from cdeh.nn.optim import Adam


def dqn_select(state, qnet: Network, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties resolve to the lowest index"""
    if rng.random() < epsilon:
        return int(rng.integers(qnet.out_dim))
    return int(np.argmax(qnet(state)[0]))


def dqn_target_values(rewards: np.ndarray, dones: np.ndarray, next_q: np.ndarray, discount: float) -> np.ndarray:
    """y = r + discount * max_a Q'(s', a), no bootstrap on terminal transitions"""
    return rewards + discount * (1.0 - dones) * np.max(next_q, axis=1)


def linear_epsilon(step: int, total_steps: int, start: float, end: float, decay_fraction: float) -> float:
    decay_steps = max(1.0, decay_fraction * total_steps)
    return float(start + (end - start) * min(1.0, step / decay_steps))


class DqnAgent:
    def __init__(self, system: SystemConfig, agent: AgentConfig, seed: int):
        self.cfg = agent
        self.order_count = math.factorial(system.N)
        rng = np.random.default_rng(seed)
        self.qnet = build_q_network(system, agent, int(rng.integers(0, 2**31 - 1)))
        self.qnet_target = self.qnet.clone()
        self.optimizer = Adam(self.qnet.params, agent.Q_LR)
        self.explore_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        self.epsilon = agent.EPSILON_START
        self.updates = 0

    def networks(self) -> Dict[str, Network]:
        return {"qnet": self.qnet, "qnet_target": self.qnet_target}

    def optimizers(self) -> Dict[str, Adam]:
        return {"qnet": self.optimizer}

    def set_progress(self, step: int, total_steps: int) -> None:
        self.epsilon = linear_epsilon(
            step, total_steps, self.cfg.EPSILON_START, self.cfg.EPSILON_END, self.cfg.EPSILON_DECAY_FRACTION
        )

    def select(self, state, explore: bool = True) -> int:
        return dqn_select(state, self.qnet, self.epsilon if explore else 0.0, self.explore_rng)

    def update(self, batch: Batch) -> float:
        next_q = np.asarray(self.qnet_target(batch.next_states), dtype=float)
        y = dqn_target_values(batch.rewards, batch.dones, next_q, self.cfg.DISCOUNT)

        self.qnet.params.zero_grad()
        graph = self.qnet.forward(batch.states, train=True)
        rows = np.arange(len(batch))
        taken = np.asarray(graph.output[rows, batch.order_indices], dtype=float)
        loss, d_taken = mse_loss(taken, y)
        d_out = np.zeros(graph.output.shape)
        d_out[rows, batch.order_indices] = d_taken
        self.qnet.backward(graph, d_out)
        self.optimizer.step()
        self.qnet_target.params.soft_update_from(self.qnet.params, self.cfg.SOFT_UPDATE)
        self.updates += 1
        return loss
