"""
cdeh/agents/td3_agent.py
Twin-critic delayed deterministic policy gradient over the continuous bundle
(offloading, power split, IRS phases, receive combiners)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from cdeh.agents.replay_buffer import Batch
from cdeh.core.config import AgentConfig, SystemConfig
from cdeh.nn.layers import mse_loss
from cdeh.nn.network import Network, build_actor, build_critic
from cdeh.nn.optim import Adam


# =============================================================================
# PURE PIECES
# =============================================================================

def td3_select(state, actor: Network, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """clamp(actor(s) + N(0, sigma), -1, 1) for one state"""
    mean = np.asarray(actor(state)[0], dtype=float)
    noise = rng.normal(0.0, sigma, size=mean.shape) if sigma > 0 else 0.0
    return np.clip(mean + noise, -1.0, 1.0)


def smoothed_target_actions(
    actor_target: Network, next_states, sigma: float, clip: float, rng: np.random.Generator
) -> np.ndarray:
    actions = np.asarray(actor_target(next_states), dtype=float)
    noise = np.clip(rng.normal(0.0, sigma, size=actions.shape), -clip, clip) if sigma > 0 else 0.0
    return np.clip(actions + noise, -1.0, 1.0)


def critic_target_values(
    rewards: np.ndarray, dones: np.ndarray, q1: np.ndarray, q2: np.ndarray, discount: float
) -> np.ndarray:
    """y = r + discount * min(Q1', Q2'), no bootstrap on terminal transitions"""
    return rewards + discount * (1.0 - dones) * np.minimum(q1, q2)


# =============================================================================
# AGENT
# =============================================================================

@dataclass
class Td3Losses:
    critic1: float
    critic2: float
    actor: Optional[float] = None


class Td3Agent:
    def __init__(self, system: SystemConfig, agent: AgentConfig, seed: int):
        self.cfg = agent
        rng = np.random.default_rng(seed)
        net_seeds = rng.integers(0, 2**31 - 1, size=3)
        self.actor = build_actor(system, agent, int(net_seeds[0]))
        self.critic1 = build_critic(system, agent, int(net_seeds[1]))
        self.critic2 = build_critic(system, agent, int(net_seeds[2]))
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.actor_opt = Adam(self.actor.params, agent.ACTOR_LR)
        self.critic1_opt = Adam(self.critic1.params, agent.CRITIC_LR)
        self.critic2_opt = Adam(self.critic2.params, agent.CRITIC_LR)
        self.noise_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        self.explore_noise = agent.EXPLORE_NOISE_START
        self.updates = 0
        self.actor_updates = 0

    def networks(self) -> Dict[str, Network]:
        return {
            "actor": self.actor,
            "actor_target": self.actor_target,
            "critic1": self.critic1,
            "critic1_target": self.critic1_target,
            "critic2": self.critic2,
            "critic2_target": self.critic2_target,
        }

    def optimizers(self) -> Dict[str, Adam]:
        return {"actor": self.actor_opt, "critic1": self.critic1_opt, "critic2": self.critic2_opt}

    def set_progress(self, fraction: float) -> None:
        """Linear decay of exploration noise over training"""
        fraction = min(max(fraction, 0.0), 1.0)
        start, end = self.cfg.EXPLORE_NOISE_START, self.cfg.EXPLORE_NOISE_END
        self.explore_noise = start + (end - start) * fraction

    def select(self, state, explore: bool = True) -> np.ndarray:
        return td3_select(state, self.actor, self.explore_noise if explore else 0.0, self.noise_rng)

    def critic_targets(self, batch: Batch) -> np.ndarray:
        next_actions = smoothed_target_actions(
            self.actor_target, batch.next_states, self.cfg.TARGET_NOISE, self.cfg.TARGET_NOISE_CLIP, self.noise_rng
        )
        q1 = np.asarray(self.critic1_target(batch.next_states, next_actions)[:, 0], dtype=float)
        q2 = np.asarray(self.critic2_target(batch.next_states, next_actions)[:, 0], dtype=float)
        return critic_target_values(batch.rewards, batch.dones, q1, q2, self.cfg.DISCOUNT)

    def update(self, batch: Batch) -> Td3Losses:
        """Critics every call; actor and all targets every POLICY_DELAY-th call"""
        y = self.critic_targets(batch)
        losses = []
        for critic, optimizer in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            critic.params.zero_grad()
            graph = critic.forward(batch.states, batch.actions, train=True)
            loss, d_pred = mse_loss(np.asarray(graph.output[:, 0], dtype=float), y)
            critic.backward(graph, d_pred[:, None])
            optimizer.step()
            losses.append(loss)
        self.updates += 1

        actor_loss = None
        if self.updates % self.cfg.POLICY_DELAY == 0:
            actor_loss = self._update_actor(batch)
            tau = self.cfg.SOFT_UPDATE
            self.actor_target.params.soft_update_from(self.actor.params, tau)
            self.critic1_target.params.soft_update_from(self.critic1.params, tau)
            self.critic2_target.params.soft_update_from(self.critic2.params, tau)
            self.actor_updates += 1
        return Td3Losses(critic1=losses[0], critic2=losses[1], actor=actor_loss)

    def _update_actor(self, batch: Batch) -> float:
        """Ascend Q1(s, actor(s))"""
        self.actor.params.zero_grad()
        actor_graph = self.actor.forward(batch.states, train=True)
        running = self.critic1.params.buffer_snapshot()
        critic_graph = self.critic1.forward(batch.states, actor_graph.output, train=True)
        # batch statistics for the gradient, running statistics left to the critic step
        self.critic1.params.restore_buffers(running)
        q = np.asarray(critic_graph.output[:, 0], dtype=float)
        d_q = np.full((q.shape[0], 1), -1.0 / q.shape[0])
        d_action = self.critic1.backward(critic_graph, d_q)["action"]
        self.actor.backward(actor_graph, d_action)
        self.actor_opt.step()
        # the critic only relayed gradients here
        self.critic1.params.zero_grad()
        return float(-np.mean(q))
