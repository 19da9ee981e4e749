"""
cdeh/services/training_service.py
Hierarchical training loop: TD3 picks the continuous bundle, DQN (or an
exhaustive search) picks the decoding order, both learn from one shared
replay buffer and one sampled batch per environment step. With
ORDER_LEARNER=dqn_only a single branching Q-network picks everything
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from cdeh.agents.branching_agent import BranchingDqnAgent
from cdeh.agents.dqn_agent import DqnAgent
from cdeh.agents.replay_buffer import ReplayBuffer
from cdeh.agents.td3_agent import Td3Agent
from cdeh.core.config import ConfigBundle
from cdeh.models.mdp import Transition
from cdeh.nn.network import Network
from cdeh.nn.optim import Adam
from cdeh.repositories.artifact_repository import ArtifactRepository
from cdeh.repositories.checkpoint_repository import CheckpointRepository
from cdeh.schemas.records import TrainingLogRow
from cdeh.services import rsma_service
from cdeh.services.baseline_service import exhaustive_order, slot_delay_fn
from cdeh.services.environment_service import OffloadingEnvironment, decode_action
from cdeh.utils.exceptions import NonFiniteLossError
from cdeh.utils.provenance import build_version, config_hash

TRAINING_LOG = "training_log.csv"
CHECKPOINT_DIR = "checkpoints"


@dataclass
class EpisodeStats:
    rewards: List[float] = field(default_factory=list)
    delays: List[float] = field(default_factory=list)
    violations: int = 0
    critic1: List[float] = field(default_factory=list)
    critic2: List[float] = field(default_factory=list)
    actor: List[float] = field(default_factory=list)
    q: List[float] = field(default_factory=list)


def _mean_or_none(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


class CdehTrainer:
    def __init__(self, bundle: ConfigBundle, seed: int, out_dir: Optional[Path] = None):
        self.bundle = bundle
        self.seed = seed
        self.system, self.agent = bundle.system, bundle.agent
        self.resolved = bundle.resolved()
        self.build = build_version()
        self.config_hash = config_hash(self.resolved)

        env_seq, td3_seq, dqn_seq, replay_seq = np.random.SeedSequence([seed, 0x7A11]).spawn(4)
        self.env = OffloadingEnvironment(self.system, seed=int(env_seq.generate_state(1)[0]))
        learner = self.agent.ORDER_LEARNER
        td3_seed, dqn_seed = int(td3_seq.generate_state(1)[0]), int(dqn_seq.generate_state(1)[0])
        self.td3 = Td3Agent(self.system, self.agent, td3_seed) if learner != "dqn_only" else None
        self.dqn = DqnAgent(self.system, self.agent, dqn_seed) if learner == "dqn" else None
        self.branching = BranchingDqnAgent(self.system, self.agent, dqn_seed) if learner == "dqn_only" else None
        self.buffer = ReplayBuffer(self.agent.BUFFER_CAPACITY, np.random.default_rng(replay_seq))

        self.episode = 0
        self.total_steps = 0
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.checkpoints = CheckpointRepository(self.out_dir / CHECKPOINT_DIR) if self.out_dir else None
        self.artifacts = ArtifactRepository(self.out_dir) if self.out_dir else None

    # ===================================================================
    # STATE FOR CHECKPOINTS
    # ===================================================================

    def _learners(self) -> List[Union[Td3Agent, DqnAgent, BranchingDqnAgent]]:
        return [learner for learner in (self.td3, self.dqn, self.branching) if learner is not None]

    @property
    def q_learner(self) -> Optional[Union[DqnAgent, BranchingDqnAgent]]:
        return self.dqn if self.dqn is not None else self.branching

    def networks(self) -> Dict[str, Network]:
        return {name: net for learner in self._learners() for name, net in learner.networks().items()}

    def optimizers(self) -> Dict[str, Adam]:
        return {name: opt for learner in self._learners() for name, opt in learner.optimizers().items()}

    def _generators(self) -> Dict[str, np.random.Generator]:
        gens = {f"env.{k}": g for k, g in self.env.generators().items()}
        gens["replay"] = self.buffer.rng
        if self.td3 is not None:
            gens["td3.noise"] = self.td3.noise_rng
        if self.dqn is not None:
            gens["dqn.explore"] = self.dqn.explore_rng
        if self.branching is not None:
            gens["branching.explore"] = self.branching.explore_rng
        return gens

    def _meta(self) -> Dict[str, Any]:
        return {
            "episode": self.episode,
            "total_steps": self.total_steps,
            "order_learner": self.agent.ORDER_LEARNER,
            "td3_updates": self.td3.updates if self.td3 is not None else 0,
            "actor_updates": self.td3.actor_updates if self.td3 is not None else 0,
            "dqn_updates": self.q_learner.updates if self.q_learner is not None else 0,
            "seed": self.seed,
            "build": self.build,
            "config_hash": self.config_hash,
            "dtype": self.agent.NETWORK_DTYPE,
            "state_scaler": self.env.scaler.as_dict(),
            "rng_states": {name: g.bit_generator.state for name, g in self._generators().items()},
            "resolved_config": self.resolved,
        }

    def save_checkpoint(self, directory: Path) -> Path:
        params = {name: net.params for name, net in self.networks().items()}
        return self.checkpoints.save(directory, params, self.optimizers(), self._meta())

    def resume(self, directory: Path) -> None:
        stored = self.checkpoints.load(directory)
        params = {name: net.params for name, net in self.networks().items()}
        CheckpointRepository.restore(stored, params, self.optimizers())
        meta = stored.meta
        if meta.get("config_hash") != self.config_hash:
            logger.warning(f"Resuming from {directory} written under a different config ({meta.get('config_hash')})")
        self.episode = int(meta["episode"])
        self.total_steps = int(meta["total_steps"])
        if self.td3 is not None:
            self.td3.updates = int(meta["td3_updates"])
            self.td3.actor_updates = int(meta["actor_updates"])
        if self.q_learner is not None:
            self.q_learner.updates = int(meta["dqn_updates"])
        for name, generator in self._generators().items():
            if name in meta.get("rng_states", {}):
                generator.bit_generator.state = meta["rng_states"][name]
        logger.info(f"Resumed training at episode {self.episode} from {directory}")

    # ===================================================================
    # TRAINING LOOP
    # ===================================================================

    def _check_finite(self, values: Dict[str, Optional[float]]) -> None:
        bad = {k: v for k, v in values.items() if v is not None and not np.isfinite(v)}
        if not bad:
            return
        path = None
        if self.checkpoints is not None:
            path = self.save_checkpoint(self.checkpoints.diagnostic_dir(self.episode + 1))
        raise NonFiniteLossError(f"non-finite loss at episode {self.episode + 1}: {bad}", checkpoint=path)

    def _select(self, state) -> Tuple[np.ndarray, int]:
        if self.branching is not None:
            return self.branching.select(state)
        a_cont = self.td3.select(state)
        return a_cont, self._select_order(state, a_cont)

    def _select_order(self, state, a_cont: np.ndarray) -> int:
        if self.dqn is not None:
            return self.dqn.select(state)
        delay_fn = slot_delay_fn(self.env.channel, self.env.tasks, decode_action(a_cont, self.system), self.system)
        return rsma_service.order_to_index(exhaustive_order(self.system.N, delay_fn))

    def run_episode(self, planned_steps: int) -> EpisodeStats:
        stats = EpisodeStats()
        state = self.env.reset()
        for _ in range(self.system.T):
            if self.td3 is not None:
                self.td3.set_progress(self.total_steps / planned_steps)
            if self.q_learner is not None:
                self.q_learner.set_progress(self.total_steps, planned_steps)

            a_cont, a_disc = self._select(state)
            result = self.env.step(a_cont, a_disc)
            self.buffer.add(Transition(state, a_cont, a_disc, result.reward, result.next_state, result.done))

            if len(self.buffer) >= self.agent.BATCH_SIZE:
                batch = self.buffer.sample(self.agent.BATCH_SIZE)
                losses = self.td3.update(batch) if self.td3 is not None else None
                q_loss = self.q_learner.update(batch) if self.q_learner is not None else None
                self._check_finite({
                    "critic1": losses.critic1 if losses is not None else None,
                    "critic2": losses.critic2 if losses is not None else None,
                    "actor": losses.actor if losses is not None else None,
                    "q": q_loss,
                })
                if losses is not None:
                    stats.critic1.append(losses.critic1)
                    stats.critic2.append(losses.critic2)
                    if losses.actor is not None:
                        stats.actor.append(losses.actor)
                if q_loss is not None:
                    stats.q.append(q_loss)

            stats.rewards.append(result.reward)
            stats.delays.append(result.report.avg)
            stats.violations += result.report.deadline_violations
            state = result.next_state
            self.total_steps += 1
        return stats

    def train(self, episodes: int) -> List[TrainingLogRow]:
        """Run until `episodes` episodes are complete; returns the rows written this call"""
        planned_steps = max(1, episodes * self.system.T)
        rows: List[TrainingLogRow] = []
        started = time.perf_counter()
        while self.episode < episodes:
            stats = self.run_episode(planned_steps)
            self.episode += 1
            row = TrainingLogRow(
                build=self.build,
                config_hash=self.config_hash,
                seed=self.seed,
                episode=self.episode,
                episode_return=float(np.sum(stats.rewards)),
                mean_delay=float(np.mean(stats.delays)),
                violations=stats.violations,
                critic1_loss=_mean_or_none(stats.critic1),
                critic2_loss=_mean_or_none(stats.critic2),
                actor_loss=_mean_or_none(stats.actor),
                q_loss=_mean_or_none(stats.q),
                epsilon=self.q_learner.epsilon if self.q_learner is not None else 0.0,
                explore_noise=self.td3.explore_noise if self.td3 is not None else 0.0,
                wall_time=time.perf_counter() - started,
            )
            rows.append(row)
            if self.artifacts is not None:
                self.artifacts.append_rows(TRAINING_LOG, [row], TrainingLogRow)
            if self.episode % self.agent.LOG_EVERY == 0 or self.episode == episodes:
                logger.bind(seed=self.seed, episode=self.episode).info(
                    f"return {row.episode_return:.4f} | mean delay {row.mean_delay:.6f}s | "
                    f"violations {row.violations} | eps {row.epsilon:.3f}"
                )
            if self.checkpoints is not None and (
                self.episode % self.agent.CHECKPOINT_EVERY == 0 or self.episode == episodes
            ):
                self.save_checkpoint(self.checkpoints.episode_dir(self.episode))
        return rows


def _truncate_log(artifacts: ArtifactRepository, episode: int) -> None:
    """Drop log rows newer than the checkpoint being resumed"""
    rows = artifacts.read_rows(TRAINING_LOG, TrainingLogRow)
    kept = [row for row in rows if row.episode <= episode]
    if len(kept) != len(rows):
        artifacts.write_rows(TRAINING_LOG, kept, TrainingLogRow)


def train_cdeh(
    bundle: ConfigBundle,
    seed: int,
    out_dir: Optional[Path] = None,
    episodes: Optional[int] = None,
    resume: bool = True,
) -> CdehTrainer:
    """Train (or finish training) one seed; checkpoints and the log go under out_dir"""
    episodes = episodes or bundle.agent.EPISODES
    trainer = CdehTrainer(bundle, seed, out_dir)
    latest = trainer.checkpoints.latest() if resume and trainer.checkpoints is not None else None
    if latest is not None:
        trainer.resume(latest)
        _truncate_log(trainer.artifacts, trainer.episode)
    elif trainer.artifacts is not None and trainer.artifacts.path(TRAINING_LOG).exists():
        trainer.artifacts.path(TRAINING_LOG).unlink()
    logger.bind(seed=seed).info(f"Training CDEH for {episodes} episodes (starting at {trainer.episode})")
    trainer.train(episodes)
    return trainer
