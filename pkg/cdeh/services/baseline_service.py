"""
cdeh/services/baseline_service.py
Fixed-rule substitutions for the decoding order, IRS phases and offloading,
and policy evaluation over seeded episodes
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from loguru import logger

from cdeh.agents.branching_agent import ActionGrid
from cdeh.core.config import ConfigBundle, SystemConfig
from cdeh.models.channel import ChannelMask, ChannelState, IrsPhase
from cdeh.models.mdp import ContinuousAction
from cdeh.models.task import TaskBatch
from cdeh.models.transmission import DecodingOrder
from cdeh.nn.network import Network, build_actor, build_branching_q_network, build_q_network
from cdeh.repositories.checkpoint_repository import MANIFEST, CheckpointRepository
from cdeh.schemas.policy import PolicySpec
from cdeh.services import rsma_service
from cdeh.services.environment_service import (
    OffloadingEnvironment,
    StateScaler,
    decode_action,
    evaluate_slot,
    random_raw_action,
)
from cdeh.utils.exceptions import ConfigError

# per-slot random streams
_ACTION_STREAM, _ORDER_STREAM, _PHASE_STREAM = 0, 1, 2


def _slot_rng(seed: int, episode: int, t: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, episode, t, stream])


# =============================================================================
# DECODING ORDER
# =============================================================================

def reverse_order(n: int) -> DecodingOrder:
    """User 1 decoded last, user N first"""
    return DecodingOrder(tuple(range(n - 1, -1, -1)))


def seeded_order(n: int, seed: int) -> DecodingOrder:
    return DecodingOrder(tuple(np.random.default_rng(seed).permutation(n)))


def exhaustive_order(
    n: int, slot_delay: Callable[[DecodingOrder], float], max_users: int = rsma_service.MAX_ENUMERATED_USERS
) -> DecodingOrder:
    """Order with the smallest mean slot delay; ties keep the lowest index"""
    best, best_delay = None, np.inf
    for order in rsma_service.enumerate_orders(n, max_users):
        delay = slot_delay(order)
        if delay < best_delay:
            best, best_delay = order, delay
    return best


def slot_delay_fn(
    cs: ChannelState, tasks: TaskBatch, action: ContinuousAction, cfg: SystemConfig,
    access_scheme: str = "proposed_rsma", mask: ChannelMask = ChannelMask.NONE,
) -> Callable[[DecodingOrder], float]:
    return lambda order: evaluate_slot(cs, tasks, action, order, cfg, access_scheme, mask).report.avg


def apply_order_policy(
    spec: PolicySpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
    fixed: Optional[DecodingOrder] = None,
    learned_index: Optional[int] = None,
    slot_delay: Optional[Callable[[DecodingOrder], float]] = None,
) -> DecodingOrder:
    policy = spec.order_policy
    if policy == "reverse":
        return reverse_order(n)
    if policy == "sequential":
        return DecodingOrder.identity(n)
    if policy == "fixed":
        if fixed is None:
            raise ConfigError("fixed decoding order requested without a seeded order")
        return fixed
    if policy == "random":
        return DecodingOrder(tuple((rng or np.random.default_rng()).permutation(n)))
    if policy == "exhaustive":
        if slot_delay is None:
            raise ConfigError("exhaustive decoding order needs a slot evaluator")
        return exhaustive_order(n, slot_delay)
    if learned_index is None:
        raise ConfigError("learned decoding order requested without a Q-network")
    return rsma_service.index_to_order(learned_index, n)


# =============================================================================
# IRS PHASE
# =============================================================================

def seeded_phase(k: int, seed: int) -> IrsPhase:
    return IrsPhase(np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=k))


def apply_phase_policy(
    spec: PolicySpec,
    k: int,
    rng: Optional[np.random.Generator] = None,
    fixed: Optional[IrsPhase] = None,
    learned: Optional[IrsPhase] = None,
) -> Tuple[IrsPhase, ChannelMask]:
    policy = spec.phase_policy
    if policy == "random":
        return IrsPhase((rng or np.random.default_rng()).uniform(0.0, 2.0 * np.pi, size=k)), ChannelMask.NONE
    if policy == "fixed":
        if fixed is None:
            raise ConfigError("fixed IRS phase requested without a seeded phase")
        return fixed, ChannelMask.NONE
    return (learned if learned is not None else IrsPhase.zeros(k)), spec.mask


def apply_offload_policy(spec: PolicySpec, action: ContinuousAction) -> ContinuousAction:
    if spec.offload_policy == "full_local":
        return replace(action, beta=np.zeros_like(action.beta))
    if spec.offload_policy == "full_offload":
        return replace(action, beta=np.ones_like(action.beta))
    return action


# =============================================================================
# EVALUATION
# =============================================================================

@dataclass
class LearnedPolicy:
    actor: Optional[Network]
    qnet: Optional[Network]
    scaler: StateScaler
    branching: Optional[Network] = None
    grid: Optional[ActionGrid] = None


def resolve_checkpoint(checkpoint: Path) -> Path:
    """Accept a checkpoint directory, a checkpoint root or a training output directory"""
    path = Path(checkpoint)
    if (path / MANIFEST).is_file():
        return path
    for root in (path / "checkpoints", path):
        latest = CheckpointRepository(root).latest()
        if latest is not None:
            return latest
    raise ConfigError(f"no checkpoint found under {path}")


def load_learned_policy(bundle: ConfigBundle, checkpoint: Path) -> LearnedPolicy:
    path = resolve_checkpoint(checkpoint)
    stored = CheckpointRepository(path.parent).load(path)
    system, agent = bundle.system, bundle.agent
    actor, qnet, branching, grid = None, None, None, None
    if "actor" in stored.networks:
        actor = build_actor(system, agent, seed=0)
        actor.params.load_arrays(stored.networks["actor"])
    if "qnet" in stored.networks:
        qnet = build_q_network(system, agent, seed=0)
        qnet.params.load_arrays(stored.networks["qnet"])
    if "branching_qnet" in stored.networks:
        grid = ActionGrid.for_system(system, agent)
        branching = build_branching_q_network(system, agent, grid.out_dim, seed=0)
        branching.params.load_arrays(stored.networks["branching_qnet"])
    scaler = stored.meta.get("state_scaler")
    scaler = StateScaler.from_dict(scaler) if scaler else StateScaler.identity()
    return LearnedPolicy(actor, qnet, scaler, branching, grid)


@dataclass
class SlotRecord:
    episode: int
    t: int
    user_delays: np.ndarray
    reward: float
    violations: int
    order_index: int


@dataclass
class EvaluationResult:
    policy: str
    seed: int
    episodes: int
    episode_delays: np.ndarray
    violation_rate: float
    slots: List[SlotRecord] = field(default_factory=list)

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.episode_delays))

    @property
    def std_delay(self) -> float:
        return float(np.std(self.episode_delays))


def evaluate_policy(
    spec: PolicySpec,
    bundle: ConfigBundle,
    episodes: int,
    seed: int,
    checkpoint: Optional[Path] = None,
    learned: Optional[LearnedPolicy] = None,
    keep_slots: bool = False,
) -> EvaluationResult:
    """
    Mean/std over episodes of the per-episode average delay. The same
    seed reproduces the same placements, fading, tasks and random substitutions.
    """
    cfg = bundle.system
    if spec.needs_checkpoint and learned is None:
        if checkpoint is None:
            raise ConfigError(f"policy {spec.name!r} uses learned components and needs --checkpoint")
        learned = load_learned_policy(bundle, checkpoint)
    if spec.action_source == "actor" and learned is not None and learned.actor is None:
        raise ConfigError(f"policy {spec.name!r} needs an actor but the checkpoint was trained without TD3")
    if spec.action_source == "dqn_only" and (learned is None or learned.branching is None):
        raise ConfigError(f"policy {spec.name!r} needs a checkpoint trained with ORDER_LEARNER=dqn_only")

    scaler = learned.scaler if learned is not None else StateScaler.identity()
    env = OffloadingEnvironment(cfg, seed=seed, scaler=scaler, access_scheme=spec.access_scheme)
    fixed_seed = bundle.experiment.FIXED_POLICY_SEED
    fixed_order = seeded_order(cfg.N, fixed_seed)
    fixed_phase = seeded_phase(cfg.K, fixed_seed)

    episode_delays = np.zeros(episodes)
    violations = 0
    slots: List[SlotRecord] = []
    for episode in range(episodes):
        state = env.reset()
        delays = []
        for t in range(cfg.T):
            learned_index = None
            if spec.action_source == "actor":
                raw = np.asarray(learned.actor(state)[0], dtype=float)
            elif spec.action_source == "dqn_only":
                raw, learned_index = learned.grid.greedy(np.asarray(learned.branching(state)[0], dtype=float))
            else:
                raw = random_raw_action(cfg, _slot_rng(seed, episode, t, _ACTION_STREAM))
            action = apply_offload_policy(spec, decode_action(raw, cfg))
            phase, mask = apply_phase_policy(
                spec, cfg.K, _slot_rng(seed, episode, t, _PHASE_STREAM), fixed_phase, IrsPhase(action.theta)
            )
            action = replace(action, theta=phase.theta)

            if spec.order_policy == "learned" and learned_index is None and learned.qnet is not None:
                learned_index = int(np.argmax(learned.qnet(state)[0]))
            delay_fn = slot_delay_fn(env.channel, env.tasks, action, cfg, spec.access_scheme, mask)
            if spec.order_policy == "learned" and learned_index is None:
                # checkpoint trained with the exhaustive order learner
                order = exhaustive_order(cfg.N, delay_fn)
            else:
                order = apply_order_policy(
                    spec, cfg.N, _slot_rng(seed, episode, t, _ORDER_STREAM), fixed_order, learned_index, delay_fn
                )

            result = env.step_action(action, order, mask)
            delays.append(result.report.avg)
            violations += result.report.deadline_violations
            if keep_slots:
                slots.append(SlotRecord(episode, t, result.report.t_total, result.reward,
                                        result.report.deadline_violations, result.order_index))
            state = result.next_state
        episode_delays[episode] = float(np.mean(delays))

    outcome = EvaluationResult(
        policy=spec.name,
        seed=seed,
        episodes=episodes,
        episode_delays=episode_delays,
        violation_rate=violations / (episodes * cfg.T * cfg.N),
        slots=slots,
    )
    logger.bind(policy=spec.name, seed=seed).info(
        f"Evaluated {spec.name}: mean delay {outcome.mean_delay:.6f}s over {episodes} episodes"
    )
    return outcome
