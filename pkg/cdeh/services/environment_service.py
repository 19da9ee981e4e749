"""
cdeh/services/environment_service.py
The offloading MDP: CSI -> state tensors, raw actor output -> feasible actions,
one slot of channel -> SINR -> rate -> delay, and the shared reward
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from cdeh.core.config import SystemConfig
from cdeh.models.channel import ChannelMask, ChannelState, IrsPhase
from cdeh.models.mdp import ContinuousAction, DiscreteAction, StateTensors
from cdeh.models.task import DelayReport, OffloadDecision, TaskBatch
from cdeh.models.transmission import Beamformer, DecodingOrder, RatePair, TxAllocation
from cdeh.schemas.policy import AccessScheme
from cdeh.services import channel_service, mec_service, rsma_service
from cdeh.utils.exceptions import StructuralError


# =============================================================================
# STATE
# =============================================================================

@dataclass(frozen=True)
class StateScaler:
    """Per-tensor, per-plane RMS of pre-sampled channel draws"""

    dir: Tuple[float, float]
    irs: Tuple[float, float]
    g: Tuple[float, float]

    @classmethod
    def identity(cls) -> "StateScaler":
        return cls((1.0, 1.0), (1.0, 1.0), (1.0, 1.0))

    @classmethod
    def fit(cls, cfg: SystemConfig, seed: Union[int, np.random.SeedSequence]) -> "StateScaler":
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence([int(seed), 0x5CA1E])
        placement_seq, fading_seq = seq.spawn(2)
        placement = np.random.default_rng(placement_seq)
        fading = channel_service.FadingGenerators.from_seed(fading_seq)
        sums = {"dir": np.zeros(2), "irs": np.zeros(2), "g": np.zeros(2)}
        counts = {"dir": 0, "irs": 0, "g": 0}
        for _ in range(cfg.STATE_SCALE_DRAWS):
            cs = channel_service.sample_channels(cfg, channel_service.place_users(cfg, placement), fading)
            for name, matrix in (("dir", cs.h_dir), ("irs", cs.h_irs), ("g", cs.g)):
                sums[name] += (np.sum(matrix.real**2), np.sum(matrix.imag**2))
                counts[name] += matrix.size

        def rms(name: str) -> Tuple[float, float]:
            values = np.sqrt(sums[name] / counts[name])
            # an identically-zero plane keeps unit scale
            return tuple(float(v) if v > 0 else 1.0 for v in values)

        return cls(rms("dir"), rms("irs"), rms("g"))

    def as_dict(self) -> Dict[str, list]:
        return {"dir": list(self.dir), "irs": list(self.irs), "g": list(self.g)}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "StateScaler":
        return cls(tuple(data["dir"]), tuple(data["irs"]), tuple(data["g"]))


def _split(matrix: np.ndarray, scale: Tuple[float, float]) -> np.ndarray:
    return np.stack([matrix.real / scale[0], matrix.imag / scale[1]])


def build_state(cs: ChannelState, scaler: Optional[StateScaler] = None) -> StateTensors:
    scaler = scaler or StateScaler.identity()
    return StateTensors(
        s_dir=_split(cs.h_dir, scaler.dir),
        s_irs=_split(cs.h_irs, scaler.irs),
        s_g=_split(cs.g, scaler.g),
    )


def reconstruct(state: StateTensors, scaler: Optional[StateScaler] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of build_state: (h_dir, h_irs, g)"""
    scaler = scaler or StateScaler.identity()

    def join(t: np.ndarray, scale: Tuple[float, float]) -> np.ndarray:
        return t[0] * scale[0] + 1j * (t[1] * scale[1])

    return join(state.s_dir, scaler.dir), join(state.s_irs, scaler.irs), join(state.s_g, scaler.g)


# =============================================================================
# ACTIONS
# =============================================================================

def _unit_columns(w: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(w, axis=0)
    fallback = np.full(w.shape[0], 1.0 / np.sqrt(w.shape[0]), dtype=complex)
    out = w / np.where(norms > 0, norms, 1.0)[None, :]
    out[:, norms == 0] = fallback[:, None]
    return out


def decode_action(raw: np.ndarray, cfg: SystemConfig) -> ContinuousAction:
    """
    Layout: [beta(N), eta(N), gamma(N), theta(K), Re W(M*N), Im W(M*N), power(N)?, rho(N)?]
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (cfg.action_dim,):
        raise StructuralError(f"raw action must have length {cfg.action_dim}, got shape {raw.shape}")
    n, k, mn = cfg.N, cfg.K, cfg.M * cfg.N
    unit = (np.clip(raw, -1.0, 1.0) + 1.0) / 2.0

    cursor = 0

    def take(length: int) -> np.ndarray:
        nonlocal cursor
        part = unit[cursor:cursor + length]
        cursor += length
        return part

    beta, eta, gamma = take(n), take(n), take(n)
    theta = np.mod(2.0 * np.pi * take(k), 2.0 * np.pi)
    start = cursor
    w_re = raw[start:start + mn].reshape(cfg.M, cfg.N)
    w_im = raw[start + mn:start + 2 * mn].reshape(cfg.M, cfg.N)
    cursor += 2 * mn
    power_ratio = take(n) if cfg.POWER_ACTION else None
    rho_share = take(n) if cfg.RHO_POLICY == "action" else None
    return ContinuousAction(
        raw=raw,
        beta=beta,
        eta=eta,
        gamma=gamma,
        theta=theta,
        w=_unit_columns(w_re + 1j * w_im),
        power_ratio=power_ratio,
        rho_share=rho_share,
    )


def random_raw_action(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform raw action; theta is drawn last so every other component is
    identical across K for the same generator state.
    """
    n, mn = cfg.N, cfg.M * cfg.N
    head = rng.uniform(-1.0, 1.0, size=3 * n)
    w = rng.uniform(-1.0, 1.0, size=2 * mn)
    power = rng.uniform(-1.0, 1.0, size=n) if cfg.POWER_ACTION else np.empty(0)
    rho = rng.uniform(-1.0, 1.0, size=n) if cfg.RHO_POLICY == "action" else np.empty(0)
    theta = rng.uniform(-1.0, 1.0, size=cfg.K)
    return np.concatenate([head, theta, w, power, rho])


# =============================================================================
# ONE SLOT
# =============================================================================

@dataclass(frozen=True)
class SlotOutcome:
    report: DelayReport
    reward: float
    rates: RatePair


def slot_reward(report: DelayReport, cfg: SystemConfig) -> float:
    """-(mean delay) - lambda_pen * violating fraction"""
    return -report.avg - cfg.DEADLINE_PENALTY * report.deadline_violations / report.n


def evaluate_slot(
    cs: ChannelState,
    tasks: TaskBatch,
    action: ContinuousAction,
    order: DecodingOrder,
    cfg: SystemConfig,
    access_scheme: AccessScheme = "proposed_rsma",
    mask: ChannelMask = ChannelMask.NONE,
) -> SlotOutcome:
    h = channel_service.composite_channel(cs.masked(mask), IrsPhase(action.theta))
    w = Beamformer(action.w)
    p = cfg.P_MAX * (action.power_ratio if action.power_ratio is not None else np.ones(cfg.N))
    eta, gamma = action.eta, action.gamma
    noise, bandwidth = cfg.noise_power, cfg.BANDWIDTH

    if access_scheme == "noma":
        eta = np.ones(cfg.N)
        # single message per user: everything rides on the SIC-decoded stream
        rate_pair = rsma_service.rates(rsma_service.noma_sinr(h, w, p, order, noise), np.zeros(cfg.N), bandwidth)
    elif access_scheme == "sic_rsma":
        rate_pair = rsma_service.sic_rsma_rates(h, w, TxAllocation(p, gamma), None, noise, bandwidth)
    else:
        rate_pair = rsma_service.rsma_rates(h, w, TxAllocation(p, gamma), order, noise, bandwidth)

    bits, beta, cap = tasks.bits, action.beta, cfg.delay_cap
    shares = mec_service.edge_shares(bits, beta, cfg.RHO_POLICY, action.rho_share)
    decision = OffloadDecision(beta=beta, eta=eta, rho_mec=shares)
    pub, pri = mec_service.offload_volumes(bits, decision.beta, decision.eta)
    report = mec_service.total_delay(
        mec_service.local_delay(bits, beta, cfg.F_GU, cfg.C_GU),
        mec_service.trans_delay(pub, pri, rate_pair, cap),
        mec_service.mec_delay(bits, beta, decision.rho_mec, cfg.F_MEC, cfg.C_MEC, cap),
        cfg.SLOT_DURATION,
    )
    return SlotOutcome(report=report, reward=slot_reward(report, cfg), rates=rate_pair)


def discrete_action(a_disc: Union[int, DecodingOrder, DiscreteAction], n: int) -> DiscreteAction:
    if isinstance(a_disc, DiscreteAction):
        return a_disc
    if isinstance(a_disc, DecodingOrder):
        return DiscreteAction(rsma_service.order_to_index(a_disc), a_disc)
    return DiscreteAction(int(a_disc), rsma_service.index_to_order(int(a_disc), n))


def step(
    cs: ChannelState,
    tasks: TaskBatch,
    a_cont: np.ndarray,
    a_disc: Union[int, DecodingOrder, DiscreteAction],
    cfg: SystemConfig,
    fading: Union[np.random.Generator, channel_service.FadingGenerators],
    task_rng: np.random.Generator,
    access_scheme: AccessScheme = "proposed_rsma",
) -> Tuple[DelayReport, float, ChannelState, TaskBatch]:
    """One slot, then the next slot's channel (same placement) and tasks"""
    order = discrete_action(a_disc, cfg.N).order
    outcome = evaluate_slot(cs, tasks, decode_action(a_cont, cfg), order, cfg, access_scheme)
    next_cs = channel_service.sample_channels(cfg, cs.gu_positions, fading)
    return outcome.report, outcome.reward, next_cs, mec_service.sample_tasks(cfg, task_rng)


# =============================================================================
# EPISODIC WRAPPER
# =============================================================================

@dataclass
class StepResult:
    report: DelayReport
    reward: float
    state: StateTensors
    next_state: StateTensors
    done: bool
    discrete: DiscreteAction

    @property
    def order_index(self) -> int:
        return self.discrete.order_index


@dataclass
class OffloadingEnvironment:
    """
    Episodes of T slots with a fixed GU placement; fading and tasks are
    re-drawn every slot. Random streams are independent per link.
    """

    cfg: SystemConfig
    seed: int
    scaler: Optional[StateScaler] = None
    access_scheme: AccessScheme = "proposed_rsma"
    t: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        placement, fading, tasks, scaler = np.random.SeedSequence(self.seed).spawn(4)
        self._placement_rng = np.random.default_rng(placement)
        self._fading = channel_service.FadingGenerators.from_seed(fading)
        self._task_rng = np.random.default_rng(tasks)
        if self.scaler is None:
            self.scaler = StateScaler.fit(self.cfg, scaler)
        self.channel: Optional[ChannelState] = None
        self.tasks: Optional[TaskBatch] = None

    def generators(self) -> Dict[str, np.random.Generator]:
        return {
            "placement": self._placement_rng,
            "fading.direct": self._fading.direct,
            "fading.reflected": self._fading.reflected,
            "fading.irs_bs": self._fading.irs_bs,
            "tasks": self._task_rng,
        }

    def reset(self) -> StateTensors:
        positions = channel_service.place_users(self.cfg, self._placement_rng)
        self.channel = channel_service.sample_channels(self.cfg, positions, self._fading)
        self.tasks = mec_service.sample_tasks(self.cfg, self._task_rng)
        self.t = 0
        return self.state()

    def state(self) -> StateTensors:
        if self.channel is None:
            raise StructuralError("environment used before reset()")
        return build_state(self.channel, self.scaler)

    def step(self, a_cont: np.ndarray, a_disc: Union[int, DecodingOrder, DiscreteAction]) -> StepResult:
        return self.step_action(decode_action(a_cont, self.cfg), discrete_action(a_disc, self.cfg.N).order)

    def step_action(
        self, action: ContinuousAction, order: DecodingOrder, mask: ChannelMask = ChannelMask.NONE
    ) -> StepResult:
        """Step with an already-decoded (possibly substituted) action"""
        if self.channel is None or self.tasks is None:
            raise StructuralError("environment used before reset()")
        state = self.state()
        outcome = evaluate_slot(self.channel, self.tasks, action, order, self.cfg, self.access_scheme, mask)
        self.channel = channel_service.sample_channels(self.cfg, self.channel.gu_positions, self._fading)
        self.tasks = mec_service.sample_tasks(self.cfg, self._task_rng)
        self.t += 1
        return StepResult(
            report=outcome.report,
            reward=outcome.reward,
            state=state,
            next_state=self.state(),
            done=self.t >= self.cfg.T,
            discrete=discrete_action(order, self.cfg.N),
        )
