"""
cdeh/services/mec_service.py
Task generation and the three-part delay model:
local compute, offload transmission and edge compute, combined by max
"""

from __future__ import annotations

from typing import Literal, Optional, Tuple

import numpy as np

from cdeh.core.config import SystemConfig
from cdeh.models.task import DelayReport, TaskBatch
from cdeh.models.transmission import RatePair
from cdeh.utils.exceptions import DomainError, StructuralError

RhoPolicy = Literal["proportional", "equal", "action"]


def sample_tasks(cfg: SystemConfig, rng: np.random.Generator) -> TaskBatch:
    low, high = cfg.TASK_BITS_RANGE
    return TaskBatch(bits=rng.uniform(low, high, size=cfg.N))


def _transfer_time(volume: np.ndarray, rate: np.ndarray, delay_cap: float) -> np.ndarray:
    """volume / rate with 0/0 := 0 and volume/0 := delay_cap"""
    out = np.zeros_like(volume, dtype=float)
    positive = volume > 0
    feasible = positive & (rate > 0)
    out[feasible] = volume[feasible] / rate[feasible]
    out[positive & ~(rate > 0)] = delay_cap
    return out


# =============================================================================
# DELAY COMPONENTS
# =============================================================================

def local_delay(bits: np.ndarray, beta: np.ndarray, f_gu, c_gu) -> np.ndarray:
    if np.any(np.asarray(f_gu) <= 0):
        raise DomainError("local CPU frequency must be positive")
    return (1.0 - beta) * bits * c_gu / f_gu


def offload_volumes(bits: np.ndarray, beta: np.ndarray, eta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    offloaded = beta * bits
    pub = offloaded * eta
    return pub, offloaded - pub


def trans_delay(pub_bits: np.ndarray, pri_bits: np.ndarray, rate_pair: RatePair, delay_cap: float) -> np.ndarray:
    if np.any(rate_pair.r_pub < 0) or np.any(rate_pair.r_pri < 0):
        raise DomainError("rates must be non-negative")
    return _transfer_time(pub_bits, rate_pair.r_pub, delay_cap) + _transfer_time(pri_bits, rate_pair.r_pri, delay_cap)


def mec_delay(
    bits: np.ndarray, beta: np.ndarray, rho_mec: np.ndarray, f_mec: float, c_mec: float, delay_cap: float
) -> np.ndarray:
    """Edge compute time; shares are validated by OffloadDecision"""
    return _transfer_time(beta * bits * c_mec, rho_mec * f_mec, delay_cap)


def edge_shares(
    bits: np.ndarray, beta: np.ndarray, policy: RhoPolicy, requested: Optional[np.ndarray] = None
) -> np.ndarray:
    """Edge CPU share per user; shares never sum above one"""
    n = bits.shape[0]
    if policy == "equal":
        return np.full(n, 1.0 / n)
    if policy == "action":
        if requested is None or requested.shape != (n,):
            raise StructuralError("rho policy 'action' needs one requested share per user")
        return requested / max(1.0, float(np.sum(requested)))
    work = beta * bits
    total = float(np.sum(work))
    if total <= 0:
        return np.full(n, 1.0 / n)
    return work / total


def total_delay(t_local: np.ndarray, t_trans: np.ndarray, t_mec: np.ndarray, slot_duration: float) -> DelayReport:
    if not (t_local.shape == t_trans.shape == t_mec.shape):
        raise StructuralError("delay components must have the same length")
    t_total = np.maximum(t_local, t_trans + t_mec)
    return DelayReport(
        t_local=t_local,
        t_trans=t_trans,
        t_mec=t_mec,
        t_total=t_total,
        avg=float(np.mean(t_total)),
        deadline_violations=int(np.sum(t_total > slot_duration)),
    )
