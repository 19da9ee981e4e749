"""
cdeh/services/rsma_service.py
SINRs and achievable rates for partial-decoding uplink RSMA,
plus the NOMA and full-SIC RSMA reference schemes
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from cdeh.models.transmission import Beamformer, DecodingOrder, RatePair, TxAllocation
from cdeh.utils.exceptions import CapabilityError, StructuralError

SINR_CAP = 1e12
MAX_ENUMERATED_USERS = 7


def _cross_gains(h: np.ndarray, w: Beamformer) -> np.ndarray:
    """gains[n, l] = |w_n^H H_l|^2"""
    if h.ndim != 2 or h.shape != w.w.shape:
        raise StructuralError(f"channel {h.shape} and beamformer {w.w.shape} must both be M x N")
    return np.abs(w.w.conj().T @ h) ** 2


def _check_users(n: int, *vectors: np.ndarray) -> None:
    for v in vectors:
        if v.shape != (n,):
            raise StructuralError(f"expected per-user vectors of length {n}, got {v.shape}")


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    return np.minimum(numerator / denominator, SINR_CAP)


# =============================================================================
# PROPOSED SCHEME: all public messages first (order pi), then privates
# =============================================================================

def sinr_public(
    h: np.ndarray, w: Beamformer, alloc: TxAllocation, order: DecodingOrder, noise_power: float
) -> np.ndarray:
    gains = _cross_gains(h, w)
    n = gains.shape[0]
    _check_users(n, alloc.p)
    if order.n != n:
        raise StructuralError(f"decoding order covers {order.n} users, channel has {n}")
    positions = np.asarray(order.positions)
    decoded_later = positions[None, :] > positions[:, None]
    public_interference = np.sum(gains * decoded_later * alloc.p_pub[None, :], axis=1)
    # own private power is included (l = n)
    private_interference = gains @ alloc.p_pri
    noise = w.column_norms_sq * noise_power
    return _ratio(np.diag(gains) * alloc.p_pub, public_interference + private_interference + noise)


def sinr_private(h: np.ndarray, w: Beamformer, alloc: TxAllocation, noise_power: float) -> np.ndarray:
    gains = _cross_gains(h, w)
    n = gains.shape[0]
    _check_users(n, alloc.p)
    others = ~np.eye(n, dtype=bool)
    interference = np.sum(gains * others * alloc.p_pri[None, :], axis=1)
    noise = w.column_norms_sq * noise_power
    return _ratio(np.diag(gains) * alloc.p_pri, interference + noise)


def rates(rho_pub: np.ndarray, rho_pri: np.ndarray, bandwidth: float) -> RatePair:
    rho_pub = np.maximum(np.asarray(rho_pub, dtype=float), 0.0)
    rho_pri = np.maximum(np.asarray(rho_pri, dtype=float), 0.0)
    return RatePair(
        r_pub=bandwidth * np.log2(1.0 + rho_pub),
        r_pri=bandwidth * np.log2(1.0 + rho_pri),
        rho_pub=rho_pub,
        rho_pri=rho_pri,
    )


def rsma_rates(
    h: np.ndarray, w: Beamformer, alloc: TxAllocation, order: DecodingOrder, noise_power: float, bandwidth: float
) -> RatePair:
    return rates(sinr_public(h, w, alloc, order, noise_power), sinr_private(h, w, alloc, noise_power), bandwidth)


# =============================================================================
# REFERENCE SCHEMES
# =============================================================================

def noma_sinr(h: np.ndarray, w: Beamformer, p: np.ndarray, order: DecodingOrder, noise_power: float) -> np.ndarray:
    """Single-message SIC; users decoded later interfere"""
    gains = _cross_gains(h, w)
    n = gains.shape[0]
    _check_users(n, p)
    positions = np.asarray(order.positions)
    decoded_later = positions[None, :] > positions[:, None]
    interference = np.sum(gains * decoded_later * p[None, :], axis=1)
    return _ratio(np.diag(gains) * p, interference + w.column_norms_sq * noise_power)


def noma_rates(
    h: np.ndarray, w: Beamformer, p: np.ndarray, order: DecodingOrder, noise_power: float, bandwidth: float
) -> np.ndarray:
    return bandwidth * np.log2(1.0 + noma_sinr(h, w, p, order, noise_power))


def default_sic_order(h: np.ndarray, w: Beamformer) -> List[int]:
    """
    Sub-message ids: n is user n's public part, N + n its private part.
    Publics first by descending effective gain, then privates in the same user order.
    """
    gains = np.diag(_cross_gains(h, w))
    users = [int(u) for u in np.argsort(-gains, kind="stable")]
    n = len(users)
    return users + [n + u for u in users]


def sic_rsma_rates(
    h: np.ndarray,
    w: Beamformer,
    alloc: TxAllocation,
    full_order: Optional[Sequence[int]],
    noise_power: float,
    bandwidth: float,
) -> RatePair:
    """Every sub-message is SIC-decoded in `full_order` (sequence of sub-message ids)"""
    gains = _cross_gains(h, w)
    n = gains.shape[0]
    _check_users(n, alloc.p)
    sequence = list(default_sic_order(h, w) if full_order is None else full_order)
    if sorted(sequence) != list(range(2 * n)):
        raise StructuralError(f"SIC order {sequence} is not a permutation of the {2 * n} sub-messages")

    power = np.concatenate([alloc.p_pub, alloc.p_pri])
    owner = np.concatenate([np.arange(n), np.arange(n)])
    noise = w.column_norms_sq * noise_power
    sinr = np.zeros(2 * n)
    for step, message in enumerate(sequence):
        user = owner[message]
        remaining = sequence[step + 1:]
        interference = float(np.sum(gains[user, owner[remaining]] * power[remaining])) if remaining else 0.0
        sinr[message] = min(gains[user, user] * power[message] / (interference + noise[user]), SINR_CAP)
    return rates(sinr[:n], sinr[n:], bandwidth)


# =============================================================================
# DECODING-ORDER ENUMERATION (DQN action head indexing)
# =============================================================================

@lru_cache(maxsize=None)
def _orders(n: int) -> tuple[DecodingOrder, ...]:
    return tuple(DecodingOrder(p) for p in itertools.permutations(range(n)))


def enumerate_orders(n: int, max_users: int = MAX_ENUMERATED_USERS) -> List[DecodingOrder]:
    """All n! decoding orders, lexicographic in the position vector"""
    if n < 1:
        raise StructuralError(f"need at least one user, got {n}")
    if n > max_users:
        raise CapabilityError(f"enumerating {n}! = {math.factorial(n)} decoding orders exceeds N <= {max_users}")
    return list(_orders(n))


def index_to_order(index: int, n: int) -> DecodingOrder:
    count = len(enumerate_orders(n)) if n > MAX_ENUMERATED_USERS else math.factorial(n)
    if not 0 <= index < count:
        raise StructuralError(f"order index {index} outside [0, {count})")
    return _orders(n)[index]


def order_to_index(order: DecodingOrder) -> int:
    return _order_index(order.n)[order.positions]


@lru_cache(maxsize=None)
def _order_index(n: int) -> dict:
    return {o.positions: i for i, o in enumerate(enumerate_orders(n))}
