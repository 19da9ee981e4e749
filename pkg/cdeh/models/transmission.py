"""
cdeh/models/transmission.py
Uplink transmit allocation, receive combiners, decoding orders and rates
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cdeh.utils.exceptions import DomainError, StructuralError


@dataclass(frozen=True)
class TxAllocation:
    """Transmit powers p (watts) and public power-split ratios gamma"""

    p: np.ndarray
    gamma: np.ndarray

    def __post_init__(self) -> None:
        if self.p.shape != self.gamma.shape or self.p.ndim != 1:
            raise StructuralError(f"p {self.p.shape} and gamma {self.gamma.shape} must be equal-length vectors")
        if np.any(self.p < 0):
            raise DomainError("transmit powers must be non-negative")
        if np.any((self.gamma < 0) | (self.gamma > 1)):
            raise DomainError("gamma must lie in [0, 1]")

    @property
    def p_pub(self) -> np.ndarray:
        return self.gamma * self.p

    @property
    def p_pri(self) -> np.ndarray:
        return (1.0 - self.gamma) * self.p


@dataclass(frozen=True)
class Beamformer:
    """Receive combiners, column n combines user n"""

    w: np.ndarray

    def __post_init__(self) -> None:
        if self.w.ndim != 2:
            raise StructuralError(f"beamformer must be M x N, got shape {self.w.shape}")
        norms = np.linalg.norm(self.w, axis=0)
        if np.any(norms == 0):
            raise StructuralError(f"combiner columns {np.flatnonzero(norms == 0).tolist()} have zero norm")

    @property
    def column_norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.w) ** 2, axis=0)


@dataclass(frozen=True)
class DecodingOrder:
    """
    positions[n] is the 0-based SIC position of user n's public sub-message;
    position 0 is decoded first.
    """

    positions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if sorted(self.positions) != list(range(len(self.positions))):
            raise StructuralError(f"decoding order {self.positions} is not a permutation")

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def sequence(self) -> tuple[int, ...]:
        """Users in the order they are decoded"""
        return tuple(int(u) for u in np.argsort(self.positions))

    @classmethod
    def from_sequence(cls, sequence: tuple[int, ...]) -> "DecodingOrder":
        positions = [0] * len(sequence)
        for position, user in enumerate(sequence):
            positions[user] = position
        return cls(tuple(positions))

    @classmethod
    def identity(cls, n: int) -> "DecodingOrder":
        return cls(tuple(range(n)))


@dataclass(frozen=True)
class RatePair:
    """Public/private SINRs and rates (bit/s)"""

    r_pub: np.ndarray
    r_pri: np.ndarray
    rho_pub: np.ndarray
    rho_pri: np.ndarray
