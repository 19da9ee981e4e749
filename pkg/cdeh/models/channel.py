"""
cdeh/models/channel.py
Per-slot channel state and IRS configuration
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from cdeh.utils.exceptions import StructuralError


class ChannelMask(str, Enum):
    """Which terms of the composite channel are kept"""

    NONE = "none"
    ONLY_IRS = "only_irs"  # direct link removed
    DIRECT = "direct"  # reflected link removed


@dataclass(frozen=True)
class ChannelState:
    """
    One slot's CSI.
    h_dir: M x N (GU -> BS), h_irs: K x N (GU -> IRS), g: M x K (IRS -> BS)
    """

    h_dir: np.ndarray
    h_irs: np.ndarray
    g: np.ndarray
    gu_positions: np.ndarray

    def __post_init__(self) -> None:
        m, n = self.h_dir.shape
        k, n_irs = self.h_irs.shape
        m_g, k_g = self.g.shape
        if n_irs != n or m_g != m or k_g != k:
            raise StructuralError(
                f"channel shapes disagree: h_dir {self.h_dir.shape}, h_irs {self.h_irs.shape}, g {self.g.shape}"
            )
        if self.gu_positions.shape != (n, 2):
            raise StructuralError(f"gu_positions must be ({n}, 2), got {self.gu_positions.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        """(M, N, K)"""
        return self.h_dir.shape[0], self.h_dir.shape[1], self.h_irs.shape[0]

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.h_dir)) and np.all(np.isfinite(self.h_irs)) and np.all(np.isfinite(self.g))
        )

    def masked(self, mask: ChannelMask) -> "ChannelState":
        if mask is ChannelMask.ONLY_IRS:
            return replace(self, h_dir=np.zeros_like(self.h_dir))
        if mask is ChannelMask.DIRECT:
            return replace(self, g=np.zeros_like(self.g))
        return self


@dataclass(frozen=True)
class IrsPhase:
    """Phase shifts theta_k in [0, 2pi); amplitudes are fixed to one"""

    theta: np.ndarray

    def __post_init__(self) -> None:
        if self.theta.ndim != 1:
            raise StructuralError(f"theta must be a vector, got shape {self.theta.shape}")
        object.__setattr__(self, "theta", np.mod(self.theta, 2.0 * np.pi))

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @classmethod
    def zeros(cls, k: int) -> "IrsPhase":
        return cls(np.zeros(k))
