"""
cdeh/models/task.py
Per-slot computation tasks, offloading decisions and the resulting delays
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cdeh.utils.exceptions import DomainError, StructuralError


@dataclass(frozen=True)
class TaskBatch:
    """Task size B_n(t) in bits, one per user"""

    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.ndim != 1:
            raise StructuralError(f"task bits must be a vector, got shape {self.bits.shape}")
        if np.any(self.bits < 0):
            raise DomainError("task sizes must be non-negative")


@dataclass(frozen=True)
class OffloadDecision:
    """beta: offloaded share, eta: public share of offloaded bits, rho_mec: edge CPU share"""

    beta: np.ndarray
    eta: np.ndarray
    rho_mec: np.ndarray

    def __post_init__(self) -> None:
        if not (self.beta.shape == self.eta.shape == self.rho_mec.shape):
            raise StructuralError("beta, eta and rho_mec must have the same shape")
        for name in ("beta", "eta", "rho_mec"):
            values = getattr(self, name)
            if np.any((values < 0) | (values > 1)):
                raise DomainError(f"{name} must lie in [0, 1]")
        if float(np.sum(self.rho_mec)) > 1.0 + 1e-9:
            raise DomainError(f"edge CPU shares sum to {float(np.sum(self.rho_mec)):.6f} > 1")


@dataclass(frozen=True)
class DelayReport:
    """Per-user delay components (seconds); t_total = max(t_local, t_trans + t_mec)"""

    t_local: np.ndarray
    t_trans: np.ndarray
    t_mec: np.ndarray
    t_total: np.ndarray
    avg: float
    deadline_violations: int

    @property
    def n(self) -> int:
        return int(self.t_total.shape[0])
