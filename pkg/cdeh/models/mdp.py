"""
cdeh/models/mdp.py
State, action and transition records of the offloading MDP
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cdeh.models.transmission import DecodingOrder
from cdeh.utils.exceptions import StructuralError


@dataclass(frozen=True)
class StateTensors:
    """Real/imag planes of the three CSI matrices: (2,M,N), (2,K,N), (2,M,K)"""

    s_dir: np.ndarray
    s_irs: np.ndarray
    s_g: np.ndarray

    def __post_init__(self) -> None:
        for name in ("s_dir", "s_irs", "s_g"):
            tensor = getattr(self, name)
            if tensor.ndim != 3 or tensor.shape[0] != 2:
                raise StructuralError(f"{name} must have shape (2, rows, cols), got {tensor.shape}")

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.s_dir, self.s_irs, self.s_g

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(t))) for t in self.as_tuple())


@dataclass(frozen=True)
class ContinuousAction:
    """Decoded continuous bundle; `raw` is what the actor emitted"""

    raw: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    power_ratio: Optional[np.ndarray] = None
    rho_share: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DiscreteAction:
    """DQN output: index into the lexicographic order table and the order it names"""

    order_index: int
    order: DecodingOrder

    def __post_init__(self) -> None:
        if not 0 <= self.order_index < math.factorial(self.order.n):
            raise StructuralError(f"order index {self.order_index} outside [0, {self.order.n}!)")


@dataclass(frozen=True)
class Transition:
    state: StateTensors
    a_cont: np.ndarray
    a_disc: int
    reward: float
    next_state: StateTensors
    done: bool

    def is_finite(self) -> bool:
        return (
            self.state.is_finite()
            and self.next_state.is_finite()
            and bool(np.all(np.isfinite(self.a_cont)))
            and bool(np.isfinite(self.reward))
        )
