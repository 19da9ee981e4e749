"""
cdeh/agents/replay_buffer.py
Shared FIFO experience store for both learners
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from cdeh.models.mdp import Transition
from cdeh.nn.network import StateBatch, stack_states
from cdeh.utils.exceptions import StructuralError


@dataclass(frozen=True)
class Batch:
    states: StateBatch
    actions: np.ndarray
    order_indices: np.ndarray
    rewards: np.ndarray
    next_states: StateBatch
    dones: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


class ReplayBuffer:
    def __init__(self, capacity: int, rng: Optional[np.random.Generator] = None):
        if capacity < 1:
            raise StructuralError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng()
        self._storage: List[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._storage)

    def add(self, transition: Transition) -> None:
        if not transition.is_finite():
            raise StructuralError("refusing to store a transition with non-finite entries")
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def records(self) -> List[Transition]:
        """Oldest first"""
        if len(self._storage) < self.capacity:
            return list(self._storage)
        return self._storage[self._cursor:] + self._storage[:self._cursor]

    def sample(self, batch_size: int) -> Batch:
        """Uniform, without replacement inside the batch"""
        if batch_size > len(self._storage):
            raise StructuralError(f"cannot sample {batch_size} from {len(self._storage)} transitions")
        indices = self.rng.choice(len(self._storage), size=batch_size, replace=False)
        picked = [self._storage[i] for i in indices]
        return Batch(
            states=stack_states([t.state for t in picked]),
            actions=np.stack([t.a_cont for t in picked]),
            order_indices=np.array([t.a_disc for t in picked], dtype=np.int64),
            rewards=np.array([t.reward for t in picked], dtype=float),
            next_states=stack_states([t.next_state for t in picked]),
            dones=np.array([t.done for t in picked], dtype=float),
            indices=np.asarray(indices),
        )
