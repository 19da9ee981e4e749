"""
cdeh/nn/params.py
Named parameter store shared by the layers of one network
"""

from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from cdeh.utils.exceptions import StructuralError


class NetParams:
    """
    Trainable arrays (with gradients) plus non-trainable buffers
    such as normalization running statistics. Names are unique across both.
    """

    def __init__(self, dtype: str = "float32"):
        self.dtype = np.dtype(dtype)
        self.values: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    # =================================================================
    # Construction
    # =================================================================
    def _check_new(self, name: str) -> None:
        if name in self.values or name in self.buffers:
            raise StructuralError(f"duplicate parameter name {name!r}")

    def add(self, name: str, array: np.ndarray) -> str:
        self._check_new(name)
        self.values[name] = np.array(array, dtype=self.dtype)
        self.grads[name] = np.zeros_like(self.values[name])
        return name

    def add_buffer(self, name: str, array: np.ndarray) -> str:
        self._check_new(name)
        self.buffers[name] = np.array(array, dtype=self.dtype)
        return name

    # =================================================================
    # Gradients
    # =================================================================
    def buffer_snapshot(self) -> Dict[str, np.ndarray]:
        return {name: array.copy() for name, array in self.buffers.items()}

    def restore_buffers(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, array in snapshot.items():
            self.buffers[name][...] = array

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad.astype(self.dtype, copy=False)

    # =================================================================
    # Whole-store operations
    # =================================================================
    def arrays(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Trainable arrays first, then buffers, in insertion order"""
        yield from self.values.items()
        yield from self.buffers.items()

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(array.shape) for name, array in self.arrays()}

    def copy(self) -> "NetParams":
        clone = NetParams(self.dtype.name)
        for name, array in self.values.items():
            clone.add(name, array.copy())
        for name, array in self.buffers.items():
            clone.add_buffer(name, array.copy())
        return clone

    def _check_compatible(self, other: "NetParams") -> None:
        if self.shapes() != other.shapes():
            raise StructuralError("parameter stores have different names or shapes")

    def assign_from(self, other: "NetParams") -> None:
        """In-place copy, keeping array identities"""
        self._check_compatible(other)
        for name, array in other.arrays():
            target = self.values.get(name, self.buffers.get(name))
            target[...] = array

    def soft_update_from(self, online: "NetParams", tau: float) -> None:
        """x' <- tau * x + (1 - tau) * x', kept inside [x', x] elementwise"""
        self._check_compatible(online)
        if tau <= 0.0:
            return
        if tau >= 1.0:
            self.assign_from(online)
            return
        for name, source in online.arrays():
            target = self.values.get(name, self.buffers.get(name))
            lower, upper = np.minimum(source, target), np.maximum(source, target)
            np.clip(target + tau * (source - target), lower, upper, out=target)

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        expected = self.shapes()
        if set(arrays) != set(expected):
            missing, unknown = set(expected) - set(arrays), set(arrays) - set(expected)
            raise StructuralError(f"checkpoint arrays mismatch: missing {sorted(missing)}, unknown {sorted(unknown)}")
        for name, array in arrays.items():
            if tuple(array.shape) != expected[name]:
                raise StructuralError(f"{name}: checkpoint shape {array.shape}, network expects {expected[name]}")
            target = self.values.get(name, self.buffers.get(name))
            target[...] = array

    def count(self) -> int:
        """Number of trainable scalars"""
        return int(sum(array.size for array in self.values.values()))

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(array))) for _, array in self.arrays())
