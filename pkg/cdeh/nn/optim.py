"""
cdeh/nn/optim.py
First-order optimizers over a NetParams store
"""

from __future__ import annotations

from typing import Dict

import numpy as np

from cdeh.nn.params import NetParams


def sgd_step(params: NetParams, lr: float) -> None:
    for name, value in params.values.items():
        value -= lr * params.grads[name]


class Adam:
    """Adaptive-moment update; moments live here, not in the parameter store"""

    def __init__(self, params: NetParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(v) for name, v in params.values.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(v) for name, v in params.values.items()}

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, value in self.params.values.items():
            grad = self.params.grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            value -= update.astype(value.dtype, copy=False)

    # =================================================================
    # Checkpoint state
    # =================================================================
    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"m.{name}": array for name, array in self.m.items()}
        arrays.update({f"v.{name}": array for name, array in self.v.items()})
        return arrays

    def load_state(self, t: int, arrays: Dict[str, np.ndarray]) -> None:
        self.t = int(t)
        for name in self.m:
            self.m[name][...] = arrays[f"m.{name}"]
            self.v[name][...] = arrays[f"v.{name}"]
