"""
cdeh/nn/layers.py
Layers with explicit reverse-mode gradients.
Every layer maps forward(x, train) -> (y, cache) and backward(dy, cache) -> dx,
accumulating parameter gradients into the shared NetParams
"""

from __future__ import annotations

from typing import Any, List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cdeh.nn.params import NetParams
from cdeh.utils.exceptions import StructuralError

Cache = Any


def fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


# =============================================================================
# CONVOLUTION
# =============================================================================

def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Valid, stride-1 cross-correlation.
    x: (C_in, H, W) or (B, C_in, H, W); kernel: (C_out, C_in, kh, kw)
    """
    single = x.ndim == 3
    batch = x[None] if single else x
    if batch.ndim != 4 or kernel.ndim != 4 or batch.shape[1] != kernel.shape[1]:
        raise StructuralError(f"input {x.shape} does not match kernel {kernel.shape}")
    _, _, h, w = batch.shape
    kh, kw = kernel.shape[2:]
    if kh > h or kw > w:
        raise StructuralError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    windows = sliding_window_view(batch, (kh, kw), axis=(2, 3))
    y = np.einsum("bchwij,ocij->bohw", windows, kernel) + bias[None, :, None, None]
    return y[0] if single else y


class Conv2d:
    def __init__(self, params: NetParams, name: str, c_in: int, c_out: int, kernel: Tuple[int, int],
                 rng: np.random.Generator):
        kh, kw = kernel
        self.params = params
        self.weight = params.add(f"{name}.weight", fan_in_uniform(rng, (c_out, c_in, kh, kw), c_in * kh * kw))
        self.bias = params.add(f"{name}.bias", np.zeros(c_out))

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        return conv2d_forward(x, self.params.values[self.weight], self.params.values[self.bias]), x

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        x = cache
        kernel = self.params.values[self.weight]
        kh, kw = kernel.shape[2:]
        windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
        self.params.accumulate(self.weight, np.einsum("bchwij,bohw->ocij", windows, dy))
        self.params.accumulate(self.bias, dy.sum(axis=(0, 2, 3)))
        dx = np.zeros_like(x)
        h_out, w_out = dy.shape[2:]
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + h_out, j:j + w_out] += np.einsum("bohw,oc->bchw", dy, kernel[:, :, i, j])
        return dx


# =============================================================================
# NORMALIZATION
# =============================================================================

class BatchNorm2d:
    """Per-channel normalization; running statistics drive evaluation mode"""

    def __init__(self, params: NetParams, name: str, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.params = params
        self.momentum = momentum
        self.eps = eps
        self.scale = params.add(f"{name}.scale", np.ones(channels))
        self.shift = params.add(f"{name}.shift", np.zeros(channels))
        self.running_mean = params.add_buffer(f"{name}.running_mean", np.zeros(channels))
        self.running_var = params.add_buffer(f"{name}.running_var", np.ones(channels))

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        axes = (0, 2, 3)
        if train:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            buffers = self.params.buffers
            unbiased = var * count / (count - 1) if count > 1 else var
            buffers[self.running_mean] *= 1.0 - self.momentum
            buffers[self.running_mean] += self.momentum * mean
            buffers[self.running_var] *= 1.0 - self.momentum
            buffers[self.running_var] += self.momentum * unbiased
        else:
            mean = self.params.buffers[self.running_mean]
            var = self.params.buffers[self.running_var]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        scale = self.params.values[self.scale][None, :, None, None]
        y = scale * x_hat + self.params.values[self.shift][None, :, None, None]
        return y, (x_hat, inv_std, train)

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        x_hat, inv_std, train = cache
        axes = (0, 2, 3)
        self.params.accumulate(self.scale, np.sum(dy * x_hat, axis=axes))
        self.params.accumulate(self.shift, np.sum(dy, axis=axes))
        dx_hat = dy * self.params.values[self.scale][None, :, None, None]
        inv = inv_std[None, :, None, None]
        if not train:
            return dx_hat * inv
        count = dy.shape[0] * dy.shape[2] * dy.shape[3]
        return inv / count * (
            count * dx_hat
            - np.sum(dx_hat, axis=axes, keepdims=True)
            - x_hat * np.sum(dx_hat * x_hat, axis=axes, keepdims=True)
        )


# =============================================================================
# ACTIVATIONS / SHAPE
# =============================================================================

class ReLU:
    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        return np.maximum(x, 0.0), x > 0

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        return dy * cache


class Tanh:
    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        y = np.tanh(x)
        return y, y

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        return dy * (1.0 - cache**2)


class Flatten:
    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        return dy.reshape(cache)


class AdaptiveAvgPool1d:
    """
    Average pooling of a length-L vector to length D. Bin i covers
    [floor(iL/D), ceil((i+1)L/D)); bins overlap or repeat when L < D.
    """

    def __init__(self, length_in: int, length_out: int, dtype: np.dtype):
        matrix = np.zeros((length_out, length_in), dtype=dtype)
        for i in range(length_out):
            start = (i * length_in) // length_out
            stop = -((-(i + 1) * length_in) // length_out)
            matrix[i, start:stop] = 1.0 / (stop - start)
        self.matrix = matrix

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        if x.shape[1] != self.matrix.shape[1]:
            raise StructuralError(f"pool expects length {self.matrix.shape[1]}, got {x.shape[1]}")
        return x @ self.matrix.T, None

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        return dy @ self.matrix


# =============================================================================
# AFFINE
# =============================================================================

class Linear:
    def __init__(self, params: NetParams, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.params = params
        self.n_in = n_in
        self.weight = params.add(f"{name}.weight", fan_in_uniform(rng, (n_out, n_in), n_in))
        self.bias = params.add(f"{name}.bias", np.zeros(n_out))

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        if x.shape[1] != self.n_in:
            raise StructuralError(f"affine layer expects width {self.n_in}, got {x.shape[1]}")
        return x @ self.params.values[self.weight].T + self.params.values[self.bias], x

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        x = cache
        self.params.accumulate(self.weight, dy.T @ x)
        self.params.accumulate(self.bias, dy.sum(axis=0))
        return dy @ self.params.values[self.weight]


class Sequential:
    def __init__(self, layers: Sequence[Any]):
        self.layers: List[Any] = list(layers)

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Cache]:
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train)
            caches.append(cache)
        return x, caches

    def backward(self, dy: np.ndarray, cache: Cache) -> np.ndarray:
        for layer, layer_cache in zip(reversed(self.layers), reversed(cache)):
            dy = layer.backward(dy, layer_cache)
        return dy


# =============================================================================
# LOSS
# =============================================================================

def mse_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. prediction"""
    if prediction.shape != target.shape:
        raise StructuralError(f"prediction {prediction.shape} and target {target.shape} differ")
    diff = prediction - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size
