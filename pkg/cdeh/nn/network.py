"""
cdeh/nn/network.py
CSI feature extractor -> middle block -> head, with recorded forward graphs
for exact backpropagation. Used for the actor, both critics and the order Q-network
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cdeh.core.config import AgentConfig, SystemConfig
from cdeh.models.mdp import StateTensors
from cdeh.nn.layers import AdaptiveAvgPool1d, BatchNorm2d, Conv2d, Flatten, Linear, ReLU, Sequential, Tanh
from cdeh.nn.params import NetParams
from cdeh.utils.exceptions import StructuralError

StateBatch = Tuple[np.ndarray, np.ndarray, np.ndarray]
BRANCHES = ("dir", "irs", "g")

# directional conv plan: 2 input planes -> 3 maps -> 1 map
CONV_CHANNELS = (2, 3, 1)


def architecture_parts(architecture: str) -> Tuple[str, str]:
    """"cnn_densenet" -> ("cnn", "densenet"); plain "fcn" is fcn for both"""
    return tuple(architecture.split("_")) if "_" in architecture else (architecture, architecture)


def branch_shapes(m: int, n: int, k: int) -> Dict[str, Tuple[int, int]]:
    return {"dir": (m, n), "irs": (k, n), "g": (m, k)}


def stack_states(states: Union[StateTensors, Sequence[StateTensors]]) -> StateBatch:
    if isinstance(states, StateTensors):
        states = [states]
    return (
        np.stack([s.s_dir for s in states]),
        np.stack([s.s_irs for s in states]),
        np.stack([s.s_g for s in states]),
    )


# =============================================================================
# FEATURE EXTRACTORS
# =============================================================================

class DirectionalBranch:
    """
    Horizontal (rows x 1) and vertical (1 x cols) convolution paths over one
    CSI matrix, each pooled to length D and then summed
    """

    def __init__(self, params: NetParams, name: str, rows: int, cols: int, feature_length: int,
                 momentum: float, rng: np.random.Generator):
        c_in, c_mid, c_out = CONV_CHANNELS
        self.shape = (c_in, rows, cols)

        def path(tag: str, kernel: Tuple[int, int], flat_length: int) -> Sequential:
            return Sequential([
                Conv2d(params, f"{name}.{tag}.conv", c_in, c_mid, kernel, rng),
                BatchNorm2d(params, f"{name}.{tag}.bn", c_mid, momentum),
                ReLU(),
                Conv2d(params, f"{name}.{tag}.pointwise", c_mid, c_out, (1, 1), rng),
                Flatten(),
                AdaptiveAvgPool1d(flat_length, feature_length, params.dtype),
            ])

        self.horizontal = path("horizontal", (rows, 1), cols)
        self.vertical = path("vertical", (1, cols), rows)

    def forward(self, x: np.ndarray, train: bool):
        if x.shape[1:] != self.shape:
            raise StructuralError(f"branch expects (batch, {self.shape}), got {x.shape}")
        y_h, cache_h = self.horizontal.forward(x, train)
        y_v, cache_v = self.vertical.forward(x, train)
        return y_h + y_v, (cache_h, cache_v)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        cache_h, cache_v = cache
        return self.horizontal.backward(dy, cache_h) + self.vertical.backward(dy, cache_v)


class FlatBranch:
    """Flatten + one affine layer to length D"""

    def __init__(self, params: NetParams, name: str, rows: int, cols: int, feature_length: int,
                 rng: np.random.Generator):
        self.shape = (CONV_CHANNELS[0], rows, cols)
        self.layers = Sequential([
            Flatten(),
            Linear(params, f"{name}.affine", CONV_CHANNELS[0] * rows * cols, feature_length, rng),
            ReLU(),
        ])

    def forward(self, x: np.ndarray, train: bool):
        if x.shape[1:] != self.shape:
            raise StructuralError(f"branch expects (batch, {self.shape}), got {x.shape}")
        return self.layers.forward(x, train)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        return self.layers.backward(dy, cache)


class FeatureExtractor:
    """Three unshared branches, concatenated to length 3D"""

    def __init__(self, params: NetParams, dims: Tuple[int, int, int], agent: AgentConfig, convolutional: bool,
                 rng: np.random.Generator):
        self.feature_length = agent.FEATURE_LENGTH
        shapes = branch_shapes(*dims)
        self.branches = []
        for name in BRANCHES:
            rows, cols = shapes[name]
            if convolutional:
                branch = DirectionalBranch(params, f"features.{name}", rows, cols, agent.FEATURE_LENGTH,
                                           agent.BN_MOMENTUM, rng)
            else:
                branch = FlatBranch(params, f"features.{name}", rows, cols, agent.FEATURE_LENGTH, rng)
            self.branches.append(branch)

    def forward(self, inputs: StateBatch, train: bool):
        outputs, caches = [], []
        for branch, x in zip(self.branches, inputs):
            y, cache = branch.forward(x, train)
            outputs.append(y)
            caches.append(cache)
        return np.concatenate(outputs, axis=1), caches

    def backward(self, dy: np.ndarray, caches) -> StateBatch:
        d = self.feature_length
        return tuple(
            branch.backward(dy[:, i * d:(i + 1) * d], cache)
            for i, (branch, cache) in enumerate(zip(self.branches, caches))
        )


def extract_features(state: Union[StateTensors, StateBatch], extractor: FeatureExtractor, train: bool = False) -> np.ndarray:
    inputs = stack_states(state) if isinstance(state, StateTensors) else state
    return extractor.forward(inputs, train)[0]


# =============================================================================
# MIDDLE BLOCKS
# =============================================================================

class DenseBlock:
    """Three affine+ReLU layers; layer i sees concat(x, out_1, ..., out_{i-1})"""

    def __init__(self, params: NetParams, name: str, n_in: int, width: int, rng: np.random.Generator, depth: int = 3):
        self.widths = [n_in] + [width] * (depth - 1)
        self.layers = []
        for i in range(depth):
            layer_in = n_in + i * width
            self.layers.append((Linear(params, f"{name}.{i}", layer_in, width, rng), ReLU()))

    @property
    def input_widths(self) -> List[int]:
        return [layer.n_in for layer, _ in self.layers]

    def forward(self, x: np.ndarray, train: bool):
        outputs = [x]
        caches = []
        for linear, act in self.layers:
            z, cache_lin = linear.forward(np.concatenate(outputs, axis=1), train)
            a, cache_act = act.forward(z, train)
            caches.append((cache_lin, cache_act))
            outputs.append(a)
        return outputs[-1], caches

    def backward(self, dy: np.ndarray, caches) -> np.ndarray:
        grads: List[Any] = [0.0] * (len(self.layers) + 1)
        grads[-1] = dy
        for i in reversed(range(len(self.layers))):
            linear, act = self.layers[i]
            cache_lin, cache_act = caches[i]
            d_cat = linear.backward(act.backward(grads[i + 1], cache_act), cache_lin)
            offsets = np.cumsum(self.widths[:i + 1])[:-1]
            for j, part in enumerate(np.split(d_cat, offsets, axis=1)):
                grads[j] = grads[j] + part
        return grads[0]


def dense_block_forward(x: np.ndarray, block: DenseBlock, train: bool = False) -> np.ndarray:
    return block.forward(x, train)[0]


def stacked_block(params: NetParams, name: str, n_in: int, width: int, rng: np.random.Generator) -> Sequential:
    return Sequential([
        Linear(params, f"{name}.0", n_in, width, rng), ReLU(),
        Linear(params, f"{name}.1", width, width, rng), ReLU(),
        Linear(params, f"{name}.2", width, width, rng), ReLU(),
    ])


def build_head(params: NetParams, n_in: int, width: int, out_dim: int, squash: bool,
               rng: np.random.Generator) -> Sequential:
    layers = [
        Linear(params, "head.0", n_in, width, rng), ReLU(),
        Linear(params, "head.1", width, width, rng), ReLU(),
        Linear(params, "head.2", width, out_dim, rng),
    ]
    if squash:
        layers.append(Tanh())
    return Sequential(layers)


def head_forward(x: np.ndarray, head: Sequential, train: bool = False) -> np.ndarray:
    return head.forward(x, train)[0]


# =============================================================================
# NETWORK
# =============================================================================

@dataclass
class ForwardGraph:
    """Recorded activations of one forward pass; backpropagated at most once"""

    owner: int
    output: np.ndarray
    caches: Tuple[Any, Any, Any]
    batch: int
    consumed: bool = field(default=False)


class Network:
    """
    state (+ action for critics) -> out_dim.
    `architecture` picks the extractor (cnn/fcn) and the middle block (densenet/fcn).
    """

    def __init__(
        self,
        dims: Tuple[int, int, int],
        out_dim: int,
        agent: AgentConfig,
        action_dim: int = 0,
        squash: bool = False,
        seed: int = 0,
    ):
        self.dims = dims
        self.out_dim = out_dim
        self.action_dim = action_dim
        self.squash = squash
        self.architecture = agent.NETWORK_ARCHITECTURE
        self.params = NetParams(agent.NETWORK_DTYPE)
        rng = np.random.default_rng(seed)

        extractor_kind, middle_kind = architecture_parts(self.architecture)
        self.features = FeatureExtractor(self.params, dims, agent, extractor_kind == "cnn", rng)
        n_in = 3 * agent.FEATURE_LENGTH + action_dim
        if middle_kind == "densenet":
            self.middle = DenseBlock(self.params, "dense", n_in, agent.DENSE_WIDTH, rng)
        else:
            self.middle = stacked_block(self.params, "stacked", n_in, agent.DENSE_WIDTH, rng)
        self.head = build_head(self.params, agent.DENSE_WIDTH, agent.HEAD_WIDTH, out_dim, squash, rng)

    @property
    def dtype(self) -> np.dtype:
        return self.params.dtype

    def _inputs(self, state: Union[StateTensors, Sequence[StateTensors], StateBatch]) -> StateBatch:
        if isinstance(state, tuple) and len(state) == 3 and isinstance(state[0], np.ndarray):
            batch = state
        else:
            batch = stack_states(state)
        return tuple(np.asarray(x, dtype=self.dtype) for x in batch)

    def forward(self, state, action: Optional[np.ndarray] = None, train: bool = False) -> ForwardGraph:
        inputs = self._inputs(state)
        feats, cache_f = self.features.forward(inputs, train)
        if self.action_dim:
            if action is None:
                raise StructuralError("critic forward needs an action batch")
            action = np.asarray(action, dtype=self.dtype).reshape(feats.shape[0], -1)
            if action.shape[1] != self.action_dim:
                raise StructuralError(f"critic expects action width {self.action_dim}, got {action.shape[1]}")
            feats = np.concatenate([feats, action], axis=1)
        hidden, cache_m = self.middle.forward(feats, train)
        out, cache_h = self.head.forward(hidden, train)
        return ForwardGraph(owner=id(self), output=out, caches=(cache_f, cache_m, cache_h), batch=out.shape[0])

    def __call__(self, state, action: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluation-mode output"""
        return self.forward(state, action, train=False).output

    def backward(self, graph: ForwardGraph, d_out: np.ndarray) -> Dict[str, Any]:
        """
        Accumulate parameter gradients for d(loss)/d(output) = d_out.
        Returns input gradients: {"state": (d_dir, d_irs, d_g), "action": d_action or None}
        """
        if graph.owner != id(self):
            raise StructuralError("forward graph belongs to a different network")
        if graph.consumed:
            raise StructuralError("forward graph was already backpropagated")
        if d_out.shape != graph.output.shape:
            raise StructuralError(f"output gradient {d_out.shape} does not match output {graph.output.shape}")
        graph.consumed = True
        cache_f, cache_m, cache_h = graph.caches
        d_hidden = self.head.backward(np.asarray(d_out, dtype=self.dtype), cache_h)
        d_feats = self.middle.backward(d_hidden, cache_m)
        d_action = None
        if self.action_dim:
            d_action = d_feats[:, -self.action_dim:]
            d_feats = d_feats[:, :-self.action_dim]
        d_state = self.features.backward(d_feats, cache_f)
        return {"state": d_state, "action": d_action}

    def clone(self) -> "Network":
        """Same structure, identical parameters and buffers"""
        return copy.deepcopy(self)


def expected_parameter_count(dims: Tuple[int, int, int], out_dim: int, agent: AgentConfig, action_dim: int = 0) -> int:
    """Closed-form trainable-scalar count for a Network with these settings"""
    m, n, k = dims
    d, h1, h2 = agent.FEATURE_LENGTH, agent.DENSE_WIDTH, agent.HEAD_WIDTH
    extractor_kind, middle_kind = architecture_parts(agent.NETWORK_ARCHITECTURE)
    if extractor_kind == "cnn":
        # per path: conv 2->3 (6*len + 3), norm (6), pointwise 3->1 (4)
        extractor = 12 * (m + n + k) + 78
    else:
        extractor = sum(2 * rows * cols * d + d for rows, cols in branch_shapes(m, n, k).values())
    n_in = 3 * d + action_dim
    if middle_kind == "densenet":
        middle = 3 * n_in * h1 + 3 * h1 * h1 + 3 * h1
    else:
        middle = n_in * h1 + h1 + 2 * (h1 * h1 + h1)
    head = h1 * h2 + h2 + h2 * h2 + h2 + h2 * out_dim + out_dim
    return extractor + middle + head


# =============================================================================
# FACTORIES
# =============================================================================

def build_actor(system: SystemConfig, agent: AgentConfig, seed: int) -> Network:
    return Network((system.M, system.N, system.K), system.action_dim, agent, squash=True, seed=seed)


def build_critic(system: SystemConfig, agent: AgentConfig, seed: int) -> Network:
    return Network((system.M, system.N, system.K), 1, agent, action_dim=system.action_dim, seed=seed)


def build_q_network(system: SystemConfig, agent: AgentConfig, seed: int) -> Network:
    return Network((system.M, system.N, system.K), math.factorial(system.N), agent, seed=seed)


def build_branching_q_network(system: SystemConfig, agent: AgentConfig, out_dim: int, seed: int) -> Network:
    """One output per grid level of every action branch"""
    return Network((system.M, system.N, system.K), out_dim, agent, seed=seed)
