import math

import numpy as np
import pytest

from cdeh.models.mdp import StateTensors
from cdeh.nn.layers import AdaptiveAvgPool1d, Tanh, conv2d_forward, mse_loss
from cdeh.nn.network import (
    DenseBlock,
    Network,
    build_actor,
    build_critic,
    build_q_network,
    dense_block_forward,
    expected_parameter_count,
    extract_features,
    stack_states,
)
from cdeh.nn.optim import Adam, sgd_step
from cdeh.nn.params import NetParams
from cdeh.utils.exceptions import StructuralError


def _random_states(rng, dims, count):
    m, n, k = dims
    return [
        StateTensors(rng.normal(size=(2, m, n)), rng.normal(size=(2, k, n)), rng.normal(size=(2, m, k)))
        for _ in range(count)
    ]


# =============================================================================
# CONVOLUTION
# =============================================================================

def test_unit_kernel_is_identity():
    x = np.random.default_rng(0).normal(size=(1, 3, 4))
    np.testing.assert_array_equal(conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_all_ones_kernel_sums_the_input():
    x = np.random.default_rng(1).normal(size=(2, 3, 3))
    y = conv2d_forward(x, np.ones((1, 2, 3, 3)), np.zeros(1))
    assert y.shape == (1, 1, 1)
    assert y[0, 0, 0] == pytest.approx(x.sum())


def test_convolution_matches_naive_loops():
    rng = np.random.default_rng(2)
    x, kernel, bias = rng.normal(size=(2, 5, 4)), rng.normal(size=(3, 2, 2, 3)), rng.normal(size=3)
    y = conv2d_forward(x, kernel, bias)
    c_out, c_in, kh, kw = kernel.shape
    expected = np.zeros((c_out, 5 - kh + 1, 4 - kw + 1))
    for o in range(c_out):
        for i in range(expected.shape[1]):
            for j in range(expected.shape[2]):
                expected[o, i, j] = bias[o]
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            expected[o, i, j] += kernel[o, c, a, b] * x[c, i + a, j + b]
    np.testing.assert_allclose(y, expected, rtol=1e-12)


def test_kernel_larger_than_input():
    with pytest.raises(StructuralError):
        conv2d_forward(np.zeros((1, 2, 2)), np.zeros((1, 1, 3, 1)), np.zeros(1))


def test_pool_to_same_length_is_identity():
    x = np.arange(12.0).reshape(2, 6)
    np.testing.assert_allclose(AdaptiveAvgPool1d(6, 6, np.float64).forward(x, False)[0], x)


def test_pool_upsamples_short_inputs():
    y = AdaptiveAvgPool1d(2, 4, np.float64).forward(np.array([[1.0, 3.0]]), False)[0]
    np.testing.assert_allclose(y, [[1.0, 1.0, 3.0, 3.0]])


# =============================================================================
# FEATURES / BLOCKS / HEADS
# =============================================================================

def test_zero_state_gives_zero_features(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=0)
    m, n, k = net.dims
    zero = StateTensors(np.zeros((2, m, n)), np.zeros((2, k, n)), np.zeros((2, m, k)))
    features = extract_features(zero, net.features)
    assert features.shape == (1, 3 * bundle.agent.FEATURE_LENGTH)
    np.testing.assert_array_equal(features, 0.0)


@pytest.mark.parametrize("dims", [(4, 3, 8), (2, 1, 1), (5, 2, 3)])
def test_feature_length_is_three_d(bundle, dims):
    net = Network(dims, 1, bundle.agent)
    [state] = _random_states(np.random.default_rng(0), dims, 1)
    assert extract_features(state, net.features).shape == (1, 3 * bundle.agent.FEATURE_LENGTH)


def test_branches_do_not_share_weights(bundle):
    net = Network((3, 3, 3), 1, bundle.agent)
    a, b, c = _random_states(np.random.default_rng(1), (3, 3, 3), 1)[0].as_tuple()
    original = extract_features(StateTensors(a, b, c), net.features)
    swapped = extract_features(StateTensors(b, a, c), net.features)
    assert not np.allclose(original, swapped)


def test_dense_block_concatenates_inputs(bundle):
    params = NetParams("float64")
    block = DenseBlock(params, "dense", 12, 8, np.random.default_rng(0))
    assert block.input_widths == [12, 20, 28]


def test_dense_block_with_zero_weights_outputs_last_bias():
    params = NetParams("float64")
    block = DenseBlock(params, "dense", 5, 4, np.random.default_rng(0))
    for name in params.values:
        params.values[name][...] = 0.0
    params.values["dense.2.bias"][...] = [-1.0, 0.5, 2.0, 0.0]
    y = dense_block_forward(np.random.default_rng(1).normal(size=(2, 5)), block)
    np.testing.assert_array_equal(y, [[0.0, 0.5, 2.0, 0.0]] * 2)


def test_dense_block_matches_unrolled_composition():
    params = NetParams("float64")
    block = DenseBlock(params, "dense", 5, 4, np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(3, 5))

    def layer(i, inp):
        return np.maximum(inp @ params.values[f"dense.{i}.weight"].T + params.values[f"dense.{i}.bias"], 0.0)

    out1 = layer(0, x)
    out2 = layer(1, np.concatenate([x, out1], axis=1))
    out3 = layer(2, np.concatenate([x, out1, out2], axis=1))
    np.testing.assert_allclose(dense_block_forward(x, block), out3, rtol=1e-12)


def test_head_output_sizes(bundle):
    system, agent = bundle.system, bundle.agent
    states = _random_states(np.random.default_rng(5), (system.M, system.N, system.K), 6)
    actor = build_actor(system, agent, seed=1)
    actions = actor(states)
    assert actions.shape == (6, system.action_dim)
    assert np.all(np.abs(actions) <= 1.0)
    assert build_critic(system, agent, seed=2)(states, actions).shape == (6, 1)
    assert build_q_network(system, agent, seed=3)(states).shape == (6, math.factorial(system.N))


def test_q_head_has_one_output_per_order(bundle):
    five_users = bundle.with_overrides(N=5)
    qnet = build_q_network(five_users.system, five_users.agent, seed=0)
    assert qnet.out_dim == 120


@pytest.mark.parametrize("architecture", ["cnn_densenet", "cnn_fcn", "fcn_densenet", "fcn"])
@pytest.mark.parametrize("role", ["actor", "critic", "qnet"])
def test_parameter_count_matches_closed_form(bundle, architecture, role):
    agent = bundle.with_overrides(NETWORK_ARCHITECTURE=architecture).agent
    system = bundle.system
    dims = (system.M, system.N, system.K)
    if role == "actor":
        net, out_dim, action_dim = build_actor(system, agent, 0), system.action_dim, 0
    elif role == "critic":
        net, out_dim, action_dim = build_critic(system, agent, 0), 1, system.action_dim
    else:
        net, out_dim, action_dim = build_q_network(system, agent, 0), system.order_count, 0
    assert net.params.count() == expected_parameter_count(dims, out_dim, agent, action_dim)


def test_evaluation_is_deterministic(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=4)
    states = _random_states(np.random.default_rng(6), net.dims, 3)
    assert net(states).tobytes() == net(states).tobytes()


def test_train_mode_moves_only_normalization_statistics(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=4)
    states = _random_states(np.random.default_rng(7), net.dims, 4)
    before_values = {k: v.copy() for k, v in net.params.values.items()}
    before_buffers = {k: v.copy() for k, v in net.params.buffers.items()}
    net.forward(states, train=True)
    for name, value in net.params.values.items():
        np.testing.assert_array_equal(value, before_values[name])
    assert any(not np.array_equal(v, before_buffers[k]) for k, v in net.params.buffers.items())


# =============================================================================
# BACKWARD
# =============================================================================

def test_tanh_slope_at_zero():
    y, cache = Tanh().forward(np.zeros((1, 1)), False)
    assert Tanh().backward(np.ones((1, 1)), cache)[0, 0] == 1.0


def test_mse_gradient_vanishes_at_target():
    loss, grad = mse_loss(np.array([1.0, -2.0]), np.array([1.0, -2.0]))
    assert loss == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def _relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-4)


def _numeric_gradient(loss_fn, array, index, eps):
    original = array[index]
    array[index] = original + eps
    plus = loss_fn()
    array[index] = original - eps
    minus = loss_fn()
    array[index] = original
    return (plus - minus) / (2 * eps)


@pytest.mark.parametrize("architecture", ["cnn_densenet", "fcn"])
def test_gradients_match_finite_differences(float64_bundle, architecture):
    bundle = float64_bundle.with_overrides(NETWORK_ARCHITECTURE=architecture)
    system, agent = bundle.system, bundle.agent
    critic = build_critic(system, agent, seed=11)
    rng = np.random.default_rng(12)
    states = stack_states(_random_states(rng, critic.dims, 4))
    actions = rng.uniform(-1, 1, (4, system.action_dim))
    projection = rng.normal(size=(4, 1))

    def loss():
        return float(np.sum(critic.forward(states, actions, train=True).output * projection))

    critic.params.zero_grad()
    graph = critic.forward(states, actions, train=True)
    input_grads = critic.backward(graph, projection)
    targets = [(name, critic.params.values[name], critic.params.grads[name]) for name in critic.params.values]
    targets.append(("action", actions, input_grads["action"]))

    for name, array, analytic in targets:
        flat_count = array.size
        picks = rng.choice(flat_count, size=min(10, flat_count), replace=False)
        for flat in picks:
            index = np.unravel_index(flat, array.shape)
            numeric = _numeric_gradient(loss, array, index, 1e-4)
            error = _relative_error(analytic[index], numeric)
            if error >= 1e-4:
                # a step that straddles a ReLU kink; a finer step is exact again
                error = _relative_error(analytic[index], _numeric_gradient(loss, array, index, 1e-7))
            assert error < 1e-4, f"{name}{index}: analytic {analytic[index]}, numeric {numeric}"


def test_state_gradients_reach_every_branch(float64_bundle):
    system, agent = float64_bundle.system, float64_bundle.agent
    actor = build_actor(system, agent, seed=0)
    graph = actor.forward(_random_states(np.random.default_rng(0), actor.dims, 2), train=True)
    d_state = actor.backward(graph, np.ones_like(graph.output))["state"]
    assert len(d_state) == 3
    assert all(np.any(d != 0) for d in d_state)


def test_graph_can_be_backpropagated_once(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=0)
    graph = net.forward(_random_states(np.random.default_rng(0), net.dims, 2), train=True)
    net.backward(graph, np.ones_like(graph.output))
    with pytest.raises(StructuralError):
        net.backward(graph, np.ones_like(graph.output))


def test_graph_belongs_to_its_network(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=0)
    other = net.clone()
    graph = net.forward(_random_states(np.random.default_rng(0), net.dims, 1))
    with pytest.raises(StructuralError):
        other.backward(graph, np.ones_like(graph.output))


# =============================================================================
# PARAMETERS / OPTIMIZERS
# =============================================================================

def _scalar_store(value):
    params = NetParams("float64")
    params.add("w", np.array([value]))
    return params


def test_duplicate_parameter_names_are_rejected():
    params = _scalar_store(1.0)
    with pytest.raises(StructuralError):
        params.add_buffer("w", np.zeros(1))


def test_adam_zero_gradient_leaves_parameters():
    params = _scalar_store(3.0)
    optimizer = Adam(params, lr=0.1)
    for _ in range(5):
        params.zero_grad()
        optimizer.step()
    assert params.values["w"][0] == 3.0


def test_adam_moves_monotonically_against_a_constant_gradient():
    params = _scalar_store(0.0)
    optimizer = Adam(params, lr=0.01)
    trajectory = []
    for _ in range(50):
        params.zero_grad()
        params.accumulate("w", np.array([2.0]))
        optimizer.step()
        trajectory.append(params.values["w"][0])
    assert np.all(np.diff(trajectory) < 0)


@pytest.mark.parametrize("use_adam", [True, False])
def test_one_step_reduces_a_quadratic(use_adam):
    params = _scalar_store(2.0)
    params.accumulate("w", 2 * params.values["w"])
    if use_adam:
        Adam(params, lr=0.1).step()
    else:
        sgd_step(params, 0.1)
    assert params.values["w"][0] ** 2 < 4.0


def test_soft_update_extremes_and_convexity(bundle):
    online = build_actor(bundle.system, bundle.agent, seed=0)
    target = build_actor(bundle.system, bundle.agent, seed=1)
    before = target.params.copy()

    target.params.soft_update_from(online.params, 0.0)
    for name, array in target.params.arrays():
        np.testing.assert_array_equal(array, dict(before.arrays())[name])

    target.params.soft_update_from(online.params, 0.3)
    for name, array in target.params.arrays():
        old, new = dict(before.arrays())[name], dict(online.params.arrays())[name]
        assert np.all(array >= np.minimum(old, new)) and np.all(array <= np.maximum(old, new))

    target.params.soft_update_from(online.params, 1.0)
    for name, array in target.params.arrays():
        np.testing.assert_array_equal(array, dict(online.params.arrays())[name])


def test_clone_is_independent(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=0)
    twin = net.clone()
    states = _random_states(np.random.default_rng(0), net.dims, 2)
    np.testing.assert_array_equal(net(states), twin(states))
    twin.params.values["head.2.bias"] += 1.0
    assert not np.array_equal(net(states), twin(states))


def test_load_arrays_checks_shapes(bundle):
    net = build_actor(bundle.system, bundle.agent, seed=0)
    arrays = {name: array.copy() for name, array in net.params.arrays()}
    arrays["head.2.bias"] = np.zeros(3)
    with pytest.raises(StructuralError):
        net.params.load_arrays(arrays)
