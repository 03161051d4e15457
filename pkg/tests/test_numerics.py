import math

import numpy as np
import pytest

from advclust import losses
from advclust.numerics import (GradBundle, Layer, MlpParams, OptState,
                               ShapeError, finite_diff_grad,
                               finite_diff_input_grad, init_mlp,
                               max_relative_error, mlp_backward, mlp_forward,
                               sgd_momentum_step)


def naive_forward(params, batch):
    """Independent loop-based re-implementation of the forward pass."""
    out = []
    for row in batch:
        x = list(row)
        for layer in params.layers:
            pre = []
            for i in range(layer.weight.shape[0]):
                s = layer.bias[i]
                for j in range(layer.weight.shape[1]):
                    s += layer.weight[i, j] * x[j]
                pre.append(s)
            if layer.activation == "tanh":
                x = [math.tanh(v) for v in pre]
            elif layer.activation == "sigmoid":
                x = [1.0 / (1.0 + math.exp(-v)) for v in pre]
            else:
                x = pre
        out.append(x)
    return np.asarray(out)


def test_identity_layer_passthrough():
    params = MlpParams([Layer(np.eye(3), np.zeros(3), "identity")])
    v = np.array([[1.0, -2.0, 0.5]])
    out, _ = mlp_forward(params, v)
    np.testing.assert_array_equal(out, v)


def test_sigmoid_of_zero_is_half():
    params = MlpParams([Layer(np.zeros((4, 3)), np.zeros(4), "sigmoid")])
    out, _ = mlp_forward(params, np.random.default_rng(0).standard_normal((5, 3)))
    np.testing.assert_allclose(out, 0.5)


def test_forward_matches_independent_reimplementation():
    rng = np.random.default_rng(7)
    params = init_mlp([4, 6, 2], ["tanh", "sigmoid"], rng)
    x = rng.standard_normal((5, 4))
    out, _ = mlp_forward(params, x)
    np.testing.assert_allclose(out, naive_forward(params, x), rtol=1e-12)


def test_forward_determinism_bit_identical():
    rng = np.random.default_rng(3)
    params = init_mlp([4, 5, 3], ["tanh", "identity"], rng)
    x = rng.standard_normal((6, 4))
    a, _ = mlp_forward(params, x)
    b, _ = mlp_forward(params, x)
    assert np.array_equal(a, b)


def test_activation_ranges():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((20, 3)) * 100
    t, _ = mlp_forward(MlpParams([Layer(np.eye(3), np.zeros(3), "tanh")]), x)
    s, _ = mlp_forward(MlpParams([Layer(np.eye(3), np.zeros(3), "sigmoid")]), x)
    # saturated inputs may round to the bounds themselves in float64
    assert np.all(t >= -1) and np.all(t <= 1)
    assert np.all(s >= 0) and np.all(s <= 1)
    tm, _ = mlp_forward(MlpParams([Layer(np.eye(3), np.zeros(3), "tanh")]), x / 50)
    sm, _ = mlp_forward(MlpParams([Layer(np.eye(3), np.zeros(3), "sigmoid")]), x / 50)
    assert np.all(tm > -1) and np.all(tm < 1)
    assert np.all(sm > 0) and np.all(sm < 1)


def test_forward_rejects_dimension_mismatch():
    params = MlpParams([Layer(np.eye(3), np.zeros(3), "identity")])
    with pytest.raises(ShapeError):
        mlp_forward(params, np.zeros((2, 4)))


def test_backward_zero_output_grad_gives_zero():
    rng = np.random.default_rng(1)
    params = init_mlp([3, 4, 2], ["tanh", "sigmoid"], rng)
    out, tape = mlp_forward(params, rng.standard_normal((5, 3)))
    bundle, input_grad = mlp_backward(params, tape, np.zeros_like(out))
    assert all(np.all(g == 0) for g in bundle.weight_grads + bundle.bias_grads)
    assert np.all(input_grad == 0)


def test_backward_matches_finite_differences_scalar_net():
    rng = np.random.default_rng(2)
    params = init_mlp([3, 1], ["sigmoid"], rng)
    x = rng.standard_normal((4, 3))

    def loss(p):
        return float(mlp_forward(p, x)[0].sum())

    out, tape = mlp_forward(params, x)
    analytic, _ = mlp_backward(params, tape, np.ones_like(out))
    numeric = finite_diff_grad(params, loss)
    assert max_relative_error(analytic, numeric) < 1e-6


def test_chained_encoder_discriminator_gradient():
    rng = np.random.default_rng(4)
    encoder = init_mlp([4, 5, 2], ["tanh", "identity"], rng)
    disc = init_mlp([2, 3, 1], ["tanh", "sigmoid"], rng)
    x = rng.standard_normal((6, 4))

    def composed(p):
        z, _ = mlp_forward(p, x)
        return float(mlp_forward(disc, z)[0].sum())

    z, tape_e = mlp_forward(encoder, x)
    d, tape_d = mlp_forward(disc, z)
    _, z_grad = mlp_backward(disc, tape_d, np.ones_like(d))
    analytic, _ = mlp_backward(encoder, tape_e, z_grad)
    numeric = finite_diff_grad(encoder, composed)
    assert max_relative_error(analytic, numeric) < 1e-5


def test_input_grad_matches_finite_differences():
    rng = np.random.default_rng(5)
    params = init_mlp([3, 4, 1], ["tanh", "sigmoid"], rng)
    x = rng.standard_normal((3, 3))
    out, tape = mlp_forward(params, x)
    _, input_grad = mlp_backward(params, tape, np.ones_like(out))
    numeric = finite_diff_input_grad(params, x,
                                     lambda b: float(mlp_forward(params, b)[0].sum()))
    rel = np.abs(input_grad - numeric) / np.maximum(np.abs(numeric), 1e-8)
    assert rel.max() < 1e-4


def test_finite_diff_constant_function():
    rng = np.random.default_rng(6)
    params = init_mlp([2, 3], ["tanh"], rng)
    bundle = finite_diff_grad(params, lambda p: 3.25)
    assert all(np.all(g == 0) for g in bundle.weight_grads + bundle.bias_grads)


def test_finite_diff_linear_function():
    rng = np.random.default_rng(8)
    params = init_mlp([2, 3], ["tanh"], rng)
    bundle = finite_diff_grad(params, lambda p: float(
        sum(l.weight.sum() for l in p.layers)))
    for g in bundle.weight_grads:
        np.testing.assert_allclose(g, 1.0, atol=1e-9)
    for g in bundle.bias_grads:
        np.testing.assert_allclose(g, 0.0, atol=1e-9)


def test_finite_diff_vs_backward_on_disc_objective():
    rng = np.random.default_rng(9)
    disc = init_mlp([2, 4, 1], ["tanh", "sigmoid"], rng)
    z_pos = rng.standard_normal((6, 2))
    z_neg = rng.standard_normal((6, 2))

    d_pos, tape_p = mlp_forward(disc, z_pos)
    d_neg, tape_n = mlp_forward(disc, z_neg)
    g_pos, g_neg = losses.dcan_discriminator_objective_grad(d_pos, d_neg)
    bp, _ = mlp_backward(disc, tape_p, g_pos)
    bn, _ = mlp_backward(disc, tape_n, g_neg)
    analytic = GradBundle([a + b for a, b in zip(bp.weight_grads, bn.weight_grads)],
                          [a + b for a, b in zip(bp.bias_grads, bn.bias_grads)])
    numeric = finite_diff_grad(disc, lambda p: losses.dcan_discriminator_objective(
        mlp_forward(p, z_pos)[0], mlp_forward(p, z_neg)[0]))
    assert max_relative_error(analytic, numeric) < 1e-4


def _scalar_params(theta):
    return MlpParams([Layer(np.array([[theta]]), np.zeros(1), "identity")])


def test_sgd_plain_step():
    params = _scalar_params(0.0)
    state = OptState.fresh(params, lr=1.0, momentum=0.0)
    grads = GradBundle([np.array([[1.0]])], [np.zeros(1)])
    new, _ = sgd_momentum_step(params, grads, state, "descend")
    assert new.layers[0].weight[0, 0] == -1.0


def test_sgd_momentum_recurrence():
    params = _scalar_params(0.0)
    state = OptState.fresh(params, lr=1.0, momentum=0.9)
    grads = GradBundle([np.array([[1.0]])], [np.zeros(1)])
    params, state = sgd_momentum_step(params, grads, state, "descend")
    params, state = sgd_momentum_step(params, grads, state, "descend")
    assert params.layers[0].weight[0, 0] == pytest.approx(-2.9)


def test_sgd_ascend_converges_on_concave_quadratic():
    params = _scalar_params(0.5)
    state = OptState.fresh(params, lr=0.1, momentum=0.0)
    for _ in range(100):
        theta = params.layers[0].weight[0, 0]
        grads = GradBundle([np.array([[-2.0 * theta]])], [np.zeros(1)])
        params, state = sgd_momentum_step(params, grads, state, "ascend")
    assert abs(params.layers[0].weight[0, 0]) < 1e-3


def test_init_mlp_shapes_and_zero_bias():
    rng = np.random.default_rng(10)
    params = init_mlp([5, 7, 2], ["tanh", "identity"], rng)
    assert params.layers[0].weight.shape == (7, 5)
    assert params.layers[1].weight.shape == (2, 7)
    assert np.all(params.layers[0].bias == 0)
    s = np.sqrt(6.0 / 12)
    assert np.abs(params.layers[0].weight).max() <= s
