"""Dense MLP forward/backward passes, a finite-difference gradient oracle,
and momentum SGD.

Everything is float64 and purely functional: no hidden state, no global
RNG. The encoder and the discriminator are both plain ``MlpParams``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "identity")


class ShapeError(ValueError):
    """Raised when array shapes do not chain or match."""


@dataclass
class Layer:
    weight: np.ndarray   # (out, in)
    bias: np.ndarray     # (out,)
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("layer weight must be 2-D and bias 1-D")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != output dim {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    layers: list[Layer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[0] != b.weight.shape[1]:
                raise ShapeError(
                    f"layer output dim {a.weight.shape[0]} does not chain into "
                    f"next layer input dim {b.weight.shape[1]}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


@dataclass
class GradBundle:
    """Per-layer (weight, bias) gradients, shape-congruent with an MlpParams."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]

    @staticmethod
    def zeros_like(params: MlpParams) -> "GradBundle":
        return GradBundle(
            [np.zeros_like(l.weight) for l in params.layers],
            [np.zeros_like(l.bias) for l in params.layers],
        )


@dataclass
class OptState:
    """Momentum accumulators plus hyper-parameters for one network."""

    weight_velocity: list[np.ndarray]
    bias_velocity: list[np.ndarray]
    lr: float
    momentum: float

    @staticmethod
    def fresh(params: MlpParams, lr: float, momentum: float) -> "OptState":
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        return OptState(
            [np.zeros_like(l.weight) for l in params.layers],
            [np.zeros_like(l.bias) for l in params.layers],
            lr,
            momentum,
        )


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> MlpParams:
    """Build an MLP with uniform [-s, s] weights, s = sqrt(6/(fan_in+fan_out)),
    and zero biases.

    ``dims`` has one more entry than ``activations``.
    """
    if len(dims) != len(activations) + 1:
        raise ValueError("need len(dims) == len(activations) + 1")
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpParams(layers)


def _activate(pre: np.ndarray, name: str) -> np.ndarray:
    if name == "tanh":
        return np.tanh(pre)
    if name == "sigmoid":
        # stable split form; never overflows
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        e = np.exp(pre[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return pre


def _activation_deriv(post: np.ndarray, name: str) -> np.ndarray:
    if name == "tanh":
        return 1.0 - post * post
    if name == "sigmoid":
        return post * (1.0 - post)
    return np.ones_like(post)


def mlp_forward(params: MlpParams, batch: np.ndarray):
    """Run the network on a (N, in_dim) batch.

    Returns ``(output, tape)`` where the tape holds each layer's input and
    post-activation, enough to run :func:`mlp_backward` without a re-run.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(
            f"batch shape {x.shape} incompatible with input dim {params.in_dim}"
        )
    tape = []
    for layer in params.layers:
        pre = x @ layer.weight.T + layer.bias
        post = _activate(pre, layer.activation)
        tape.append((x, post))
        x = post
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite values in forward pass output")
    return x, tape


def mlp_backward(params: MlpParams, tape, output_grad: np.ndarray):
    """Backpropagate ``output_grad`` (dL/doutput, shape (N, out_dim)).

    Returns exact analytic ``(GradBundle, input_grad)``; input_grad lets the
    caller chain a discriminator's gradient into the encoder.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if len(tape) != len(params.layers):
        raise ShapeError("tape length does not match network depth")
    if g.shape != tape[-1][1].shape:
        raise ShapeError(
            f"output_grad shape {g.shape} != output shape {tape[-1][1].shape}"
        )
    weight_grads = [None] * len(params.layers)
    bias_grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        x, post = tape[i]
        g_pre = g * _activation_deriv(post, layer.activation)
        weight_grads[i] = g_pre.T @ x
        bias_grads[i] = g_pre.sum(axis=0)
        g = g_pre @ layer.weight
    return GradBundle(weight_grads, bias_grads), g


def finite_diff_grad(params: MlpParams, scalar_fn, epsilon: float = 1e-5) -> GradBundle:
    """Central-difference gradient of ``scalar_fn(params)`` w.r.t. every entry.

    Verification oracle only: O(#params) evaluations of scalar_fn.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    def probe(arr, idx):
        old = arr[idx]
        arr[idx] = old + epsilon
        hi = scalar_fn(work)
        arr[idx] = old - epsilon
        lo = scalar_fn(work)
        arr[idx] = old
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("scalar_fn returned non-finite value")
        return (hi - lo) / (2.0 * epsilon)

    work = params.copy()
    bundle = GradBundle.zeros_like(params)
    for li, layer in enumerate(work.layers):
        gw = bundle.weight_grads[li]
        for idx in np.ndindex(layer.weight.shape):
            gw[idx] = probe(layer.weight, idx)
        gb = bundle.bias_grads[li]
        for idx in np.ndindex(layer.bias.shape):
            gb[idx] = probe(layer.bias, idx)
    return bundle


def finite_diff_input_grad(params: MlpParams, batch: np.ndarray, scalar_fn,
                           epsilon: float = 1e-5) -> np.ndarray:
    """Central differences of ``scalar_fn(batch)`` w.r.t. the input batch."""
    work = np.array(batch, dtype=np.float64)
    grad = np.zeros_like(work)
    for idx in np.ndindex(work.shape):
        old = work[idx]
        work[idx] = old + epsilon
        hi = scalar_fn(work)
        work[idx] = old - epsilon
        lo = scalar_fn(work)
        work[idx] = old
        grad[idx] = (hi - lo) / (2.0 * epsilon)
    return grad


def sgd_momentum_step(params: MlpParams, grads: GradBundle, state: OptState,
                      direction: str = "descend"):
    """One heavy-ball step: v <- m*v + g, theta <- theta -/+ lr*v.

    Returns ``(new_params, new_state)``; inputs are left untouched.
    """
    if direction not in ("ascend", "descend"):
        raise ValueError("direction must be 'ascend' or 'descend'")
    sign = 1.0 if direction == "ascend" else -1.0
    new_layers = []
    new_wv, new_bv = [], []
    for layer, gw, gb, vw, vb in zip(params.layers, grads.weight_grads,
                                     grads.bias_grads, state.weight_velocity,
                                     state.bias_velocity):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ShapeError("gradient shapes do not match parameters")
        vw = state.momentum * vw + gw
        vb = state.momentum * vb + gb
        new_layers.append(Layer(layer.weight + sign * state.lr * vw,
                                layer.bias + sign * state.lr * vb,
                                layer.activation))
        new_wv.append(vw)
        new_bv.append(vb)
    return MlpParams(new_layers), OptState(new_wv, new_bv, state.lr, state.momentum)


def max_relative_error(a: GradBundle, b: GradBundle) -> float:
    """Worst-entry relative error between two gradient bundles.

    Denominator is max(|a|, |b|, 1e-8) per entry so zero gradients compare
    cleanly.
    """
    worst = 0.0
    for ga, gb in zip(a.weight_grads + a.bias_grads, b.weight_grads + b.bias_grads):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), 1e-8)
        worst = max(worst, float(np.max(np.abs(ga - gb) / denom)))
    return worst
