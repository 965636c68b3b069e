"""Dense MLP with explicit forward/backward passes and plain SGD.

Parameters are stored as ``(in_dim, out_dim)`` weight matrices so a layer
computes ``x @ W + b``. Everything runs in float64.
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import kernels

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = RELU

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]


@dataclass
class ModelParams:
    layers: List[Layer]

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def specs(self):
        return [LayerSpec(l.in_dim, l.out_dim, l.activation) for l in self.layers]

    def copy(self):
        return ModelParams(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def num_scalars(self):
        return sum(a.size for a in self.arrays())

    def max_abs_diff(self, other):
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.arrays(), other.arrays()))


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: List[np.ndarray] = field(default_factory=list)
    post: List[np.ndarray] = field(default_factory=list)

    @property
    def output(self):
        return self.post[-1]


def check_chain(specs: Sequence[LayerSpec]):
    if not specs:
        raise ShapeError("at least one layer is required")
    for i in range(1, len(specs)):
        if specs[i - 1].out_dim != specs[i].in_dim:
            raise ShapeError(
                f"layer {i - 1} outputs {specs[i - 1].out_dim} but layer {i} expects {specs[i].in_dim}"
            )


def mlp_specs(dims: Sequence[int], final_activation: str = IDENTITY) -> List[LayerSpec]:
    """ReLU hidden layers between consecutive ``dims``; last layer uses ``final_activation``."""
    n = len(dims) - 1
    return [
        LayerSpec(dims[i], dims[i + 1], final_activation if i == n - 1 else RELU)
        for i in range(n)
    ]


def mlp_init(specs: Sequence[LayerSpec], seed: int) -> ModelParams:
    """Uniform(-1/sqrt(in_dim), 1/sqrt(in_dim)) weights, zero biases."""
    check_chain(specs)
    rng = np.random.default_rng(seed)
    layers = []
    for s in specs:
        bound = 1.0 / np.sqrt(s.in_dim)
        w = rng.uniform(-bound, bound, size=(s.in_dim, s.out_dim))
        layers.append(Layer(w, np.zeros(s.out_dim), s.activation))
    return ModelParams(layers)


def _as_batch(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d batch, got shape {x.shape}")
    return x


def forward(params: ModelParams, x) -> ForwardTrace:
    x = _as_batch(x)
    if x.shape[1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, model expects {params.in_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in input batch")
    trace = ForwardTrace(inputs=x)
    a = x
    for layer in params.layers:
        z, a = kernels.dense_forward(a, layer.weight, layer.bias, layer.activation == RELU)
        trace.pre.append(z)
        trace.post.append(a)
    return trace


def backward(params: ModelParams, trace: ForwardTrace, dout) -> Tuple[ModelParams, np.ndarray]:
    """Backpropagate ``dout`` (gradient w.r.t. the output batch).

    Returns parameter gradients shaped like ``params`` and the gradient with
    respect to the input batch.
    """
    dout = _as_batch(dout)
    if dout.shape != trace.output.shape:
        raise ShapeError(f"dout shape {dout.shape} != output shape {trace.output.shape}")
    if len(trace.pre) != len(params.layers):
        raise ShapeError("trace does not belong to these params")
    grads = [None] * len(params.layers)
    g = dout
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        x_in = trace.inputs if i == 0 else trace.post[i - 1]
        dw, db, g = kernels.dense_backward(
            x_in, layer.weight, trace.pre[i], g, layer.activation == RELU
        )
        grads[i] = Layer(dw, db, layer.activation)
    return ModelParams(grads), g


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and d(loss)/d(logits)."""
    logits = _as_batch(logits)
    labels = np.ascontiguousarray(labels, dtype=np.intp)
    if labels.shape != (logits.shape[0],):
        raise ShapeError("one label per logit row required")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"labels must lie in [0, {logits.shape[1]})")
    return kernels.softmax_xent(logits, labels)


def sgd_step(params: ModelParams, grads: ModelParams, lr: float) -> ModelParams:
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if len(grads.layers) != len(params.layers):
        raise ShapeError("gradient layer count mismatch")
    layers = []
    for p, g in zip(params.layers, grads.layers):
        if p.weight.shape != g.weight.shape or p.bias.shape != g.bias.shape:
            raise ShapeError("gradient shape mismatch")
        layers.append(Layer(p.weight - lr * g.weight, p.bias - lr * g.bias, p.activation))
    return ModelParams(layers)


def predict_proba(params: ModelParams, x) -> np.ndarray:
    return softmax(forward(params, x).output)


def predict(params: ModelParams, x) -> np.ndarray:
    return np.argmax(forward(params, x).output, axis=1)


def train_supervised(params, x, y, epochs, batch_size, lr, rng):
    """Minibatch SGD on softmax cross-entropy, reshuffling each epoch."""
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            trace = forward(params, x[idx])
            _, dlogits = softmax_cross_entropy(trace.output, y[idx])
            grads, _ = backward(params, trace, dlogits)
            params = sgd_step(params, grads, lr)
    return params
