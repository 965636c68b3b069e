"""Independent reference computations shared by the test modules."""
import itertools

import numpy as np

from vflshot import nn


def random_network(rng, max_layers=3, max_width=6):
    depth = int(rng.integers(1, max_layers + 1))
    dims = [int(rng.integers(1, max_width + 1)) for _ in range(depth + 1)]
    acts = [nn.RELU if rng.random() < 0.6 else nn.IDENTITY for _ in range(depth)]
    specs = [nn.LayerSpec(dims[i], dims[i + 1], acts[i]) for i in range(depth)]
    params = nn.mlp_init(specs, int(rng.integers(1 << 30)))
    for layer in params.layers:
        layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
    return params


def loop_forward(params, x):
    """Forward pass with explicit loops; shares no code with the library."""
    out = []
    for row in np.asarray(x, dtype=float):
        a = list(row)
        for layer in params.layers:
            z = []
            for j in range(layer.weight.shape[1]):
                s = float(layer.bias[j])
                for i, v in enumerate(a):
                    s += v * float(layer.weight[i, j])
                z.append(s)
            a = [max(v, 0.0) for v in z] if layer.activation == nn.RELU else z
        out.append(a)
    return np.array(out)


def central_difference(f, arr, eps=1e-6):
    """Numerical gradient of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + eps
        up = f()
        arr[idx] = old - eps
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b, floor=1e-7):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor), initial=0.0))


def relu_margin(params, x):
    """Smallest |pre-activation| over ReLU units; finite differences need it above eps."""
    trace = nn.forward(params, x)
    margins = [np.min(np.abs(z)) for z, l in zip(trace.pre, params.layers) if l.activation == nn.RELU]
    return min(margins, default=np.inf)


def exhaustive_bipartition_sse(points):
    """Minimum within-cluster SSE over all splits into two non-empty groups."""
    n = points.shape[0]
    best = np.inf
    for mask in itertools.product([False, True], repeat=n - 1):
        side = np.array((False,) + mask)
        if side.all() or not side.any():
            continue
        sse = 0.0
        for group in (points[side], points[~side]):
            sse += float(np.sum((group - group.mean(axis=0)) ** 2))
        best = min(best, sse)
    return best


def pairwise_auc(scores, labels):
    """AUC by enumerating every positive/negative pair, exact in rationals."""
    from fractions import Fraction

    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p in pos:
        for q in neg:
            total += 1 if p > q else Fraction(1, 2) if p == q else 0
    return total / (len(pos) * len(neg))


def torch_monolithic_step(extractors, classifier, xs, y, client_lr, server_lr):
    """One SGD step on extractors wired into the classifier, differentiated by torch autograd.

    Returns ``(new_extractors, new_classifier)`` as lists of ``(weight, bias)`` numpy pairs.
    """
    import torch

    def to_torch(params):
        return [(torch.tensor(l.weight, dtype=torch.float64, requires_grad=True),
                 torch.tensor(l.bias, dtype=torch.float64, requires_grad=True), l.activation)
                for l in params.layers]

    def run(layers, x):
        for w, b, act in layers:
            x = x @ w + b
            if act == nn.RELU:
                x = torch.relu(x)
        return x

    t_ext = [to_torch(e) for e in extractors]
    t_cls = to_torch(classifier)
    h = torch.cat([run(layers, torch.tensor(x)) for layers, x in zip(t_ext, xs)], dim=1)
    loss = torch.nn.functional.cross_entropy(run(t_cls, h), torch.tensor(np.asarray(y)))
    loss.backward()

    def stepped(layers, lr):
        with torch.no_grad():
            return [((w - lr * w.grad).numpy(), (b - lr * b.grad).numpy()) for w, b, _ in layers]

    return [stepped(l, client_lr) for l in t_ext], stepped(t_cls, server_lr)


def max_param_gap(params, pairs):
    return max(max(float(np.max(np.abs(l.weight - w))), float(np.max(np.abs(l.bias - b))))
               for l, (w, b) in zip(params.layers, pairs))
