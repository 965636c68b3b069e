"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``VFLSHOT_BACKEND=python`` is set. Signatures match the Cython module.
"""
import numpy as np


def dense_forward(x, weight, bias, relu):
    z = x @ weight + bias
    if relu:
        return z, np.maximum(z, 0.0)
    return z, z


def dense_backward(x, weight, z, dout, relu):
    """Gradients of a dense layer given the gradient w.r.t. its activation.

    Returns ``(d_weight, d_bias, d_input)``.
    """
    dz = dout * (z > 0.0) if relu else dout
    return x.T @ dz, dz.sum(axis=0), dz @ weight.T


def softmax_xent(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    sums = exp.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(sums[:, 0]) - shifted[rows, labels]))
    grad = exp / sums
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def assign_nearest(points, centroids):
    """Nearest centroid per point; ties go to the lowest centroid index.

    Returns ``(labels, squared_distances)``.
    """
    diff = points[:, None, :] - centroids[None, :, :]
    dist = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(dist, axis=1)
    return labels.astype(np.intp), dist[np.arange(points.shape[0]), labels]
