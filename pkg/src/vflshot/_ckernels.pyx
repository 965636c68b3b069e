# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``.

Elementwise work (bias, ReLU, masks, softmax) and the k-means assignment
loop run as single fused passes without temporaries; matrix products are
left to BLAS through ``np.dot``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def dense_forward(x, weight, bias, bint relu):
    """GEMM through BLAS; bias add and ReLU fused into one pass."""
    cdef const double[:, ::1] xv = x
    cdef const double[:, ::1] wv = weight
    cdef const double[::1] bv = bias
    cdef Py_ssize_t n = xv.shape[0], d_out = wv.shape[1]
    cdef Py_ssize_t i, j
    cdef double t
    if wv.shape[0] != xv.shape[1] or bv.shape[0] != d_out:
        raise ValueError("dense_forward: shape mismatch")
    z_arr = np.dot(x, weight)
    cdef double[:, ::1] z = z_arr
    if not relu:
        with nogil:
            for i in range(n):
                for j in range(d_out):
                    z[i, j] += bv[j]
        return z_arr, z_arr
    a_arr = np.empty((n, d_out), dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    with nogil:
        for i in range(n):
            for j in range(d_out):
                t = z[i, j] + bv[j]
                z[i, j] = t
                a[i, j] = t if t > 0.0 else 0.0
    return z_arr, a_arr


def dense_backward(x, weight, const double[:, ::1] z, const double[:, ::1] dout, bint relu):
    """ReLU mask and bias gradient in one pass; the two GEMMs go through BLAS."""
    cdef const double[:, ::1] xv = x
    cdef const double[:, ::1] wv = weight
    cdef Py_ssize_t n = xv.shape[0], d_out = wv.shape[1]
    cdef Py_ssize_t i, j
    cdef double g
    if dout.shape[0] != n or dout.shape[1] != d_out or z.shape[0] != n or z.shape[1] != d_out:
        raise ValueError("dense_backward: shape mismatch")
    dz_arr = np.empty((n, d_out), dtype=np.float64)
    db_arr = np.zeros(d_out, dtype=np.float64)
    cdef double[:, ::1] dz = dz_arr
    cdef double[::1] db = db_arr
    with nogil:
        for i in range(n):
            for j in range(d_out):
                g = dout[i, j]
                if relu and not (z[i, j] > 0.0):
                    g = 0.0
                dz[i, j] = g
                db[j] += g
    return np.dot(np.asarray(x).T, dz_arr), db_arr, np.dot(dz_arr, np.asarray(weight).T)


def softmax_xent(const double[:, ::1] logits, const cnp.intp_t[::1] labels):
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s, total = 0.0
    if labels.shape[0] != n:
        raise ValueError("softmax_xent: label count mismatch")
    grad_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    with nogil:
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(c):
                grad[i, j] = exp(logits[i, j] - m)
                s += grad[i, j]
            total += log(s) - (logits[i, labels[i]] - m)
            for j in range(c):
                grad[i, j] = grad[i, j] / s / n
            grad[i, labels[i]] -= 1.0 / n
    return total / n, grad_arr


def assign_nearest(const double[:, ::1] points, const double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], kc = centroids.shape[0]
    cdef Py_ssize_t i, j, f, best
    cdef double dist, best_dist, diff
    if centroids.shape[1] != d:
        raise ValueError("assign_nearest: dimension mismatch")
    labels_arr = np.empty(n, dtype=np.intp)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.intp_t[::1] labels = labels_arr
    cdef double[::1] dists = dist_arr
    with nogil:
        for i in range(n):
            best = 0
            best_dist = 0.0
            for j in range(kc):
                dist = 0.0
                for f in range(d):
                    diff = points[i, f] - centroids[j, f]
                    dist += diff * diff
                if j == 0 or dist < best_dist:
                    best = j
                    best_dist = dist
            labels[i] = best
            dists[i] = best_dist
    return labels_arr, dist_arr
