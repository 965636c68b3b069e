import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vflshot import _pykernels, kernels

try:
    from vflshot import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _arrays(rng, n, d_in, d_out):
    x = rng.normal(size=(n, d_in))
    w = rng.normal(size=(d_in, d_out))
    b = rng.normal(size=d_out)
    dout = rng.normal(size=(n, d_out))
    return x, w, b, dout


class TestBackendSelection:
    def test_backend_name(self):
        assert kernels.BACKEND in ("python", "cython")

    def test_get_backend(self):
        assert kernels.get_backend("python") is _pykernels
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")


@needs_ext
class TestBackendsAgree:
    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 40), d_in=st.integers(1, 12), d_out=st.integers(1, 12),
           relu=st.booleans(), seed=st.integers(0, 10_000))
    def test_dense(self, n, d_in, d_out, relu, seed):
        x, w, b, dout = _arrays(np.random.default_rng(seed), n, d_in, d_out)
        zp, ap = _pykernels.dense_forward(x, w, b, relu)
        zc, ac = _ckernels.dense_forward(x, w, b, relu)
        np.testing.assert_allclose(zc, zp, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ac, ap, rtol=1e-12, atol=1e-12)
        for gp, gc in zip(_pykernels.dense_backward(x, w, zp, dout, relu),
                          _ckernels.dense_backward(x, w, zp, dout, relu)):
            np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 30), c=st.integers(2, 6), seed=st.integers(0, 10_000))
    def test_softmax_xent(self, n, c, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(scale=5, size=(n, c))
        labels = rng.integers(0, c, size=n).astype(np.intp)
        lp, gp = _pykernels.softmax_xent(logits, labels)
        lc, gc = _ckernels.softmax_xent(logits, labels)
        assert lc == pytest.approx(lp, rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 50), k=st.integers(1, 5), d=st.integers(1, 4), seed=st.integers(0, 10_000))
    def test_assign_nearest(self, n, k, d, seed):
        rng = np.random.default_rng(seed)
        # integer grid so exact ties occur
        pts = rng.integers(-2, 3, size=(n, d)).astype(float)
        cents = rng.integers(-2, 3, size=(k, d)).astype(float)
        lp, dp = _pykernels.assign_nearest(pts, cents)
        lc, dc = _ckernels.assign_nearest(pts, cents)
        np.testing.assert_array_equal(lc, lp)
        np.testing.assert_allclose(dc, dp)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            _ckernels.dense_forward(np.ones((2, 3)), np.ones((4, 2)), np.ones(2), True)
        with pytest.raises(ValueError):
            _ckernels.assign_nearest(np.ones((2, 3)), np.ones((2, 2)))


class TestPythonKernels:
    def test_assign_ties_to_lowest(self):
        labels, d = _pykernels.assign_nearest(np.array([[0.0]]), np.array([[1.0], [-1.0]]))
        assert labels[0] == 0 and d[0] == 1.0

    def test_softmax_xent_uniform(self):
        loss, grad = _pykernels.softmax_xent(np.zeros((4, 2)), np.array([0, 1, 0, 1]))
        assert loss == pytest.approx(np.log(2))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)
