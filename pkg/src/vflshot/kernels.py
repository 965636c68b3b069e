"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
not built or when ``VFLSHOT_BACKEND=python``. Both expose the same four
functions and agree to floating-point rounding.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("VFLSHOT_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
softmax_xent = _impl.softmax_xent
assign_nearest = _impl.assign_nearest
