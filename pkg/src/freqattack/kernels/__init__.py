"""Hot kernels with a compiled core and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy twins in ``_pykernels`` are used. Setting ``FREQATTACK_BACKEND=python``
forces the fallback even when the extension is present.
"""
import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("FREQATTACK_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def available_backends():
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b, stride=1):
    return _impl.conv2d_forward(_f64(x), _f64(w), _f64(b), int(stride))


def conv2d_backward(x, w, dout, stride=1):
    return _impl.conv2d_backward(_f64(x), _f64(w), _f64(dout), int(stride))


def median_filter(img, window):
    return _impl.median_filter(_f64(img), int(window))
