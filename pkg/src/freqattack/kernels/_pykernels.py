"""Numpy reference implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with an identical
signature. Arrays are float64 and channels-last (NHWC for batches, HWC for
single images). Convolutions use valid padding.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _patches(x, kh, kw, stride):
    # (N, Ho, Wo, C, kh, kw) strided view, no copy
    cols = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return cols[:, ::stride, ::stride]


def conv2d_forward(x, w, b, stride):
    kh, kw = w.shape[0], w.shape[1]
    cols = _patches(x, kh, kw, stride)
    out = np.tensordot(cols, w, axes=([3, 4, 5], [2, 0, 1]))
    out += b
    return np.ascontiguousarray(out)


def conv2d_backward(x, w, dout, stride):
    """Return (dx, dw, db) for ``out = conv2d_forward(x, w, b, stride)``."""
    kh, kw = w.shape[0], w.shape[1]
    n, ho, wo, f = dout.shape
    cols = _patches(x, kh, kw, stride)
    db = dout.sum(axis=(0, 1, 2))
    dw = np.tensordot(cols, dout, axes=([0, 1, 2], [0, 1, 2]))  # C, kh, kw, F
    dw = np.ascontiguousarray(dw.transpose(1, 2, 0, 3))
    dx = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + stride * (ho - 1) + 1:stride,
               j:j + stride * (wo - 1) + 1:stride, :] += dout @ w[i, j].T
    return dx, dw, db


def median_filter(img, window):
    """Per-channel sliding median of an HWC image with replicate padding."""
    r = window // 2
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    win = sliding_window_view(padded, (window, window), axis=(0, 1))
    h, w, c = img.shape
    return np.median(win.reshape(h, w, c, window * window), axis=-1)
