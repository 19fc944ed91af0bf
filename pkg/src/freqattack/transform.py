"""Orthonormal 2D type-II DCT and its inverse.

Spectra are stored 0-based: coefficient ``v[i, j]`` is the weight of the
basis function with vertical frequency ``i`` and horizontal frequency ``j``,
so ``v[0, 0]`` is the DC term.
"""
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError


@lru_cache(maxsize=32)
def _basis(d):
    k = np.arange(d)[:, None]
    n = np.arange(d)[None, :]
    c = np.cos(np.pi * (2 * n + 1) * k / (2 * d))
    c[0] *= np.sqrt(1.0 / d)
    c[1:] *= np.sqrt(2.0 / d)
    c.setflags(write=False)
    return c


def dct_matrix(d):
    """Return the ``d x d`` orthonormal DCT-II matrix ``C`` (``C @ C.T == I``).

    Row ``k`` holds the sampled basis function of frequency ``k``.
    """
    if int(d) != d or d < 1:
        raise InvalidInputError(f"DCT size must be a positive integer, got {d!r}")
    return _basis(int(d))


def _check_plane(a, what):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"{what} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{what} contains non-finite values")
    return a


def dct2(plane):
    """Orthonormal 2D DCT-II of a square plane."""
    x = _check_plane(plane, "plane")
    c = _basis(x.shape[0])
    return c @ x @ c.T


def idct2(spectrum):
    """Inverse of :func:`dct2`."""
    v = _check_plane(spectrum, "spectrum")
    c = _basis(v.shape[0])
    return c.T @ v @ c


def _check_image(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 3:
        raise InvalidInputError(f"expected (..., H, W, C) image data, got shape {a.shape}")
    if a.shape[-3] != a.shape[-2]:
        raise InvalidInputError(
            f"spatial dims must be square, got {a.shape[-3]}x{a.shape[-2]}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("image contains non-finite values")
    return a


def separable(left, x, right=None):
    """Apply ``left @ X @ right.T`` to every channel plane of ``(..., H, W, C)`` data.

    ``right`` defaults to ``left``.
    """
    right = left if right is None else right
    planes = np.moveaxis(x, -1, -3)
    out = left @ planes @ right.T
    return np.moveaxis(out, -3, -1)


def dct_image(image):
    """Per-channel DCT of ``(..., d, d, C)`` image data; layout is preserved."""
    x = _check_image(image)
    return separable(_basis(x.shape[-2]), x)


def idct_image(spectra):
    """Inverse of :func:`dct_image`."""
    v = _check_image(spectra)
    return separable(_basis(v.shape[-2]).T, v)
