# cython: language_level=3
"""Compiled twins of the kernels in ``_pykernels``.

Same signatures and semantics; float64, channels-last, valid padding.
Convolutions are im2col followed by a direct BLAS ``dgemm`` call; the
col2im scatter for the input gradient runs in a plain C loop.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
                  Py_ssize_t stride, Py_ssize_t ho, Py_ssize_t wo, double* cols) noexcept nogil:
    # row (s, i, j), column (p, q, ch): matches w.reshape(kh * kw * c, f)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[3]
    cdef Py_ssize_t s, i, j, p, q, ch
    cdef const double* src
    cdef double* dst = cols
    for s in range(n):
        for i in range(ho):
            for j in range(wo):
                for p in range(kh):
                    for q in range(kw):
                        src = &x[s, i * stride + p, j * stride + q, 0]
                        for ch in range(c):
                            dst[ch] = src[ch]
                        dst += c


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                   const double[::1] b, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], f = w.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1, wo = (wd - kw) // stride + 1
    cdef int m = <int>(n * ho * wo), kk = <int>(kh * kw * c), ff = <int>f
    out_arr = np.empty((n, ho, wo, f), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double* cols = <double*>malloc(<size_t>m * kk * sizeof(double))
    if cols == NULL:
        raise MemoryError()
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N'
    cdef double* o = &out[0, 0, 0, 0]
    cdef Py_ssize_t r, k
    with nogil:
        _im2col(x, kh, kw, stride, ho, wo, cols)
        # row-major out(m x f) = cols(m x kk) @ W(kk x f)
        dgemm(&tn, &tn, &ff, &m, &kk, &one, <double*>&w[0, 0, 0, 0], &ff, cols, &kk,
              &zero, o, &ff)
        for r in range(m):
            for k in range(f):
                o[r * f + k] += b[k]
    free(cols)
    return out_arr


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] dout, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], f = w.shape[3]
    cdef Py_ssize_t ho = dout.shape[1], wo = dout.shape[2]
    cdef int m = <int>(n * ho * wo), kk = <int>(kh * kw * c), ff = <int>f
    dx_arr = np.zeros((n, h, wd, c), dtype=np.float64)
    dw_arr = np.empty((kh, kw, c, f), dtype=np.float64)
    db_arr = np.zeros(f, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double* cols = <double*>malloc(<size_t>m * kk * sizeof(double))
    if cols == NULL:
        raise MemoryError()
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N', tt = b'T'
    cdef double* g = <double*>&dout[0, 0, 0, 0]
    cdef Py_ssize_t s, i, j, p, q, ch, r, k
    cdef double* src
    cdef double* dst
    with nogil:
        for r in range(m):
            for k in range(f):
                db[k] += g[r * f + k]
        _im2col(x, kh, kw, stride, ho, wo, cols)
        # row-major dW(kk x f) = cols^T @ dout
        dgemm(&tn, &tt, &ff, &kk, &m, &one, g, &ff, cols, &kk, &zero, &dw[0, 0, 0, 0], &ff)
        # row-major dcols(m x kk) = dout @ W^T, reusing the cols buffer
        dgemm(&tt, &tn, &kk, &m, &ff, &one, <double*>&w[0, 0, 0, 0], &ff, g, &ff,
              &zero, cols, &kk)
        src = cols
        for s in range(n):
            for i in range(ho):
                for j in range(wo):
                    for p in range(kh):
                        for q in range(kw):
                            dst = &dx[s, i * stride + p, j * stride + q, 0]
                            for ch in range(c):
                                dst[ch] += src[ch]
                            src += c
    free(cols)
    return dx_arr, dw_arr, db_arr


cdef inline void _insertion_sort(double* a, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(1, m):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


def median_filter(const double[:, :, ::1] img, Py_ssize_t window):
    cdef Py_ssize_t h = img.shape[0], wd = img.shape[1], c = img.shape[2]
    cdef Py_ssize_t r = window // 2, m = window * window
    out_arr = np.empty((h, wd, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double* buf = <double*>malloc(m * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j, ch, p, q, yy, xx, t
    try:
        with nogil:
            for ch in range(c):
                for i in range(h):
                    for j in range(wd):
                        t = 0
                        for p in range(-r, r + 1):
                            yy = min(max(i + p, 0), h - 1)
                            for q in range(-r, r + 1):
                                xx = min(max(j + q, 0), wd - 1)
                                buf[t] = img[yy, xx, ch]
                                t += 1
                        _insertion_sort(buf, m)
                        out[i, j, ch] = buf[m // 2]
    finally:
        free(buf)
    return out_arr
