# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every output element is reduced by a single thread in ascending ``k`` order, so
results are bit-identical for any ``workers`` value.
"""
import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp


def contract(const double[:, ::1] G, const double[:, ::1] E, int workers=1):
    """``out[i, j] = sum_k G[i, k] * E[j, k]`` with a fixed summation order."""
    cdef Py_ssize_t nx = G.shape[0]
    cdef Py_ssize_t ny = E.shape[0]
    cdef Py_ssize_t K = G.shape[1]
    if E.shape[1] != K:
        raise ValueError("inner dimensions differ")
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t nblk = (nx + 3) // 4
    cdef Py_ssize_t bi, i0, j, k, r, rows
    cdef double acc0, acc1, acc2, acc3, e
    if workers < 1:
        workers = 1
    for bi in prange(nblk, nogil=True, num_threads=workers, schedule="static"):
        i0 = bi * 4
        rows = nx - i0
        if rows >= 4:
            for j in range(ny):
                acc0 = 0.0
                acc1 = 0.0
                acc2 = 0.0
                acc3 = 0.0
                for k in range(K):
                    e = E[j, k]
                    acc0 = acc0 + G[i0, k] * e
                    acc1 = acc1 + G[i0 + 1, k] * e
                    acc2 = acc2 + G[i0 + 2, k] * e
                    acc3 = acc3 + G[i0 + 3, k] * e
                o[i0, j] = acc0
                o[i0 + 1, j] = acc1
                o[i0 + 2, j] = acc2
                o[i0 + 3, j] = acc3
        else:
            for r in range(rows):
                for j in range(ny):
                    acc0 = 0.0
                    for k in range(K):
                        acc0 = acc0 + G[i0 + r, k] * E[j, k]
                    o[i0 + r, j] = acc0
    return out


def softmax_rows(const double[:, ::1] Z, int workers=1):
    """Row-wise soft-max with max subtraction."""
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t K = Z.shape[1]
    out = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k
    cdef double zmax, s
    if workers < 1:
        workers = 1
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        zmax = Z[i, 0]
        for k in range(1, K):
            if Z[i, k] > zmax:
                zmax = Z[i, k]
        s = 0.0
        for k in range(K):
            o[i, k] = exp(Z[i, k] - zmax)
            s = s + o[i, k]
        for k in range(K):
            o[i, k] = o[i, k] / s
    return out
