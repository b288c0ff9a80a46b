# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay bit-identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    """Dense product with per-element summation in ascending inner index."""
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    out = np.zeros((n, p), dtype=np.float64)
    cdef double[:, ::1] c = out
    # i-k-j order: each c[i, j] still accumulates k = 0, 1, ... in sequence.
    for i in range(n):
        for k in range(m):
            aik = a[i, k]
            for j in range(p):
                c[i, j] = c[i, j] + aik * b[k, j]
    return out


def pair_count(pos, neg):
    """Twice the number of (pos, neg) pairs ranked correctly, ties counted once."""
    cdef const double[::1] p = np.sort(pos)
    cdef const double[::1] q = np.sort(neg)
    cdef Py_ssize_t i, below = 0, upto = 0, nq = q.shape[0]
    cdef long long total = 0
    cdef double s
    # pos ascending: both "neg < s" and "neg <= s" boundaries only move right
    for i in range(p.shape[0]):
        s = p[i]
        while below < nq and q[below] < s:
            below += 1
        if upto < below:
            upto = below
        while upto < nq and q[upto] <= s:
            upto += 1
        total += 2 * below + (upto - below)
    return total
