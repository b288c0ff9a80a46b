"""Pure NumPy fallback for the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def matmul(a, b):
    n, m = a.shape
    out = np.zeros((n, b.shape[1]), dtype=np.float64)
    # one rank-1 update per inner index keeps the ascending summation order
    for k in range(m):
        out += np.multiply.outer(a[:, k], b[k, :])
    return out


def pair_count(pos, neg):
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    at_or_below = np.searchsorted(neg, pos, side="right")
    return int(2 * below.sum() + (at_or_below - below).sum())
