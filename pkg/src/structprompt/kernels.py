"""Kernel dispatch: compiled extension when importable, NumPy otherwise.

Set ``STRUCTPROMPT_PURE=1`` to force the fallback. Both backends produce
bit-identical results; ``BACKEND`` names the one in use.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("STRUCTPROMPT_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def matmul(a, b, impl=None):
    """Return ``a @ b`` summed in ascending inner index for every entry."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return (impl or _impl).matmul(a, b)


def pair_count(pos, neg, impl=None):
    """Return 2 * #(pos > neg) + #(pos == neg) over all pairs."""
    pos = np.ascontiguousarray(pos, dtype=np.float64).ravel()
    neg = np.ascontiguousarray(neg, dtype=np.float64).ravel()
    return int((impl or _impl).pair_count(pos, neg))
