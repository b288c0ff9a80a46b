"""Structured prompt factors, their key-scored fusion with text features,
and the normalized Gram penalty keeping factors mutually orthogonal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

# second component of the init seed, keeps prompt draws apart from label draws
_STREAM = 1


@dataclass
class PromptBank:
    P: np.ndarray    # n x d_h prompt factors
    K: np.ndarray    # n x d_h relevance keys
    W_f: np.ndarray  # 2*d_h x d_z fusion projection
    b_f: np.ndarray  # 1 x d_z

    def __post_init__(self):
        n, d_h = self.P.shape
        if n < 1:
            raise ad.ShapeError("a prompt bank needs at least one factor")
        if self.K.shape != (n, d_h):
            raise ad.ShapeError(f"K has shape {self.K.shape}, expected {(n, d_h)}")
        if self.W_f.shape[0] != 2 * d_h:
            raise ad.ShapeError(f"W_f has {self.W_f.shape[0]} rows, expected {2 * d_h}")
        if self.b_f.shape != (1, self.W_f.shape[1]):
            raise ad.ShapeError(f"b_f has shape {self.b_f.shape}, expected {(1, self.W_f.shape[1])}")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def d_h(self) -> int:
        return self.P.shape[1]

    @property
    def d_z(self) -> int:
        return self.W_f.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"P": self.P, "K": self.K, "W_f": self.W_f, "b_f": self.b_f}


def init_prompts(seed: int, n: int, d_h: int, d_z: int) -> PromptBank:
    """P, K ~ Normal(0, 1/sqrt(d_h)); W_f ~ Normal(0, 1/sqrt(2 d_h)); b_f = 0.

    Drawn in that order from ``numpy.random.default_rng([seed, 1])``.
    """
    if n < 1 or d_h < 1 or d_z < 1:
        raise ValueError(f"n, d_h, d_z must all be >= 1 (got {n}, {d_h}, {d_z})")
    rng = np.random.default_rng([seed, _STREAM])
    P = rng.normal(0.0, 1.0 / np.sqrt(d_h), size=(n, d_h))
    K = rng.normal(0.0, 1.0 / np.sqrt(d_h), size=(n, d_h))
    W_f = rng.normal(0.0, 1.0 / np.sqrt(2 * d_h), size=(2 * d_h, d_z))
    return PromptBank(P, K, W_f, np.zeros((1, d_z)))


def fuse(h: ad.Node, P: ad.Node, K: ad.Node, W_f: ad.Node, b_f: ad.Node,
         return_weights: bool = False):
    """Joint representation z for each row of ``h`` (B x d_h -> B x d_z).

    s = h K^T, alpha = softmax(s), c = alpha P, z = [h, c] W_f + b_f.
    """
    if h.shape[1] != P.shape[1]:
        raise ad.ShapeError(f"fuse: h has width {h.shape[1]}, prompts have width {P.shape[1]}")
    scores = ad.matmul(h, ad.transpose(K))
    alpha = ad.softmax_rows(scores)
    context = ad.matmul(alpha, P)
    z = ad.add_row(ad.matmul(ad.concat_cols(h, context), W_f), b_f)
    return (z, alpha) if return_weights else z


def orthogonality_penalty(P: ad.Node) -> ad.Node:
    """Mean squared cosine over distinct factor pairs; 0 for a single factor."""
    n = P.shape[0]
    if n == 1:
        # keeps P on the path so callers still get a (zero) gradient
        return ad.scale(ad.sum_all(P), 0.0)
    unit = ad.row_normalize(P)
    gram = ad.matmul(unit, ad.transpose(unit))
    upper = np.triu(np.ones((n, n)), k=1)
    return ad.scale(ad.sum_all(ad.mul_const(ad.square(gram), upper)), 2.0 / (n * (n - 1)))


def fuse_values(h: np.ndarray, bank: PromptBank) -> np.ndarray:
    """Forward-only convenience wrapper around :func:`fuse`."""
    tape = ad.Tape()
    nodes = [tape.constant(v) for v in (h, bank.P, bank.K, bank.W_f, bank.b_f)]
    return fuse(*nodes).value


def penalty_value(P: np.ndarray) -> float:
    tape = ad.Tape()
    return orthogonality_penalty(tape.constant(P)).item()
