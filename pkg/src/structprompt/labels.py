"""Structured label embeddings, latent-to-label projection, scoring and
cross-space alignment.

Label embeddings are E = Q M, where Q (C x A) holds frozen row-normalized
attribute indicators and M (A x d_e) the learnable attribute embeddings.
Text representations z are carried into label space by u = z W^T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels

_STREAM = 2
ALIGN_MODES = ("contrastive", "literal")


class LabelConfigError(ValueError):
    pass


@dataclass
class LabelSpace:
    names: list[str]
    attribute_vocab: list[str]
    Q: np.ndarray  # C x A, frozen
    M: np.ndarray  # A x d_e
    W: np.ndarray  # d_e x d_z

    def __post_init__(self):
        self.Q.setflags(write=False)
        if self.Q.shape != (len(self.names), len(self.attribute_vocab)):
            raise ad.ShapeError(f"Q has shape {self.Q.shape}")
        if self.M.shape[0] != self.Q.shape[1] or self.W.shape[0] != self.M.shape[1]:
            raise ad.ShapeError(f"inconsistent shapes Q{self.Q.shape} M{self.M.shape} W{self.W.shape}")

    @property
    def C(self) -> int:
        return self.Q.shape[0]

    @property
    def d_e(self) -> int:
        return self.M.shape[1]

    @property
    def d_z(self) -> int:
        return self.W.shape[1]

    @property
    def E(self) -> np.ndarray:
        return kernels.matmul(self.Q, self.M)

    def params(self) -> dict[str, np.ndarray]:
        return {"M": self.M, "W": self.W}


def attribute_matrix(labels, attributes=None) -> tuple[list[str], np.ndarray]:
    """Attribute vocabulary (first-seen order) and the row-normalized indicator matrix."""
    labels = list(labels)
    if len(labels) < 2:
        raise LabelConfigError(f"need at least 2 labels, got {len(labels)}")
    if len(set(labels)) != len(labels):
        raise LabelConfigError("label names must be unique")
    if not attributes:
        return list(labels), np.eye(len(labels))
    if isinstance(attributes, dict):
        unknown = set(attributes) - set(labels)
        if unknown:
            raise LabelConfigError(f"attributes given for unknown labels: {sorted(unknown)}")
        per_label = [list(attributes.get(name) or []) for name in labels]
    else:
        per_label = [list(a) for a in attributes]
        if len(per_label) != len(labels):
            raise LabelConfigError(f"{len(per_label)} attribute lists for {len(labels)} labels")
    vocab: list[str] = []
    for name, attrs in zip(labels, per_label):
        if not attrs:
            raise LabelConfigError(f"label {name!r} has no attributes")
        for a in attrs:
            if a not in vocab:
                vocab.append(a)
    Q = np.zeros((len(labels), len(vocab)))
    for i, attrs in enumerate(per_label):
        uniq = list(dict.fromkeys(attrs))
        for a in uniq:
            Q[i, vocab.index(a)] = 1.0 / len(uniq)
    return vocab, Q


def build_label_space(labels, attributes=None, seed: int = 0, d_e: int = 64, d_z: int = 64) -> LabelSpace:
    """M ~ Normal(0, 1/sqrt(d_e)), W ~ Normal(0, 1/sqrt(d_z)) from ``default_rng([seed, 2])``.

    Without attributes Q is the identity, so E equals M.
    """
    vocab, Q = attribute_matrix(labels, attributes)
    rng = np.random.default_rng([seed, _STREAM])
    M = rng.normal(0.0, 1.0 / np.sqrt(d_e), size=(len(vocab), d_e))
    W = rng.normal(0.0, 1.0 / np.sqrt(d_z), size=(d_e, d_z))
    return LabelSpace(list(labels), vocab, Q, M, W)


def label_embeddings(Q: ad.Node, M: ad.Node) -> ad.Node:
    return ad.matmul(Q, M)


def project(z: ad.Node, W: ad.Node) -> ad.Node:
    if z.shape[1] != W.shape[1]:
        raise ad.ShapeError(f"project: z width {z.shape[1]} != W columns {W.shape[1]}")
    return ad.matmul(z, ad.transpose(W))


def score(z: ad.Node, E: ad.Node, W: ad.Node) -> ad.Node:
    """Class probabilities softmax(E W z) for each row of z."""
    return ad.softmax_rows(logits(project(z, W), E))


def logits(u: ad.Node, E: ad.Node) -> ad.Node:
    if u.shape[1] != E.shape[1]:
        raise ad.ShapeError(f"logits: u width {u.shape[1]} != label width {E.shape[1]}")
    return ad.matmul(u, ad.transpose(E))


def label_distances(u: ad.Node, E: ad.Node) -> ad.Node:
    """d(u_b, e_c) = ||u_b - e_c||^2 / d_e for every row/label pair."""
    return ad.scale(ad.pairwise_sqdist(u, E), 1.0 / E.shape[1])


def alignment_loss(u: ad.Node, E: ad.Node, gold, mode: str = "contrastive", margin: float = 1.0) -> ad.Node:
    """Per-row alignment loss (B x 1) between projected text and label embeddings.

    literal:     sum_c d(u, e_c)
    contrastive: d(u, e_gold) + mean_{c != gold} max(0, margin - d(u, e_c))
    """
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    C = E.shape[0]
    if gold.min() < 0 or gold.max() >= C:
        raise IndexError(f"alignment_loss: gold label outside 0..{C - 1}")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    dist = label_distances(u, E)
    if mode == "literal":
        return ad.sum_rows(dist)
    if mode != "contrastive":
        raise ValueError(f"unknown align mode {mode!r}; expected one of {ALIGN_MODES}")
    pull = ad.pick(dist, gold)
    others = np.ones((u.shape[0], C))
    others[np.arange(u.shape[0]), gold] = 0.0
    hinge = ad.mul_const(ad.relu(ad.shift(ad.scale(dist, -1.0), margin)), others)
    return ad.add(pull, ad.scale(ad.sum_rows(hinge), 1.0 / (C - 1)))


def score_values(z: np.ndarray, space: LabelSpace) -> np.ndarray:
    tape = ad.Tape()
    E = label_embeddings(tape.constant(space.Q), tape.constant(space.M))
    return score(tape.constant(z), E, tape.constant(space.W)).value


def project_values(z: np.ndarray, space: LabelSpace) -> np.ndarray:
    tape = ad.Tape()
    return project(tape.constant(z), tape.constant(space.W)).value
