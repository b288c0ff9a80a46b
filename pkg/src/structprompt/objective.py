"""Joint training objective, optimizers and the full-batch training loop.

    L = mean CE(score(fuse(h)), y) + lambda1 * mean align(u, E, y) + lambda2 * L_reg(P)

Prompt vectors are found by joint gradient descent on L together with every
other trainable matrix.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Iterable

import numpy as np

from . import autodiff as ad
from .encoder import EncoderTable, build_encoder
from .labels import ALIGN_MODES, LabelSpace, alignment_loss, build_label_space, label_embeddings, logits, project
from .prompts import PromptBank, fuse, init_prompts, orthogonality_penalty

REGISTRY_ORDER = ("P", "K", "W_f", "b_f", "M", "W")
OPTIMIZERS = ("adam", "sgd")


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    V: int = 4096
    d_h: int = 64
    d_z: int = 64
    d_e: int = 64
    n_prompts: int = 20
    lambda1: float = 0.1
    lambda2: float = 0.01
    lr: float = 0.01
    epochs: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    align_mode: str = "contrastive"
    margin: float = 1.0
    k_shot: int = 16

    def __post_init__(self):
        for name in ("V", "d_h", "d_z", "d_e", "n_prompts", "k_shot"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.V < 2:
            raise ValueError(f"V must be >= 2, got {self.V}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("lambda1", "lambda2", "margin"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not self.lr > 0 or not math.isfinite(self.lr):
            raise ValueError(f"lr must be finite and > 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.align_mode not in ALIGN_MODES:
            raise ValueError(f"align_mode must be one of {ALIGN_MODES}, got {self.align_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class ModelState:
    encoder: EncoderTable
    bank: PromptBank
    labels: LabelSpace

    def registry(self) -> list[tuple[str, np.ndarray]]:
        """Trainable matrices in the fixed order P, K, W_f, b_f, M, W."""
        params = {**self.bank.params(), **self.labels.params()}
        return [(name, params[name]) for name in REGISTRY_ORDER]

    def with_params(self, params: dict[str, np.ndarray]) -> "ModelState":
        bank = PromptBank(params["P"], params["K"], params["W_f"], params["b_f"])
        labels = replace(self.labels, M=params["M"], W=params["W"])
        return ModelState(self.encoder, bank, labels)


def init_state(cfg: TrainConfig, label_names, attributes=None, vectors=None) -> ModelState:
    encoder = build_encoder(cfg.seed, cfg.V, cfg.d_h, vectors=vectors)
    if encoder.dim != cfg.d_h:
        raise ValueError(f"vector file has dim {encoder.dim} but d_h={cfg.d_h}")
    bank = init_prompts(cfg.seed, cfg.n_prompts, cfg.d_h, cfg.d_z)
    labels = build_label_space(label_names, attributes, cfg.seed, cfg.d_e, cfg.d_z)
    return ModelState(encoder, bank, labels)


@dataclass(frozen=True)
class LossTerms:
    task: float
    align: float
    reg: float
    total: float


@dataclass
class Objective:
    """Tape nodes of one forward pass."""
    total: ad.Node
    task: ad.Node
    align: ad.Node
    reg: ad.Node
    probs: ad.Node
    u: ad.Node

    def terms(self) -> LossTerms:
        return LossTerms(self.task.item(), self.align.item(), self.reg.item(), self.total.item())


def build_objective(tape: ad.Tape, nodes: dict[str, ad.Node], H: np.ndarray, golds,
                    Q: np.ndarray, cfg: TrainConfig) -> Objective:
    """Record the joint loss on ``tape`` for encoded texts ``H`` (B x d_h)."""
    golds = np.asarray(golds, dtype=np.int64)
    h = tape.constant(H)
    z = fuse(h, nodes["P"], nodes["K"], nodes["W_f"], nodes["b_f"])
    E = label_embeddings(tape.constant(Q), nodes["M"])
    u = project(z, nodes["W"])
    probs = ad.softmax_rows(logits(u, E))
    task = ad.mean_all(ad.cross_entropy(probs, golds))
    align = ad.mean_all(alignment_loss(u, E, golds, cfg.align_mode, cfg.margin))
    reg = orthogonality_penalty(nodes["P"])
    total = ad.add(ad.add(task, ad.scale(align, cfg.lambda1)), ad.scale(reg, cfg.lambda2))
    return Objective(total, task, align, reg, probs, u)


def encode_batch(encoder: EncoderTable, batch) -> tuple[np.ndarray, np.ndarray]:
    """Encode ``(ids, gold)`` pairs into H (B x d_h) and the gold vector."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    H = encoder.encode_batch([ids for ids, _ in batch])
    return H, np.array([gold for _, gold in batch], dtype=np.int64)


def loss_and_grads(state: ModelState, H: np.ndarray, golds, cfg: TrainConfig):
    tape = ad.Tape()
    nodes = {name: tape.leaf(value, trainable=True, name=name) for name, value in state.registry()}
    obj = build_objective(tape, nodes, H, golds, state.labels.Q, cfg)
    return obj.terms(), tape.backward(obj.total)


def total_loss(state: ModelState, batch, cfg: TrainConfig) -> LossTerms:
    H, golds = encode_batch(state.encoder, batch)
    tape = ad.Tape()
    nodes = {name: tape.constant(value) for name, value in state.registry()}
    return build_objective(tape, nodes, H, golds, state.labels.Q, cfg).terms()


def predict_proba(state: ModelState, H: np.ndarray) -> np.ndarray:
    tape = ad.Tape()
    nodes = {name: tape.constant(value) for name, value in state.registry()}
    z = fuse(tape.constant(H), nodes["P"], nodes["K"], nodes["W_f"], nodes["b_f"])
    E = label_embeddings(tape.constant(state.labels.Q), nodes["M"])
    return ad.softmax_rows(logits(project(z, nodes["W"]), E)).value


def projected(state: ModelState, H: np.ndarray) -> np.ndarray:
    """u = z W^T for each encoded row."""
    tape = ad.Tape()
    nodes = {name: tape.constant(value) for name, value in state.registry()}
    z = fuse(tape.constant(H), nodes["P"], nodes["K"], nodes["W_f"], nodes["b_f"])
    return project(z, nodes["W"]).value


# ---------------------------------------------------------------------------
# optimizers


def _check_aligned(registry, grads):
    for name, value in registry:
        if name not in grads:
            raise ad.ShapeError(f"no gradient for parameter {name!r}")
        if grads[name].shape != value.shape:
            raise ad.ShapeError(f"gradient for {name!r} has shape {grads[name].shape}, expected {value.shape}")


def sgd_step(registry, grads, lr: float):
    """theta <- theta - lr * g for every parameter; returns a new registry."""
    _check_aligned(registry, grads)
    return [(name, value - lr * grads[name]) for name, value in registry]


def init_moments(registry) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {name: (np.zeros_like(value), np.zeros_like(value)) for name, value in registry}


def adam_step(registry, grads, moments, lr: float, t: int,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update at step ``t`` (1-based)."""
    if t < 1:
        raise ValueError(f"adam step index must be >= 1, got {t}")
    _check_aligned(registry, grads)
    new_registry, new_moments = [], {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, value in registry:
        g = grads[name]
        m, v = moments[name]
        if m.shape != value.shape or v.shape != value.shape:
            raise ad.ShapeError(f"moments for {name!r} do not match shape {value.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_registry.append((name, value - lr * (m / c1) / (np.sqrt(v / c2) + eps)))
        new_moments[name] = (m, v)
    return new_registry, new_moments


# ---------------------------------------------------------------------------
# training loop

Callback = Callable[[int, LossTerms, ModelState], None]


def fit(state: ModelState, train, cfg: TrainConfig,
        callbacks: Iterable[Callback] = ()) -> tuple[ModelState, list[LossTerms]]:
    """Full-batch descent for ``cfg.epochs`` epochs.

    ``train`` is a Dataset or a sequence of ``(ids, gold)`` pairs. The trace
    holds the loss terms evaluated at the start of each epoch, before that
    epoch's update. The input state is never modified.
    """
    if hasattr(train, "examples"):
        batch = [(state.encoder.tokenize(ex.text), ex.label) for ex in train.examples]
    else:
        batch = list(train)
    if not batch:
        raise ValueError("training set is empty")
    H, golds = encode_batch(state.encoder, batch)
    callbacks = list(callbacks)

    registry = [(name, value.copy()) for name, value in state.registry()]
    moments = init_moments(registry)
    trace: list[LossTerms] = []
    current = state
    for epoch in range(1, cfg.epochs + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                terms, grads = loss_and_grads(current, H, golds, cfg)
        except ad.NumericError as exc:
            raise DivergenceError(epoch, str(exc)) from exc
        trace.append(terms)
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.optimizer == "adam":
                registry, moments = adam_step(registry, grads, moments, cfg.lr, epoch,
                                              cfg.beta1, cfg.beta2, cfg.adam_eps)
            else:
                registry = sgd_step(registry, grads, cfg.lr)
        if not all(np.isfinite(value).all() for _, value in registry):
            raise DivergenceError(epoch, "parameters became non-finite")
        current = state.with_params(dict(registry))
        for cb in callbacks:
            cb(epoch, terms, current)
    return current, trace
