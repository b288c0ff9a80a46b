"""Versioned JSON checkpoints.

Matrices are stored as shape + row-major values. JSON floats are written with
``repr`` precision, so ``load(save(state))`` is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoder import build_encoder
from .labels import LabelSpace
from .objective import REGISTRY_ORDER, ModelState
from .prompts import PromptBank

CHECKPOINT_FORMAT = "structprompt-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _matrix(m: np.ndarray) -> dict:
    return {"shape": list(m.shape), "values": m.ravel().tolist()}


def _unmatrix(doc, name) -> np.ndarray:
    try:
        rows, cols = doc["shape"]
        values = np.array(doc["values"], dtype=np.float64)
        return values.reshape(rows, cols)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"matrix {name!r} is malformed: {exc}") from exc


def checkpoint_document(state: ModelState, config: dict) -> dict:
    enc = state.encoder
    return {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "config": config,
        "registry_order": list(REGISTRY_ORDER),
        "params": {name: _matrix(value) for name, value in state.registry()},
        "labels": {
            "names": list(state.labels.names),
            "attribute_vocab": list(state.labels.attribute_vocab),
            "Q": _matrix(state.labels.Q),
        },
        "encoder": {
            "seed": enc.seed,
            "vocab_size": enc.vocab_size,
            "dim": enc.dim,
            "vectors_sha256": enc.vectors_sha256,
        },
    }


def save_checkpoint(state: ModelState, config: dict, path) -> None:
    Path(path).write_text(dump_json(checkpoint_document(state, config)), encoding="utf-8")


def load_checkpoint(path, vectors_dir=None) -> tuple[ModelState, dict]:
    """Rebuild the model; returns ``(state, config echo)``.

    An encoder built from a vector file is rebuilt from the path in the config
    echo (relative to ``vectors_dir``) and verified against the stored digest.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} document")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {doc.get('version')!r}, expected {FORMAT_VERSION}")
    if doc.get("registry_order") != list(REGISTRY_ORDER):
        raise CheckpointError(f"{path}: unexpected registry order {doc.get('registry_order')!r}")

    params = {name: _unmatrix(doc["params"][name], name) for name in REGISTRY_ORDER}
    enc_doc = doc["encoder"]
    config = doc.get("config", {})
    vectors = None
    if enc_doc.get("vectors_sha256"):
        if not config.get("vectors"):
            raise CheckpointError(f"{path}: encoder came from a vector file but no path is recorded")
        vectors = Path(config["vectors"])
        if not vectors.is_absolute() and vectors_dir is not None:
            vectors = Path(vectors_dir) / vectors
    encoder = build_encoder(enc_doc["seed"], enc_doc["vocab_size"], enc_doc["dim"], vectors=vectors)
    if encoder.vectors_sha256 != enc_doc.get("vectors_sha256"):
        raise CheckpointError(f"{path}: vector file digest does not match the checkpoint")

    lab = doc["labels"]
    labels = LabelSpace(list(lab["names"]), list(lab["attribute_vocab"]), _unmatrix(lab["Q"], "Q"),
                        params["M"], params["W"])
    bank = PromptBank(params["P"], params["K"], params["W_f"], params["b_f"])
    return ModelState(encoder, bank, labels), config
