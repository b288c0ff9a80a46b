"""Run configuration files (YAML or JSON) and ``--set key=value`` overrides.

Recognised top-level keys are the :class:`TrainConfig` fields plus ``data``,
``labels``, ``attributes``, ``vectors`` and ``grids``. ``data`` is either
``{csv: path}`` or ``{synth: {C, per_class, rho[, seed]}}``; a synth corpus
without its own seed follows the run seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import AG_NEWS_LABELS
from .objective import TrainConfig

DEFAULT_SYNTH = {"C": 4, "per_class": 100, "rho": 0.0}
DEFAULT_GRIDS = {
    "lr": [1e-5, 1e-4, 5e-4, 1e-3],
    "prompt_len": [5, 10, 20, 30, 40],
    "data_scale": [4, 8, 16, 32, 64],
}
EXTRA_KEYS = ("data", "labels", "attributes", "vectors", "grids")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig
    data: dict
    labels: tuple[str, ...]
    attributes: dict | None = None
    vectors: str | None = None
    grids: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_GRIDS))
    base_dir: str = "."

    @property
    def synth(self) -> dict | None:
        return self.data.get("synth")

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def effective(self) -> dict:
        """Every setting with defaults resolved; echoed into each output."""
        doc = self.train.to_dict()
        doc["data"] = copy.deepcopy(self.data)
        doc["labels"] = list(self.labels)
        doc["attributes"] = copy.deepcopy(self.attributes)
        doc["vectors"] = self.vectors
        doc["grids"] = copy.deepcopy(self.grids)
        return doc

    def with_train(self, **changes) -> "RunConfig":
        train = TrainConfig(**{**self.train.to_dict(), **changes})
        return RunConfig(train, self.data, self.labels, self.attributes, self.vectors, self.grids, self.base_dir)


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    return key.split("."), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        path, value = parse_override(text)
        node = doc
        for part in path[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[path[-1]] = value
    return doc


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _resolve_data(raw) -> dict:
    if raw is None:
        return {"synth": dict(DEFAULT_SYNTH)}
    if not isinstance(raw, dict):
        raise ConfigError("data: expected a mapping with 'csv' or 'synth'")
    unknown = set(raw) - {"csv", "synth"}
    if unknown:
        raise ConfigError(f"data: unknown key(s) {sorted(unknown)}")
    if ("csv" in raw) == ("synth" in raw):
        raise ConfigError("data: give exactly one of 'csv' or 'synth'")
    if "csv" in raw:
        if not isinstance(raw["csv"], str) or not raw["csv"]:
            raise ConfigError("data.csv: expected a file path")
        return {"csv": raw["csv"]}
    synth = raw["synth"] or {}
    if not isinstance(synth, dict):
        raise ConfigError("data.synth: expected a mapping")
    unknown = set(synth) - {"C", "per_class", "rho", "seed"}
    if unknown:
        raise ConfigError(f"data.synth: unknown key(s) {sorted(unknown)}")
    out = {**DEFAULT_SYNTH, **synth}
    try:
        out["C"] = int(out["C"])
        out["per_class"] = int(out["per_class"])
        out["rho"] = float(out["rho"])
        if "seed" in out and out["seed"] is not None:
            out["seed"] = int(out["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data.synth: {exc}") from exc
    if out["C"] < 2 or out["per_class"] < 1 or not 0.0 <= out["rho"] <= 1.0:
        raise ConfigError("data.synth: need C >= 2, per_class >= 1, 0 <= rho <= 1")
    return {"synth": out}


def _resolve_grids(raw) -> dict:
    grids = copy.deepcopy(DEFAULT_GRIDS)
    if raw is None:
        return grids
    if not isinstance(raw, dict):
        raise ConfigError("grids: expected a mapping")
    for axis, values in raw.items():
        if axis not in DEFAULT_GRIDS:
            raise ConfigError(f"grids: unknown axis {axis!r}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grids.{axis}: expected a non-empty list")
        grids[axis] = [parse_grid_value(axis, v) for v in values]
    return grids


def parse_grid_value(axis: str, value):
    try:
        if axis == "lr":
            return float(value)
        f = float(value)
        if f != int(f):
            raise ValueError(f"{value!r} is not an integer")
        return int(f)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid value for {axis}: {exc}") from exc


def build_run_config(doc: dict, base_dir=".") -> RunConfig:
    known = set(TrainConfig.field_names()) | set(EXTRA_KEYS)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    train_kwargs = {}
    defaults = TrainConfig()
    for name in TrainConfig.field_names():
        if name not in doc:
            continue
        want = type(getattr(defaults, name))
        value = doc[name]
        try:
            if want is int:
                if isinstance(value, bool) or float(value) != int(float(value)):
                    raise ValueError(f"expected an integer, got {value!r}")
                value = int(float(value))
            elif want is float:
                value = float(value)
            elif want is str and not isinstance(value, str):
                raise ValueError(f"expected a string, got {value!r}")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc
        train_kwargs[name] = value
    try:
        train = TrainConfig(**train_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    data = _resolve_data(doc.get("data"))
    labels = doc.get("labels")
    if labels is None:
        if "csv" in data:
            labels = list(AG_NEWS_LABELS)
        else:
            labels = [f"class{c}" for c in range(data["synth"]["C"])]
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ConfigError("labels: expected a list of names")
    if "synth" in data and len(labels) != data["synth"]["C"]:
        raise ConfigError(f"labels: {len(labels)} names but data.synth.C = {data['synth']['C']}")
    attributes = doc.get("attributes")
    if attributes is not None and not isinstance(attributes, dict):
        raise ConfigError("attributes: expected a mapping of label -> list of attribute names")
    vectors = doc.get("vectors")
    if vectors is not None and not isinstance(vectors, str):
        raise ConfigError("vectors: expected a file path")
    return RunConfig(train, data, tuple(labels), attributes, vectors, _resolve_grids(doc.get("grids")),
                     str(base_dir))


def load_run_config(path=None, overrides=()) -> RunConfig:
    doc = load_config_file(path) if path else {}
    base_dir = Path(path).parent if path else Path(".")
    return build_run_config(apply_overrides(doc, overrides), base_dir)
