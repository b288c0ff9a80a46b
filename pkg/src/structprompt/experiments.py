"""Single training runs and the three sensitivity sweeps (lr, prompt length, data scale)."""

from __future__ import annotations

import csv
import io
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import FORMAT_VERSION, dump_json, load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_config, parse_grid_value
from .data import Dataset, kshot_sample, load_agnews_csv, read_labeled_csv, synth_generate, write_csv
from .encoder import fnv1a_64
from .metrics import EvaluationError, MetricsReport, evaluate
from .objective import DivergenceError, LossTerms, ModelState, fit, init_state, predict_proba

log = logging.getLogger(__name__)

METRICS_FORMAT = "structprompt-metrics"
SWEEP_FORMAT = "structprompt-sweep"
TRACE_HEADER = ["epoch", "task_loss", "align_loss", "reg_loss", "total_loss"]
SWEEP_HEADER = ["axis_value", "seed", "accuracy", "macro_precision", "macro_recall", "macro_f1", "macro_auc"]
METRIC_FIELDS = SWEEP_HEADER[2:]
AXIS_KEYS = {"lr": "lr", "prompt_len": "n_prompts", "data_scale": "k_shot"}
DIVERGED = "diverged"


class CompatibilityError(ValueError):
    """Checkpoint and evaluation data disagree (e.g. on the label count)."""


@dataclass
class RunResult:
    state: ModelState
    initial: ModelState
    trace: list[LossTerms]
    train: Dataset
    heldout: Dataset
    metrics: MetricsReport | None


def load_dataset(run: RunConfig) -> Dataset:
    if "csv" in run.data:
        return load_agnews_csv(run.resolve(run.data["csv"]), run.labels)
    synth = run.synth
    seed = synth.get("seed")
    return synth_generate(synth["C"], synth["per_class"], synth["rho"],
                          run.train.seed if seed is None else seed, label_names=run.labels)


def encode_dataset(state: ModelState, ds: Dataset) -> np.ndarray:
    return state.encoder.encode_batch([state.encoder.tokenize(t) for t in ds.texts])


def evaluate_state(state: ModelState, ds: Dataset) -> tuple[MetricsReport, np.ndarray]:
    if len(ds) == 0:
        raise EvaluationError("evaluation set is empty")
    probs = predict_proba(state, encode_dataset(state, ds))
    return evaluate(ds.labels, probs), probs


def run_training(run: RunConfig) -> RunResult:
    cfg = run.train
    ds = load_dataset(run)
    train, heldout = kshot_sample(ds, cfg.k_shot, cfg.seed)
    vectors = run.resolve(run.vectors) if run.vectors else None
    initial = init_state(cfg, run.labels, run.attributes, vectors=vectors)
    state, trace = fit(initial, train, cfg)
    metrics = evaluate_state(state, heldout)[0] if len(heldout) else None
    return RunResult(state, initial, trace, train, heldout, metrics)


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_csv(trace: list[LossTerms]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for epoch, t in enumerate(trace, start=1):
        writer.writerow([epoch, _fmt(t.task), _fmt(t.align), _fmt(t.reg), _fmt(t.total)])
    return buf.getvalue()


def metrics_document(config: dict, report: MetricsReport | None, split: str, **extra) -> dict:
    return {
        "format": METRICS_FORMAT,
        "version": FORMAT_VERSION,
        "config": config,
        "split": split,
        "metrics": report.to_dict() if report is not None else None,
        **extra,
    }


def cmd_train(run: RunConfig, out_dir) -> RunResult:
    """Train per ``run`` and write checkpoint, metrics, loss trace and the data splits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = effective_config(run)
    result = run_training(run)
    save_checkpoint(result.state, config, out / "checkpoint.json")
    (out / "loss_trace.csv").write_text(trace_csv(result.trace), encoding="utf-8")
    write_csv(result.train, out / "train_split.csv")
    write_csv(result.heldout, out / "heldout_split.csv")
    note = {} if result.metrics is not None else {"note": "held-out split is empty"}
    doc = metrics_document(config, result.metrics, "heldout", examples=len(result.heldout), **note)
    (out / "metrics.json").write_text(dump_json(doc), encoding="utf-8")
    return result


def effective_config(run: RunConfig) -> dict:
    doc = run.effective()
    if run.vectors:
        doc["vectors"] = str(run.resolve(run.vectors))
    return doc


def cmd_eval(checkpoint_path, data_path, out_dir) -> MetricsReport:
    """Score a CSV file with a saved model; writes metrics.json and predictions.csv."""
    state, config = load_checkpoint(checkpoint_path)
    examples, top = read_labeled_csv(data_path)
    if not examples:
        raise EvaluationError(f"{data_path}: no examples to evaluate")
    C = state.labels.C
    if top > C:
        raise CompatibilityError(f"{data_path}: data uses class {top} but the checkpoint has {C} labels")
    ds = Dataset(examples, state.labels.names)
    report, probs = evaluate_state(state, ds)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "gold", "pred"] + [f"p_{c}" for c in range(C)])
    preds = probs.argmax(axis=1)
    for i, (gold, pred, row) in enumerate(zip(ds.labels, preds, probs)):
        writer.writerow([i, gold, int(pred)] + [_fmt(p) for p in row])
    (out / "predictions.csv").write_text(buf.getvalue(), encoding="utf-8")
    doc = metrics_document(config, report, "eval", data=str(data_path), examples=len(ds))
    (out / "metrics.json").write_text(dump_json(doc), encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# sweeps


def derive_seed(base_seed: int, axis: str, value, run_index: int) -> int:
    """Per-point seed from FNV-1a over ``"base:axis:value:index"``, reduced to 31 bits."""
    return fnv1a_64(f"{base_seed}:{axis}:{value!r}:{run_index}") % (2**31)


def _point(args) -> list[str]:
    doc, base_dir, axis, value, run_index = args
    run = build_run_config(doc, base_dir)
    seed = derive_seed(run.train.seed, axis, value, run_index)
    point = run.with_train(seed=seed, **{AXIS_KEYS[axis]: value})
    try:
        result = run_training(point)
    except DivergenceError as exc:
        log.info("sweep %s=%r seed=%d: %s", axis, value, seed, exc)
        return [repr(value), str(seed)] + [DIVERGED] * len(METRIC_FIELDS)
    if result.metrics is None:
        raise EvaluationError(f"sweep point {axis}={value!r} left no held-out examples")
    m = result.metrics
    return [repr(value), str(seed)] + [_fmt(getattr(m, f)) for f in METRIC_FIELDS]


def _summary(rows: list[list[str]], grid) -> list[list[str]]:
    out = []
    for value in grid:
        mine = [r for r in rows if r[0] == repr(value)]
        ok = [r for r in mine if r[2] != DIVERGED]
        means = [_fmt(sum(float(r[i]) for r in ok) / len(ok)) if ok else DIVERGED
                 for i in range(2, 2 + len(METRIC_FIELDS))]
        out.append([repr(value), str(len(mine)), str(len(mine) - len(ok))] + means)
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_sweep(run: RunConfig, axis: str, out_dir, grid=None, seeds: int = 3, jobs: int = 1):
    """Train + evaluate every (grid value, run index) pair.

    Rows come out in grid order then run order whatever ``jobs`` is, so a
    parallel sweep writes the same bytes as a serial one.
    """
    if axis not in AXIS_KEYS:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXIS_KEYS)}")
    if seeds < 1:
        raise ValueError(f"seeds must be >= 1, got {seeds}")
    grid = [parse_grid_value(axis, v) for v in (grid if grid is not None else run.grids[axis])]
    if not grid:
        raise ValueError("sweep grid is empty")
    doc = {k: v for k, v in run.effective().items()}
    tasks = [(doc, run.base_dir, axis, value, i) for value in grid for i in range(seeds)]
    if jobs > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            rows = list(pool.map(_point, tasks))
    else:
        rows = [_point(t) for t in tasks]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(_csv_text(SWEEP_HEADER, rows), encoding="utf-8")
    summary_header = ["axis_value", "runs", "diverged"] + [f"mean_{f}" for f in METRIC_FIELDS]
    (out / "sweep_summary.csv").write_text(_csv_text(summary_header, _summary(rows, grid)), encoding="utf-8")
    manifest = {
        "format": SWEEP_FORMAT,
        "version": FORMAT_VERSION,
        "config": effective_config(run),
        "axis": axis,
        "config_key": AXIS_KEYS[axis],
        "grid": grid,
        "seeds": seeds,
        "seed_rule": "fnv1a_64(f'{seed}:{axis}:{value!r}:{run_index}') % 2**31",
        "files": ["sweep.csv", "sweep_summary.csv"],
    }
    (out / "sweep.json").write_text(dump_json(manifest), encoding="utf-8")
    return rows
