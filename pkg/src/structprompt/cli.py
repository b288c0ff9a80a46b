"""Command-line entry point: ``structprompt {train,eval,sweep,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .autodiff import NumericError
from .checkpoint import CheckpointError
from .config import ConfigError, load_run_config
from .data import DataError, SamplingError, synth_generate, write_csv
from .encoder import EncoderError
from .experiments import AXIS_KEYS, CompatibilityError, cmd_eval, cmd_sweep, cmd_train
from .labels import LabelConfigError
from .metrics import EvaluationError
from .objective import DivergenceError

log = logging.getLogger("structprompt")

# exit status per error class
EXIT_CODES = (
    (ConfigError, 2),
    (LabelConfigError, 2),
    (SamplingError, 2),
    (DataError, 3),
    (EncoderError, 3),
    (OSError, 3),
    (DivergenceError, 4),
    (NumericError, 4),
    (CheckpointError, 5),
    (CompatibilityError, 5),
    (EvaluationError, 5),
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structprompt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one model and score the held-out split")
    train.add_argument("--config", help="YAML/JSON run config (defaults used when omitted)")
    train.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; dotted keys reach nested values")
    train.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="score a CSV file with a saved checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="CSV rows: class,title,description")
    ev.add_argument("--out", required=True)

    sweep = sub.add_parser("sweep", help="sensitivity sweep over one axis")
    sweep.add_argument("--axis", required=True, choices=sorted(AXIS_KEYS))
    sweep.add_argument("--config")
    sweep.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    sweep.add_argument("--grid", help="comma-separated values (default: the config's grid for the axis)")
    sweep.add_argument("--seeds", type=int, default=3, help="runs per grid value")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.add_argument("--out", required=True)

    synth = sub.add_parser("synth", help="write a synthetic corpus as CSV")
    synth.add_argument("--C", type=int, default=4)
    synth.add_argument("--per-class", type=int, default=100)
    synth.add_argument("--rho", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="CSV file to write")
    return parser


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train":
        result = cmd_train(load_run_config(args.config, args.overrides), args.out)
        if result.metrics is not None:
            m = result.metrics
            print(f"accuracy={m.accuracy:.4f} macro_f1={m.macro_f1:.4f} macro_auc={m.macro_auc:.4f}")
    elif args.command == "eval":
        m = cmd_eval(args.checkpoint, args.data, args.out)
        print(f"accuracy={m.accuracy:.4f} macro_f1={m.macro_f1:.4f} macro_auc={m.macro_auc:.4f}")
    elif args.command == "sweep":
        grid = args.grid.split(",") if args.grid else None
        rows = cmd_sweep(load_run_config(args.config, args.overrides), args.axis, args.out,
                         grid=grid, seeds=args.seeds, jobs=args.jobs)
        print(f"{len(rows)} runs written to {args.out}")
    elif args.command == "synth":
        write_csv(synth_generate(args.C, args.per_class, args.rho, args.seed), args.out)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except Exception as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"error: {exc}", file=sys.stderr)
                return code
        if isinstance(exc, ValueError):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
