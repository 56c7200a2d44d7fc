"""Command-line front end: ``qmoons {gen-data,train,grid,eval,curves}``.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .dataset import DatasetFormatError
from .harness import ConfigError, ExperimentConfig
from .hybridnn import ModelFormatError

# flag dest -> ExperimentConfig field
_CONFIG_FLAGS = {
    "qubits": "n_qubits",
    "sublayers": "n_sublayers",
    "noise": "noise",
    "samples": "n_samples",
    "epochs": "epochs",
    "lr": "learning_rate",
    "batch": "batch_size",
    "seed": "seed",
    "model": "model_kind",
    "out": "output_dir",
}


class UsageError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser, with_seed=True, with_model=True):
    p.add_argument("--config", help="flat JSON file with experiment settings; flags override it")
    p.add_argument("--qubits", type=int)
    p.add_argument("--sublayers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    if with_seed:
        p.add_argument("--seed", type=int)
    if with_model:
        p.add_argument("--noise", type=float)
        p.add_argument("--samples", type=int)
        p.add_argument("--model", choices=harness.MODEL_KINDS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmoons", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a split two-moons CSV")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_config_flags(p)
    p.add_argument("--data", help="dataset CSV; generated from --samples/--noise/--seed if omitted")
    p.add_argument("--out", help="run directory (default: run)")

    p = sub.add_parser("grid", help="noise x qubits x samples table of test accuracies")
    _add_config_flags(p, with_seed=False, with_model=False)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid-noise", type=float, nargs="+", default=list(harness.GRID_NOISE))
    p.add_argument("--grid-qubits", type=int, nargs="+", default=list(harness.GRID_QUBITS))
    p.add_argument("--grid-samples", type=int, nargs="+", default=list(harness.GRID_SAMPLES))
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy of saved weights on a dataset split")
    p.add_argument("weights")
    p.add_argument("data")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--qubits", type=int, help="expected qubit count; checked against the weights")

    p = sub.add_parser("curves", help="merge run metrics into long-format CSV")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        field: getattr(args, flag)
        for flag, field in _CONFIG_FLAGS.items()
        if getattr(args, flag, None) is not None
    }
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig.from_mapping(overrides)


def _gen_data(args):
    if args.samples < 10:
        raise UsageError(f"--samples must be at least 10, got {args.samples}")
    if args.noise < 0:
        raise UsageError(f"--noise must be non-negative, got {args.noise}")
    data = harness.cmd_gen_data(args.samples, args.noise, args.seed, args.out)
    n_train, n_val, n_test = data.split_sizes()
    print(f"wrote {args.out}: train={n_train} val={n_val} test={n_test}")


def _train(args):
    config = _config_from_args(args)
    model, history = harness.cmd_train(config, args.data)
    last = history.records[-1]
    print(
        f"model={config.model_kind} trainable_weights={model.trainable_count()} "
        f"epochs={len(history.records)} val_accuracy={last.val_accuracy!r}"
    )
    print(f"test_accuracy={history.test_accuracy!r}")


def _grid(args):
    if args.workers < 1:
        raise UsageError(f"--workers must be positive, got {args.workers}")
    config = _config_from_args(args)
    for n in args.grid_samples:
        replace(config, n_samples=n)  # validates batch size against each split
    rows = harness.cmd_grid(
        args.seeds, args.out, config, args.workers,
        noises=args.grid_noise, qubits=args.grid_qubits, samples=args.grid_samples,
    )
    print(f"wrote {args.out}: {len(rows)} rows")
    for (noise, q, n), mean in harness.grid_means(rows).items():
        print(f"noise={noise} n_qubits={q} n_samples={n} mean_test_accuracy={mean:.4f}")


def _eval(args):
    acc = harness.cmd_eval(args.weights, args.data, args.split, args.qubits)
    print(f"{args.split}_accuracy={acc!r}")


def _curves(args):
    n = harness.cmd_curves(args.runs, args.out)
    print(f"wrote {args.out}: {n} rows")


_COMMANDS = {
    "gen-data": _gen_data,
    "train": _train,
    "grid": _grid,
    "eval": _eval,
    "curves": _curves,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"qmoons {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ModelFormatError, DatasetFormatError, RuntimeError,
            FloatingPointError) as exc:
        print(f"qmoons {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
