"""Command-line interface.

Subcommands: gen-data, train, evaluate, select, export-repr, run.
Exit codes: 0 success, 1 usage error, 2 data/config error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .checkpoint import load_checkpoint, save_checkpoint
from .config import CsvSource, ExperimentConfig, load_config
from .data import DataError, default_schema, save_csv
from .experiment import (
    dataset_for_seed,
    run_experiment,
    write_json,
    write_representations_csv,
    write_training_log,
)
from .metrics import GroupMetrics, build_report
from .net import TrainingDivergence
from .selection import select_greedy, select_ip
from .training import extract_representations, train_decoupled, train_erm, train_experts

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(message)


def _load_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    if getattr(args, "data_csv", None):
        if isinstance(config.data, CsvSource):
            schema = config.data.schema
        else:
            schema = default_schema(config.data.d, config.data.classes, config.data.groups)
        config = replace(config, data=CsvSource(args.data_csv, schema))
    return config


def _seed(args, config: ExperimentConfig) -> int:
    return args.seed if args.seed is not None else config.seeds[0]


def cmd_gen_data(args) -> int:
    config = _load_config(args)
    dataset = dataset_for_seed(config, _seed(args, config))
    save_csv(dataset, args.out)
    print(f"wrote {dataset.n} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    seed = _seed(args, config)
    dataset = dataset_for_seed(config, seed)
    hp = replace(config.hyper, seed=seed)
    os.makedirs(args.out_dir, exist_ok=True)
    erm = train_erm(dataset, hp)
    decoupled = train_decoupled(erm, dataset, hp)
    experts = train_experts(dataset, hp)
    for name, model in (("erm", erm), ("decoupled", decoupled), ("experts", experts)):
        save_checkpoint(model, os.path.join(args.out_dir, f"{name}_{seed}.json"))
    write_training_log(experts, os.path.join(args.out_dir, f"training_log_{seed}.csv"))
    print(f"wrote checkpoints for seed {seed} to {args.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    dataset = dataset_for_seed(config, _seed(args, config))
    kind = args.metric or config.metric
    report = build_report(model.predict_proba, dataset, args.split, kind)
    payload = report.to_dict()
    if args.out:
        write_json(payload, args.out)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def _read_group_metrics(path: str) -> GroupMetrics:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"metrics file {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"metrics file {path!r} is not valid JSON: {exc}") from None
    try:
        return GroupMetrics.from_dict(payload)
    except (KeyError, ValueError) as exc:
        raise DataError(f"metrics file {path!r} is malformed: {exc}") from None


def cmd_select(args) -> int:
    expert = _read_group_metrics(args.expert)
    erm = _read_group_metrics(args.erm)
    if args.strategy == "greedy":
        decision = select_greedy(expert, erm)
    else:
        decision = select_ip(expert, erm, args.lambda_sel)
    payload = decision.to_dict()
    if args.out:
        write_json(payload, args.out)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_export_repr(args) -> int:
    config = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    dataset = dataset_for_seed(config, _seed(args, config))
    reps, labels, groups = extract_representations(model, dataset, args.split)
    write_representations_csv(args.out, reps, labels, groups)
    print(f"wrote {reps.shape[0]} representations to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    out_dir = args.out_dir or config.output_dir
    if not out_dir:
        raise UsageError("no output directory: pass --out-dir or set output_dir in the config")
    run_experiment(config, out_dir)
    print(f"wrote experiment bundle for seeds {list(config.seeds)} to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairexperts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, help="generate a synthetic dataset CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="run seed (default: first config seed)")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, help="train all models for one seed")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data-csv", default=None, help="override the data source with a CSV file")
    p.add_argument("--out-dir", required=True)

    p = add("evaluate", cmd_evaluate, help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data-csv", default=None)
    p.add_argument("--split", default="val", choices=("train", "val", "test"))
    p.add_argument("--metric", default=None, choices=("accuracy", "auc"))
    p.add_argument("--out", default=None)

    p = add("select", cmd_select, help="run a selection strategy on stored group metrics")
    p.add_argument("--strategy", required=True, choices=("greedy", "ip"))
    p.add_argument("--lambda", dest="lambda_sel", type=float, default=0.1)
    p.add_argument("--expert", required=True, help="expert GroupMetrics/report JSON")
    p.add_argument("--erm", required=True, help="pooled GroupMetrics/report JSON")
    p.add_argument("--out", default=None)

    p = add("export-repr", cmd_export_repr, help="export representations as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data-csv", default=None)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True)

    p = add("run", cmd_run, help="run the full experiment over all config seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--data-csv", default=None)
    p.add_argument("--out-dir", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
