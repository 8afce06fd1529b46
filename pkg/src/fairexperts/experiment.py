"""Experiment orchestration: train, evaluate, select, report.

For every seed in the config this trains the pooled baseline, the
decoupled-heads baseline, and the expert model; evaluates each per group
on the validation and test splits; runs the configured selection
strategies on validation metrics; evaluates the routed predictors; and
writes one JSON report per seed plus a mean/std aggregate. Reruns of the
same seed reproduce all files byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from . import rng as rngmod
from .config import CsvSource, ExperimentConfig
from .data import Dataset, generate_synthetic, load_csv
from .metrics import build_report, group_eval
from .selection import routed_predictor, select_greedy, select_ip
from .training import (
    extract_representations,
    probe_group_accuracy,
    train_decoupled,
    train_erm,
    train_experts,
)

REPORT_VERSION = 1


@contextmanager
def _stage(name: str, seed: int):
    """Tag any failure with the pipeline stage and seed it came from."""
    try:
        yield
    except Exception as exc:
        exc.args = (f"[stage={name} seed={seed}] {exc}",) + exc.args[1:]
        raise


def dataset_for_seed(config: ExperimentConfig, seed: int) -> Dataset:
    """Materialize the data source for one run seed.

    Synthetic sources are redrawn with a seed derived from the base data
    seed and the run seed; CSV sources are re-split per run seed only
    when the file carries no split column.
    """
    if isinstance(config.data, CsvSource):
        schema = config.data.schema
        schema = replace(schema, split_seed=rngmod.derive_seed(schema.split_seed, seed))
        return load_csv(config.data.path, schema)
    return generate_synthetic(
        replace(config.data, seed=rngmod.derive_seed(config.data.seed, seed))
    )


def write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_training_log(model, path: str) -> None:
    """Per-epoch losses of the expert model as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss_cls", "loss_disc", "loss_virt", "loss_div", "lr"])
        for entry in model.log:
            writer.writerow(
                [
                    entry.epoch,
                    repr(float(entry.loss_cls)),
                    repr(float(entry.loss_disc)),
                    repr(float(entry.loss_virt)),
                    repr(float(entry.loss_div)),
                    repr(float(entry.lr)),
                ]
            )


def write_representations_csv(path: str, reps: np.ndarray, labels: np.ndarray, groups: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"z{i}" for i in range(reps.shape[1])] + ["label", "group"])
        for row, label, group in zip(reps, labels, groups):
            writer.writerow([repr(float(v)) for v in row] + [int(label), int(group)])


def _pair_reports(predict, dataset: Dataset, kind: str, selection: dict | None = None) -> dict:
    return {
        split: build_report(predict, dataset, split, kind, selection).to_dict()
        for split in ("val", "test")
    }


def run_seed(config: ExperimentConfig, seed: int):
    """Train, evaluate, and select for one seed.

    Returns (report dict, trained expert model, dataset).
    """
    with _stage("data", seed):
        dataset = dataset_for_seed(config, seed)
    hp = replace(config.hyper, seed=seed)
    with _stage("train-erm", seed):
        erm = train_erm(dataset, hp)
    with _stage("train-decoupled", seed):
        decoupled = train_decoupled(erm, dataset, hp)
    with _stage("train-experts", seed):
        experts = train_experts(dataset, hp)

    kind = config.metric
    with _stage("evaluate", seed):
        models_section = {
            "erm": _pair_reports(erm.predict_proba, dataset, kind),
            "decoupled": _pair_reports(decoupled.predict_proba, dataset, kind),
            "experts": _pair_reports(experts.predict_proba, dataset, kind),
        }
        expert_val = group_eval(experts.predict_proba, dataset, "val", kind)
        erm_val = group_eval(erm.predict_proba, dataset, "val", kind)

    selection_section = {}
    with _stage("select", seed):
        for strategy in config.strategies:
            if strategy == "greedy":
                decision = select_greedy(expert_val, erm_val)
            else:
                decision = select_ip(expert_val, erm_val, config.lambda_sel)
            routed = routed_predictor(decision, experts, erm)
            selection_section[strategy] = {
                "decision": decision.to_dict(),
                **_pair_reports(routed, dataset, kind, decision.to_dict()),
            }

    with _stage("probe", seed):
        probe_section = {
            "experts_accuracy": probe_group_accuracy(experts, dataset, seed),
            "erm_accuracy": probe_group_accuracy(erm, dataset, seed),
        }

    report = {
        "format_version": REPORT_VERSION,
        "seed": seed,
        "config": dict(config.raw),
        "metric_kind": kind,
        "models": models_section,
        "selection": selection_section,
        "probe": probe_section,
        "training": {
            "epochs": hp.epochs,
            "final_lr": experts.log[-1].lr,
            "final_loss_cls": experts.log[-1].loss_cls,
        },
    }
    return _plain(report), experts, dataset


def _plain(value):
    """Recursively convert numpy scalars so json output is stable."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _aggregate(reports: list[dict]) -> dict:
    """Mean/std (population) over the numeric leaves of per-seed reports."""

    def walk(values: list):
        first = values[0]
        if isinstance(first, dict):
            return {
                k: walk([v[k] for v in values])
                for k in first
                if k not in ("config", "seed", "format_version")
            }
        if isinstance(first, list):
            return [walk([v[i] for v in values]) for i in range(len(first))]
        if isinstance(first, bool) or not isinstance(first, (int, float)):
            return first
        if any(v is None for v in values):
            return None
        arr = np.asarray(values, dtype=np.float64)
        return {"mean": float(arr.mean()), "std": float(arr.std())}

    return walk(reports)


def run_experiment(config: ExperimentConfig, out_dir: str) -> dict:
    """Run every seed and write the report bundle into ``out_dir``.

    Files written: ``report_<seed>.json``, ``training_log_<seed>.csv``,
    ``representations_<seed>.csv`` (expert model, test split), and
    ``aggregate.json``. Returns the per-seed reports plus the aggregate.
    """
    os.makedirs(out_dir, exist_ok=True)
    reports = []
    for seed in config.seeds:
        report, experts, dataset = run_seed(config, seed)
        write_json(report, os.path.join(out_dir, f"report_{seed}.json"))
        write_training_log(experts, os.path.join(out_dir, f"training_log_{seed}.csv"))
        reps, labels, groups = extract_representations(experts, dataset, "test")
        write_representations_csv(
            os.path.join(out_dir, f"representations_{seed}.csv"), reps, labels, groups
        )
        reports.append(report)
    aggregate = {
        "format_version": REPORT_VERSION,
        "seeds": list(config.seeds),
        "aggregate": _aggregate(reports),
    }
    write_json(aggregate, os.path.join(out_dir, "aggregate.json"))
    return {"reports": reports, "aggregate": aggregate}
