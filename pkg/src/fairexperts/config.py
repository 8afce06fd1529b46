"""Experiment configuration: a flat, versioned key-value text format.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Lists are comma separated. The full key reference lives in the README;
a minimal synthetic config looks like::

    version = 1
    seeds = 11, 12, 13
    metric = accuracy
    strategies = greedy, ip
    lambda_sel = 0.1

    data.kind = synthetic
    data.seed = 1234
    data.d = 2
    data.classes = 2
    data.groups = 2
    data.mean.g0.c0 = -2, 0
    data.mean.g0.c1 = 2, 0
    data.mean.g1.c0 = -2, 3
    data.mean.g1.c1 = 2, 3
    data.std.g0.c0 = 0.5
    ...
    data.count.train.g0 = 400
    ...
    hyper.epochs = 30
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields

import numpy as np

from .data import CsvSchema, DataError, SPLITS, SyntheticConfig
from .training import HyperParams

CONFIG_VERSION = 1

_TOP_KEYS = {"version", "seeds", "metric", "strategies", "lambda_sel", "output_dir"}
_DATA_KEYS = {
    "data.kind",
    "data.seed",
    "data.d",
    "data.classes",
    "data.groups",
    "data.path",
    "data.features",
    "data.label_column",
    "data.group_column",
    "data.split_column",
    "data.split_seed",
}
_DATA_PATTERNS = (
    re.compile(r"data\.mean\.g\d+\.c\d+$"),
    re.compile(r"data\.std\.g\d+\.c\d+$"),
    re.compile(r"data\.count\.(train|val|test)\.g\d+$"),
)
_HYPER_FIELDS = {f.name for f in fields(HyperParams)} - {"seed"}


class ConfigError(DataError):
    """Malformed experiment configuration."""


@dataclass(frozen=True)
class CsvSource:
    path: str
    schema: CsvSchema


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...]
    metric: str
    strategies: tuple[str, ...]
    lambda_sel: float
    data: SyntheticConfig | CsvSource
    hyper: HyperParams
    output_dir: str | None
    raw: dict[str, str]


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into an ordered mapping."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _known_key(key: str) -> bool:
    if key in _TOP_KEYS or key in _DATA_KEYS:
        return True
    if key.startswith("hyper.") and key[len("hyper.") :] in _HYPER_FIELDS:
        return True
    return any(p.match(key) for p in _DATA_PATTERNS)


def _require(kv: dict[str, str], key: str) -> str:
    if key not in kv:
        raise ConfigError(f"missing required key {key!r}")
    return kv[key]


def _int(kv: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {kv[key]!r}") from None


def _float(kv: dict[str, str], key: str, default: float | None = None) -> float:
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(kv[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {kv[key]!r}") from None


def _float_list(kv: dict[str, str], key: str) -> list[float]:
    try:
        return [float(part) for part in _require(kv, key).split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers") from None


def _str_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _parse_synthetic(kv: dict[str, str]) -> SyntheticConfig:
    d = _int(kv, "data.d")
    classes = _int(kv, "data.classes")
    groups = _int(kv, "data.groups")
    means = np.zeros((groups, classes, d))
    stds = np.ones((groups, classes))
    for g in range(groups):
        for c in range(classes):
            vec = _float_list(kv, f"data.mean.g{g}.c{c}")
            if len(vec) != d:
                raise ConfigError(
                    f"data.mean.g{g}.c{c}: expected {d} values, got {len(vec)}"
                )
            means[g, c] = vec
            stds[g, c] = _float(kv, f"data.std.g{g}.c{c}", 1.0)
    counts = {}
    for split in SPLITS:
        counts[split] = tuple(
            _int(kv, f"data.count.{split}.g{g}") for g in range(groups)
        )
    return SyntheticConfig(
        d=d,
        classes=classes,
        groups=groups,
        means=means,
        stds=stds,
        counts=counts,
        seed=_int(kv, "data.seed"),
    )


def _parse_csv(kv: dict[str, str]) -> CsvSource:
    path = _require(kv, "data.path")
    classes = _int(kv, "data.classes")
    groups = _int(kv, "data.groups")
    if "data.features" in kv:
        feature_columns = tuple(_str_list(kv["data.features"]))
    else:
        feature_columns = tuple(f"f{i}" for i in range(_int(kv, "data.d")))
    split_column: str | None = kv.get("data.split_column", "split")
    if split_column == "none":
        split_column = None
    schema = CsvSchema(
        feature_columns=feature_columns,
        classes=classes,
        groups=groups,
        label_column=kv.get("data.label_column", "label"),
        group_column=kv.get("data.group_column", "group"),
        split_column=split_column,
        split_seed=_int(kv, "data.split_seed", 0),
    )
    return CsvSource(path, schema)


def _parse_hyper(kv: dict[str, str]) -> HyperParams:
    kwargs: dict = {}
    for name in _HYPER_FIELDS:
        key = f"hyper.{name}"
        if key not in kv:
            continue
        if name in ("negative_rule", "alignment_mode"):
            kwargs[name] = kv[key]
        elif name in ("batch_size", "epochs", "hidden_dim", "repr_dim"):
            kwargs[name] = _int(kv, key)
        else:
            kwargs[name] = _float(kv, key)
    try:
        return HyperParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid hyperparameters: {exc}") from None


def config_from_dict(kv: dict[str, str]) -> ExperimentConfig:
    unknown = [key for key in kv if not _known_key(key)]
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    version = _int(kv, "version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    try:
        seeds = tuple(int(s) for s in _str_list(_require(kv, "seeds")))
    except ValueError:
        raise ConfigError("seeds: expected comma-separated integers") from None
    if not seeds:
        raise ConfigError("need at least one seed")
    metric = kv.get("metric", "accuracy")
    if metric not in ("accuracy", "auc"):
        raise ConfigError(f"metric must be accuracy or auc, got {metric!r}")
    strategies = tuple(_str_list(kv.get("strategies", "greedy, ip")))
    for s in strategies:
        if s not in ("greedy", "ip"):
            raise ConfigError(f"unknown selection strategy {s!r}")
    if not strategies:
        raise ConfigError("need at least one selection strategy")
    kind = _require(kv, "data.kind")
    if kind == "synthetic":
        source: SyntheticConfig | CsvSource = _parse_synthetic(kv)
    elif kind == "csv":
        source = _parse_csv(kv)
    else:
        raise ConfigError(f"data.kind must be synthetic or csv, got {kind!r}")
    return ExperimentConfig(
        seeds=seeds,
        metric=metric,
        strategies=strategies,
        lambda_sel=_float(kv, "lambda_sel", 0.1),
        data=source,
        hyper=_parse_hyper(kv),
        output_dir=kv.get("output_dir"),
        raw=dict(kv),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} does not exist") from None
    return config_from_dict(parse_kv_text(text))
