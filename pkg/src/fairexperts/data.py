"""Datasets: group-annotated feature vectors with split management.

Provides deterministic synthetic generation from per-(group, class)
Gaussians and CSV ingestion. The CSV format is documented in the README:
a header row with feature columns ``f0..f{d-1}``, required integer
columns ``label`` and ``group``, and an optional ``split`` column with
values train/val/test. Features are stored as float64 and serialized
with shortest round-trip decimal repr, so save followed by load
reproduces values exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod

SPLITS = ("train", "val", "test")
SPLIT_RATIOS = {"train": 0.8, "val": 0.1, "test": 0.1}


class DataError(ValueError):
    """Malformed dataset input (bad file, bad schema, bad config)."""


@dataclass(frozen=True)
class Sample:
    features: np.ndarray  # (d,)
    label: int
    group: int


@dataclass(frozen=True)
class Dataset:
    """Immutable feature/label/group arrays plus per-sample split tags."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64, values in [0, classes)
    groups: np.ndarray  # (n,) int64, values in [0, groups)
    split: np.ndarray  # (n,) unicode, values in SPLITS
    classes: int
    num_groups: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "groups", np.asarray(self.groups, dtype=np.int64))
        object.__setattr__(self, "split", np.asarray(self.split, dtype="U5"))
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if self.labels.shape != (n,) or self.groups.shape != (n,) or self.split.shape != (n,):
            raise DataError("labels/groups/split lengths must match features")
        if n and not np.all(np.isfinite(self.features)):
            raise DataError("features must be finite")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DataError("label index out of declared range")
        if n and (self.groups.min() < 0 or self.groups.max() >= self.num_groups):
            raise DataError("group index out of declared range")
        unknown = set(np.unique(self.split)) - set(SPLITS)
        if unknown:
            raise DataError(f"unknown split tags: {sorted(unknown)}")
        train_cells = set(self._cells("train"))
        for split_name in ("val", "test"):
            missing = set(self._cells(split_name)) - train_cells
            if missing:
                raise DataError(
                    f"(group, class) cells {sorted(missing)} appear in {split_name} "
                    "but not in train"
                )
        for arr in (self.features, self.labels, self.groups, self.split):
            arr.flags.writeable = False

    def _cells(self, split_name: str) -> list[tuple[int, int]]:
        mask = self.split == split_name
        return list(zip(self.groups[mask].tolist(), self.labels[mask].tolist()))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]), int(self.groups[i]))

    def split_indices(self, split_name: str) -> np.ndarray:
        if split_name not in SPLITS:
            raise DataError(f"unknown split {split_name!r}")
        return np.flatnonzero(self.split == split_name)

    def split_arrays(self, split_name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(features, labels, groups) for one split, in dataset order."""
        idx = self.split_indices(split_name)
        return self.features[idx], self.labels[idx], self.groups[idx]


@dataclass(frozen=True)
class GroupStats:
    counts: np.ndarray  # (G,) exact counts
    proportions: np.ndarray  # (G,) counts / total
    missing: tuple[int, ...]  # groups absent from the split


def group_stats(dataset: Dataset, split_name: str) -> GroupStats:
    """Per-group counts and proportions within one split."""
    _, _, groups = dataset.split_arrays(split_name)
    if groups.size == 0:
        raise DataError(f"split {split_name!r} is empty")
    counts = np.bincount(groups, minlength=dataset.num_groups).astype(np.int64)
    proportions = counts / counts.sum()
    missing = tuple(int(g) for g in np.flatnonzero(counts == 0))
    return GroupStats(counts, proportions, missing)


@dataclass(frozen=True)
class SyntheticConfig:
    """Isotropic Gaussian per (group, class) cell.

    ``counts[split][g]`` gives the number of samples for group g in that
    split; each group's count is divided as evenly as possible across
    classes (earlier classes take the remainder).
    """

    d: int
    classes: int
    groups: int
    means: np.ndarray  # (G, C, d)
    stds: np.ndarray  # (G, C) > 0
    counts: dict[str, tuple[int, ...]]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        if self.means.shape != (self.groups, self.classes, self.d):
            raise DataError(
                f"means must have shape {(self.groups, self.classes, self.d)}, "
                f"got {self.means.shape}"
            )
        if self.stds.shape != (self.groups, self.classes):
            raise DataError("stds must have one entry per (group, class) cell")
        if np.any(self.stds <= 0):
            raise DataError("standard deviations must be positive")
        if set(self.counts) != set(SPLITS):
            raise DataError(f"counts must cover splits {SPLITS}")
        for split_name, per_group in self.counts.items():
            if len(per_group) != self.groups:
                raise DataError(f"counts[{split_name!r}] needs one entry per group")
            if any(c < 1 for c in per_group):
                raise DataError("per-group counts must be >= 1")


def _class_shares(total: int, classes: int) -> list[int]:
    base, rem = divmod(total, classes)
    return [base + (1 if c < rem else 0) for c in range(classes)]


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Draw a dataset from the configured Gaussians.

    Pure function of the config: the same seed yields bit-identical
    output. Samples are ordered by (split, group, class).
    """
    gen = rngmod.stream(config.seed, rngmod.DATA)
    feats, labels, groups, split = [], [], [], []
    for split_name in SPLITS:
        for g in range(config.groups):
            shares = _class_shares(config.counts[split_name][g], config.classes)
            for c, n_cell in enumerate(shares):
                if n_cell == 0:
                    continue
                x = config.means[g, c] + config.stds[g, c] * gen.standard_normal(
                    (n_cell, config.d)
                )
                feats.append(x)
                labels.append(np.full(n_cell, c, dtype=np.int64))
                groups.append(np.full(n_cell, g, dtype=np.int64))
                split.append(np.full(n_cell, split_name, dtype="U5"))
    return Dataset(
        np.concatenate(feats),
        np.concatenate(labels),
        np.concatenate(groups),
        np.concatenate(split),
        classes=config.classes,
        num_groups=config.groups,
    )


@dataclass(frozen=True)
class CsvSchema:
    """Column layout and declared ranges for a dataset CSV."""

    feature_columns: Sequence[str]
    classes: int
    groups: int
    label_column: str = "label"
    group_column: str = "group"
    split_column: str | None = "split"
    split_seed: int = 0


def default_schema(d: int, classes: int, groups: int, split_seed: int = 0) -> CsvSchema:
    return CsvSchema(
        tuple(f"f{i}" for i in range(d)), classes, groups, split_seed=split_seed
    )


def load_csv(path: str, schema: CsvSchema) -> Dataset:
    """Parse a dataset CSV in row order.

    If the schema's split column is absent from the header, rows are
    assigned to train/val/test at an 8:1:1 ratio, stratified by
    (group, class): within each cell, a seeded shuffle splits rows with
    largest-remainder rounding, so every nonempty cell lands in train.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: file does not exist") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    col_index = {name: i for i, name in enumerate(header)}
    required = [*schema.feature_columns, schema.label_column, schema.group_column]
    missing = [name for name in required if name not in col_index]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")

    has_split = schema.split_column is not None and schema.split_column in col_index
    feat_idx = [col_index[name] for name in schema.feature_columns]
    n = len(rows)
    features = np.empty((n, len(feat_idx)), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    groups = np.empty(n, dtype=np.int64)
    split = np.empty(n, dtype="U5")

    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 1} has {len(row)} fields, expected {len(header)}")
        for j, ci in enumerate(feat_idx):
            try:
                features[r, j] = float(row[ci])
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 1}, column {schema.feature_columns[j]!r}: "
                    f"non-numeric value {row[ci]!r}"
                ) from None
        try:
            labels[r] = int(row[col_index[schema.label_column]])
            groups[r] = int(row[col_index[schema.group_column]])
        except ValueError:
            raise DataError(f"{path}: row {r + 1}: non-integer label or group") from None
        if not 0 <= labels[r] < schema.classes:
            raise DataError(f"{path}: row {r + 1}: label {labels[r]} out of range")
        if not 0 <= groups[r] < schema.groups:
            raise DataError(f"{path}: row {r + 1}: group {groups[r]} out of range")
        if has_split:
            tag = row[col_index[schema.split_column]]
            if tag not in SPLITS:
                raise DataError(f"{path}: row {r + 1}: unknown split tag {tag!r}")
            split[r] = tag

    if not has_split:
        split = assign_splits(labels, groups, schema.split_seed)
    return Dataset(features, labels, groups, split, schema.classes, schema.groups)


def assign_splits(labels: np.ndarray, groups: np.ndarray, seed: int) -> np.ndarray:
    """Seeded stratified 8:1:1 split assignment.

    Cells are processed in sorted (group, class) order; within a cell the
    row indices are shuffled and dealt to train/val/test with
    largest-remainder rounding (ties resolved train before val before
    test, which also guarantees every nonempty cell reaches train).
    """
    gen = rngmod.stream(seed, rngmod.DATA, 1)
    split = np.empty(len(labels), dtype="U5")
    cells = sorted(set(zip(groups.tolist(), labels.tolist())))
    for g, c in cells:
        idx = np.flatnonzero((groups == g) & (labels == c))
        idx = idx[gen.permutation(len(idx))]
        n_cell = len(idx)
        quota = {s: SPLIT_RATIOS[s] * n_cell for s in SPLITS}
        sizes = {s: int(np.floor(quota[s])) for s in SPLITS}
        leftover = n_cell - sum(sizes.values())
        by_remainder = sorted(SPLITS, key=lambda s: (-(quota[s] - sizes[s]), SPLITS.index(s)))
        for s in by_remainder[:leftover]:
            sizes[s] += 1
        start = 0
        for s in SPLITS:
            split[idx[start : start + sizes[s]]] = s
            start += sizes[s]
    return split


def save_csv(dataset: Dataset, path: str) -> None:
    """Write the documented CSV format, including the split column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.d)] + ["label", "group", "split"])
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(v)) for v in dataset.features[i]]
                + [int(dataset.labels[i]), int(dataset.groups[i]), str(dataset.split[i])]
            )
