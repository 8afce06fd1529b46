"""Evaluation metrics: accuracy, AUC, per-group values, max-min, gap,
and an equalized-odds score for binary tasks.

A predictor is anything callable as ``predict(features, groups)``
returning one row of class probabilities per sample (the groups argument
lets routed predictors dispatch; plain models may ignore it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, group_stats

METRIC_KINDS = ("accuracy", "auc")


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of exact matches."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be equal-length and nonempty")
    return float(np.mean(predictions == labels))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative.

    Ties count one half (the Mann-Whitney convention). Computed from
    exact integer win/tie counts, so the result equals the quadratic
    pairwise-count oracle bit for bit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not set(np.unique(labels).tolist()) <= {0, 1}:
        raise ValueError("labels must be binary 0/1")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc undefined: needs at least one positive and one negative")
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    below_or_equal = np.searchsorted(neg_sorted, pos, side="right")
    wins = int(below.sum())
    ties = int((below_or_equal - below).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


@dataclass(frozen=True)
class GroupMetrics:
    """Per-group metric values plus the group proportions of the split."""

    metric_kind: str
    values: np.ndarray  # (G,) in [0, 1]
    proportions: np.ndarray  # (G,), sums to 1
    split: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "proportions", np.asarray(self.proportions, dtype=np.float64))
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if self.values.shape != self.proportions.shape or self.values.ndim != 1:
            raise ValueError("values and proportions must be matching vectors")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("metric values must lie in [0, 1]")

    @property
    def num_groups(self) -> int:
        return self.values.size

    def to_dict(self) -> dict:
        return {
            "metric_kind": self.metric_kind,
            "split": self.split,
            "values": [float(v) for v in self.values],
            "proportions": [float(p) for p in self.proportions],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GroupMetrics":
        values = payload.get("values", payload.get("per_group"))
        if values is None:
            raise ValueError("group metrics payload needs 'values' or 'per_group'")
        return cls(
            payload.get("metric_kind", "accuracy"),
            np.asarray(values, dtype=np.float64),
            np.asarray(payload["proportions"], dtype=np.float64),
            payload.get("split", "val"),
        )


def max_min(gm: GroupMetrics) -> float:
    """Worst-group value (the max-min fairness objective)."""
    if gm.num_groups == 0:
        raise ValueError("no groups")
    return float(gm.values.min())


def gap(gm: GroupMetrics) -> float:
    """Spread between the best and worst group."""
    if gm.num_groups < 2:
        raise ValueError("gap needs at least two groups")
    return float(gm.values.max() - gm.values.min())


def equalized_odds(
    predictions: np.ndarray, labels: np.ndarray, groups: np.ndarray
) -> float:
    """1 - (|TPR gap| + |FPR gap|) / 2 for binary predictions and labels.

    With more than two groups, returns the worst pairwise score.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    if not set(np.unique(labels).tolist()) <= {0, 1}:
        raise ValueError("labels must be binary 0/1")
    if not set(np.unique(predictions).tolist()) <= {0, 1}:
        raise ValueError("predictions must be binary 0/1")
    ids = np.unique(groups)
    rates = {}
    for g in ids:
        mask = groups == g
        pos = labels[mask] == 1
        neg = labels[mask] == 0
        if not pos.any() or not neg.any():
            raise ValueError(f"group {int(g)} is missing a label class")
        tpr = float(np.mean(predictions[mask][pos] == 1))
        fpr = float(np.mean(predictions[mask][neg] == 1))
        rates[int(g)] = (tpr, fpr)
    if len(ids) < 2:
        return 1.0
    score = 1.0
    for i, gi in enumerate(ids):
        for gj in ids[i + 1 :]:
            ti, fi = rates[int(gi)]
            tj, fj = rates[int(gj)]
            score = min(score, 1.0 - 0.5 * (abs(ti - tj) + abs(fi - fj)))
    return score


def _positive_scores(probs: np.ndarray) -> np.ndarray:
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise ValueError("auc needs binary class probabilities (n, 2)")
    return probs[:, 1]


def group_eval(predict, dataset: Dataset, split: str, kind: str) -> GroupMetrics:
    """Evaluate one metric independently per group on a split."""
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric kind {kind!r}")
    features, labels, groups = dataset.split_arrays(split)
    stats = group_stats(dataset, split)
    if stats.missing:
        raise ValueError(f"groups {list(stats.missing)} absent from split {split!r}")
    probs = np.asarray(predict(features, groups), dtype=np.float64)
    if probs.shape[0] != features.shape[0]:
        raise ValueError("predictor returned wrong number of rows")
    values = np.empty(dataset.num_groups)
    for g in range(dataset.num_groups):
        mask = groups == g
        if kind == "accuracy":
            values[g] = accuracy(probs[mask].argmax(axis=1), labels[mask])
        else:
            if len(set(labels[mask].tolist())) < 2:
                raise ValueError(f"group {g} has a single class; auc undefined")
            values[g] = auc(_positive_scores(probs[mask]), labels[mask])
    return GroupMetrics(kind, values, stats.proportions, split)


@dataclass(frozen=True)
class MetricsReport:
    """Pooled and per-group results for one predictor on one split."""

    metric_kind: str
    split: str
    overall: float
    per_group: tuple[float, ...]
    proportions: tuple[float, ...]
    mf: float
    gap: float
    eo: float | None
    selection: dict | None = None

    def to_dict(self) -> dict:
        return {
            "metric_kind": self.metric_kind,
            "split": self.split,
            "overall": self.overall,
            "per_group": list(self.per_group),
            "proportions": list(self.proportions),
            "mf": self.mf,
            "gap": self.gap,
            "eo": self.eo,
            "selection": self.selection,
        }

    def to_csv_row(self) -> tuple[list[str], list]:
        """(header, row) pair for flat sweep aggregation."""
        header = ["metric_kind", "split", "overall", "mf", "gap", "eo"]
        row: list = [self.metric_kind, self.split, self.overall, self.mf, self.gap, self.eo]
        for g, (v, p) in enumerate(zip(self.per_group, self.proportions)):
            header += [f"group{g}", f"proportion{g}"]
            row += [v, p]
        return header, row


def build_report(
    predict, dataset: Dataset, split: str, kind: str, selection: dict | None = None
) -> MetricsReport:
    """Full evaluation of one predictor on one split.

    The pooled value is computed on the whole split (for AUC this is not
    a proportion-weighted mean of the group values). The equalized-odds
    score is included for binary tasks when every group carries both
    classes, from argmax predictions.
    """
    gm = group_eval(predict, dataset, split, kind)
    features, labels, groups = dataset.split_arrays(split)
    probs = np.asarray(predict(features, groups), dtype=np.float64)
    if kind == "accuracy":
        overall = accuracy(probs.argmax(axis=1), labels)
    else:
        overall = auc(_positive_scores(probs), labels)
    eo = None
    if dataset.classes == 2:
        has_both = all(
            len(set(labels[groups == g].tolist())) == 2 for g in range(dataset.num_groups)
        )
        if has_both:
            eo = equalized_odds(probs.argmax(axis=1), labels, groups)
    g = float(gm.values.max() - gm.values.min()) if gm.num_groups >= 2 else 0.0
    return MetricsReport(
        metric_kind=kind,
        split=split,
        overall=float(overall),
        per_group=tuple(float(v) for v in gm.values),
        proportions=tuple(float(p) for p in gm.proportions),
        mf=float(gm.values.min()),
        gap=g,
        eo=eo,
        selection=selection,
    )
