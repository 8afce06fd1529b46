"""No-harm model selection between per-group experts and the pooled model.

Both strategies consume validation GroupMetrics of the expert and pooled
models and return a per-group binary choice that never assigns a group a
value below its pooled baseline:

* greedy keeps the better model per group, maximizing the worst-group
  value over all selections;
* the integer program minimizes the max pairwise gap minus a weighted
  mean-performance bonus, solved exactly (exhaustive enumeration up to
  20 groups, depth-first branch and bound with a prefix bound beyond).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import GroupMetrics

ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class SelectionDecision:
    """Per-group choice: 1 routes the group to its expert, 0 to pooled."""

    choices: tuple[int, ...]
    per_group: tuple[float, ...]
    delta: float
    objective: float
    strategy: str
    lambda_sel: float | None = None

    def to_dict(self) -> dict:
        return {
            "choices": list(self.choices),
            "per_group": list(self.per_group),
            "delta": self.delta,
            "objective": self.objective,
            "strategy": self.strategy,
            "lambda_sel": self.lambda_sel,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SelectionDecision":
        return cls(
            tuple(int(v) for v in payload["choices"]),
            tuple(float(v) for v in payload["per_group"]),
            float(payload["delta"]),
            float(payload["objective"]),
            payload["strategy"],
            payload.get("lambda_sel"),
        )


def _check_compatible(expert: GroupMetrics, erm: GroupMetrics) -> None:
    if expert.num_groups != erm.num_groups:
        raise ValueError("expert and pooled metrics cover different group counts")
    if expert.metric_kind != erm.metric_kind:
        raise ValueError("expert and pooled metrics use different metric kinds")


def combine(choices: np.ndarray, expert: GroupMetrics, erm: GroupMetrics) -> np.ndarray:
    """Per-group value of a selection: expert where chosen, pooled elsewhere."""
    _check_compatible(expert, erm)
    v = np.asarray(choices)
    if v.shape != (expert.num_groups,):
        raise ValueError("choices must have one bit per group")
    return v * expert.values + (1 - v) * erm.values


def _delta(alpha: np.ndarray) -> float:
    return float(alpha.max() - alpha.min()) if alpha.size > 1 else 0.0


def select_greedy(expert: GroupMetrics, erm: GroupMetrics) -> SelectionDecision:
    """Keep the strictly better model per group; ties go to pooled.

    Maximizes each group's value independently, hence also the minimum
    over groups among all 2^G selections.
    """
    _check_compatible(expert, erm)
    if expert.num_groups == 0:
        raise ValueError("no groups to select over")
    choices = (expert.values > erm.values).astype(np.int64)
    alpha = combine(choices, expert, erm)
    return SelectionDecision(
        choices=tuple(int(v) for v in choices),
        per_group=tuple(float(a) for a in alpha),
        delta=_delta(alpha),
        objective=float(alpha.min()),
        strategy="greedy",
    )


def _objective(alpha: np.ndarray, proportions: np.ndarray, lambda_sel: float) -> float:
    return _delta(alpha) - lambda_sel * float(proportions @ alpha)


def _solve_enumerate(
    expert: np.ndarray, erm: np.ndarray, proportions: np.ndarray, lambda_sel: float
) -> tuple[np.ndarray, float]:
    g = expert.size
    masks = np.arange(1 << g, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(g)) & 1  # (2^G, G)
    feasible = ~np.any((bits == 1) & (expert < erm), axis=1)
    alpha = bits * expert + (1 - bits) * erm
    spread = alpha.max(axis=1) - alpha.min(axis=1) if g > 1 else np.zeros(len(masks))
    objective = spread - lambda_sel * (alpha @ proportions)
    bits = bits[feasible]
    objective = objective[feasible]
    # order: objective, then expert count, then lexicographically smallest v
    keys = tuple(bits[:, i] for i in range(g - 1, -1, -1)) + (bits.sum(axis=1), objective)
    best = np.lexsort(keys)[0]
    return bits[best], float(objective[best])


def _solve_branch_and_bound(
    expert: np.ndarray, erm: np.ndarray, proportions: np.ndarray, lambda_sel: float
) -> tuple[np.ndarray, float]:
    g = expert.size
    expert_ok = expert >= erm
    best_tail = np.maximum(expert, erm)  # best attainable per-group value
    tail_bonus = np.cumsum((proportions * best_tail)[::-1])[::-1]  # suffix sums
    best: dict = {"key": None, "choices": None, "objective": None}
    prefix = np.zeros(g, dtype=np.int64)

    def visit(depth: int, lo: float, hi: float, bonus: float) -> None:
        if depth == g:
            spread = hi - lo if g > 1 else 0.0
            objective = spread - lambda_sel * bonus
            key = (objective, int(prefix.sum()), tuple(int(v) for v in prefix))
            if best["key"] is None or key < best["key"]:
                best.update(key=key, choices=prefix.copy(), objective=objective)
            return
        # bound: spread of the fixed prefix, best attainable tail bonus
        spread_lb = max(0.0, hi - lo) if depth > 0 else 0.0
        bound = spread_lb - lambda_sel * (bonus + tail_bonus[depth])
        if best["key"] is not None and bound > best["key"][0]:
            return
        for v in (0, 1):
            if v == 1 and not expert_ok[depth]:
                continue
            value = expert[depth] if v else erm[depth]
            prefix[depth] = v
            visit(
                depth + 1,
                value if depth == 0 else min(lo, value),
                value if depth == 0 else max(hi, value),
                bonus + proportions[depth] * value,
            )
        prefix[depth] = 0

    visit(0, np.inf, -np.inf, 0.0)
    return best["choices"], best["objective"]


def select_ip(
    expert: GroupMetrics, erm: GroupMetrics, lambda_sel: float = 0.1
) -> SelectionDecision:
    """Exact optimum of the gap-minimizing integer program.

    Minimizes (max pairwise value difference) - lambda_sel * (proportion
    weighted mean value) over all selections whose per-group value stays
    at or above the pooled baseline. The all-pooled selection is always
    feasible, so a solution always exists. Objective ties break toward
    fewer experts, then the lexicographically smallest choice vector.
    """
    _check_compatible(expert, erm)
    if expert.num_groups == 0:
        raise ValueError("no groups to select over")
    if lambda_sel < 0:
        raise ValueError("lambda_sel must be nonnegative")
    args = (expert.values, erm.values, erm.proportions, lambda_sel)
    if expert.num_groups <= ENUMERATION_LIMIT:
        choices, objective = _solve_enumerate(*args)
    else:
        choices, objective = _solve_branch_and_bound(*args)
    alpha = combine(choices, expert, erm)
    return SelectionDecision(
        choices=tuple(int(v) for v in choices),
        per_group=tuple(float(a) for a in alpha),
        delta=_delta(alpha),
        objective=objective,
        strategy="ip",
        lambda_sel=lambda_sel,
    )


def _as_predictor(model):
    return model.predict_proba if hasattr(model, "predict_proba") else model


def routed_predictor(decision: SelectionDecision, experts_model, erm_model):
    """Predictor that routes each sample by its group's selection bit."""
    expert_predict = _as_predictor(experts_model)
    erm_predict = _as_predictor(erm_model)
    choices = np.asarray(decision.choices)

    def predict(features: np.ndarray, groups: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        groups = np.atleast_1d(np.asarray(groups))
        if groups.size and (groups.min() < 0 or groups.max() >= choices.size):
            raise ValueError("group index not covered by the selection decision")
        use_expert = choices[groups] == 1
        probs: np.ndarray | None = None
        for mask, fn in ((use_expert, expert_predict), (~use_expert, erm_predict)):
            if not mask.any():
                continue
            part = np.atleast_2d(np.asarray(fn(features[mask], groups[mask])))
            if probs is None:
                probs = np.empty((features.shape[0], part.shape[1]))
            probs[mask] = part
        assert probs is not None
        return probs

    return predict


def route_predict(x, a, decision: SelectionDecision, experts_model, erm_model) -> np.ndarray:
    """Class scores for one sample of group ``a`` under ``decision``."""
    predict = routed_predictor(decision, experts_model, erm_model)
    return predict(np.atleast_2d(np.asarray(x, dtype=np.float64)), np.array([a]))[0]
