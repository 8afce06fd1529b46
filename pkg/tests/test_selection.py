import numpy as np
import pytest

from fairexperts.metrics import GroupMetrics
from fairexperts.selection import (
    SelectionDecision,
    _solve_branch_and_bound,
    _solve_enumerate,
    combine,
    route_predict,
    routed_predictor,
    select_greedy,
    select_ip,
)

from helpers import enumerate_ip_oracle


def gm(values, proportions=None, kind="accuracy", split="val"):
    values = np.asarray(values, dtype=np.float64)
    if proportions is None:
        proportions = np.full(values.size, 1.0 / values.size)
    return GroupMetrics(kind, values, np.asarray(proportions), split)


def random_instance(rng, max_groups=6):
    g = int(rng.integers(1, max_groups + 1))
    expert = rng.uniform(0, 1, g)
    erm = rng.uniform(0, 1, g)
    if rng.uniform() < 0.3:  # force some exact ties
        i = int(rng.integers(g))
        expert[i] = erm[i]
    p = rng.uniform(0.05, 1.0, g)
    p = p / p.sum()
    return gm(expert, p), gm(erm, p)


# --- combine -----------------------------------------------------------------


def test_combine_all_zeros_returns_erm():
    expert, erm = gm([0.9, 0.8]), gm([0.7, 0.6])
    assert np.array_equal(combine(np.array([0, 0]), expert, erm), erm.values)


def test_combine_all_ones_returns_expert():
    expert, erm = gm([0.9, 0.8]), gm([0.7, 0.6])
    assert np.array_equal(combine(np.array([1, 1]), expert, erm), expert.values)


def test_combine_mixed_selection_example():
    # expert AUCs (81.45, 83.66), pooled (81.19, 83.80); choosing the
    # expert for group 0 only yields (81.45, 83.80)
    expert = gm([0.8145, 0.8366], kind="auc")
    erm = gm([0.8119, 0.8380], kind="auc")
    alpha = combine(np.array([1, 0]), expert, erm)
    assert np.allclose(alpha, [0.8145, 0.8380], atol=1e-15)


def test_combine_rejects_group_mismatch():
    with pytest.raises(ValueError):
        combine(np.array([0]), gm([0.5]), gm([0.5, 0.5]))
    with pytest.raises(ValueError):
        combine(np.array([0, 1, 0]), gm([0.5, 0.5]), gm([0.5, 0.5]))


# --- greedy --------------------------------------------------------------------


def test_greedy_picks_per_group_max():
    decision = select_greedy(gm([0.80, 0.70]), gm([0.78, 0.72]))
    assert decision.choices == (1, 0)
    assert decision.per_group == (0.80, 0.72)
    assert decision.strategy == "greedy"


def test_greedy_ties_favor_pooled():
    values = gm([0.6, 0.7])
    assert select_greedy(values, gm([0.6, 0.7])).choices == (0, 0)


def test_greedy_three_groups():
    decision = select_greedy(gm([0.6, 0.9, 0.5]), gm([0.7, 0.8, 0.5]))
    assert decision.choices == (0, 1, 0)


def test_greedy_maximizes_worst_group_over_all_selections():
    rng = np.random.default_rng(21)
    for _ in range(300):
        expert, erm = random_instance(rng)
        decision = select_greedy(expert, erm)
        best_min = max(
            min(combine(np.array([(mask >> i) & 1 for i in range(expert.num_groups)]), expert, erm))
            for mask in range(2**expert.num_groups)
        )
        assert min(decision.per_group) == best_min


def test_greedy_no_harm_exact():
    rng = np.random.default_rng(22)
    for _ in range(200):
        expert, erm = random_instance(rng)
        decision = select_greedy(expert, erm)
        assert np.all(np.asarray(decision.per_group) >= erm.values)


# --- integer program -------------------------------------------------------------


def test_ip_trivial_when_expert_strictly_worse():
    expert, erm = gm([0.6, 0.7]), gm([0.8, 0.9])
    decision = select_ip(expert, erm, 0.1)
    assert decision.choices == (0, 0)
    assert decision.delta == pytest.approx(float(erm.values.max() - erm.values.min()))


def test_ip_rejects_gap_widening_improvement_small_lambda():
    # objectives over the four selections: -0.080, -0.080, -0.0325,
    # -0.0325; tie between (0,0) and (0,1) resolves to fewer experts
    expert = gm([0.85, 0.80], [0.5, 0.5])
    erm = gm([0.80, 0.80], [0.5, 0.5])
    decision = select_ip(expert, erm, 0.1)
    assert decision.choices == (0, 0)
    assert decision.delta == 0.0
    assert decision.objective == pytest.approx(-0.080, abs=1e-12)


def test_ip_accuracy_term_dominates_large_lambda():
    expert = gm([0.85, 0.80], [0.5, 0.5])
    erm = gm([0.80, 0.80], [0.5, 0.5])
    decision = select_ip(expert, erm, 10.0)
    assert decision.choices == (1, 0)
    assert decision.objective == pytest.approx(0.05 - 8.25, abs=1e-12)


def test_ip_rejects_negative_lambda():
    with pytest.raises(ValueError):
        select_ip(gm([0.5]), gm([0.5]), -0.1)


def test_ip_matches_enumeration_oracle():
    rng = np.random.default_rng(23)
    for _ in range(300):
        expert, erm = random_instance(rng)
        lam = float(rng.uniform(0, 2))
        decision = select_ip(expert, erm, lam)
        choices, objective, alpha, delta = enumerate_ip_oracle(
            expert.values, erm.values, erm.proportions, lam
        )
        assert decision.choices == choices
        assert abs(decision.objective - objective) < 1e-12


def test_ip_all_pooled_always_feasible():
    rng = np.random.default_rng(24)
    for _ in range(100):
        expert, erm = random_instance(rng)
        decision = select_ip(expert, erm, 0.1)
        # the returned optimum can never be worse than the trivial point
        erm_delta = float(erm.values.max() - erm.values.min()) if erm.num_groups > 1 else 0.0
        trivial = erm_delta - 0.1 * float(erm.proportions @ erm.values)
        assert decision.objective <= trivial + 1e-15
        assert np.all(np.asarray(decision.per_group) >= erm.values)


def test_ip_lambda_zero_minimizes_delta():
    rng = np.random.default_rng(25)
    for _ in range(200):
        expert, erm = random_instance(rng)
        decision = select_ip(expert, erm, 0.0)
        g = expert.num_groups
        feasible_deltas = []
        for mask in range(2**g):
            v = np.array([(mask >> i) & 1 for i in range(g)])
            if np.any((v == 1) & (expert.values < erm.values)):
                continue
            alpha = combine(v, expert, erm)
            feasible_deltas.append(alpha.max() - alpha.min() if g > 1 else 0.0)
        assert decision.delta == pytest.approx(min(feasible_deltas), abs=1e-15)


def test_ip_mean_value_monotone_in_lambda():
    rng = np.random.default_rng(26)
    for _ in range(40):
        expert, erm = random_instance(rng)
        previous = -np.inf
        for lam in (0.0, 0.05, 0.1, 0.5, 1.0, 5.0):
            decision = select_ip(expert, erm, lam)
            weighted = float(erm.proportions @ np.asarray(decision.per_group))
            assert weighted >= previous - 1e-12
            previous = weighted


def test_ip_tie_break_fewer_experts_then_lexicographic():
    # all four selections tie in objective when expert == erm
    expert = gm([0.7, 0.7])
    decision = select_ip(expert, gm([0.7, 0.7]), 0.1)
    assert decision.choices == (0, 0)
    # equal-objective nontrivial tie: groups are symmetric, lexicographic
    # order prefers the expert on the later group
    expert = gm([0.8, 0.8], [0.5, 0.5])
    erm = gm([0.8, 0.8], [0.5, 0.5])
    assert select_ip(expert, erm, 1.0).choices == (0, 0)


def test_branch_and_bound_agrees_with_enumeration():
    rng = np.random.default_rng(27)
    for _ in range(100):
        g = int(rng.integers(2, 11))
        expert = rng.uniform(0, 1, g)
        erm = rng.uniform(0, 1, g)
        p = rng.uniform(0.05, 1.0, g)
        p = p / p.sum()
        lam = float(rng.uniform(0, 1))
        ve, oe = _solve_enumerate(expert, erm, p, lam)
        vb, ob = _solve_branch_and_bound(expert, erm, p, lam)
        assert np.array_equal(ve, vb)
        assert oe == pytest.approx(ob, abs=1e-12)


# --- routing ---------------------------------------------------------------------


class StubModel:
    def __init__(self, value):
        self.value = value

    def predict_proba(self, features, groups=None):
        features = np.atleast_2d(features)
        probs = np.full((features.shape[0], 2), self.value, dtype=float)
        probs[:, 1] = 1 - self.value
        return probs


def make_decision(choices):
    return SelectionDecision(
        choices=choices,
        per_group=tuple(0.5 for _ in choices),
        delta=0.0,
        objective=0.0,
        strategy="greedy",
    )


def test_routing_all_zero_equals_erm():
    experts, erm = StubModel(0.9), StubModel(0.1)
    predict = routed_predictor(make_decision((0, 0)), experts, erm)
    x = np.zeros((4, 3))
    groups = np.array([0, 1, 0, 1])
    assert np.array_equal(predict(x, groups), erm.predict_proba(x))


def test_routing_all_one_equals_expert():
    experts, erm = StubModel(0.9), StubModel(0.1)
    predict = routed_predictor(make_decision((1, 1)), experts, erm)
    x = np.zeros((4, 3))
    groups = np.array([0, 1, 0, 1])
    assert np.array_equal(predict(x, groups), experts.predict_proba(x))


def test_routing_mixed_decision():
    experts, erm = StubModel(0.9), StubModel(0.1)
    predict = routed_predictor(make_decision((1, 0)), experts, erm)
    x = np.zeros((4, 2))
    groups = np.array([0, 1, 1, 0])
    probs = predict(x, groups)
    assert np.allclose(probs[groups == 0, 0], 0.9)
    assert np.allclose(probs[groups == 1, 0], 0.1)


def test_route_predict_single_sample():
    experts, erm = StubModel(0.9), StubModel(0.1)
    decision = make_decision((1, 0))
    assert route_predict(np.zeros(2), 0, decision, experts, erm)[0] == 0.9
    assert route_predict(np.zeros(2), 1, decision, experts, erm)[0] == 0.1


def test_routing_rejects_unknown_group():
    experts, erm = StubModel(0.9), StubModel(0.1)
    predict = routed_predictor(make_decision((1, 0)), experts, erm)
    with pytest.raises(ValueError, match="group index"):
        predict(np.zeros((1, 2)), np.array([2]))


def test_selection_decision_round_trip():
    decision = SelectionDecision((1, 0), (0.8, 0.7), 0.1, -0.05, "ip", 0.1)
    assert SelectionDecision.from_dict(decision.to_dict()) == decision
