import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import zero_mdp
from pabc_lab import (
    Policy,
    build_rate_instance,
    concentrability,
    gap_of_function,
    greedy_policy,
    is_regular,
    optimal_q,
    policy_value,
    population_loss,
    random_instance,
)
from pabc_lab.classes import eps_F, eps_W
from pabc_lab.data import density_ratio
from pabc_lab.instances import ConstructionError, policy_count
from pabc_lab.oracles import BudgetExceededError, brute_force_eps, brute_force_optimal


# counterexample

def test_counterexample_layout(counterexample):
    mdp = counterexample.mdp
    assert mdp.horizon == 3
    assert mdp.layers[:3] == (("x0",), ("xA", "xB"), ("xC", "xB2"))
    assert mdp.actions[0] == (("L1", "R1"),)
    assert counterexample.F.names() == ["Q*", "f"]
    assert counterexample.W.names() == ["w*", "w_bad"]


def test_counterexample_annotations(counterexample):
    ann = counterexample.annotations
    assert ann["v_star"] == 1.0 and ann["gap_q_star"] == 1.0 and ann["v_pi_f"] == 0.0
    assert ann["class_gaps"] == [1.0, 0.0]


def test_counterexample_zero_population_loss_everywhere(counterexample):
    inst = counterexample
    for f in inst.F:
        for w in inst.W:
            for h in range(3):
                assert population_loss(inst.mdp, f, w, h, inst.dD) == 0.0


def test_counterexample_equal_initial_values(counterexample):
    inst = counterexample
    for i, f in enumerate(inst.F):
        assert f[0][0] @ inst.F.policy(i).probs[0][0] == 1.0


def test_w_bad_puts_weight_on_stated_pairs(counterexample):
    mdp, w = counterexample.mdp, counterexample.W[1]
    support = {(h, mdp.layers[h][s], mdp.actions[h][s][a])
               for h in range(3) for s, a in zip(*np.nonzero(w[h]))}
    assert support == {(0, "x0", "R1"), (1, "xA", "L2"), (2, "xC", "null")}


def test_counterexample_enumeration(counterexample):
    v, actions = brute_force_optimal(counterexample.mdp)
    mdp = counterexample.mdp
    path = [mdp.actions[0][0][actions[0][0]], mdp.actions[1][0][actions[1][0]], mdp.actions[2][0][actions[2][0]]]
    assert v == 1.0 and path == ["L1", "L2", "null"]


# one-step coverage example

def test_table1_values(table1):
    mdp = table1.mdp
    assert mdp.rewards[0][0].tolist() == [0.8, 0.6, 0.3]
    assert optimal_q(mdp)[0][0].tolist() == [0.8, 0.6, 0.3]
    assert table1.F[1][0][0].tolist() == [0.7, 0.3, 0.8]
    assert table1.dD[0][0].tolist() == [0.0, 0.5, 0.5]
    assert table1.W[0][0][0].tolist() == [0.0, 1.0, 1.0]
    assert table1.annotations["d_star"] == [1.0, 0.0, 0.0]


def test_table1_coverage_failure_with_finite_eps_w(table1):
    ann = table1.annotations
    assert ann["concentrability"] == math.inf and ann["w_star_exists"] is False
    assert math.isfinite(ann["eps_W"])
    assert ann["eps_W"] == pytest.approx(0.2, abs=1e-12)
    assert ann["eps_W_claimed"] == 0.0
    assert ann["eps_W_discrepancy"] == pytest.approx(0.2, abs=1e-12)


def test_table1_eps_w_both_code_paths(table1):
    fast = eps_W(table1.F, table1.W, table1.mdp, table1.dD)[0]
    assert brute_force_eps(table1.F, table1.W, table1.mdp, table1.dD)[0] == pytest.approx(fast, abs=1e-12)


# random instances

def test_gap_floor_respected():
    inst = random_instance(1, gap_floor=0.1)
    assert gap_of_function(inst.mdp, optimal_q(inst.mdp)) >= 0.1
    assert inst.annotations["gap_q_star"] >= 0.1


def test_full_support_finite_concentrability():
    inst = random_instance(2, support="full")
    assert math.isfinite(inst.annotations["concentrability"])
    assert all(np.all(inst.dD[h][inst.mdp.legal[h]] > 0) for h in range(inst.mdp.horizon))


def test_optimal_support_gives_indicator_ratio():
    inst = random_instance(2, support="optimal", horizon=2, states=3, actions=2)
    assert inst.annotations["concentrability"] == pytest.approx(1.0, abs=1e-12)


def test_custom_support():
    base = random_instance(2, horizon=2, states=2, actions=2)
    tables = [np.where(base.mdp.legal[h], 1.0, 0) / base.mdp.legal[h].sum() for h in range(2)]
    inst = random_instance(2, horizon=2, states=2, actions=2, support="custom", custom_dD=tables)
    assert all(np.array_equal(inst.dD[h], tables[h]) for h in range(2))


def test_seed_determinism():
    a, b = random_instance(77), random_instance(77)
    assert a.mdp.layers == b.mdp.layers
    assert all(np.array_equal(x, y) for x, y in zip(a.mdp.transitions, b.mdp.transitions))
    assert all(np.array_equal(x, y) for f, g in zip(a.F, b.F) for x, y in zip(f, g))
    assert a.annotations == b.annotations


def test_limits_enforced():
    with pytest.raises(ValueError):
        random_instance(0, max_states=6)


def test_unreachable_gap_floor_exhausts_budget():
    with pytest.raises(ConstructionError):
        random_instance(0, gap_floor=5.0, resample_budget=20)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_random_instance_assumptions_hold(seed):
    inst = random_instance(seed)
    ann = inst.annotations
    assert ann["q_star_index"] is not None and ann["w_star_index"] is not None
    assert inst.F.range_violations() == []
    assert is_regular(inst.W, inst.dD)
    assert ann["C"] >= ann["concentrability"] - 1e-12
    pi = greedy_policy(inst.mdp, optimal_q(inst.mdp))
    assert density_ratio(inst.mdp, pi, inst.dD) is not None


def test_rate_instance_shape():
    inst = build_rate_instance(0)
    assert inst.mdp.horizon == 2 and len(inst.F) == 201
    assert inst.annotations["q_star_index"] == 0
    assert eps_F(inst.F, inst.W, inst.mdp, inst.dD)[0] == 0.0


# brute-force oracle

def test_zero_reward_enumeration():
    assert brute_force_optimal(zero_mdp())[0] == 0.0


def test_enumeration_budget():
    inst = random_instance(3, horizon=4, states=5, actions=4)
    assert policy_count(inst.mdp) > 10
    with pytest.raises(BudgetExceededError):
        brute_force_optimal(inst.mdp, budget=10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_enumeration_matches_dynamic_programming(seed):
    inst = random_instance(seed, policy_budget=100_000)
    v, actions = brute_force_optimal(inst.mdp)
    assert v == pytest.approx(inst.annotations["v_star"], abs=1e-10)
    assert policy_value(inst.mdp, Policy.deterministic(inst.mdp, actions)).value == pytest.approx(v, abs=1e-10)
