import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pabc_lab import (
    EmptyVersionSpaceError,
    FunctionClass,
    PabcConfig,
    TimestepTable,
    WeightClass,
    avg_bellman_error,
    consistency_filters,
    empirical_loss,
    eps_for_n,
    eps_stat,
    greedy_policy,
    hyperparameters,
    optimal_q,
    pabc,
    pabc_l,
    policy_value,
    population_loss,
    random_instance,
    sample_dataset,
)
from pabc_lab.data import Dataset, Transitions, density_ratio
from pabc_lab.solvers import feasible_set, weight_return


def _one_tuple_dataset(s, a, r, y):
    arr = lambda v, t=np.int64: np.array([v], dtype=t)
    return Dataset((Transitions(arr(s), arr(a), arr(r, float), arr(y)),), n=1, seed=0)


def _weight(mdp, value):
    return TimestepTable(tuple(np.where(mdp.legal[h], value, 0.0) for h in range(mdp.horizon)), role="weight")


# losses

def test_zero_weight_gives_zero_loss(table1):
    D = sample_dataset(table1.mdp, table1.dD, 100, seed=0)
    f = table1.F[1]
    pi = greedy_policy(table1.mdp, f)
    assert empirical_loss(table1.mdp, f, _weight(table1.mdp, 0.0), 0, D, pi) == 0.0


def test_single_tuple_hand_value(table1):
    f = table1.F[1]  # f_0(x0, L) = 0.7
    D = _one_tuple_dataset(0, 0, 0.8, 0)
    pi = greedy_policy(table1.mdp, f)
    loss = empirical_loss(table1.mdp, f, _weight(table1.mdp, 2.0), 0, D, pi)
    assert loss == pytest.approx(-0.2, abs=1e-15)


def test_q_star_empirical_loss_within_stat_bound():
    inst = random_instance(3, horizon=2, states=3, actions=2)
    q = inst.F[inst.annotations["q_star_index"]]
    D = sample_dataset(inst.mdp, inst.dD, 20_000, seed=1)
    pi = greedy_policy(inst.mdp, q)
    bound = eps_stat(20_000, inst.annotations["C"], 2, len(inst.F), len(inst.W), 0.1)
    for w in inst.W:
        for h in range(2):
            assert abs(empirical_loss(inst.mdp, q, w, h, D, pi)) <= bound


def test_population_loss_zero_at_q_star():
    inst = random_instance(12)
    q = inst.F[inst.annotations["q_star_index"]]
    for w in inst.W:
        for h in range(inst.mdp.horizon):
            assert abs(population_loss(inst.mdp, q, w, h, inst.dD)) <= 1e-12


def test_counterexample_bad_f_has_zero_population_loss(counterexample):
    inst = counterexample
    for w in inst.W:
        for h in range(3):
            assert population_loss(inst.mdp, inst.F[1], w, h, inst.dD) == 0.0


def test_empirical_mean_matches_population_loss():
    inst = random_instance(7, horizon=2, states=3, actions=3)
    f = inst.F[0]
    pi = greedy_policy(inst.mdp, f)
    D = sample_dataset(inst.mdp, inst.dD, 100_000, seed=4)
    for w in inst.W:
        for h in range(2):
            L = D[h]
            term = w[h][L.states, L.actions] * (
                f[h][L.states, L.actions] - L.rewards
                - ((f[h + 1] * pi.probs[h + 1]).sum(axis=1)[L.next_states] if h + 1 < 2 else 0)
            )
            se = term.std() / math.sqrt(len(term))
            emp = empirical_loss(inst.mdp, f, w, h, D, pi)
            assert abs(emp - population_loss(inst.mdp, f, w, h, inst.dD)) <= 3 * se + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_population_loss_identities(seed):
    inst = random_instance(seed)
    mdp = inst.mdp
    pi_star = greedy_policy(mdp, optimal_q(mdp))
    w_star = density_ratio(mdp, pi_star, inst.dD)
    for i, f in enumerate(inst.F):
        pi_f = inst.F.policy(i)
        for h in range(mdp.horizon):
            pop = population_loss(mdp, f, w_star, h, inst.dD)
            assert avg_bellman_error(mdp, f, pi_star, h, pi_f) == pytest.approx(pop, abs=1e-12)


def test_avg_bellman_error_zero_for_q_star():
    inst = random_instance(5)
    q = optimal_q(inst.mdp)
    pi = greedy_policy(inst.mdp, q)
    for h in range(inst.mdp.horizon):
        assert abs(avg_bellman_error(inst.mdp, q, pi, h, pi)) <= 1e-12


def test_avg_bellman_error_one_step(table1):
    f = table1.F[1]
    pi = greedy_policy(table1.mdp, optimal_q(table1.mdp))
    # d^pi puts all mass on L: 0.7 - 0.8
    assert avg_bellman_error(table1.mdp, f, pi, 0, greedy_policy(table1.mdp, f)) == pytest.approx(-0.1, abs=1e-15)


# eps_stat

def test_eps_stat_value():
    assert eps_stat(800, 1, 1, 2, 2, 0.1) == pytest.approx(2 * math.sqrt(math.log(80) / 1600), rel=1e-15)
    assert eps_stat(800, 1, 1, 2, 2, 0.1) == pytest.approx(0.1047, abs=5e-5)


def test_eps_stat_scaling():
    base = eps_stat(800, 1, 2, 3, 3, 0.1)
    assert eps_stat(3200, 1, 2, 3, 3, 0.1) == pytest.approx(base / 2, rel=1e-14)
    assert eps_stat(800, 2, 2, 3, 3, 0.1) == pytest.approx(2 * base, rel=1e-14)


@pytest.mark.parametrize("args", [(0, 1, 1, 1, 1, 0.1), (10, 1, 1, 1, 1, 1.0), (10, -1, 1, 1, 1, 0.1)])
def test_eps_stat_domain(args):
    with pytest.raises(ValueError):
        eps_stat(*args)


# feasibility and selection

def test_infinite_alpha_keeps_everything():
    inst = random_instance(9)
    D = sample_dataset(inst.mdp, inst.dD, 50, seed=0)
    keep, _ = feasible_set(inst.F, inst.W, D, math.inf)
    assert keep == list(range(len(inst.F)))


def test_population_alpha_zero_removes_wrong_member():
    inst = random_instance(9, horizon=2, states=3, actions=2)
    qi = inst.annotations["q_star_index"]
    keep, _ = feasible_set(inst.F, inst.W, inst.dD, 0.0)
    assert keep == [qi]


def test_counterexample_population_both_feasible(counterexample):
    keep, L = feasible_set(counterexample.F, counterexample.W, counterexample.dD, 0.0)
    assert keep == [0, 1]
    assert np.all(L == 0)


def test_singleton_q_star_returns_v_star():
    inst = random_instance(14, horizon=2, states=3, actions=2)
    mdp = inst.mdp
    F = FunctionClass(mdp, (inst.F[inst.annotations["q_star_index"]],))
    n = 5000
    D = sample_dataset(mdp, inst.dD, n, seed=2)
    alpha = eps_stat(n, inst.annotations["C"], 2, 1, len(inst.W), 0.1)
    sel = pabc(F, inst.W, D, PabcConfig(alpha=alpha))
    assert sel.index == 0
    assert sel.estimate == pytest.approx(inst.annotations["v_star"], abs=1e-12)
    assert sel.variant == "pabc"


def test_counterexample_adversarial_failure(counterexample):
    inst = counterexample
    sel = pabc(inst.F, inst.W, inst.dD, PabcConfig(0.0, 0.0, preferred_member=1))
    assert sel.variant == "population-pabc"
    assert sel.name == "f" and policy_value(inst.mdp, sel.policy).value == 0.0
    assert sel.estimate == 1.0


def test_counterexample_default_tie_picks_lowest_index(counterexample):
    sel = pabc(counterexample.F, counterexample.W, counterexample.dD, PabcConfig(0.0, 0.0))
    assert sel.index == 0


def test_counterexample_prescreen_rescues(counterexample):
    inst = counterexample
    sel = pabc(inst.F, inst.W, inst.dD, PabcConfig(0.0, 1.0, preferred_member=1))
    assert sel.name == "Q*" and policy_value(inst.mdp, sel.policy).value == 1.0
    assert sel.candidates == (0,)


def test_empty_feasible_set_names_tightest_member():
    inst = random_instance(9, horizon=2, states=3, actions=2)
    qi = inst.annotations["q_star_index"]
    F = inst.F.subset([i for i in range(len(inst.F)) if i != qi])
    with pytest.raises(EmptyVersionSpaceError) as err:
        pabc(F, inst.W, inst.dD, PabcConfig(alpha=0.0))
    details = err.value.details
    assert details[0]["excess"] == min(d["excess"] for d in details)
    assert details[0]["name"] in str(err.value)


def test_empty_prescreen_is_error(table1):
    with pytest.raises(EmptyVersionSpaceError):
        pabc(table1.F, table1.W, table1.dD, PabcConfig(alpha=1.0, c_gap=0.3))


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        PabcConfig(alpha=-1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_population_estimate_pessimistic(seed):
    inst = random_instance(seed)
    for alpha in (0.0, 0.05, 0.2, 1.0):
        sel = pabc(inst.F, inst.W, inst.dD, PabcConfig(alpha=alpha))
        assert sel.estimate <= inst.annotations["v_star"] + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 1000))
def test_alpha_monotonicity(seed, dseed):
    inst = random_instance(seed)
    D = sample_dataset(inst.mdp, inst.dD, 200, seed=dseed, compact=True)
    prev_keep, prev_est = None, math.inf
    for alpha in (0.05, 0.1, 0.3, 1.0, 5.0):
        keep, _ = feasible_set(inst.F, inst.W, D, alpha)
        if prev_keep is not None:
            assert set(prev_keep) <= set(keep)
        if keep:
            est = pabc(inst.F, inst.W, D, PabcConfig(alpha=alpha)).estimate
            assert est <= prev_est + 1e-12
            prev_est = est
        prev_keep = keep


def test_feasibility_diagnostics_consistent():
    inst = random_instance(44)
    D = sample_dataset(inst.mdp, inst.dD, 300, seed=1)
    sel = pabc(inst.F, inst.W, D, PabcConfig(alpha=0.3))
    worst = np.abs(sel.losses).max(axis=(1, 2))
    assert np.array_equal(sel.feasible, worst <= 0.3)
    d = sel.to_dict()
    assert len(d["losses"]) == len(inst.F) and d["variant"] == "pabc"


# Lagrangian selector

def test_pabc_l_zero_weights_is_plain_pessimism():
    inst = random_instance(6)
    zero = WeightClass(inst.mdp, (_weight(inst.mdp, 0.0),))
    D = sample_dataset(inst.mdp, inst.dD, 100, seed=0)
    sel = pabc_l(inst.F, zero, D)
    vals = [inst.F[i][0][0] @ inst.F.policy(i).probs[0][0] for i in range(len(inst.F))]
    assert sel.index == int(np.argmin(vals))
    assert sel.estimate == pytest.approx(min(vals), abs=1e-15)


def test_pabc_l_estimate_includes_penalty():
    inst = random_instance(6, horizon=2, states=3, actions=2)
    D = sample_dataset(inst.mdp, inst.dD, 500, seed=3)
    sel = pabc_l(inst.F, inst.W, D)
    pos = list(sel.candidates).index(sel.index)
    base = inst.F[sel.index][0][0] @ sel.policy.probs[0][0]
    assert sel.estimate == pytest.approx(base + 2 * np.abs(sel.losses[pos]).max(), abs=1e-12)
    assert sel.alpha is None and sel.variant == "pabc-l"


def test_pabc_l_counterexample_tie(counterexample):
    inst = counterexample
    sel = pabc_l(inst.F, inst.W, inst.dD)
    assert sel.objective.tolist() == [1.0, 1.0]
    assert sel.index == 0
    assert pabc_l(inst.F, inst.W, inst.dD, preferred_member=1).index == 1


def test_pabc_and_pabc_l_agree_with_unique_zero_penalty_member():
    inst = random_instance(9, horizon=2, states=3, actions=2)
    a = pabc(inst.F, inst.W, inst.dD, PabcConfig(alpha=0.0))
    b = pabc_l(inst.F, inst.W, inst.dD)
    assert a.index == b.index == inst.annotations["q_star_index"]


# hyperparameters

def test_value_mode_worked_example():
    hp = hyperparameters("value", 0.2, 0.1, 2, 1.0, 2, 2)
    assert hp.alpha == pytest.approx(0.05, abs=1e-15)
    assert hp.c_gap == 0.0
    # log(2 |F| |W| H / delta) = log(160) at H = 2
    assert hp.n_required == math.ceil(8 * 1 * 32 * math.log(160) / (0.04 * 2)) == 16241


def test_policy_mode_with_gap_h_matches_value_alpha():
    hp = hyperparameters("policy", 0.3, 0.1, 3, 1.0, 2, 2, gap=3.0)
    assert hp.alpha == pytest.approx(0.3 / 6, rel=1e-15)
    assert hp.c_gap == 3.0


def test_policy_robust_without_error_matches_policy_with_c_gap():
    a = hyperparameters("policy-robust", 0.3, 0.1, 3, 1.0, 2, 2, c_gap=0.4, eps_f=0.0)
    b = hyperparameters("policy", 0.3, 0.1, 3, 1.0, 2, 2, gap=0.4)
    assert a.alpha == b.alpha and a.c_gap == b.c_gap and a.n_required == b.n_required


def test_robust_modes_add_error():
    v = hyperparameters("value-robust", 0.2, 0.1, 2, 1.0, 2, 2, eps_f=0.01)
    assert v.alpha == pytest.approx(0.05 + 0.01, rel=1e-15)


def test_linf_mode():
    hp = hyperparameters("policy-linf", 0.2, 0.1, 2, 1.0, 2, 2, gap=0.5, eps_f_inf=0.1)
    assert hp.c_gap == pytest.approx(0.3, abs=1e-15)
    assert hp.alpha == pytest.approx(0.2 * 0.3 / 8 + 0.2, rel=1e-14)
    with pytest.raises(ValueError):
        hyperparameters("policy-linf", 0.2, 0.1, 2, 1.0, 2, 2, gap=0.5, eps_f_inf=0.25)


def test_lagrangian_modes_have_no_alpha():
    hp = hyperparameters("policy-l", 0.2, 0.1, 2, 1.0, 2, 2, gap=0.5)
    assert hp.alpha is None
    assert hp.n_required == math.ceil(32 * 128 * math.log(160) / (0.04 * 0.25) / 2)


def test_unknown_mode_and_missing_gap():
    with pytest.raises(ValueError):
        hyperparameters("no-such-mode", 0.2, 0.1, 2, 1.0, 2, 2)
    with pytest.raises(ValueError):
        hyperparameters("policy", 0.2, 0.1, 2, 1.0, 2, 2)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["value", "policy", "value-l", "policy-l"]), st.integers(10, 10**7))
def test_eps_for_n_inverts_bound(mode, n):
    e = eps_for_n(mode, n, 0.1, 2, 1.5, 3, 4, gap=0.4)
    assert hyperparameters(mode, e, 0.1, 2, 1.5, 3, 4, gap=0.4).total_bound / 2 == pytest.approx(n, rel=1e-9)


# consistency filters

def test_counterexample_filters_change_nothing(counterexample):
    rep = consistency_filters(counterexample.F, counterexample.W, counterexample.dD, 1.0)
    assert rep.consistent_weights == {0: [0], 1: [1]}
    assert rep.weight_returns == [1.0, 1.0]
    assert rep.changes_nothing


def test_weight_off_every_greedy_action_is_flagged(counterexample):
    mdp = counterexample.mdp
    vals = [np.zeros(mdp.shape(h)) for h in range(3)]
    vals[1][mdp.state_index(1, "xA"), 0] = 1.0  # fine for both members
    vals[0][0, :] = [1.0, 1.0]  # puts mass on both first actions
    W = WeightClass(mdp, (TimestepTable(tuple(vals), role="weight"),))
    rep = consistency_filters(counterexample.F, W, counterexample.dD, 1.0)
    assert rep.consistent_weights == {0: [], 1: []}


def test_w_star_return_equals_v_star():
    inst = random_instance(19)
    w = inst.W[inst.annotations["w_star_index"]]
    assert weight_return(inst.mdp, w, inst.dD) == pytest.approx(inst.annotations["v_star"], abs=1e-12)
