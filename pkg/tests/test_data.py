import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import chain_mdp
from pabc_lab import (
    LayeredMdp,
    Policy,
    TimestepTable,
    class_bound,
    concentrability,
    data_distribution,
    density_ratio,
    greedy_policy,
    occupancy,
    optimal_q,
    random_instance,
    sample_dataset,
)


def _single():
    return LayeredMdp.from_dicts([["x0"], ["end"]], {"x0": ["a"]}, {}, {"x0": {"a": 0.4}}, "x0")


def test_deterministic_single_pair_gives_identical_tuples():
    mdp = _single()
    dD = data_distribution(mdp, [np.ones((1, 1))])
    D = sample_dataset(mdp, dD, 50, seed=3)
    L = D[0]
    assert L.size == 50
    assert set(L.states.tolist()) == {0} and set(L.actions.tolist()) == {0}
    assert np.all(L.rewards == 0.4) and set(L.next_states.tolist()) == {0}


def test_table1_action_frequency(table1):
    n = 100_000
    D = sample_dataset(table1.mdp, table1.dD, n, seed=11)
    freq = np.mean(D[0].actions == 1)
    assert abs(freq - 0.5) <= 3 * np.sqrt(0.25 / n)
    assert not np.any(D[0].actions == 0)


@pytest.mark.parametrize("compact", [False, True])
def test_same_seed_bit_identical(compact):
    inst = random_instance(2, horizon=3, states=3, actions=2)
    a = sample_dataset(inst.mdp, inst.dD, 500, seed=9, compact=compact)
    b = sample_dataset(inst.mdp, inst.dD, 500, seed=9, compact=compact)
    for x, y in zip(a.layers, b.layers):
        for field in ("states", "actions", "rewards", "next_states"):
            assert np.array_equal(getattr(x, field), getattr(y, field))


def test_different_seeds_differ():
    inst = random_instance(2, horizon=3, states=3, actions=2)
    a = sample_dataset(inst.mdp, inst.dD, 500, seed=1)
    b = sample_dataset(inst.mdp, inst.dD, 500, seed=2)
    assert not np.array_equal(a[1].states, b[1].states)


def test_zero_n_rejected(table1):
    with pytest.raises(ValueError):
        sample_dataset(table1.mdp, table1.dD, 0, seed=0)


@pytest.mark.parametrize("compact", [False, True])
def test_tuple_invariants(compact):
    inst = random_instance(4, horizon=3, states=4, actions=3)
    mdp = inst.mdp
    D = sample_dataset(mdp, inst.dD, 2000, seed=5, compact=compact)
    for h, L in enumerate(D.layers):
        assert L.size == 2000
        assert np.array_equal(L.rewards, mdp.rewards[h][L.states, L.actions])
        assert np.all(mdp.legal[h][L.states, L.actions])
        assert np.all(mdp.transitions[h][L.states, L.actions, L.next_states] > 0)


@pytest.mark.parametrize("compact", [False, True])
def test_pair_frequencies_converge(compact):
    inst = random_instance(8, horizon=2, states=3, actions=3)
    n = 100_000
    D = sample_dataset(inst.mdp, inst.dD, n, seed=21, compact=compact)
    for h, L in enumerate(D.layers):
        freq = np.zeros(inst.mdp.shape(h))
        np.add.at(freq, (L.states, L.actions), L.weights())
        freq /= n
        p = inst.dD[h]
        assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_bad_data_distribution_rejected(table1):
    with pytest.raises(ValueError):
        data_distribution(table1.mdp, [np.array([[0.2, 0.2, 0.2]])])


# density ratios

def test_ratio_of_own_occupancy_is_ones_on_support():
    mdp = chain_mdp()
    pi = Policy.uniform(mdp)
    d = occupancy(mdp, pi)
    w = density_ratio(mdp, pi, TimestepTable(d.values, role="data"))
    for h in range(mdp.horizon):
        assert np.allclose(w[h][d[h] > 0], 1.0, atol=1e-12)
        assert np.all(w[h][d[h] == 0] == 0)
    assert concentrability(mdp, pi, TimestepTable(d.values, role="data")) == pytest.approx(1.0, abs=1e-12)


def test_table1_ratio_undefined(table1):
    pi = greedy_policy(table1.mdp, optimal_q(table1.mdp))
    assert density_ratio(table1.mdp, pi, table1.dD) is None
    assert concentrability(table1.mdp, pi, table1.dD) == float("inf")


def test_counterexample_w_star_is_indicator(counterexample):
    mdp = counterexample.mdp
    pi = greedy_policy(mdp, optimal_q(mdp))
    w = density_ratio(mdp, pi, counterexample.dD)
    expected = [("x0", "L1"), ("xA", "L2"), ("xC", "null")]
    for h, (x, a) in enumerate(expected):
        s = mdp.state_index(h, x)
        target = np.zeros(mdp.shape(h))
        target[s, mdp.action_index(h, s, a)] = 1.0
        assert np.array_equal(w[h], target)


def test_half_coverage_gives_concentrability_two():
    mdp = LayeredMdp.from_dicts([["x0"], ["end"]], {"x0": ["a", "b"]}, {}, {}, "x0")
    pi = Policy.deterministic(mdp, [[0]])
    dD = data_distribution(mdp, [np.array([[0.5, 0.5]])])
    assert concentrability(mdp, pi, dD) == 2.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2**31))
def test_reweighting_identity(seed, gseed):
    inst = random_instance(seed)
    mdp = inst.mdp
    pi = greedy_policy(mdp, optimal_q(mdp))
    w = density_ratio(mdp, pi, inst.dD)
    d = occupancy(mdp, pi)
    rng = np.random.default_rng(gseed)
    for h in range(mdp.horizon):
        g = rng.normal(size=mdp.shape(h))
        assert np.sum(inst.dD[h] * w[h] * g) == pytest.approx(np.sum(d[h] * g), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_concentrability_at_least_one(seed):
    inst = random_instance(seed)
    pi = greedy_policy(inst.mdp, optimal_q(inst.mdp))
    assert concentrability(inst.mdp, pi, inst.dD) >= 1.0 - 1e-12


# class bound

def test_class_bound_ones(chain):
    ones = TimestepTable(tuple(l.astype(float) for l in chain.legal), role="weight")
    assert class_bound([ones]) == 1.0


def test_class_bound_table1(table1):
    assert class_bound(table1.W) == 1.0


def test_class_bound_takes_max(chain):
    a = TimestepTable(tuple(np.where(l, 1.0, 0) for l in chain.legal), role="weight")
    b = TimestepTable(tuple(np.where(l, 3.0, 0) for l in chain.legal), role="weight")
    assert class_bound([a, b]) == 3.0


def test_class_bound_empty():
    with pytest.raises(ValueError):
        class_bound([])
