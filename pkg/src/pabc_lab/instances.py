"""Named benchmark instances and a seeded random instance generator.

Every builder recomputes its annotations with the exact routines and, for
the named instances, checks them against the values the construction is
meant to have.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classes import FunctionClass, WeightClass, eps_W, is_regular
from .data import class_bound, concentrability, data_distribution, density_ratio
from .mdp import (
    LayeredMdp,
    TimestepTable,
    gap_of_function,
    greedy_policy,
    occupancy,
    optimal_q,
    policy_value,
)
from .oracles import brute_force_optimal


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NamedInstance:
    name: str
    mdp: LayeredMdp
    dD: TimestepTable
    F: FunctionClass
    W: WeightClass
    annotations: dict = field(default_factory=dict)


def annotate(mdp: LayeredMdp, dD: TimestepTable, F: FunctionClass, W: WeightClass,
             enumeration_budget: int = 100_000) -> dict:
    """Exact annotations; ``v*`` is also checked by policy enumeration when affordable."""
    q = optimal_q(mdp)
    pi = greedy_policy(mdp, q)
    w_star = density_ratio(mdp, pi, dD)
    v_star = policy_value(mdp, pi).value
    if policy_count(mdp) <= enumeration_budget:
        v_enum, _ = brute_force_optimal(mdp, budget=enumeration_budget)
        if abs(v_enum - v_star) > 1e-10:
            raise ConstructionError(f"dynamic programming gives v* = {v_star!r}, enumeration {v_enum!r}")
    return {
        "v_star": v_star,
        "gap_q_star": gap_of_function(mdp, q),
        "concentrability": concentrability(mdp, pi, dD),
        "w_star_exists": w_star is not None,
        "class_gaps": F.gaps(),
        "C": class_bound(W),
        "regular": is_regular(W, dD),
        "q_star_index": _find(F, q.values),
        "w_star_index": None if w_star is None else _find(W, w_star.values),
    }


def _find(cls, values, tol=1e-12) -> int | None:
    for i, m in enumerate(cls):
        if all(np.allclose(a, b, rtol=0, atol=tol) for a, b in zip(m.values, values)):
            return i
    return None


def _expect(ann: dict, key: str, value) -> None:
    got = ann[key]
    same = got == value if not isinstance(value, float) else math.isclose(got, value, abs_tol=1e-12) or got == value
    if not same:
        raise ConstructionError(f"annotation {key}: oracle gives {got!r}, construction expects {value!r}")


def build_counterexample() -> NamedInstance:
    """Tie-breaking failure instance, three timesteps.

    Layer 0: ``x0`` with ``L1`` (to ``xA``) and ``R1`` (to ``xB``).  Layer 1:
    ``xA`` with ``L2`` (to ``xC``) and ``xB`` with ``null`` (to ``xB2``).
    Layer 2: ``xC`` (reward 1) and ``xB2`` (reward 0), both ``null`` into
    the terminal state.  The data is a point mass on
    ``(x0, L1), (xA, L2), (xC, null)``.  The bad member ``f`` raises
    ``f_0(x0, R1)`` and ``f_1(xB, null)`` to 1 and breaks its tie at ``x0``
    toward ``R1``.
    """
    mdp = LayeredMdp.from_dicts(
        layers=[["x0"], ["xA", "xB"], ["xC", "xB2"], ["end"]],
        actions={"x0": ["L1", "R1"], "xA": ["L2"], "xB": ["null"], "xC": ["null"], "xB2": ["null"]},
        transitions={
            "x0": {"L1": {"xA": 1.0}, "R1": {"xB": 1.0}},
            "xA": {"L2": {"xC": 1.0}},
            "xB": {"null": {"xB2": 1.0}},
            "xC": {"null": {"end": 1.0}},
            "xB2": {"null": {"end": 1.0}},
        },
        rewards={"xC": {"null": 1.0}},
        initial_state="x0",
    )
    q = optimal_q(mdp)
    f_vals = [v.copy() for v in q.values]
    f_vals[0][0, 1] = 1.0  # (x0, R1)
    f_vals[1][1, 0] = 1.0  # (xB, null)
    f = TimestepTable(tuple(f_vals), name="f")
    q = TimestepTable(q.values, name="Q*")
    F = FunctionClass(mdp, (q, f), tie_choices={"f": {(0, 0): 1}})

    on_path = [np.array([[1.0, 0.0]]), np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]])]
    dD = data_distribution(mdp, on_path)
    w_star = TimestepTable(tuple(on_path), role="weight", name="w*")
    w_bad = TimestepTable(
        (np.array([[0.0, 1.0]]), np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]])),
        role="weight",
        name="w_bad",
    )
    W = WeightClass(mdp, (w_star, w_bad))

    ann = annotate(mdp, dD, F, W)
    ann["v_pi_f"] = policy_value(mdp, F.policy(1)).value
    for key, val in (("v_star", 1.0), ("gap_q_star", 1.0), ("v_pi_f", 0.0), ("q_star_index", 0),
                     ("w_star_index", 0), ("class_gaps", [1.0, 0.0])):
        _expect(ann, key, val)
    return NamedInstance("counterexample", mdp, dD, F, W, ann)


TABLE1_CLAIMED_EPS_W = 0.0


def build_table1_example() -> NamedInstance:
    """One-step, three-action instance whose optimal action is outside the data.

    ``eps_W`` is recomputed exactly and stored next to the published value
    (0); the two disagree (direct evaluation gives 0.2).
    """
    mdp = LayeredMdp.from_dicts(
        layers=[["x0"], ["null"]],
        actions={"x0": ["L", "M", "R"]},
        transitions={"x0": {a: {"null": 1.0} for a in "LMR"}},
        rewards={"x0": {"L": 0.8, "M": 0.6, "R": 0.3}},
        initial_state="x0",
    )
    q = TimestepTable(optimal_q(mdp).values, name="Q*")
    f = TimestepTable((np.array([[0.7, 0.3, 0.8]]),), name="f")
    F = FunctionClass(mdp, (q, f))
    dD = data_distribution(mdp, [np.array([[0.0, 0.5, 0.5]])])
    W = WeightClass(mdp, (TimestepTable((np.array([[0.0, 1.0, 1.0]]),), role="weight", name="w"),))

    ann = annotate(mdp, dD, F, W)
    ann["d_star"] = occupancy(mdp, greedy_policy(mdp, q)).values[0][0].tolist()
    eps, _ = eps_W(F, W, mdp, dD)
    ann["eps_W"] = eps
    ann["eps_W_claimed"] = TABLE1_CLAIMED_EPS_W
    ann["eps_W_discrepancy"] = eps - TABLE1_CLAIMED_EPS_W
    for key, val in (("v_star", 0.8), ("concentrability", float("inf")), ("w_star_exists", False),
                     ("d_star", [1.0, 0.0, 0.0]), ("C", 1.0), ("regular", True)):
        _expect(ann, key, val)
    return NamedInstance("table1", mdp, dD, F, W, ann)


def random_mdp(rng: np.random.Generator, H: int, states: list[int], actions: list[list[int]],
               stochastic: bool = True) -> LayeredMdp:
    names = [[f"s{h}_{i}" for i in range(states[h])] for h in range(H)] + [["end"]]
    acts, trans, rews = {}, {}, {}
    for h in range(H):
        for s, x in enumerate(names[h]):
            acts[x] = [f"a{j}" for j in range(actions[h][s])]
            trans[x], rews[x] = {}, {}
            for a in acts[x]:
                k = len(names[h + 1])
                if stochastic:
                    p = rng.dirichlet(np.ones(k))
                else:
                    p = np.eye(k)[rng.integers(k)]
                trans[x][a] = {y: float(v) for y, v in zip(names[h + 1], p) if v > 0}
                rews[x][a] = float(rng.random())
    mdp = LayeredMdp.from_dicts(names, acts, trans, rews, names[0][0])
    return _renormalized(mdp)


def _renormalized(mdp: LayeredMdp) -> LayeredMdp:
    # exact row sums after dict round-off
    trans = []
    for h, P in enumerate(mdp.transitions):
        P = P.copy()
        sums = P.sum(axis=2, keepdims=True)
        P = np.where(sums > 0, P / np.where(sums > 0, sums, 1), 0.0)
        trans.append(P)
    return LayeredMdp(mdp.layers, mdp.actions, tuple(trans), mdp.rewards, mdp.initial_state)


def policy_count(mdp: LayeredMdp) -> int:
    """Deterministic policies over the states reachable from ``x0``."""
    count, reach = 1, np.zeros(mdp.n_states(0), dtype=bool)
    reach[mdp.initial_state] = True
    for h in range(mdp.horizon):
        for s in np.flatnonzero(reach):
            count *= mdp.n_actions(h, s)
        reach = (mdp.transitions[h][reach].sum(axis=(0, 1)) > 0)
    return count


def random_instance(
    seed: int,
    max_layers: int = 4,
    max_states: int = 5,
    max_actions: int = 4,
    horizon: int | None = None,
    states: int | None = None,
    actions: int | None = None,
    stochastic: bool = True,
    gap_floor: float | None = None,
    support: str = "full",
    mix: float = 0.5,
    custom_dD=None,
    n_distractors: int = 3,
    noise: float = 0.3,
    n_weight_distractors: int = 2,
    policy_budget: int | None = None,
    resample_budget: int = 10_000,
) -> NamedInstance:
    """Seeded random instance with a realizable ``F`` (and ``W`` when ``w*`` exists).

    ``horizon``, ``states`` and ``actions`` pin the layout; otherwise each
    is drawn uniformly up to its ``max_*`` limit (layer 0 always holds only
    the initial state).  ``support`` picks the data distribution:
    ``"full"`` mixes ``d*`` with the uniform distribution over legal pairs
    (``mix`` is the uniform share), ``"optimal"`` uses ``d*`` itself, and
    ``"custom"`` takes ``custom_dD``.  Distractor values are ``Q*`` plus
    uniform noise of size ``noise``, clipped to ``[0, H - h]``; distractor
    weights are convex combinations of ``w*`` and the all-ones weight.
    Instances are redrawn until ``gap(Q*) >= gap_floor`` and the policy
    count is within ``policy_budget``.
    """
    if max_layers > 4 or max_states > 5 or max_actions > 4:
        raise ValueError("limits are 4 layers, 5 states per layer, 4 actions")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x51A7]))
    for _ in range(resample_budget):
        H = horizon or int(rng.integers(1, max_layers + 1))
        S = [1] + [states or int(rng.integers(1, max_states + 1)) for _ in range(1, H)]
        A = [[actions or int(rng.integers(1, max_actions + 1)) for _ in range(S[h])] for h in range(H)]
        mdp = random_mdp(rng, H, S, A, stochastic)
        q = optimal_q(mdp)
        if gap_floor is not None and gap_of_function(mdp, q) < gap_floor:
            continue
        if policy_budget is not None and policy_count(mdp) > policy_budget:
            continue
        break
    else:
        raise ConstructionError(f"no instance met the gap floor / policy budget in {resample_budget} draws")

    pi = greedy_policy(mdp, q)
    d_star = occupancy(mdp, pi)
    if support == "full":
        uniform = [m / m.sum() for m in (l.astype(float) for l in mdp.legal)]
        tables = [(1 - mix) * d_star[h] + mix * uniform[h] for h in range(H)]
    elif support == "optimal":
        tables = list(d_star.values)
    elif support == "custom":
        tables = list(custom_dD)
    else:
        raise ValueError(f"unknown support mode {support!r}")
    dD = data_distribution(mdp, tables)

    q_named = TimestepTable(q.values, name="Q*")
    members = [q_named]
    for k in range(n_distractors):
        vals = []
        for h in range(H):
            v = q[h] + rng.uniform(-noise, noise, size=q[h].shape)
            vals.append(np.where(mdp.legal[h], np.clip(v, 0, H - h), 0.0))
        members.append(TimestepTable(tuple(vals), name=f"f{k + 1}"))
    order = rng.permutation(len(members))
    F = FunctionClass(mdp, tuple(members[i] for i in order))

    w_star = density_ratio(mdp, pi, dD)
    weights = []
    if w_star is not None:
        weights.append(TimestepTable(w_star.values, role="weight", name="w*"))
        ones = tuple(mdp.legal[h].astype(float) for h in range(H))
        for k in range(n_weight_distractors):
            lam = rng.random()
            weights.append(TimestepTable(
                tuple(lam * w_star[h] + (1 - lam) * ones[h] for h in range(H)), role="weight", name=f"w{k + 1}"
            ))
        order = rng.permutation(len(weights))
        weights = [weights[i] for i in order]
    else:
        weights.append(TimestepTable(tuple(l.astype(float) for l in mdp.legal), role="weight", name="ones"))
    W = WeightClass(mdp, tuple(weights))
    ann = annotate(mdp, dD, F, W)
    problems = F.range_violations()
    if ann["q_star_index"] is None:
        problems.append("Q* missing from F")
    if w_star is not None and (ann["w_star_index"] is None or not ann["regular"]):
        problems.append("w* missing from W or W not regular")
    if problems:
        raise ConstructionError("; ".join(problems))
    return NamedInstance(f"random-{seed}", mdp, dD, F, W, ann)


def shifted_class(mdp: LayeredMdp, shifts) -> FunctionClass:
    """``Q*`` with its first-timestep table lowered by each shift in turn.

    Member ``k`` has Bellman residual ``-shifts[k]`` on every first-timestep
    pair and zero elsewhere, so its constraint violation grows linearly
    with the shift.  Used for rate-of-convergence sweeps.
    """
    q = optimal_q(mdp)
    members = []
    for k, c in enumerate(shifts):
        vals = list(q.values)
        vals[0] = np.where(mdp.legal[0], q[0] - c, 0.0)
        members.append(TimestepTable(tuple(vals), name=f"shift{k}"))
    return FunctionClass(mdp, tuple(members))


def build_rate_instance(seed: int = 0, n_shifts: int = 201, max_shift: float = 0.5) -> NamedInstance:
    """Two-step stochastic instance with a fine grid of downward-shifted ``Q*`` copies."""
    for attempt in range(1000):
        base = random_instance(seed * 1000 + attempt, horizon=2, states=3, actions=2, support="full",
                               mix=0.2, n_distractors=0, n_weight_distractors=2)
        q0 = optimal_q(base.mdp)[0]
        if q0[base.mdp.legal[0]].min() >= max_shift:
            break
    else:
        raise ConstructionError("no base instance with large enough initial values")
    F = shifted_class(base.mdp, np.linspace(0.0, max_shift, n_shifts))
    ann = annotate(base.mdp, base.dD, F, base.W)
    ann["shifts"] = np.linspace(0.0, max_shift, n_shifts).tolist()
    return NamedInstance(f"rate-{seed}", base.mdp, base.dD, F, base.W, ann)
