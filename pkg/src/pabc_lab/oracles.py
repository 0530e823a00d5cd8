"""Brute-force reference computations.

Nothing here calls the dynamic-programming or class routines of the
package: values come from enumerating policies and summing over trajectory
trees with plain loops, so they can serve as independent checks.
"""
from __future__ import annotations

import itertools

import numpy as np

from .mdp import LayeredMdp


class BudgetExceededError(RuntimeError):
    pass


def _reachable(mdp: LayeredMdp) -> list[list[int]]:
    out, frontier = [], {mdp.initial_state}
    for h in range(mdp.horizon):
        layer = sorted(frontier)
        out.append(layer)
        frontier = set()
        for s in layer:
            for a in range(mdp.n_actions(h, s)):
                for y in range(mdp.n_states(h + 1)):
                    if mdp.transitions[h][s, a, y] > 0:
                        frontier.add(y)
    return out


def _tree_value(mdp, h, s, choice, col):
    """Return vector over a batch of policies, summed over the subtree at ``(h, s)``."""
    a = choice[:, col[(h, s)]]
    total = mdp.rewards[h][s, a].astype(float)
    if h + 1 < mdp.horizon:
        for y in range(mdp.n_states(h + 1)):
            p = mdp.transitions[h][s, a, y]
            if np.any(p > 0):
                total = total + p * _tree_value(mdp, h + 1, y, choice, col)
    return total


def brute_force_optimal(mdp: LayeredMdp, budget: int = 1_000_000, batch: int = 65_536):
    """Best deterministic policy by exhaustive enumeration.

    Only states reachable from ``x0`` are enumerated; elsewhere the first
    action is used.  Returns ``(v*, actions)`` with ``actions[h][s]`` an
    action index.  Ties keep the first policy in enumeration order.
    """
    reach = _reachable(mdp)
    slots = [(h, s) for h in range(mdp.horizon) for s in reach[h]]
    sizes = [mdp.n_actions(h, s) for h, s in slots]
    total = int(np.prod(sizes, dtype=object))
    if total > budget:
        raise BudgetExceededError(f"{total} policies exceed the enumeration budget {budget}")
    col = {slot: i for i, slot in enumerate(slots)}
    best_v, best = -np.inf, None
    it = itertools.product(*[range(k) for k in sizes])
    while True:
        chunk = list(itertools.islice(it, batch))
        if not chunk:
            break
        choice = np.array(chunk, dtype=np.int64).reshape(len(chunk), len(slots))
        vals = _tree_value(mdp, 0, mdp.initial_state, choice, col)
        k = int(np.argmax(vals))
        if vals[k] > best_v:
            best_v, best = float(vals[k]), choice[k]
    actions = [[0] * mdp.n_states(h) for h in range(mdp.horizon)]
    for (h, s), i in col.items():
        actions[h][s] = int(best[i])
    return best_v, actions


def enumerate_trajectories(mdp: LayeredMdp, actions):
    """All ``(probability, states, return)`` paths of a deterministic policy."""
    out = []

    def walk(h, s, prob, path, ret):
        if h == mdp.horizon:
            out.append((prob, tuple(path), ret))
            return
        a = actions[h][s]
        for y in range(mdp.n_states(h + 1)):
            p = mdp.transitions[h][s, a, y]
            if p > 0:
                walk(h + 1, y, prob * p, path + [s], ret + mdp.rewards[h][s, a])

    walk(0, mdp.initial_state, 1.0, [], 0.0)
    return out


def _loop_q_star(mdp):
    H = mdp.horizon
    q = [[[0.0] * mdp.n_actions(h, s) for s in range(mdp.n_states(h))] for h in range(H)]
    for h in reversed(range(H)):
        for s in range(mdp.n_states(h)):
            for a in range(mdp.n_actions(h, s)):
                v = float(mdp.rewards[h][s, a])
                if h + 1 < H:
                    for y in range(mdp.n_states(h + 1)):
                        v += mdp.transitions[h][s, a, y] * max(q[h + 1][y])
                q[h][s][a] = v
    return q


def _loop_backup(mdp, f, h, s, a):
    v = float(mdp.rewards[h][s, a])
    if h + 1 < mdp.horizon:
        for y in range(mdp.n_states(h + 1)):
            p = mdp.transitions[h][s, a, y]
            if p:
                v += p * max(f[h + 1][y, b] for b in range(mdp.n_actions(h + 1, y)))
    return v


def brute_force_eps(F, W, mdp: LayeredMdp, dD):
    """``(eps_W, eps_F, eps_F_inf)`` by straight-line summation."""
    H = mdp.horizon
    q = _loop_q_star(mdp)
    star = [max(range(len(q[h][s])), key=lambda a, h=h, s=s: (q[h][s][a], -a)) for h in range(H)
            for s in range(mdp.n_states(h))]
    pi = {}
    k = 0
    for h in range(H):
        for s in range(mdp.n_states(h)):
            pi[h, s] = star[k]
            k += 1
    # d* by forward loops
    mu = [0.0] * mdp.n_states(0)
    mu[mdp.initial_state] = 1.0
    d_star = []
    for h in range(H):
        d = {}
        nxt = [0.0] * mdp.n_states(h + 1)
        for s in range(mdp.n_states(h)):
            for a in range(mdp.n_actions(h, s)):
                d[s, a] = mu[s] if a == pi[h, s] else 0.0
                for y in range(mdp.n_states(h + 1)):
                    nxt[y] += d[s, a] * mdp.transitions[h][s, a, y]
        d_star.append(d)
        mu = nxt

    def resid(f, h, s, a):
        return f[h][s, a] - _loop_backup(mdp, f, h, s, a)

    def pairs(h):
        return [(s, a) for s in range(mdp.n_states(h)) for a in range(mdp.n_actions(h, s))]

    x0 = mdp.initial_state
    v_star = max(q[0][x0])

    best_w = None
    for w in W:
        worst = 0.0
        for f in F:
            for h in range(H):
                lhs = sum(dD[h][s, a] * w[h][s, a] * resid(f, h, s, a) for s, a in pairs(h))
                rhs = sum(d_star[h][s, a] * resid(f, h, s, a) for s, a in pairs(h))
                worst = max(worst, abs(lhs - rhs))
        best_w = worst if best_w is None else min(best_w, worst)

    best_f = None
    for f in F:
        init = abs(max(f[0][x0, a] for a in range(mdp.n_actions(0, x0))) - v_star)
        worst = 0.0
        for w in W:
            for h in range(H):
                val = abs(sum(dD[h][s, a] * w[h][s, a] * resid(f, h, s, a) for s, a in pairs(h)))
                worst = max(worst, val + init)
        best_f = worst if best_f is None else min(best_f, worst)

    best_inf = None
    for f in F:
        worst = max(abs(f[h][s, a] - q[h][s][a]) for h in range(H) for s, a in pairs(h))
        best_inf = worst if best_inf is None else min(best_inf, worst)
    return best_w, best_f, best_inf
