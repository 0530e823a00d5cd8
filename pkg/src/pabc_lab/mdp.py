"""Finite layered episodic MDPs and exact dynamic programming.

Layout conventions used throughout the package:

* layer ``h`` has ``S_h`` states, indexed ``0..S_h-1``; the terminal layer ``H``
  holds states but no actions;
* per-layer arrays over (state, action) are padded to ``A_h`` columns, where
  ``A_h`` is the largest action count in the layer; ``mdp.legal[h]`` masks the
  real entries and padded cells always hold 0;
* a "stack" is a tuple of ``H`` such arrays, one per timestep (no layer-``H``
  table is ever stored, so ``f_H = 0`` holds by construction).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
DEFAULT_TIE_TOL = 1e-9

TIE_RULES = ("first", "last", "explicit")
ROLES = ("value", "weight", "occupancy", "data")


class InvalidMdpError(ValueError):
    """Raised when an operation needs a valid MDP and gets a broken one."""


@dataclass(frozen=True, eq=False)
class LayeredMdp:
    """Horizon-``H`` MDP whose states are partitioned by timestep.

    ``transitions[h]`` has shape ``(S_h, A_h, S_{h+1})`` and ``rewards[h]``
    shape ``(S_h, A_h)``.  Rewards are deterministic and the initial state is
    fixed (index ``initial_state`` in layer 0).
    """

    layers: tuple[tuple[str, ...], ...]
    actions: tuple[tuple[tuple[str, ...], ...], ...]
    transitions: tuple[np.ndarray, ...]
    rewards: tuple[np.ndarray, ...]
    initial_state: int = 0
    legal: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.layers) != len(self.actions) + 1:
            raise InvalidMdpError("need H action layers and H + 1 state layers")
        legal = []
        for h, acts in enumerate(self.actions):
            width = max((len(a) for a in acts), default=0)
            mask = np.zeros((len(acts), width), dtype=bool)
            for s, a in enumerate(acts):
                mask[s, : len(a)] = True
            legal.append(mask)
        object.__setattr__(self, "legal", tuple(legal))
        for arr in (*self.transitions, *self.rewards):
            arr.setflags(write=False)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def n_states(self, h: int) -> int:
        return len(self.layers[h])

    def n_actions(self, h: int, s: int) -> int:
        return len(self.actions[h][s])

    def shape(self, h: int) -> tuple[int, int]:
        return self.legal[h].shape

    def state_index(self, h: int, name: str) -> int:
        return self.layers[h].index(name)

    def action_index(self, h: int, s: int, name: str) -> int:
        return self.actions[h][s].index(name)

    def zeros(self) -> tuple[np.ndarray, ...]:
        return tuple(np.zeros(self.shape(h)) for h in range(self.horizon))

    @classmethod
    def from_dicts(
        cls,
        layers: Sequence[Sequence[str]],
        actions: dict[str, Sequence[str]],
        transitions: dict[str, dict[str, dict[str, float]]],
        rewards: dict[str, dict[str, float]],
        initial_state: str,
    ) -> "LayeredMdp":
        """Build from name-keyed dictionaries (the on-disk form).

        State names must be unique across layers.  Missing reward entries
        default to 0; every legal pair needs a transition row, except that a
        pair in layer ``H-1`` may omit it when the terminal layer has a single
        state.
        """
        H = len(layers) - 1
        seen = [n for layer in layers for n in layer]
        if len(seen) != len(set(seen)):
            raise InvalidMdpError("state names must be unique across layers")
        acts = tuple(tuple(tuple(actions[x]) for x in layers[h]) for h in range(H))
        trans, rews = [], []
        for h in range(H):
            width = max((len(a) for a in acts[h]), default=0)
            nxt = {name: i for i, name in enumerate(layers[h + 1])}
            P = np.zeros((len(layers[h]), width, len(layers[h + 1])))
            R = np.zeros((len(layers[h]), width))
            for s, x in enumerate(layers[h]):
                for a, act in enumerate(acts[h][s]):
                    row = transitions.get(x, {}).get(act)
                    if row is None:
                        if len(layers[h + 1]) != 1:
                            raise InvalidMdpError(f"no transition row for ({x}, {act})")
                        row = {layers[h + 1][0]: 1.0}
                    for y, p in row.items():
                        if y not in nxt:
                            raise InvalidMdpError(
                                f"({x}, {act}) transits to {y!r}, not in layer {h + 1}"
                            )
                        P[s, a, nxt[y]] = float(p)
                    R[s, a] = float(rewards.get(x, {}).get(act, 0.0))
            trans.append(P)
            rews.append(R)
        return cls(
            layers=tuple(tuple(layer) for layer in layers),
            actions=acts,
            transitions=tuple(trans),
            rewards=tuple(rews),
            initial_state=list(layers[0]).index(initial_state),
        )


def validate_mdp(mdp: LayeredMdp) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    H = mdp.horizon
    if H < 1:
        problems.append("horizon must be positive")
    if not 0 <= mdp.initial_state < mdp.n_states(0):
        problems.append("initial state is not in layer 0")
    for h in range(H):
        S, A = mdp.shape(h)
        P, R = mdp.transitions[h], mdp.rewards[h]
        if P.shape != (S, A, mdp.n_states(h + 1)) or R.shape != (S, A):
            problems.append(f"layer {h}: array shapes do not match the layer layout")
            continue
        for s in range(S):
            name = mdp.layers[h][s]
            if mdp.n_actions(h, s) == 0:
                problems.append(f"layer {h}: state {name} has no actions")
            for a in range(mdp.n_actions(h, s)):
                act = mdp.actions[h][s][a]
                row = P[s, a]
                if np.any(row < 0):
                    problems.append(f"layer {h}: negative transition probability at ({name}, {act})")
                if abs(row.sum() - 1.0) > ROW_SUM_TOL:
                    problems.append(
                        f"layer {h}: transition row ({name}, {act}) sums to {row.sum():.15g}"
                    )
                if not 0.0 <= R[s, a] <= 1.0:
                    problems.append(f"layer {h}: reward {R[s, a]!r} at ({name}, {act}) outside [0, 1]")
        pad = ~mdp.legal[h]
        if np.any(P[pad] != 0) or np.any(R[pad] != 0):
            problems.append(f"layer {h}: padded (illegal) action cells are nonzero")
    return problems


def require_valid(mdp: LayeredMdp) -> None:
    problems = validate_mdp(mdp)
    if problems:
        raise InvalidMdpError("; ".join(problems))


@dataclass(frozen=True, eq=False)
class TimestepTable:
    """A stack of per-timestep (state, action) tables with a role tag."""

    values: tuple[np.ndarray, ...]
    role: str = "value"
    name: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        vals = tuple(np.array(v, dtype=float) for v in self.values)
        for v in vals:
            v.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, h: int) -> np.ndarray:
        return self.values[h]

    def __len__(self) -> int:
        return len(self.values)

    def check(self, mdp: LayeredMdp, tol: float = ROW_SUM_TOL) -> list[str]:
        """Shape and role-specific invariant check against ``mdp``."""
        problems = []
        if len(self.values) != mdp.horizon:
            return [f"{self.name or 'table'}: expected {mdp.horizon} timesteps, got {len(self.values)}"]
        for h, v in enumerate(self.values):
            if v.shape != mdp.shape(h):
                problems.append(f"{self.name or 'table'}: layer {h} has shape {v.shape}, expected {mdp.shape(h)}")
                continue
            if not np.all(np.isfinite(v)):
                problems.append(f"{self.name or 'table'}: layer {h} has non-finite entries")
            if np.any(v[~mdp.legal[h]] != 0):
                problems.append(f"{self.name or 'table'}: layer {h} is nonzero on illegal actions")
            if self.role in ("occupancy", "data"):
                if np.any(v < 0):
                    problems.append(f"{self.name or 'table'}: layer {h} has negative mass")
                if abs(v.sum() - 1.0) > tol:
                    problems.append(f"{self.name or 'table'}: layer {h} sums to {v.sum():.15g}")
        return problems


@dataclass(frozen=True, eq=False)
class Policy:
    """Per-layer action distributions, shape ``(S_h, A_h)`` each.

    Deterministic policies are one-hot rows; ``tie_rule`` records how a
    greedy policy resolved ties (``None`` for policies not built greedily).
    """

    probs: tuple[np.ndarray, ...]
    tie_rule: str | None = None

    def __post_init__(self):
        for p in self.probs:
            p.setflags(write=False)

    @classmethod
    def deterministic(cls, mdp: LayeredMdp, actions: Sequence[Sequence[int]], tie_rule=None) -> "Policy":
        probs = []
        for h in range(mdp.horizon):
            p = np.zeros(mdp.shape(h))
            acts = np.asarray(actions[h], dtype=int)
            p[np.arange(len(acts)), acts] = 1.0
            probs.append(p)
        return cls(tuple(probs), tie_rule)

    @classmethod
    def uniform(cls, mdp: LayeredMdp) -> "Policy":
        probs = []
        for h in range(mdp.horizon):
            m = mdp.legal[h].astype(float)
            probs.append(m / m.sum(axis=1, keepdims=True))
        return cls(tuple(probs))

    @property
    def is_deterministic(self) -> bool:
        return all(np.all((p == 0) | (p == 1)) and np.all(p.sum(axis=1) == 1) for p in self.probs)

    @property
    def actions(self) -> tuple[np.ndarray, ...]:
        """Chosen action index per state; only defined for deterministic policies."""
        if not self.is_deterministic:
            raise ValueError("policy is stochastic")
        return tuple(p.argmax(axis=1) for p in self.probs)

    def check(self, mdp: LayeredMdp) -> list[str]:
        problems = []
        for h, p in enumerate(self.probs):
            if p.shape != mdp.shape(h):
                problems.append(f"policy layer {h} has shape {p.shape}")
                continue
            if np.any(p[~mdp.legal[h]] != 0):
                problems.append(f"policy layer {h} puts mass on illegal actions")
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
                problems.append(f"policy layer {h} rows are not distributions")
        return problems


def _as_arrays(f) -> tuple[np.ndarray, ...]:
    return f.values if isinstance(f, TimestepTable) else tuple(f)


def _masked(v: np.ndarray, legal: np.ndarray) -> np.ndarray:
    return np.where(legal, v, -np.inf)


def state_values(mdp: LayeredMdp, f) -> tuple[np.ndarray, ...]:
    """``V_f(x) = max_a f_h(x, a)`` for layers ``0..H``, layer ``H`` being 0."""
    vals = _as_arrays(f)
    out = [_masked(vals[h], mdp.legal[h]).max(axis=1) for h in range(mdp.horizon)]
    out.append(np.zeros(mdp.n_states(mdp.horizon)))
    return tuple(out)


def bellman_backup(mdp: LayeredMdp, f, h: int) -> np.ndarray:
    """``(T_h f_{h+1})(x, a) = R_h(x, a) + E_{x'}[max_a' f_{h+1}(x', a')]``."""
    vals = _as_arrays(f)
    if h + 1 < mdp.horizon:
        nxt = _masked(vals[h + 1], mdp.legal[h + 1]).max(axis=1)
    else:
        nxt = np.zeros(mdp.n_states(h + 1))
    return np.where(mdp.legal[h], mdp.rewards[h] + mdp.transitions[h] @ nxt, 0.0)


def bellman_residual(mdp: LayeredMdp, f, h: int) -> np.ndarray:
    """``f_h - T_h f_{h+1}`` on the legal cells (0 elsewhere)."""
    return np.where(mdp.legal[h], _as_arrays(f)[h] - bellman_backup(mdp, f, h), 0.0)


def optimal_q(mdp: LayeredMdp) -> TimestepTable:
    require_valid(mdp)
    H = mdp.horizon
    q: list[np.ndarray] = [None] * H  # type: ignore[list-item]
    nxt = np.zeros(mdp.n_states(H))
    for h in range(H - 1, -1, -1):
        q[h] = np.where(mdp.legal[h], mdp.rewards[h] + mdp.transitions[h] @ nxt, 0.0)
        nxt = _masked(q[h], mdp.legal[h]).max(axis=1)
    return TimestepTable(tuple(q), role="value", name="Q*")


def greedy_policy(
    mdp: LayeredMdp,
    f,
    tie_rule: str = "first",
    choices: dict[tuple[int, int], int] | None = None,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> Policy:
    """Deterministic argmax policy of ``f``.

    Actions within ``tie_tol`` of the maximum count as tied.  ``first`` and
    ``last`` pick the lowest or highest tied index.  ``explicit`` consults
    ``choices[(h, state)]`` and uses it when that action is among the tied
    ones, falling back to ``first`` otherwise.
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    choices = choices or {}
    vals = _as_arrays(f)
    acts = []
    for h in range(mdp.horizon):
        v = _masked(vals[h], mdp.legal[h])
        tied = v >= v.max(axis=1, keepdims=True) - tie_tol
        if tie_rule == "last":
            a = tied.shape[1] - 1 - tied[:, ::-1].argmax(axis=1)
        else:
            a = tied.argmax(axis=1)
        if tie_rule == "explicit":
            for (hh, s), choice in choices.items():
                if hh == h and tied[s, choice]:
                    a[s] = choice
        acts.append(a)
    return Policy.deterministic(mdp, acts, tie_rule=tie_rule)


@dataclass(frozen=True)
class PolicyEvaluation:
    value: float
    v: tuple[np.ndarray, ...]
    q: tuple[np.ndarray, ...]


def policy_value(mdp: LayeredMdp, pi: Policy) -> PolicyEvaluation:
    """Exact ``V^pi``/``Q^pi`` by backward induction; ``value = V^pi_0(x_0)``."""
    H = mdp.horizon
    v = [None] * (H + 1)
    q = [None] * H
    v[H] = np.zeros(mdp.n_states(H))
    for h in range(H - 1, -1, -1):
        q[h] = np.where(mdp.legal[h], mdp.rewards[h] + mdp.transitions[h] @ v[h + 1], 0.0)
        v[h] = (pi.probs[h] * q[h]).sum(axis=1)
    return PolicyEvaluation(float(v[0][mdp.initial_state]), tuple(v), tuple(q))


def state_occupancy(mdp: LayeredMdp, pi: Policy) -> tuple[np.ndarray, ...]:
    """State marginals ``Pr_pi(x_h = x)`` for layers ``0..H``."""
    mu = np.zeros(mdp.n_states(0))
    mu[mdp.initial_state] = 1.0
    out = [mu]
    for h in range(mdp.horizon):
        d = mu[:, None] * pi.probs[h]
        mu = np.einsum("sa,sat->t", d, mdp.transitions[h])
        out.append(mu)
    return tuple(out)


def occupancy(mdp: LayeredMdp, pi: Policy) -> TimestepTable:
    mu = state_occupancy(mdp, pi)
    return TimestepTable(
        tuple(mu[h][:, None] * pi.probs[h] for h in range(mdp.horizon)),
        role="occupancy",
        name="d^pi",
    )


def state_gaps(mdp: LayeredMdp, f, tie_tol: float = DEFAULT_TIE_TOL) -> tuple[np.ndarray, ...]:
    """Per-state gap: best minus second best, 0 on ties, +inf for one action."""
    vals = _as_arrays(f)
    out = []
    for h in range(mdp.horizon):
        v = np.sort(_masked(vals[h], mdp.legal[h]), axis=1)[:, ::-1]
        if v.shape[1] < 2:
            out.append(np.full(v.shape[0], np.inf))
            continue
        with np.errstate(invalid="ignore"):
            g = v[:, 0] - v[:, 1]
        g = np.where(np.isinf(v[:, 1]), np.inf, g)
        out.append(np.where(g <= tie_tol, 0.0, g))
    return tuple(out)


def gap_of_function(mdp: LayeredMdp, f, tie_tol: float = DEFAULT_TIE_TOL) -> float:
    return float(min(g.min() for g in state_gaps(mdp, f, tie_tol)))


def gap_of_class(mdp: LayeredMdp, members, tie_tol: float = DEFAULT_TIE_TOL) -> float:
    members = list(members)
    if not members:
        raise ValueError("gap of an empty class is undefined")
    return min(gap_of_function(mdp, f, tie_tol) for f in members)


def policy_disagreement(mdp: LayeredMdp, pi_a: Policy, pi_b: Policy) -> float:
    """``E[sum_h 1{pi_a(x_h) != pi_b(x_h)} | pi_b]`` for deterministic policies."""
    acts_a, acts_b = pi_a.actions, pi_b.actions
    mu = state_occupancy(mdp, pi_b)
    return float(sum(mu[h][acts_a[h] != acts_b[h]].sum() for h in range(mdp.horizon)))
