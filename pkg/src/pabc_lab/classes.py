"""Finite function and weight classes, prescreening, misspecification errors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    DEFAULT_TIE_TOL,
    LayeredMdp,
    Policy,
    TimestepTable,
    bellman_residual,
    gap_of_function,
    greedy_policy,
    occupancy,
    optimal_q,
    state_values,
)


class EmptyVersionSpaceError(RuntimeError):
    """No candidate survived; ``details`` says which ones failed and why."""

    def __init__(self, message: str, details: list[dict]):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Ordered finite class of Q-function candidates over one MDP.

    ``indices`` are positions in the originating class, so sub-classes built
    by prescreening still report original member numbers.  ``tie_choices``
    maps a member name to explicit greedy tie-breaks ``{(h, state): action}``.
    """

    mdp: LayeredMdp
    members: tuple[TimestepTable, ...]
    indices: tuple[int, ...] = ()
    tie_choices: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise ValueError("function class must be nonempty")
        if not self.indices:
            object.__setattr__(self, "indices", tuple(range(len(self.members))))
        for f in self.members:
            problems = [p for p in f.check(self.mdp) if "shape" in p or "timesteps" in p]
            if problems:
                raise ValueError("; ".join(problems))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def names(self) -> list[str]:
        return [f.name for f in self.members]

    def policy(self, i: int, tie_rule: str = "first", tie_tol: float = DEFAULT_TIE_TOL) -> Policy:
        f = self.members[i]
        choices = self.tie_choices.get(f.name)
        rule = "explicit" if choices else tie_rule
        return greedy_policy(self.mdp, f, rule, choices, tie_tol)

    def gaps(self, tie_tol: float = DEFAULT_TIE_TOL) -> list[float]:
        return [gap_of_function(self.mdp, f, tie_tol) for f in self.members]

    def subset(self, keep: list[int]) -> "FunctionClass":
        return FunctionClass(
            self.mdp,
            tuple(self.members[i] for i in keep),
            tuple(self.indices[i] for i in keep),
            self.tie_choices,
        )

    def range_violations(self) -> list[str]:
        """Entries outside ``[0, H - h]`` (value boundedness)."""
        H = self.mdp.horizon
        out = []
        for f in self.members:
            for h in range(H):
                v = f[h][self.mdp.legal[h]]
                if v.size and (v.min() < 0 or v.max() > H - h):
                    out.append(f"{f.name}: layer {h} values in [{v.min():g}, {v.max():g}], allowed [0, {H - h}]")
        return out


@dataclass(frozen=True, eq=False)
class WeightClass:
    mdp: LayeredMdp
    members: tuple[TimestepTable, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("weight class must be nonempty")
        for w in self.members:
            problems = [p for p in w.check(self.mdp) if "shape" in p or "timesteps" in p]
            if problems:
                raise ValueError("; ".join(problems))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    def names(self) -> list[str]:
        return [w.name for w in self.members]


def prescreen(F: FunctionClass, c_gap: float, tie_tol: float = DEFAULT_TIE_TOL) -> FunctionClass:
    """Keep members whose gap is at least ``c_gap``."""
    if c_gap < 0:
        raise ValueError("C_gap must be nonnegative")
    if c_gap == 0:
        return F
    gaps = F.gaps(tie_tol)
    keep = [i for i, g in enumerate(gaps) if g >= c_gap]
    if not keep:
        details = [{"member": F.indices[i], "name": F[i].name, "gap": g} for i, g in enumerate(gaps)]
        raise EmptyVersionSpaceError(
            f"prescreening with C_gap={c_gap:g} removed every member (best gap {max(gaps):g})",
            details,
        )
    return F.subset(keep)


def _optimal_parts(mdp: LayeredMdp):
    q = optimal_q(mdp)
    pi = greedy_policy(mdp, q)
    return q, pi, occupancy(mdp, pi)


def eps_W(F: FunctionClass, W: WeightClass, mdp: LayeredMdp, dD: TimestepTable) -> tuple[float, int]:
    """Discriminator distance between ``w * d^D`` and ``d*``, minimized over ``W``.

    Returns the value and the index of the minimizing weight (lowest index
    on ties).
    """
    _, _, d_star = _optimal_parts(mdp)
    H = mdp.horizon
    res = [[bellman_residual(mdp, f, h) for h in range(H)] for f in F]
    on_star = np.array([[np.sum(d_star[h] * r[h]) for h in range(H)] for r in res])
    scores = []
    for w in W:
        on_data = np.array([[np.sum(dD[h] * w[h] * r[h]) for h in range(H)] for r in res])
        scores.append(np.abs(on_data - on_star).max())
    best = int(np.argmin(scores))
    return float(scores[best]), best


def eps_F(F: FunctionClass, W: WeightClass, mdp: LayeredMdp, dD: TimestepTable) -> tuple[float, int]:
    """Weighted Bellman error plus initial-value error, minimized over ``F``.

    Pass a prescreened class to get the error of ``F(C_gap)``; the returned
    index is the position within the class passed in.
    """
    q, _, _ = _optimal_parts(mdp)
    x0 = mdp.initial_state
    v_star = state_values(mdp, q)[0][x0]
    H = mdp.horizon
    scores = []
    for f in F:
        init = abs(state_values(mdp, f)[0][x0] - v_star)
        worst = max(
            abs(np.sum(dD[h] * w[h] * bellman_residual(mdp, f, h))) for w in W for h in range(H)
        )
        scores.append(worst + init)
    best = int(np.argmin(scores))
    return float(scores[best]), best


def eps_F_inf(F: FunctionClass, mdp: LayeredMdp) -> tuple[float, int]:
    """Smallest sup-norm distance to ``Q*`` over the class."""
    q = optimal_q(mdp)
    scores = [
        max(np.abs(np.where(mdp.legal[h], f[h] - q[h], 0.0)).max() for h in range(mdp.horizon))
        for f in F
    ]
    best = int(np.argmin(scores))
    return float(scores[best]), best


@dataclass(frozen=True)
class RegularityEntry:
    member: int
    name: str
    h: int
    nonnegative: bool
    mean: float
    normalized: bool

    @property
    def ok(self) -> bool:
        return self.nonnegative and self.normalized


def regularity_check(W: WeightClass, dD: TimestepTable, tol: float = 1e-9) -> list[RegularityEntry]:
    """Per member and timestep: ``w >= 0`` and ``E_{d^D}[w] = 1``."""
    out = []
    for i, w in enumerate(W):
        for h in range(len(w)):
            mean = float(np.sum(dD[h] * w[h]))
            out.append(
                RegularityEntry(i, w.name, h, bool(np.all(w[h] >= 0)), mean, abs(mean - 1.0) <= tol)
            )
    return out


def is_regular(W: WeightClass, dD: TimestepTable, tol: float = 1e-9) -> bool:
    return all(e.ok for e in regularity_check(W, dD, tol))
