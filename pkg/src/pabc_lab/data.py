"""Offline datasets, density ratios and concentrability."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import LayeredMdp, Policy, TimestepTable, occupancy


def data_distribution(mdp: LayeredMdp, tables, name: str = "d^D") -> TimestepTable:
    """Wrap per-layer tables as a validated data distribution."""
    dD = TimestepTable(tuple(tables), role="data", name=name)
    problems = dD.check(mdp)
    if problems:
        raise ValueError("; ".join(problems))
    return dD


@dataclass(frozen=True, eq=False)
class Transitions:
    """Tuples ``(x_h, a_h, r_h, x_{h+1})`` for one timestep.

    ``counts`` is ``None`` for a plain list of ``n`` tuples.  In compact form
    each row is a distinct tuple and ``counts`` gives its multiplicity.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    counts: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.counts.sum()) if self.counts is not None else len(self.states)

    def weights(self) -> np.ndarray:
        return self.counts if self.counts is not None else np.ones(len(self.states))


@dataclass(frozen=True, eq=False)
class Dataset:
    layers: tuple[Transitions, ...]
    n: int
    seed: int

    def __getitem__(self, h: int) -> Transitions:
        return self.layers[h]

    @property
    def compact(self) -> bool:
        return self.layers[0].counts is not None


def _layer_rng(seed: int, h: int) -> np.random.Generator:
    # PCG64 substream per (seed, timestep)
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(h)]))


def sample_dataset(
    mdp: LayeredMdp, dD: TimestepTable, n: int, seed: int, compact: bool = False
) -> Dataset:
    """Draw ``n`` i.i.d. tuples per timestep from ``d^D_h`` and the dynamics.

    Timesteps use independent generators seeded from ``(seed, h)``.  With
    ``compact=True`` the sample is drawn directly as multinomial counts over
    distinct tuples, which has the same distribution as the plain sample and
    costs time independent of ``n``.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    layers = []
    for h in range(mdp.horizon):
        rng = _layer_rng(seed, h)
        S, A = mdp.shape(h)
        p = np.clip(dD[h].ravel(), 0.0, None)
        p = p / p.sum()
        P = mdp.transitions[h]
        if compact:
            pair_counts = rng.multinomial(n, p)
            rows = []
            for cell in np.flatnonzero(pair_counts):
                s, a = divmod(int(cell), A)
                nxt = rng.multinomial(pair_counts[cell], P[s, a] / P[s, a].sum())
                for y in np.flatnonzero(nxt):
                    rows.append((s, a, int(y), int(nxt[y])))
            arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
            s, a, y, c = arr.T
            layers.append(Transitions(s, a, mdp.rewards[h][s, a], y, c))
        else:
            cells = rng.choice(S * A, size=n, p=p)
            s, a = np.divmod(cells, A)
            cum = np.cumsum(P[s, a], axis=1)
            u = rng.random(n)[:, None]
            y = np.minimum((u >= cum).sum(axis=1), P.shape[2] - 1)
            layers.append(Transitions(s, a, mdp.rewards[h][s, a], y))
    return Dataset(tuple(layers), n=n, seed=int(seed))


def density_ratio(mdp: LayeredMdp, pi: Policy, dD: TimestepTable) -> TimestepTable | None:
    """``w^pi_h = d^pi_h / d^D_h``, or ``None`` when ``d^pi`` is not covered.

    Cells where both densities vanish get ratio 0.
    """
    d = occupancy(mdp, pi)
    out = []
    for h in range(mdp.horizon):
        num, den = d[h], dD[h]
        if np.any((den <= 0) & (num > 0)):
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            out.append(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0))
    return TimestepTable(tuple(out), role="weight", name="w^pi")


def concentrability(mdp: LayeredMdp, pi: Policy, dD: TimestepTable) -> float:
    w = density_ratio(mdp, pi, dD)
    if w is None:
        return float("inf")
    return float(max(v.max() for v in w.values))


def class_bound(weights) -> float:
    """Largest ``|w_h(x, a)|`` over members and timesteps."""
    weights = list(weights)
    if not weights:
        raise ValueError("empty weight class")
    return float(max(np.abs(v).max() for w in weights for v in _arrays(w)))


def _arrays(w):
    return w.values if isinstance(w, TimestepTable) else tuple(w)
