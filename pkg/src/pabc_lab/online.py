"""Monte-Carlo evaluation and the doubling search over the unknown gap."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .classes import EmptyVersionSpaceError, FunctionClass, WeightClass
from .data import Dataset, class_bound
from .mdp import LayeredMdp, Policy
from .solvers import PabcConfig, pabc


class SimulatorAccess:
    """Rollout access to an MDP that counts every transition it hands out."""

    def __init__(self, mdp: LayeredMdp):
        self.mdp = mdp
        self.samples = 0

    def rollout(self, pi: Policy, seed) -> list[tuple[int, int, float]]:
        """One trajectory as ``(state, action, reward)`` per timestep."""
        rng = np.random.default_rng(seed)
        mdp = self.mdp
        x = mdp.initial_state
        out = []
        for h in range(mdp.horizon):
            a = int(rng.choice(pi.probs[h].shape[1], p=pi.probs[h][x]))
            out.append((x, a, float(mdp.rewards[h][x, a])))
            x = int(rng.choice(mdp.n_states(h + 1), p=mdp.transitions[h][x, a]))
        self.samples += mdp.horizon
        return out

    def returns(self, pi: Policy, m: int, seed) -> np.ndarray:
        """Returns of ``m`` independent trajectories, simulated together."""
        rng = np.random.default_rng(seed)
        mdp = self.mdp
        x = np.full(m, mdp.initial_state)
        total = np.zeros(m)
        for h in range(mdp.horizon):
            cum_a = np.cumsum(pi.probs[h][x], axis=1)
            a = np.minimum((rng.random(m)[:, None] >= cum_a).sum(axis=1), cum_a.shape[1] - 1)
            total += mdp.rewards[h][x, a]
            cum_x = np.cumsum(mdp.transitions[h][x, a], axis=1)
            x = np.minimum((rng.random(m)[:, None] >= cum_x).sum(axis=1), cum_x.shape[1] - 1)
        self.samples += m * mdp.horizon
        return total


def monte_carlo_eval(mdp: LayeredMdp, pi: Policy, m: int, seed, access: SimulatorAccess | None = None) -> float:
    """Mean return over ``m`` seeded rollouts."""
    if m < 1:
        raise ValueError("m must be at least 1")
    access = access or SimulatorAccess(mdp)
    return float(access.returns(pi, m, seed).mean())


def mc_sample_count(eps_t: float, H: int, delta: float, t: int) -> int:
    """Online transitions for iteration ``t``: ``ceil(2 H^3 log(12 2^t / delta) / eps_t^2)``."""
    if eps_t <= 0 or H < 1 or not 0 < delta < 1 or t < 0:
        raise ValueError("need eps_t > 0, H >= 1, delta in (0, 1), t >= 0")
    return math.ceil(2 * H**3 * math.log(12 * 2**t / delta) / eps_t**2)


def iota(t: int, size_f: int, size_w: int, H: int, delta: float) -> float:
    return math.log(24 * size_f * size_w * H * 2**t / delta)


def oa_epsilon(t: int, n: int, C: float, H: int, size_f: int, size_w: int, delta: float,
               gap_guess: float) -> float:
    return math.sqrt(8 * C**2 * H**6 * iota(t, size_f, size_w, H, delta) / (n * gap_guess**2))


def oa_suboptimality_bound(n: int, C: float, H: int, size_f: int, size_w: int, delta: float,
                           gap: float) -> float:
    """Guaranteed suboptimality of the doubling search when ``gap(Q*) = gap``."""
    t = math.log2(2 * H / gap)
    val = 32 * C**2 * H**6 * math.log(24 * size_f * size_w * H * 2**t / delta) / (n * gap**2)
    return 5 * math.sqrt(val)


def oa_online_budget(n: int, C: float, H: int, delta: float, gap: float) -> float:
    """Online transitions allowed in total: ``log2(2H/gap)^2 n log(24/delta) / (C^2 H)``."""
    return math.log2(2 * H / gap) ** 2 * n * math.log(24 / delta) / (C**2 * H)


@dataclass
class OaIteration:
    t: int
    gap_guess: float
    eps: float
    iota: float
    v_star_hat: float | None
    member: int | None
    policy: list[list[int]] | None
    rollouts: int
    samples: int
    v_pi_hat: float | None
    stop: bool
    note: str = ""


@dataclass
class OaTranscript:
    iterations: list[OaIteration] = field(default_factory=list)
    policy: Policy | None = None
    total_samples: int = 0
    cap_reached: bool = False

    @property
    def final_t(self) -> int | None:
        return self.iterations[-1].t if self.iterations and self.iterations[-1].stop else None

    def to_dict(self) -> dict:
        return {
            "iterations": [asdict(it) for it in self.iterations],
            "policy": None if self.policy is None else [p.argmax(axis=1).tolist() for p in self.policy.probs],
            "total_samples": self.total_samples,
            "cap_reached": self.cap_reached,
        }


def pabc_oa(F: FunctionClass, W: WeightClass, D: Dataset, access: SimulatorAccess, delta: float,
            seed: int, max_iter: int = 40, initial_guess: str = "horizon", C: float | None = None,
            tie_rule: str = "first") -> tuple[Policy | None, OaTranscript]:
    """Halve a gap guess until a Monte-Carlo check certifies the candidate policy.

    Each iteration runs the selector twice: once without prescreening to
    estimate the optimal return, once prescreened at the current guess to get
    a policy.  An iteration whose selector run finds no feasible member does
    not stop.  ``initial_guess`` is ``"horizon"`` (start at ``H``) or
    ``"class-max"`` (start at the largest finite member gap).
    """
    mdp = F.mdp
    H, n = mdp.horizon, D.n
    C = class_bound(W) if C is None else C
    if initial_guess == "horizon":
        g0 = float(H)
    elif initial_guess == "class-max":
        finite = [g for g in F.gaps() if math.isfinite(g)]
        g0 = max(finite) if finite and max(finite) > 0 else float(H)
    else:
        raise ValueError(f"unknown initial guess mode {initial_guess!r}")
    transcript = OaTranscript()
    for t in range(max_iter):
        g = g0 / 2**t
        eps = oa_epsilon(t, n, C, H, len(F), len(W), delta, g)
        it = OaIteration(t, g, eps, iota(t, len(F), len(W), H, delta), None, None, None, 0, 0, None, False)
        transcript.iterations.append(it)
        try:
            v_hat = pabc(F, W, D, PabcConfig(alpha=eps / (2 * H), tie_rule=tie_rule)).estimate
            sel = pabc(F, W, D, PabcConfig(alpha=eps * g / (2 * H**2), c_gap=g, tie_rule=tie_rule))
        except EmptyVersionSpaceError as err:
            it.note = str(err)
            continue
        it.v_star_hat, it.member = v_hat, sel.index
        it.policy = [p.argmax(axis=1).tolist() for p in sel.policy.probs]
        samples = mc_sample_count(eps, H, delta, t)
        it.rollouts = math.ceil(samples / H)
        before = access.samples
        it.v_pi_hat = float(access.returns(sel.policy, it.rollouts, np.random.SeedSequence([seed, t])).mean())
        it.samples = access.samples - before
        transcript.total_samples += it.samples
        if it.v_pi_hat >= v_hat - 3 * eps:
            it.stop = True
            transcript.policy = sel.policy
            return sel.policy, transcript
    transcript.cap_reached = True
    return None, transcript
