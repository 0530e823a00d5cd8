"""Average-Bellman-error losses and the pessimistic version-space selectors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classes import EmptyVersionSpaceError, FunctionClass, WeightClass, prescreen
from .data import Dataset
from .mdp import (
    DEFAULT_TIE_TOL,
    LayeredMdp,
    Policy,
    TimestepTable,
    bellman_residual,
    state_occupancy,
)


@dataclass(frozen=True)
class PabcConfig:
    """Selector settings.

    ``preferred_member`` (original class index) wins every objective tie it
    takes part in; otherwise ties go to the lowest index.
    """

    alpha: float = 0.0
    c_gap: float = 0.0
    tie_rule: str = "first"
    preferred_member: int | None = None
    tie_tol: float = DEFAULT_TIE_TOL

    def __post_init__(self):
        if self.alpha < 0 or self.c_gap < 0:
            raise ValueError("alpha and C_gap must be nonnegative")


@dataclass(frozen=True, eq=False)
class Selection:
    variant: str
    index: int
    name: str
    policy: Policy
    estimate: float
    alpha: float | None
    c_gap: float
    candidates: tuple[int, ...]
    losses: np.ndarray  # (|F(C_gap)|, |W|, H)
    feasible: np.ndarray  # (|F(C_gap)|,)
    objective: np.ndarray  # (|F(C_gap)|,)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "index": self.index,
            "name": self.name,
            "estimate": self.estimate,
            "alpha": self.alpha,
            "c_gap": self.c_gap,
            "candidates": list(self.candidates),
            "policy": [p.argmax(axis=1).tolist() for p in self.policy.probs],
            "losses": self.losses.tolist(),
            "feasible": self.feasible.tolist(),
            "objective": self.objective.tolist(),
            **self.extra,
        }


def _next_values(mdp: LayeredMdp, f: TimestepTable, pi_f: Policy, h: int) -> np.ndarray:
    """``f_{h+1}(x', pi_f(x'))`` for every ``x'`` in layer ``h + 1``."""
    if h + 1 >= mdp.horizon:
        return np.zeros(mdp.n_states(h + 1))
    return (f[h + 1] * pi_f.probs[h + 1]).sum(axis=1)


def empirical_loss(
    mdp: LayeredMdp, f: TimestepTable, w: TimestepTable, h: int, D: Dataset, pi_f: Policy
) -> float:
    """Sample average of ``w_h(x,a) (f_h(x,a) - r - f_{h+1}(x', pi_f(x')))``."""
    layer = D[h]
    if layer.size == 0:
        raise ValueError(f"no samples at timestep {h}")
    term = f[h][layer.states, layer.actions] - layer.rewards - _next_values(mdp, f, pi_f, h)[layer.next_states]
    return float(np.sum(layer.weights() * w[h][layer.states, layer.actions] * term) / layer.size)


def population_loss(mdp: LayeredMdp, f: TimestepTable, w: TimestepTable, h: int, dD: TimestepTable) -> float:
    """Expected empirical loss: ``E_{d^D_h}[w_h (f_h - T_h f_{h+1})]``."""
    return float(np.sum(dD[h] * w[h] * bellman_residual(mdp, f, h)))


def avg_bellman_error(mdp: LayeredMdp, f: TimestepTable, pi: Policy, h: int, pi_f: Policy) -> float:
    """Q-type average Bellman error along ``pi`` up to ``h``, then ``pi_f``."""
    mu = state_occupancy(mdp, pi)
    d_h = mu[h][:, None] * pi.probs[h]
    now = np.sum(d_h * (f[h] - mdp.rewards[h]))
    nxt_states = np.einsum("sa,sat->t", d_h, mdp.transitions[h])
    return float(now - nxt_states @ _next_values(mdp, f, pi_f, h))


def eps_stat(n: int, C: float, H: int, size_f: int, size_w: int, delta: float) -> float:
    """Uniform deviation bound ``2CH sqrt(log(2|F||W|H/delta) / (2n))``."""
    if n <= 0 or C <= 0 or H <= 0 or size_f <= 0 or size_w <= 0:
        raise ValueError("n, C, H, |F|, |W| must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2 * C * H * math.sqrt(math.log(2 * size_f * size_w * H / delta) / (2 * n))


def loss_matrix(F: FunctionClass, W: WeightClass, data, tie_rule: str = "first",
                tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """``L[i, j, h]`` for every member, weight and timestep.

    ``data`` is a :class:`Dataset` (empirical loss) or a data-distribution
    table (exact population loss).
    """
    mdp = F.mdp
    H = mdp.horizon
    out = np.zeros((len(F), len(W), H))
    population = isinstance(data, TimestepTable)
    for i, f in enumerate(F):
        if population:
            for h in range(H):
                res = data[h] * bellman_residual(mdp, f, h)
                out[i, :, h] = [np.sum(w[h] * res) for w in W]
            continue
        pi_f = F.policy(i, tie_rule, tie_tol)
        for h in range(H):
            layer = data[h]
            if layer.size == 0:
                raise ValueError(f"no samples at timestep {h}")
            term = f[h][layer.states, layer.actions] - layer.rewards
            term = term - _next_values(mdp, f, pi_f, h)[layer.next_states]
            term = term * layer.weights()
            wv = np.stack([w[h][layer.states, layer.actions] for w in W])
            out[i, :, h] = wv @ term / layer.size
    return out


def feasible_set(F: FunctionClass, W: WeightClass, data, alpha: float, tie_rule: str = "first",
                 tie_tol: float = DEFAULT_TIE_TOL) -> tuple[list[int], np.ndarray]:
    """Positions in ``F`` with ``max_{w,h} |L| <= alpha``, plus the loss matrix."""
    L = loss_matrix(F, W, data, tie_rule, tie_tol)
    worst = np.abs(L).max(axis=(1, 2))
    return [i for i in range(len(F)) if worst[i] <= alpha], L


def initial_values(F: FunctionClass, tie_rule: str = "first", tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """``f_0(x_0, pi_f(x_0))`` per member."""
    x0 = F.mdp.initial_state
    return np.array(
        [float(f[0][x0] @ F.policy(i, tie_rule, tie_tol).probs[0][x0]) for i, f in enumerate(F)]
    )


def _pick(objective: np.ndarray, allowed: list[int], Fc: FunctionClass, config: PabcConfig) -> int:
    vals = objective[allowed]
    best = vals.min()
    tied = [i for i, v in zip(allowed, vals) if v <= best + config.tie_tol]
    if config.preferred_member is not None:
        for i in tied:
            if Fc.indices[i] == config.preferred_member:
                return i
    return tied[0]


def _variant(data, base: str) -> str:
    return "population-" + base if isinstance(data, TimestepTable) else base


def pabc(F: FunctionClass, W: WeightClass, data, config: PabcConfig) -> Selection:
    """Prescreen by gap, keep members meeting every weighted loss constraint,
    return the one with the smallest initial value.

    Raises :class:`EmptyVersionSpaceError` if prescreening or the constraints
    leave nothing.
    """
    Fc = prescreen(F, config.c_gap, config.tie_tol)
    keep, L = feasible_set(Fc, W, data, config.alpha, config.tie_rule, config.tie_tol)
    worst = np.abs(L).max(axis=(1, 2))
    if not keep:
        details = []
        for i in range(len(Fc)):
            j, h = np.unravel_index(np.abs(L[i]).argmax(), L[i].shape)
            details.append({
                "member": Fc.indices[i], "name": Fc[i].name, "weight": int(j), "h": int(h),
                "loss": float(L[i, j, h]), "excess": float(worst[i] - config.alpha),
            })
        details.sort(key=lambda d: d["excess"])
        tight = details[0]
        raise EmptyVersionSpaceError(
            f"no member satisfies the constraints at alpha={config.alpha:g}; closest is "
            f"{tight['name']} with |L|={abs(tight['loss']):g} at weight {tight['weight']}, h={tight['h']}",
            details,
        )
    objective = initial_values(Fc, config.tie_rule, config.tie_tol)
    i = _pick(objective, keep, Fc, config)
    feasible = np.zeros(len(Fc), dtype=bool)
    feasible[keep] = True
    return Selection(
        variant=_variant(data, "pabc"),
        index=Fc.indices[i],
        name=Fc[i].name,
        policy=Fc.policy(i, config.tie_rule, config.tie_tol),
        estimate=float(objective[i]),
        alpha=config.alpha,
        c_gap=config.c_gap,
        candidates=Fc.indices,
        losses=L,
        feasible=feasible,
        objective=objective,
    )


def pabc_l(F: FunctionClass, W: WeightClass, data, c_gap: float = 0.0, tie_rule: str = "first",
           preferred_member: int | None = None, tie_tol: float = DEFAULT_TIE_TOL) -> Selection:
    """Penalized selector: minimize ``f_0(x_0, pi_f(x_0)) + H max_{w,h} |L|``.

    The returned estimate includes the penalty of the chosen member.
    """
    config = PabcConfig(0.0, c_gap, tie_rule, preferred_member, tie_tol)
    Fc = prescreen(F, c_gap, tie_tol)
    L = loss_matrix(Fc, W, data, tie_rule, tie_tol)
    H = F.mdp.horizon
    objective = initial_values(Fc, tie_rule, tie_tol) + H * np.abs(L).max(axis=(1, 2))
    i = _pick(objective, list(range(len(Fc))), Fc, config)
    return Selection(
        variant=_variant(data, "pabc-l"),
        index=Fc.indices[i],
        name=Fc[i].name,
        policy=Fc.policy(i, tie_rule, tie_tol),
        estimate=float(objective[i]),
        alpha=None,
        c_gap=c_gap,
        candidates=Fc.indices,
        losses=L,
        feasible=np.ones(len(Fc), dtype=bool),
        objective=objective,
    )


# sample-size constant, exponent of H, and whether the bound divides by a gap
_BOUNDS = {
    "value": (8, 5, False),
    "policy": (8, 7, True),
    "value-robust": (8, 5, False),
    "policy-robust": (8, 7, True),
    "policy-linf": (8, 7, True),
    "value-l": (8, 5, False),
    "policy-l": (32, 7, True),
    "value-robust-l": (8, 5, False),
    "policy-robust-l": (32, 7, True),
    "policy-linf-l": (8, 7, True),
}
MODES = tuple(_BOUNDS)


@dataclass(frozen=True)
class Hyperparameters:
    mode: str
    alpha: float | None  # None for the penalized selector
    c_gap: float
    n_required: int
    total_bound: float


def _gap_term(mode: str, gap: float | None, c_gap: float | None, eps_f_inf: float | None) -> float:
    if mode.startswith("policy-linf"):
        if gap is None or eps_f_inf is None:
            raise ValueError(f"{mode} needs gap and eps_F_inf")
        if 2 * eps_f_inf >= gap:
            raise ValueError("sup-norm error too large: need 2 * eps_F_inf < gap(Q*)")
        return gap - 2 * eps_f_inf
    if mode.startswith("policy-robust"):
        if c_gap is None or c_gap <= 0:
            raise ValueError(f"{mode} needs a positive C_gap")
        return c_gap
    if mode.startswith("policy"):
        if gap is None or gap <= 0:
            raise ValueError(f"{mode} needs a positive gap(Q*)")
        return gap
    return 0.0


def hyperparameters(mode: str, eps: float, delta: float, H: int, C: float, size_f: int, size_w: int,
                    gap: float | None = None, c_gap: float | None = None, eps_f: float = 0.0,
                    eps_f_inf: float | None = None) -> Hyperparameters:
    """Threshold, gap parameter and per-timestep sample size for a guarantee mode.

    ``eps_f`` is the misspecification error of ``F`` (robust value mode) or of
    ``F(C_gap)`` (robust policy mode).
    """
    if mode not in _BOUNDS:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and delta in (0, 1)")
    const, power, gapped = _BOUNDS[mode]
    g = _gap_term(mode, gap, c_gap, eps_f_inf)
    log_term = math.log(2 * size_f * size_w * H / delta)
    total = const * C**2 * H**power * log_term / eps**2
    if gapped:
        total /= g**2
    n = math.ceil(total / H)
    lagrangian = mode.endswith("-l")
    base = mode[:-2] if lagrangian else mode
    if base == "value":
        alpha, cg = eps / (2 * H), 0.0
    elif base == "value-robust":
        alpha, cg = eps / (2 * H) + eps_f, 0.0
    elif base == "policy":
        alpha, cg = eps * g / (2 * H**2), g
    elif base == "policy-robust":
        alpha, cg = eps * g / (2 * H**2) + eps_f, g
    else:  # policy-linf
        alpha, cg = eps * g / (2 * H**2) + 2 * eps_f_inf, g
    return Hyperparameters(mode, None if lagrangian else alpha, cg, n, total)


def eps_for_n(mode: str, n: int, delta: float, H: int, C: float, size_f: int, size_w: int,
              gap: float | None = None, c_gap: float | None = None,
              eps_f_inf: float | None = None) -> float:
    """Accuracy whose prescribed per-timestep sample size is ``n`` (inverse of the bound)."""
    const, power, gapped = _BOUNDS[mode]
    g = _gap_term(mode, gap, c_gap, eps_f_inf)
    val = const * C**2 * H**power * math.log(2 * size_f * size_w * H / delta) / (n * H)
    if gapped:
        val /= g**2
    return math.sqrt(val)


@dataclass(frozen=True)
class ConsistencyReport:
    consistent_weights: dict[int, list[int]]  # member -> weights consistent with its greedy policy
    weight_returns: list[float]
    return_ok: list[bool]
    kept_members: list[int]
    kept_weights: list[int]

    @property
    def changes_nothing(self) -> bool:
        return len(self.kept_members) == len(self.consistent_weights) and all(self.return_ok)


def weight_return(mdp: LayeredMdp, w: TimestepTable, data) -> float:
    """``sum_h E_{d^D_h}[w_h R_h]`` (exact) or its sample analogue."""
    if isinstance(data, TimestepTable):
        return float(sum(np.sum(data[h] * w[h] * mdp.rewards[h]) for h in range(mdp.horizon)))
    total = 0.0
    for h in range(mdp.horizon):
        layer = data[h]
        total += np.sum(layer.weights() * w[h][layer.states, layer.actions] * layer.rewards) / layer.size
    return float(total)


def consistency_filters(F: FunctionClass, W: WeightClass, data, v_star_estimate: float,
                        tol: float = 1e-9, tie_rule: str = "first",
                        tie_tol: float = DEFAULT_TIE_TOL) -> ConsistencyReport:
    """Policy-consistency and return-consistency checks between ``F`` and ``W``.

    A weight is consistent with ``pi_f`` when it is zero on every legal action
    that ``pi_f`` does not take.  A weight passes the return check when its
    reweighted reward matches ``v_star_estimate`` within ``tol``.
    """
    mdp = F.mdp
    consistent = {}
    for i in range(len(F)):
        pi = F.policy(i, tie_rule, tie_tol)
        ok = []
        for j, w in enumerate(W):
            off = [np.any((w[h] != 0) & mdp.legal[h] & (pi.probs[h] == 0)) for h in range(mdp.horizon)]
            if not any(off):
                ok.append(j)
        consistent[F.indices[i]] = ok
    returns = [weight_return(mdp, w, data) for w in W]
    return_ok = [abs(r - v_star_estimate) <= tol for r in returns]
    kept_w = [j for j, ok in enumerate(return_ok) if ok]
    kept_f = [i for i, ws in consistent.items() if any(j in kept_w for j in ws)]
    return ConsistencyReport(consistent, returns, return_ok, kept_f, kept_w)
