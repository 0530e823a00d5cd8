"""Seeded trial runs and parameter sweeps with CSV/JSON output."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import partial
from pathlib import Path

import numpy as np

from .classes import EmptyVersionSpaceError, eps_F, eps_F_inf, prescreen
from .data import class_bound, sample_dataset
from .instances import build_counterexample, build_rate_instance, build_table1_example, random_instance
from .io import jsonable, load_instance
from .mdp import optimal_q, policy_value
from .online import SimulatorAccess, oa_online_budget, oa_suboptimality_bound, pabc_oa
from .solvers import MODES, PabcConfig, eps_for_n, hyperparameters, pabc, pabc_l

ALGORITHMS = ("pabc", "pabc-l", "pabc-oa", "population-pabc", "population-pabc-l")
ASSUMPTIONS = ("realizable-F", "realizable-W", "bounded-F", "bounded-W", "gap")

_MESSAGES = {
    "realizable-F": "realizability of F: the optimal Q-function is not a member of F",
    "realizable-W": "realizability of W: the optimal density ratio is undefined or not a member of W",
    "bounded-F": "boundedness of F: some member leaves [0, H - h] at timestep h",
    "bounded-W": "boundedness of W: some weight exceeds the bound C used for sample sizes",
    "gap": "gap of Q*: the optimal action is not unique in some state (gap(Q*) = 0)",
}


class ConfigError(ValueError):
    pass


class AssumptionError(ValueError):
    def __init__(self, failures: list[str]):
        super().__init__("; ".join(failures))
        self.failures = failures


@dataclass
class ExperimentConfig:
    """One experiment.

    Hyperparameters come either from a guarantee ``mode`` with exactly one of
    ``eps`` / ``n`` (the other is derived), or explicitly from ``alpha``,
    ``c_gap`` and ``n``.  ``eps`` may accompany explicit settings to score
    success.
    """

    instance: str = "counterexample"
    instance_seed: int = 0
    instance_options: dict = field(default_factory=dict)
    algorithm: str = "pabc"
    mode: str | None = None
    eps: float | None = None
    delta: float = 0.1
    alpha: float | None = None
    c_gap: float | None = None
    n: int | None = None
    trials: int = 1
    seed: int | None = None
    compact: bool = True
    tie_rule: str = "first"
    preferred_member: int | None = None
    assumptions: tuple = ASSUMPTIONS
    max_iter: int = 40
    initial_guess: str = "horizon"
    workers: int = 1
    predicate: str | None = None

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.predicate not in (None, "value", "policy"):
            raise ConfigError("predicate must be 'value' or 'policy'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        sampling = not self.algorithm.startswith("population")
        if sampling and self.seed is None:
            raise ConfigError("a seed is required for sampling algorithms")
        explicit = self.alpha is not None or (self.mode is None and self.n is not None)
        if self.mode is not None and self.alpha is not None:
            raise ConfigError("give either a guarantee mode or an explicit alpha, not both")
        if self.mode is not None:
            if self.mode not in MODES:
                raise ConfigError(f"unknown mode {self.mode!r}")
            if self.algorithm != "pabc-oa" and (self.eps is None) == (self.n is None):
                raise ConfigError("a guarantee mode needs exactly one of eps and n")
        elif sampling and self.n is None:
            raise ConfigError("explicit settings need n")
        elif self.algorithm in ("pabc", "population-pabc") and not explicit:
            raise ConfigError("explicit settings need alpha")
        if self.algorithm == "pabc-oa" and self.n is None:
            raise ConfigError("pabc-oa needs the per-timestep dataset size n")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if "assumptions" in d:
            d["assumptions"] = tuple(d["assumptions"])
        return cls(**d)


def load_named(config: ExperimentConfig):
    name = config.instance
    if name == "counterexample":
        return build_counterexample()
    if name == "table1":
        return build_table1_example()
    if name == "rate":
        return build_rate_instance(config.instance_seed, **config.instance_options)
    if name == "random":
        return random_instance(config.instance_seed, **config.instance_options)
    if Path(name).exists():
        return load_instance(name)
    raise ConfigError(f"unknown instance {name!r}")


def check_assumptions(inst, which) -> list[str]:
    ann = inst.annotations
    failures = []
    for key in which:
        if key == "realizable-F" and ann["q_star_index"] is None:
            failures.append(_MESSAGES[key])
        elif key == "realizable-W" and ann["w_star_index"] is None:
            failures.append(_MESSAGES[key])
        elif key == "bounded-F":
            bad = inst.F.range_violations()
            if bad:
                failures.append(_MESSAGES[key] + f" ({bad[0]})")
        elif key == "bounded-W" and not math.isfinite(ann["C"]):
            failures.append(_MESSAGES[key])
        elif key == "gap" and ann["gap_q_star"] <= 0:
            failures.append(_MESSAGES[key])
    return failures


def _required_assumptions(config: ExperimentConfig) -> tuple:
    mode = config.mode or ""
    if config.mode is None and config.algorithm != "pabc-oa":
        return ()
    need = {"bounded-F", "bounded-W"}
    if "robust" not in mode and "linf" not in mode:
        need |= {"realizable-F", "realizable-W"}
    if config.algorithm == "pabc-oa" or (mode.startswith("policy") and "robust" not in mode and "linf" not in mode):
        need |= {"gap"}
    return tuple(a for a in config.assumptions if a in need)


@dataclass
class Plan:
    alpha: float | None
    c_gap: float
    n: int | None
    eps: float | None


def plan(config: ExperimentConfig, inst) -> Plan:
    mdp, F, W = inst.mdp, inst.F, inst.W
    H, C = mdp.horizon, class_bound(W)
    ann = inst.annotations
    if config.mode is None or config.algorithm == "pabc-oa":
        return Plan(config.alpha, config.c_gap or 0.0, config.n, config.eps)
    mode = config.mode
    gap = ann["gap_q_star"]
    extra = {}
    if mode.startswith("policy-linf"):
        extra["eps_f_inf"] = eps_F_inf(F, mdp)[0]
    eps = config.eps
    if eps is None:
        eps = eps_for_n(mode, config.n, config.delta, H, C, len(F), len(W), gap=gap, c_gap=config.c_gap, **extra)
    if mode.startswith("value-robust"):
        extra["eps_f"] = eps_F(F, W, mdp, inst.dD)[0]
    elif mode.startswith("policy-robust"):
        extra["eps_f"] = eps_F(prescreen(F, config.c_gap), W, mdp, inst.dD)[0]
    hp = hyperparameters(mode, eps, config.delta, H, C, len(F), len(W), gap=gap, c_gap=config.c_gap, **extra)
    return Plan(hp.alpha, hp.c_gap, config.n if config.n is not None else hp.n_required, eps)


def trial_seeds(base_seed: int | None, trials: int) -> list[int]:
    if base_seed is None:
        return [0] * trials
    return [int(s) for s in np.random.SeedSequence(base_seed).generate_state(trials)]


@dataclass
class TrialRow:
    seed: int
    member: int | None
    estimate: float | None
    value_at_x0: float | None
    policy_value: float | None
    v_star: float
    value_error: float | None
    estimate_error: float | None
    suboptimality: float | None
    q_star_feasible: bool | None
    empty: bool
    iterations: int | None = None
    online_samples: int | None = None
    success: bool | None = None


@dataclass
class TrialReport:
    config: dict
    plan: dict
    rows: list[TrialRow]
    target: float
    threshold: float | None
    annotations: dict

    @property
    def aggregate(self) -> dict:
        """Recomputed from the per-trial rows on every access."""
        def med(key):
            vals = [getattr(r, key) for r in self.rows if getattr(r, key) is not None]
            return float(np.median(vals)) if vals else None

        scored = self.threshold is not None
        succ = sum(bool(r.success) for r in self.rows) / len(self.rows) if scored else None
        return {
            "trials": len(self.rows),
            "success_frequency": succ,
            "target": self.target,
            "passed": succ >= self.target if scored else None,
            "median_value_error": med("value_error"),
            "median_estimate_error": med("estimate_error"),
            "median_suboptimality": med("suboptimality"),
            "empty_version_space": sum(r.empty for r in self.rows),
        }

    def to_dict(self) -> dict:
        return jsonable({
            "config": self.config, "plan": self.plan, "threshold": self.threshold,
            "annotations": self.annotations, "aggregate": self.aggregate,
            "rows": [asdict(r) for r in self.rows],
        })

    def write(self, csv_path=None, json_path=None) -> None:
        if csv_path:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=[f.name for f in fields(TrialRow)])
                writer.writeheader()
                for r in self.rows:
                    writer.writerow(asdict(r))
        if json_path:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _predicate(config: ExperimentConfig) -> str:
    """``"policy"`` scores ``v* - v^pi <= eps``; ``"value"`` scores ``|estimate - v*| <= eps``."""
    if config.predicate is not None:
        return config.predicate
    if config.algorithm == "pabc-oa" or (config.mode or "").startswith("policy"):
        return "policy"
    return "value"


def _success(config, row: TrialRow, threshold: float | None) -> bool | None:
    if threshold is None:
        return None
    if row.empty:
        return False
    if _predicate(config) == "policy":
        return row.suboptimality is not None and row.suboptimality <= threshold
    return row.estimate_error is not None and row.estimate_error <= threshold


def _run_trial(config: ExperimentConfig, inst, p: Plan, threshold: float | None, seed: int) -> TrialRow:
    mdp, F, W, dD = inst.mdp, inst.F, inst.W, inst.dD
    v_star = inst.annotations["v_star"]
    q_idx = inst.annotations["q_star_index"]
    x0 = mdp.initial_state
    population = config.algorithm.startswith("population")
    data = dD if population else None
    row = TrialRow(seed, None, None, None, None, v_star, None, None, None, None, False)
    try:
        if config.algorithm == "pabc-oa":
            D = sample_dataset(mdp, dD, config.n, seed, compact=config.compact)
            access = SimulatorAccess(mdp)
            pi, tr = pabc_oa(F, W, D, access, config.delta, seed, config.max_iter,
                             config.initial_guess, tie_rule=config.tie_rule)
            row.iterations = len(tr.iterations)
            row.online_samples = tr.total_samples
            if pi is None:
                row.empty = True
            else:
                row.policy_value = policy_value(mdp, pi).value
                row.suboptimality = v_star - row.policy_value
        else:
            if not population:
                data = sample_dataset(mdp, dD, p.n, seed, compact=config.compact)
            if config.algorithm.endswith("pabc-l"):
                sel = pabc_l(F, W, data, p.c_gap, config.tie_rule, config.preferred_member)
            else:
                sel = pabc(F, W, data, PabcConfig(p.alpha, p.c_gap, config.tie_rule, config.preferred_member))
            row.member = sel.index
            row.estimate = sel.estimate
            row.value_at_x0 = float(F[sel.index][0][x0] @ sel.policy.probs[0][x0])
            row.policy_value = policy_value(mdp, sel.policy).value
            row.value_error = abs(row.value_at_x0 - v_star)
            row.estimate_error = abs(row.estimate - v_star)
            row.suboptimality = v_star - row.policy_value
            if q_idx is not None and q_idx in sel.candidates and sel.alpha is not None:
                pos = list(sel.candidates).index(q_idx)
                row.q_star_feasible = bool(sel.feasible[pos])
    except EmptyVersionSpaceError:
        row.empty = True
    row.success = _success(config, row, threshold)
    return row


def run_experiment(config: ExperimentConfig, inst=None) -> TrialReport:
    """Run ``config.trials`` seeded trials and score them against exact values.

    Assumption checks required by the guarantee mode run first and raise
    :class:`AssumptionError` before any sampling.
    """
    config.validate()
    inst = inst or load_named(config)
    failures = check_assumptions(inst, _required_assumptions(config))
    if failures:
        raise AssumptionError(failures)
    mdp, F, W = inst.mdp, inst.F, inst.W
    H = mdp.horizon
    p = plan(config, inst)
    threshold = p.eps
    plan_info = asdict(p)
    if config.algorithm == "pabc-oa":
        C = class_bound(W)
        gap = inst.annotations["gap_q_star"]
        threshold = oa_suboptimality_bound(config.n, C, H, len(F), len(W), config.delta, gap)
        plan_info.update(
            bound=threshold,
            online_budget=oa_online_budget(config.n, C, H, config.delta, gap),
            iteration_bound=math.ceil(math.log2(2 * H / gap)),
        )

    run = partial(_run_trial, config, inst, p, threshold)
    seeds = trial_seeds(config.seed, config.trials)
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            rows = list(pool.map(run, seeds))
    else:
        rows = [run(seed) for seed in seeds]
    rows.sort(key=lambda r: r.seed)
    cfg = jsonable(asdict(config))
    return TrialReport(cfg, jsonable(plan_info), rows, 1 - config.delta, threshold, jsonable(inst.annotations))


def sweep(base: ExperimentConfig, grid: dict, max_cells: int = 1000, inst=None) -> list[dict]:
    """One aggregate row per cell of the Cartesian grid over ``n``, ``eps``, ``c_gap``."""
    grid = {k: list(v) for k, v in grid.items() if v is not None}
    bad = set(grid) - {"n", "eps", "c_gap"}
    if bad:
        raise ConfigError(f"can only sweep over n, eps, c_gap (got {sorted(bad)})")
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("empty sweep grid")
    keys = sorted(grid)
    cells = list(itertools.product(*(grid[k] for k in keys)))
    if len(cells) > max_cells:
        raise ConfigError(f"grid has {len(cells)} cells, cap is {max_cells}")
    inst = inst or load_named(base)
    out = []
    for cell in cells:
        cfg = replace(base, **dict(zip(keys, cell)))
        if "n" in grid and cfg.mode is not None and "eps" not in grid:
            cfg = replace(cfg, eps=None)
        report = run_experiment(cfg, inst)
        try:
            kept = len(prescreen(inst.F, cfg.c_gap or 0.0))
        except EmptyVersionSpaceError:
            kept = 0
        out.append({**dict(zip(keys, cell)), "alpha": report.plan["alpha"], "n_used": report.plan["n"],
                    "prescreened_size": kept, **report.aggregate})
    return out


def write_rows(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
