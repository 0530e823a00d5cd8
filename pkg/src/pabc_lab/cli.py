"""Command-line entry point.

Exit codes: 0 success, 1 an acceptance predicate failed, 2 the
configuration or input was invalid.
"""
from __future__ import annotations

import argparse
import json
import sys
import typing
from dataclasses import fields
from pathlib import Path

from .classes import EmptyVersionSpaceError, eps_F, eps_F_inf, eps_W, regularity_check
from .data import class_bound, sample_dataset
from .experiment import (
    ASSUMPTIONS,
    AssumptionError,
    ConfigError,
    ExperimentConfig,
    check_assumptions,
    load_named,
    run_experiment,
    sweep,
    write_rows,
)
from .io import instance_to_dict, jsonable, save_json, table_to_dict
from .mdp import InvalidMdpError, greedy_policy, optimal_q, policy_value, validate_mdp
from .online import SimulatorAccess, pabc_oa
from .solvers import PabcConfig, pabc, pabc_l


def _emit(obj, out: str | None) -> None:
    text = json.dumps(jsonable(obj), indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _instance(args):
    return load_named(ExperimentConfig(instance=args.instance, instance_seed=args.instance_seed))


def _add_instance(p) -> None:
    p.add_argument("instance", help="counterexample | table1 | rate | random | path to an instance JSON")
    p.add_argument("--instance-seed", type=int, default=0, help="seed for the rate and random instances")
    p.add_argument("--out", help="write JSON here instead of stdout")


def _add_selector(p, alpha: bool) -> None:
    if alpha:
        p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c-gap", type=float, default=0.0)
    p.add_argument("--tie-rule", default="first", choices=["first", "last"])
    p.add_argument("--preferred-member", type=int)
    p.add_argument("--population", action="store_true", help="use exact losses under d^D instead of a sample")
    p.add_argument("--n", type=int, help="per-timestep sample size")
    p.add_argument("--seed", type=int, help="dataset seed (required unless --population)")
    p.add_argument("--compact", action="store_true", help="draw multinomial counts instead of single tuples")


def _data(args, inst):
    if args.population:
        return inst.dD
    if args.seed is None:
        raise ConfigError("--seed is required for sampling commands")
    if args.n is None:
        raise ConfigError("--n is required unless --population is given")
    return sample_dataset(inst.mdp, inst.dD, args.n, args.seed, compact=args.compact)


def cmd_validate(args) -> int:
    inst = _instance(args)
    problems = validate_mdp(inst.mdp)
    problems += inst.dD.check(inst.mdp)
    problems += inst.F.range_violations()
    reg = regularity_check(inst.W, inst.dD)
    which = args.check or list(ASSUMPTIONS)
    failures = check_assumptions(inst, which)
    _emit({
        "instance": inst.name,
        "problems": problems,
        "regularity": [{"weight": e.name, "h": e.h, "ok": e.ok, "mean": e.mean} for e in reg],
        "assumption_failures": failures,
        "checked": which,
    }, args.out)
    if problems:
        return 2
    return 1 if failures else 0


def cmd_dp(args) -> int:
    inst = _instance(args)
    q = optimal_q(inst.mdp)
    pi = greedy_policy(inst.mdp, q)
    _emit({
        "v_star": policy_value(inst.mdp, pi).value,
        "q_star": table_to_dict(inst.mdp, q),
        "policy": [p.argmax(axis=1).tolist() for p in pi.probs],
        "gap_q_star": inst.annotations["gap_q_star"],
    }, args.out)
    return 0


def _scored(inst, sel) -> dict:
    out = sel.to_dict()
    out["policy_value"] = policy_value(inst.mdp, sel.policy).value
    out["v_star"] = inst.annotations["v_star"]
    out["suboptimality"] = out["v_star"] - out["policy_value"]
    return out


def cmd_pabc(args) -> int:
    inst = _instance(args)
    data = _data(args, inst)
    sel = pabc(inst.F, inst.W, data, PabcConfig(args.alpha, args.c_gap, args.tie_rule, args.preferred_member))
    _emit(_scored(inst, sel), args.out)
    return 0


def cmd_pabc_l(args) -> int:
    inst = _instance(args)
    data = _data(args, inst)
    sel = pabc_l(inst.F, inst.W, data, args.c_gap, args.tie_rule, args.preferred_member)
    _emit(_scored(inst, sel), args.out)
    return 0


def cmd_pabc_oa(args) -> int:
    inst = _instance(args)
    D = sample_dataset(inst.mdp, inst.dD, args.n, args.seed, compact=args.compact)
    access = SimulatorAccess(inst.mdp)
    pi, tr = pabc_oa(inst.F, inst.W, D, access, args.delta, args.seed, args.max_iter, args.initial_guess)
    out = tr.to_dict()
    out["v_star"] = inst.annotations["v_star"]
    out["policy_value"] = None if pi is None else policy_value(inst.mdp, pi).value
    _emit(out, args.out)
    return 0 if pi is not None else 1


def cmd_eps(args) -> int:
    inst = _instance(args)
    mdp, F, W, dD = inst.mdp, inst.F, inst.W, inst.dD
    ew, iw = eps_W(F, W, mdp, dD)
    ef, jf = eps_F(F, W, mdp, dD)
    ei, ji = eps_F_inf(F, mdp)
    _emit({
        "eps_W": ew, "eps_W_argmin": W[iw].name,
        "eps_F": ef, "eps_F_argmin": F[jf].name,
        "eps_F_inf": ei, "eps_F_inf_argmin": F[ji].name,
        "C": class_bound(W),
        "regular": all(e.ok for e in regularity_check(W, dD)),
        "annotations": inst.annotations,
    }, args.out)
    return 0


def _field_type(f):
    hints = typing.get_type_hints(ExperimentConfig)
    t = hints[f.name]
    for cand in (bool, int, float, str):
        if t is cand or cand in typing.get_args(t):
            return cand
    return None


def _add_config_flags(p) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "assumptions":
            p.add_argument(flag, nargs="*", choices=ASSUMPTIONS, help="assumption checks to run")
        elif f.name == "instance_options":
            p.add_argument(flag, help="JSON object of instance builder options")
        elif _field_type(f) is bool:
            p.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), metavar="BOOL")
        else:
            p.add_argument(flag, type=_field_type(f) or str)
    p.add_argument("--csv", help="per-trial or per-cell rows as CSV")
    p.add_argument("--json", help="report as JSON")


def _config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    for f in fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is None:
            continue
        if f.name == "instance_options":
            val = json.loads(val)
        base[f.name] = val
    return ExperimentConfig.from_dict(base)


def cmd_experiment(args) -> int:
    config = _config(args)
    report = run_experiment(config)
    report.write(args.csv, args.json)
    agg = report.aggregate
    print(json.dumps(jsonable({"plan": report.plan, "threshold": report.threshold, "aggregate": agg}), indent=1))
    return 1 if agg["passed"] is False else 0


def cmd_sweep(args) -> int:
    config = _config(args)
    grid = {"n": args.grid_n, "eps": args.grid_eps, "c_gap": args.grid_c_gap}
    rows = sweep(config, grid, args.max_cells)
    if args.csv:
        write_rows(rows, args.csv)
    if args.json:
        save_json(rows, args.json)
    print(json.dumps(jsonable(rows), indent=1))
    return 1 if any(r["passed"] is False for r in rows) else 0


def cmd_export(args) -> int:
    inst = _instance(args)
    d = instance_to_dict(inst)
    if args.out:
        save_json(d, args.out)
    else:
        print(json.dumps(d, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pabc-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance and report assumption diagnostics")
    _add_instance(p)
    p.add_argument("--check", nargs="*", choices=ASSUMPTIONS, help="assumption checks to run (default all)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dp", help="optimal Q-function, value and gap")
    _add_instance(p)
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("pabc", help="run the constrained selector once")
    _add_instance(p)
    _add_selector(p, alpha=True)
    p.set_defaults(func=cmd_pabc)

    p = sub.add_parser("pabc-l", help="run the penalized selector once")
    _add_instance(p)
    _add_selector(p, alpha=False)
    p.set_defaults(func=cmd_pabc_l)

    p = sub.add_parser("pabc-oa", help="run the doubling search with online evaluation")
    _add_instance(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=40)
    p.add_argument("--initial-guess", default="horizon", choices=["horizon", "class-max"])
    p.add_argument("--compact", action="store_true")
    p.set_defaults(func=cmd_pabc_oa)

    p = sub.add_parser("eps", help="misspecification errors and regularity")
    _add_instance(p)
    p.set_defaults(func=cmd_eps)

    p = sub.add_parser("experiment", help="seeded trials scored against exact values")
    _add_config_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="aggregate rows over a grid of n, eps and C_gap")
    _add_config_flags(p)
    p.add_argument("--grid-n", type=int, nargs="+")
    p.add_argument("--grid-eps", type=float, nargs="+")
    p.add_argument("--grid-c-gap", type=float, nargs="+")
    p.add_argument("--max-cells", type=int, default=1000)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-instance", help="write an instance bundle as JSON")
    _add_instance(p)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssumptionError as err:
        for msg in err.failures:
            print(f"assumption check failed: {msg}", file=sys.stderr)
        return 2
    except EmptyVersionSpaceError as err:
        print(f"empty version space: {err}", file=sys.stderr)
        return 1
    except (ConfigError, InvalidMdpError, ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
