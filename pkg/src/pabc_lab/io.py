"""JSON schemas for MDPs, tables, classes, datasets and instance bundles.

MDP::

    {"horizon": H,
     "layers": [["x0"], ["xA", "xB"], ..., ["end"]],      # H + 1 layers
     "actions": {"x0": ["L", "R"], ...},
     "transitions": {"x0": {"L": {"xA": 1.0}, ...}, ...},
     "rewards": {"x0": {"L": 0.0, ...}, ...},
     "initial_state": "x0"}

Table stack::

    {"name": "Q*", "role": "value",
     "values": [{"x0": {"L": 1.0, "R": 0.0}}, ...]}       # one dict per timestep

Class file::

    {"mdp": "mdp.json", "kind": "function" | "weight",
     "members": [<table>, ...],
     "tie_choices": {"f": [[h, "state", "action"], ...]}} # optional

Dataset, ``"tuples"`` format (names) or ``"columnar"`` (indices, optional
multiplicities)::

    {"seed": 0, "n": 100, "format": "tuples",
     "layers": [[["x0", "L", 0.0, "xA"], ...], ...]}
    {"seed": 0, "n": 100, "format": "columnar",
     "layers": [{"states": [...], "actions": [...], "rewards": [...],
                 "next_states": [...], "counts": [...] | null}, ...]}

Floats are written with ``repr`` precision, so round trips are exact.
Infinite values are written as the strings ``"inf"``/``"-inf"``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .classes import FunctionClass, WeightClass
from .data import Dataset, Transitions
from .mdp import LayeredMdp, TimestepTable


def mdp_to_dict(mdp: LayeredMdp) -> dict:
    actions, transitions, rewards = {}, {}, {}
    for h in range(mdp.horizon):
        for s, x in enumerate(mdp.layers[h]):
            acts = mdp.actions[h][s]
            actions[x] = list(acts)
            transitions[x] = {
                a: {y: float(p) for y, p in zip(mdp.layers[h + 1], mdp.transitions[h][s, i]) if p != 0}
                for i, a in enumerate(acts)
            }
            rewards[x] = {a: float(mdp.rewards[h][s, i]) for i, a in enumerate(acts)}
    return {
        "horizon": mdp.horizon,
        "layers": [list(layer) for layer in mdp.layers],
        "actions": actions,
        "transitions": transitions,
        "rewards": rewards,
        "initial_state": mdp.layers[0][mdp.initial_state],
    }


def mdp_from_dict(d: dict) -> LayeredMdp:
    mdp = LayeredMdp.from_dicts(d["layers"], d["actions"], d["transitions"], d["rewards"], d["initial_state"])
    if "horizon" in d and d["horizon"] != mdp.horizon:
        raise ValueError(f"horizon {d['horizon']} does not match {len(d['layers'])} layers")
    return mdp


def table_to_dict(mdp: LayeredMdp, t: TimestepTable) -> dict:
    values = []
    for h in range(mdp.horizon):
        values.append({
            x: {a: float(t[h][s, i]) for i, a in enumerate(mdp.actions[h][s])}
            for s, x in enumerate(mdp.layers[h])
        })
    return {"name": t.name, "role": t.role, "values": values}


def table_from_dict(mdp: LayeredMdp, d: dict) -> TimestepTable:
    if len(d["values"]) != mdp.horizon:
        raise ValueError(f"table {d.get('name')!r} has {len(d['values'])} timesteps, MDP has {mdp.horizon}")
    arrays = []
    for h, layer in enumerate(d["values"]):
        v = np.zeros(mdp.shape(h))
        for x, row in layer.items():
            s = mdp.state_index(h, x)
            for a, val in row.items():
                v[s, mdp.action_index(h, s, a)] = float(val)
        arrays.append(v)
    return TimestepTable(tuple(arrays), role=d.get("role", "value"), name=d.get("name", ""))


def class_to_dict(cls, mdp_path: str | None = None) -> dict:
    mdp = cls.mdp
    out = {
        "mdp": mdp_path,
        "kind": "function" if isinstance(cls, FunctionClass) else "weight",
        "members": [table_to_dict(mdp, m) for m in cls],
    }
    if isinstance(cls, FunctionClass) and cls.tie_choices:
        out["tie_choices"] = {
            name: [[h, mdp.layers[h][s], mdp.actions[h][s][a]] for (h, s), a in ch.items()]
            for name, ch in cls.tie_choices.items()
        }
    return out


def class_from_dict(d: dict, mdp: LayeredMdp):
    members = tuple(table_from_dict(mdp, m) for m in d["members"])
    if d["kind"] == "weight":
        return WeightClass(mdp, members)
    ties = {}
    for name, entries in d.get("tie_choices", {}).items():
        ch = {}
        for h, x, a in entries:
            s = mdp.state_index(h, x)
            ch[(h, s)] = mdp.action_index(h, s, a)
        ties[name] = ch
    return FunctionClass(mdp, members, tie_choices=ties)


def load_class(path, mdp: LayeredMdp | None = None):
    """Load a class file, reading the MDP it references when none is given."""
    path = Path(path)
    d = json.loads(path.read_text())
    if mdp is None:
        if not d.get("mdp"):
            raise ValueError(f"{path} names no MDP file")
        mdp = load_mdp(path.parent / d["mdp"])
    return class_from_dict(d, mdp)


def dataset_to_dict(mdp: LayeredMdp, D: Dataset, columnar: bool | None = None) -> dict:
    columnar = D.compact if columnar is None else columnar
    if columnar:
        layers = [{
            "states": L.states.tolist(), "actions": L.actions.tolist(), "rewards": L.rewards.tolist(),
            "next_states": L.next_states.tolist(),
            "counts": None if L.counts is None else L.counts.tolist(),
        } for L in D.layers]
        return {"seed": D.seed, "n": D.n, "format": "columnar", "layers": layers}
    if D.compact:
        raise ValueError("a compact dataset can only be written in columnar form")
    layers = []
    for h, L in enumerate(D.layers):
        layers.append([
            [mdp.layers[h][s], mdp.actions[h][s][a], float(r), mdp.layers[h + 1][y]]
            for s, a, r, y in zip(L.states.tolist(), L.actions.tolist(), L.rewards.tolist(), L.next_states.tolist())
        ])
    return {"seed": D.seed, "n": D.n, "format": "tuples", "layers": layers}


def dataset_from_dict(mdp: LayeredMdp, d: dict) -> Dataset:
    layers = []
    if d["format"] == "columnar":
        for L in d["layers"]:
            counts = None if L["counts"] is None else np.array(L["counts"], dtype=np.int64)
            layers.append(Transitions(np.array(L["states"], dtype=np.int64), np.array(L["actions"], dtype=np.int64),
                                      np.array(L["rewards"], dtype=float),
                                      np.array(L["next_states"], dtype=np.int64), counts))
    else:
        for h, rows in enumerate(d["layers"]):
            s = [mdp.state_index(h, r[0]) for r in rows]
            a = [mdp.action_index(h, si, r[1]) for si, r in zip(s, rows)]
            y = [mdp.state_index(h + 1, r[3]) for r in rows]
            layers.append(Transitions(np.array(s, dtype=np.int64), np.array(a, dtype=np.int64),
                                      np.array([float(r[2]) for r in rows]), np.array(y, dtype=np.int64)))
    D = Dataset(tuple(layers), n=int(d["n"]), seed=int(d["seed"]))
    for h, L in enumerate(D.layers):
        if L.size != D.n:
            raise ValueError(f"timestep {h} holds {L.size} tuples, expected {D.n}")
    return D


def jsonable(obj):
    """Recursively convert numpy values and infinities for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def instance_to_dict(inst) -> dict:
    return {
        "name": inst.name,
        "mdp": mdp_to_dict(inst.mdp),
        "data_distribution": table_to_dict(inst.mdp, inst.dD),
        "F": class_to_dict(inst.F),
        "W": class_to_dict(inst.W),
        "annotations": jsonable(inst.annotations),
    }


def instance_from_dict(d: dict):
    from .instances import NamedInstance, annotate

    mdp = mdp_from_dict(d["mdp"])
    dD = table_from_dict(mdp, d["data_distribution"])
    F = class_from_dict(d["F"], mdp)
    W = class_from_dict(d["W"], mdp)
    return NamedInstance(d.get("name", "file"), mdp, dD, F, W, annotate(mdp, dD, F, W))


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=1, sort_keys=False) + "\n")


def load_mdp(path) -> LayeredMdp:
    d = json.loads(Path(path).read_text())
    return mdp_from_dict(d["mdp"] if "mdp" in d and isinstance(d["mdp"], dict) else d)


def save_mdp(mdp: LayeredMdp, path) -> None:
    save_json(mdp_to_dict(mdp), path)


def load_instance(path):
    return instance_from_dict(json.loads(Path(path).read_text()))
