"""Scenario configuration: one self-contained file drives every stage.

A scenario is a YAML (or JSON) mapping with sections for the domain, the
spline space, materials, the inclusion geometry, boundary loads, solver
knobs, estimator knobs, diagnostics, and optional sweep/convergence
configs.  Loading merges user values over defaults and validates; the
normalized mapping is echoed verbatim into every report so a run can be
reproduced from its own output.
"""

from __future__ import annotations

import copy
import pathlib
from dataclasses import dataclass

import numpy as np
import yaml

from ..geometry import (AxisRectangle, Disk, GeometryError, InclusionSet,
                        RectangleDomain, SimplePolygon)
from ..materials import (BendingOperators, IsotropicModuli, JumpClassification,
                         LengthScales, MaterialError, build_bending_operators,
                         classify_jump)
from ..solver import (BoundaryLoads, CoefficientField, PRESETS,
                      loads_from_preset, loads_from_table)
from ..splines import SplineSpace

SCENARIO_SCHEMA = "nanoplate.scenario/1"

DEFAULTS = {
    "schema": SCENARIO_SCHEMA,
    "name": "scenario",
    "domain": {"width": 1.0, "height": 1.0, "r0": 1.0, "x0": 0.0, "y0": 0.0},
    "space": {"degree": 3, "cells": [32, 32]},
    "material": {
        "background": {"mu": 1.0, "lam": 1.0},
        "scales": {"t": 0.05, "l0": 0.02, "l1": 0.02, "l2": 0.02},
    },
    "loads": {"preset": "self_equilibrated_shear", "params": {}},
    "solver": {"method": "direct", "compat_tol": 1.0e-10, "cut_depth": 4},
    "estimators": {"p": 2.0, "eps_disc": 0.1},
    "diagnostics": {},
    "seed": 0,
    "threads": None,
}


class ScenarioError(ValueError):
    """The scenario file cannot be turned into a runnable configuration."""


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _drop_default_preset(merged: dict, given: dict) -> dict:
    # a user-supplied load table replaces the defaulted preset rather
    # than coexisting with it (the two are mutually exclusive)
    lcfg = given.get("loads")
    if isinstance(lcfg, dict) and "table" in lcfg and "preset" not in lcfg:
        merged["loads"].pop("preset", None)
        merged["loads"].pop("params", None)
    return merged


@dataclass
class Scenario:
    """Normalized scenario mapping plus its source path."""

    cfg: dict
    path: str | None = None

    @property
    def name(self) -> str:
        return self.cfg["name"]

    def echo(self) -> dict:
        return copy.deepcopy(self.cfg)

    def derived(self, **section_updates) -> "Scenario":
        """Copy with whole config subtrees replaced (sweep plumbing)."""
        cfg = _drop_default_preset(_deep_merge(self.cfg, section_updates),
                                   section_updates)
        return Scenario(cfg=_validate(cfg), path=self.path)


def scenario_from_dict(cfg: dict, name: str | None = None) -> Scenario:
    if not isinstance(cfg, dict):
        raise ScenarioError("scenario must be a mapping")
    merged = _drop_default_preset(_deep_merge(DEFAULTS, cfg), cfg)
    if name and "name" not in cfg:
        merged["name"] = name
    return Scenario(cfg=_validate(merged))


def load_scenario(path) -> Scenario:
    p = pathlib.Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file does not parse: {exc}") from exc
    sc = scenario_from_dict(raw if raw is not None else {}, name=p.stem)
    sc.path = str(p)
    return sc


def apply_overrides(scenario: Scenario, overrides) -> Scenario:
    """Apply ``dotted.key=value`` strings; values parse as YAML scalars."""
    cfg = scenario.echo()
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"override value {text!r} does not parse") from exc
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if part.isdigit() and isinstance(node, list):
                node = node[int(part)]
                continue
            if not isinstance(node.get(part), (dict, list)):
                node[part] = {}
            node = node[part]
        last = parts[-1]
        if last.isdigit() and isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return Scenario(cfg=_validate(cfg), path=scenario.path)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioError(msg)


def _num(cfg: dict, key: str, where: str) -> float:
    val = cfg.get(key)
    _need(isinstance(val, (int, float)) and not isinstance(val, bool),
          f"{where}.{key} must be a number, got {val!r}")
    return float(val)


def _validate(cfg: dict) -> dict:
    schema = cfg.get("schema", SCENARIO_SCHEMA)
    _need(isinstance(schema, str) and schema.startswith("nanoplate.scenario/"),
          f"unrecognized scenario schema {schema!r}")
    _need(isinstance(cfg.get("name"), str) and cfg["name"],
          "scenario needs a nonempty name")

    dom = cfg["domain"]
    for key in ("width", "height", "r0"):
        _need(_num(dom, key, "domain") > 0, f"domain.{key} must be positive")

    sp = cfg["space"]
    _need(isinstance(sp.get("degree"), int) and sp["degree"] >= 3,
          "space.degree must be an integer >= 3 (third derivatives needed)")
    cells = sp.get("cells")
    _need(isinstance(cells, list) and len(cells) == 2
          and all(isinstance(c, int) and c >= 4 for c in cells),
          "space.cells must be two integers >= 4")

    mat = cfg["material"]
    for key in ("mu", "lam"):
        _num(mat["background"], key, "material.background")
    for key in ("t", "l0", "l1", "l2"):
        _need(_num(mat["scales"], key, "material.scales") >= 0,
              f"material.scales.{key} must be nonnegative")
    _need(mat["scales"]["t"] > 0, "material.scales.t must be positive")
    if "contrast" in mat and "inclusion" in mat:
        raise ScenarioError(
            "material.contrast and material.inclusion are mutually exclusive")
    if "contrast" in mat:
        _need(_num(mat, "contrast", "material") > 0,
              "material.contrast must be positive")

    if "inclusion" in cfg:
        inc = cfg["inclusion"]
        shapes = inc.get("shapes")
        _need(isinstance(shapes, list) and shapes,
              "inclusion.shapes must be a nonempty list")
        for shape in shapes:
            _need(isinstance(shape, dict) and shape.get("kind") in
                  ("disk", "rect", "polygon"),
                  f"unknown inclusion shape {shape!r}")
        inc.setdefault("d0", 0.1)
        _need(_num(inc, "d0", "inclusion") >= 0, "inclusion.d0 must be >= 0")

    loads = cfg["loads"]
    has_preset = "preset" in loads
    has_table = "table" in loads
    _need(has_preset != has_table,
          "loads needs exactly one of 'preset' or 'table'")
    if has_preset:
        _need(loads["preset"] in PRESETS,
              f"unknown load preset {loads['preset']!r}; "
              f"known: {sorted(PRESETS)}")
        _need(isinstance(loads.get("params", {}), dict),
              "loads.params must be a mapping")
    else:
        tbl = loads["table"]
        for key in ("edges", "s", "v"):
            _need(key in tbl, f"loads.table.{key} is required")

    sol = cfg["solver"]
    _need(sol.get("method") in ("direct", "cg"),
          f"solver.method must be direct or cg, got {sol.get('method')!r}")
    _need(isinstance(sol.get("cut_depth"), int) and 1 <= sol["cut_depth"] <= 6,
          "solver.cut_depth must be an integer in 1..6")

    est = cfg["estimators"]
    _need(_num(est, "p", "estimators") >= 1.0, "estimators.p must be >= 1")
    _need(_num(est, "eps_disc", "estimators") >= 0,
          "estimators.eps_disc must be >= 0")

    if "sweep" in cfg:
        sw = cfg["sweep"]
        _need(sw.get("axis") in ("radius", "contrast"),
              "sweep.axis must be 'radius' or 'contrast'")
        vals = sw.get("values")
        _need(isinstance(vals, list) and len(vals) >= 1
              and all(isinstance(v, (int, float)) for v in vals),
              "sweep.values must be a list of numbers")
        if sw["axis"] == "radius":
            _need("inclusion" in cfg
                  and cfg["inclusion"]["shapes"][0]["kind"] == "disk",
                  "radius sweeps need a disk as the first inclusion shape")

    if "convergence" in cfg:
        cv = cfg["convergence"]
        meshes = cv.get("meshes")
        _need(isinstance(meshes, list) and len(meshes) >= 2
              and all(isinstance(m, int) and m >= 4 for m in meshes),
              "convergence.meshes must be >= 2 integers >= 4")

    _need(isinstance(cfg.get("seed"), int), "seed must be an integer")
    return cfg


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _build_shape(shape: dict):
    kind = shape["kind"]
    if kind == "disk":
        return Disk(center=tuple(shape["center"]), radius=float(shape["radius"]))
    if kind == "rect":
        return AxisRectangle(center=tuple(shape["center"]),
                             half_widths=tuple(shape["half_widths"]))
    return SimplePolygon(vertices=np.asarray(shape["vertices"], dtype=float))


@dataclass
class BuiltScenario:
    """Everything instantiated from a scenario, ready to run."""

    scenario: Scenario
    domain: RectangleDomain
    space: SplineSpace
    background: BendingOperators
    inclusion_ops: BendingOperators | None
    classification: JumpClassification | None
    inclusion: InclusionSet | None
    field: CoefficientField
    field0: CoefficientField
    loads: BoundaryLoads

    @property
    def has_inclusion(self) -> bool:
        return self.inclusion is not None


def build(scenario: Scenario) -> BuiltScenario:
    """Instantiate domain, space, materials, geometry and loads.

    Domain-model violations (bad moduli, inclusion touching the wall)
    are scenario errors here: the file asked for something the model
    refuses to represent.
    """
    cfg = scenario.cfg
    try:
        dom = cfg["domain"]
        domain = RectangleDomain(width=dom["width"], height=dom["height"],
                                 r0=dom["r0"], x0=dom.get("x0", 0.0),
                                 y0=dom.get("y0", 0.0), m1=dom.get("m1"))
        sp = cfg["space"]
        space = SplineSpace.on_rectangle(sp["degree"], sp["cells"][0],
                                         sp["cells"][1], domain.x0, domain.y0,
                                         domain.width, domain.height)

        mat = cfg["material"]
        moduli = IsotropicModuli(mu=mat["background"]["mu"],
                                 lam=mat["background"]["lam"])
        sc = mat["scales"]
        scales = LengthScales(t=sc["t"], l0=sc["l0"], l1=sc["l1"], l2=sc["l2"])
        bg_ops = build_bending_operators(moduli, scales,
                                         q8=mat.get("q8"), q9=mat.get("q9"))

        inc_ops = None
        if "contrast" in mat:
            inc_ops = build_bending_operators(moduli.scaled(mat["contrast"]),
                                              scales)
        elif "inclusion" in mat:
            im = mat["inclusion"]
            inc_ops = build_bending_operators(
                IsotropicModuli(mu=im["mu"], lam=im["lam"]), scales)

        inclusion = None
        if "inclusion" in cfg:
            inc_cfg = cfg["inclusion"]
            inclusion = InclusionSet(
                primitives=tuple(_build_shape(s) for s in inc_cfg["shapes"]),
                d0=inc_cfg["d0"])
            inclusion.validate_in_domain(domain)
            if inc_ops is None:
                raise ScenarioError(
                    "inclusion geometry given but no inclusion material "
                    "(set material.contrast or material.inclusion)")

        classification = (classify_jump(bg_ops, inc_ops)
                          if inc_ops is not None else None)

        cut_depth = cfg["solver"]["cut_depth"]
        if inclusion is not None:
            field = CoefficientField(background=bg_ops, inclusion_ops=inc_ops,
                                     inclusion=inclusion, cut_depth=cut_depth)
            field0 = field.without_inclusion()
        else:
            field = field0 = CoefficientField(background=bg_ops,
                                              cut_depth=cut_depth)

        lcfg = cfg["loads"]
        if "preset" in lcfg:
            loads = loads_from_preset(lcfg["preset"], domain,
                                      **lcfg.get("params", {}))
        else:
            tbl = lcfg["table"]
            zeros = [0.0] * len(tbl["v"])
            loads = loads_from_table(
                domain, tbl["edges"], tbl["s"], tbl["v"],
                tbl["mn"] if tbl.get("mn") is not None else zeros,
                tbl["mhn"] if tbl.get("mhn") is not None else zeros,
                project=tbl.get("project", True))
    except ScenarioError:
        raise
    except (MaterialError, GeometryError, ValueError) as exc:
        raise ScenarioError(f"scenario rejected: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"scenario structure invalid: {exc!r}") from exc

    return BuiltScenario(scenario=scenario, domain=domain, space=space,
                         background=bg_ops, inclusion_ops=inc_ops,
                         classification=classification, inclusion=inclusion,
                         field=field, field0=field0, loads=loads)
