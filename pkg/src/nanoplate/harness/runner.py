"""Experiment orchestration: solve, sweep, convergence, diagnose, calibrate.

Each run_* function takes a validated Scenario and returns a result
dataclass holding the module-level reports; serialization and figure
rendering live in the report module.  Stage failures surface as the
module exceptions with the failing stage named, so the CLI can map them
to exit codes; inside the diagnose stage, per-probe failures are
recorded and the run continues.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import sympy

from ..estimates import (CalibrationReport, EstimatorError, FrequencyReport,
                         WorkReport, calibrate, compute_works,
                         energy_lemma_check, f_ratio, size_estimators)
from ..fields import AnalyticField
from ..geometry import RectangleDomain
from ..materials import JumpClassification
from ..solver import Solution, manufactured_problem, solve
from ..splines import gauss_rule
from .. import ucp
from .scenario import BuiltScenario, Scenario, ScenarioError, build

NULL_JUMP_TOL = 1e-10


def _stage(name: str, exc: Exception) -> Exception:
    exc.args = (f"[stage {name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
    return exc


def _is_null_jump(classification: JumpClassification | None) -> bool:
    if classification is None:
        return True
    biggest = max(np.max(np.abs(classification.g_p)),
                  np.max(np.abs(classification.g_q)))
    return biggest <= NULL_JUMP_TOL


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    built: BuiltScenario
    u: Solution
    u0: Solution
    work: WorkReport
    frequency: FrequencyReport
    timings: dict


def run_solve(scenario: Scenario, reuse_u0: Solution | None = None) -> SolveResult:
    """Both solves plus works, bracket, estimators and the data ratio F."""
    built = build(scenario)
    solver_cfg = scenario.cfg["solver"]
    est_cfg = scenario.cfg["estimators"]
    timings = {}

    t0 = time.perf_counter()
    if reuse_u0 is None:
        u0 = solve(built.space, built.field0, loads=built.loads,
                   method=solver_cfg["method"],
                   compat_tol=solver_cfg["compat_tol"])
    else:
        u0 = reuse_u0
    timings["solve_u0_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if built.has_inclusion:
        u = solve(built.space, built.field, loads=built.loads,
                  method=solver_cfg["method"], check_compat=False)
    else:
        u = u0
    timings["solve_u_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        report = compute_works(u, u0)
        cls = built.classification
        if built.has_inclusion and not _is_null_jump(cls):
            report = energy_lemma_check(report, u0, cls,
                                        built.background.scales,
                                        built.inclusion,
                                        eps_disc=est_cfg["eps_disc"])
            report = size_estimators(report, built.domain, cls,
                                     p=est_cfg["p"])
        elif built.has_inclusion:
            _null_jump_ratios(report, built.domain, est_cfg["p"])
        freq = f_ratio(built.loads, built.domain)
        report.f_value = freq.f
    except EstimatorError as exc:
        raise _stage("estimates", exc)
    timings["estimates_seconds"] = time.perf_counter() - t0
    for key in ("assemble_seconds", "solve_seconds"):
        timings[f"u0_{key}"] = u0.diagnostics[key]
        timings[f"u_{key}"] = u.diagnostics[key]
    return SolveResult(built=built, u=u, u0=u0, work=report,
                       frequency=freq, timings=timings)


def _null_jump_ratios(report: WorkReport, domain: RectangleDomain,
                      p: float) -> None:
    """Estimator ratios when the inclusion material equals the background.

    No classification branch applies; the gap is numerically zero and
    every ratio degenerates to (near) zero, which the report states
    outright instead of refusing.
    """
    ratio = abs(report.gap) / abs(report.w0)
    r2 = domain.r0 ** 2
    report.rho_lower = r2 * abs(report.gap) / abs(report.w)
    report.rho_lower_w0 = r2 * ratio
    report.rho_upper_fat = r2 * ratio
    report.rho_upper_general = r2 * ratio ** (1.0 / p)
    report.p_used = p
    report.jump_kind = "Null"


# ---------------------------------------------------------------------------
# sweep and calibrate
# ---------------------------------------------------------------------------

@dataclass
class SweepPoint:
    value: float
    area: float
    work: WorkReport


@dataclass
class SweepResult:
    axis: str
    points: list
    calibration: CalibrationReport | None
    frequency: FrequencyReport
    base: BuiltScenario
    timings: dict


def _sweep_scenarios(scenario: Scenario):
    sw = scenario.cfg["sweep"]
    axis, values = sw["axis"], sw["values"]
    for v in values:
        if axis == "radius":
            shapes = [dict(s) for s in scenario.cfg["inclusion"]["shapes"]]
            shapes[0] = dict(shapes[0], radius=float(v))
            yield float(v), scenario.derived(inclusion={"shapes": shapes})
        else:
            yield float(v), scenario.derived(material={"contrast": float(v)})


def run_sweep(scenario: Scenario) -> SweepResult:
    """Per-point solve reports plus calibration constants on an area sweep.

    The unperturbed solve depends only on the space and the loads, which
    the sweep never varies, so it is computed once and shared.
    """
    if "sweep" not in scenario.cfg:
        raise ScenarioError("scenario has no sweep section")
    sw = scenario.cfg["sweep"]
    if len(sw["values"]) < 3:
        raise ScenarioError(
            f"sweep needs at least 3 points, got {len(sw['values'])}")

    t_start = time.perf_counter()
    points = []
    u0 = None
    base = None
    freq = None
    for value, sub in _sweep_scenarios(scenario):
        res = run_solve(sub, reuse_u0=u0)
        u0, freq = res.u0, res.frequency
        if base is None:
            base = res.built
        points.append(SweepPoint(value=value, area=res.built.inclusion.area(),
                                 work=res.work))

    calibration = None
    if sw["axis"] == "radius":
        try:
            calibration = calibrate([(p.area, p.work) for p in points])
        except EstimatorError as exc:
            raise _stage("calibrate", exc)
    timings = {"sweep_seconds": time.perf_counter() - t_start}
    return SweepResult(axis=sw["axis"], points=points, calibration=calibration,
                       frequency=freq, base=base, timings=timings)


def run_calibrate(scenario: Scenario) -> SweepResult:
    """Sweep wrapper whose deliverable is the calibration summary."""
    result = run_sweep(scenario)
    if result.calibration is None:
        raise _stage("calibrate", EstimatorError(
            "contrast sweeps have constant area; calibration undefined"))
    return result


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    cells: int
    h: float
    err_l2: float
    err_h2: float
    err_h3: float


@dataclass
class ConvergenceResult:
    rows: list
    orders: dict
    monotone: bool
    exact_expr: str
    timings: dict


def _error_norms(solution: Solution, exact: AnalyticField) -> tuple[float, float, float]:
    """L2 error and H2/H3 seminorm errors against an analytic solution."""
    space = solution.space
    nq = space.degree + 3
    acc = np.zeros(3)
    for cx, cy in space.cells():
        ax, bx, ay, by = space.cell_rect(cx, cy)
        gx, wx = gauss_rule(nq, ax, bx)
        gy, wy = gauss_rule(nq, ay, by)
        px, py = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([px.ravel(), py.ravel()])
        w = np.outer(wx, wy).ravel()
        diff = solution.evaluate(pts, 3) - exact.evaluate(pts, 3)
        acc[0] += w @ diff[:, 0] ** 2
        acc[1] += w @ (diff[:, 3] ** 2 + 2 * diff[:, 4] ** 2 + diff[:, 5] ** 2)
        acc[2] += w @ (diff[:, 6] ** 2 + 3 * diff[:, 7] ** 2
                       + 3 * diff[:, 8] ** 2 + diff[:, 9] ** 2)
    return tuple(np.sqrt(acc))


def run_convergence(scenario: Scenario) -> ConvergenceResult:
    """Manufactured-solution errors over a mesh family, with observed orders.

    The exact solution is a single cosine bump fitted to the rectangle;
    its third derivatives vanish at the corners, so the derived natural
    boundary data is complete and the volume load matches the strong
    form exactly.
    """
    if "convergence" not in scenario.cfg:
        raise ScenarioError("scenario has no convergence section")
    cfg = scenario.cfg["convergence"]
    built = build(scenario)
    domain, ops = built.domain, built.background

    x, y = sympy.symbols("x y")
    expr = (sympy.cos(sympy.pi * (x - domain.x0) / domain.width)
            * sympy.cos(sympy.pi * (y - domain.y0) / domain.height))
    mp = manufactured_problem(expr, ops, domain)

    t_start = time.perf_counter()
    rows = []
    degree = scenario.cfg["space"]["degree"]
    for m in cfg["meshes"]:
        sub = scenario.derived(space={"degree": degree, "cells": [m, m]})
        b = build(sub)
        sol = solve(b.space, b.field0, loads=mp.loads, volume=mp.volume,
                    method=scenario.cfg["solver"]["method"])
        e0, e2, e3 = _error_norms(sol, mp.exact)
        h = max(domain.width / m, domain.height / m)
        rows.append(ConvergenceRow(cells=m, h=h, err_l2=e0, err_h2=e2,
                                   err_h3=e3))

    orders = {}
    for name in ("err_l2", "err_h2", "err_h3"):
        seq = []
        for a, b_ in zip(rows[:-1], rows[1:]):
            ea, eb = getattr(a, name), getattr(b_, name)
            if eb <= 0 or ea <= 0:
                seq.append(float("nan"))
            else:
                seq.append(math.log(ea / eb) / math.log(a.h / b_.h))
        orders[name] = seq
    monotone = all(getattr(a, n) >= getattr(b_, n) * (1 - 1e-12)
                   for n in ("err_l2", "err_h2", "err_h3")
                   for a, b_ in zip(rows[:-1], rows[1:]))
    return ConvergenceResult(rows=rows, orders=orders, monotone=monotone,
                             exact_expr=str(expr),
                             timings={"convergence_seconds":
                                      time.perf_counter() - t_start})


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

@dataclass
class DiagnoseResult:
    report: ucp.UcpReport
    built: BuiltScenario
    field: object
    synthetic: bool
    timings: dict


def _diag_field(scenario: Scenario, built: BuiltScenario):
    """The field to diagnose: a synthetic polynomial or the u0 solve."""
    dcfg = scenario.cfg["diagnostics"]
    syn = dcfg.get("synthetic")
    if syn:
        params = {k: syn.get(k, 0.0) for k in ("h11", "h12", "h22")}
        grad = tuple(syn.get("grad", (0.0, 0.0)))
        return AnalyticField.quadratic(**params, grad=grad,
                                       value=syn.get("value", 0.0)), True
    sol = solve(built.space, built.field0, loads=built.loads,
                method=scenario.cfg["solver"]["method"],
                compat_tol=scenario.cfg["solver"]["compat_tol"])
    return sol, False


def run_diagnose(scenario: Scenario) -> DiagnoseResult:
    """Full diagnostics pass with per-stage error isolation.

    A probe too close to the wall, a degenerate quotient, or a refused
    stage is recorded in the report's error list and the run continues;
    only a scenario in which every requested stage fails raises.
    """
    built = build(scenario)
    dcfg = scenario.cfg["diagnostics"]
    t_start = time.perf_counter()
    field, synthetic = _diag_field(scenario, built)
    report = ucp.UcpReport()
    domain = built.domain
    cell = min(domain.width / scenario.cfg["space"]["cells"][0],
               domain.height / scenario.cfg["space"]["cells"][1])
    resolution = None if synthetic else cell
    attempted = succeeded = 0

    pcfg = dcfg.get("probes", {})
    centers = pcfg.get("centers")
    if centers is None:
        centers = ucp.probe_grid(domain, tuple(pcfg.get("grid", (3, 3))))
    n_dyadic = pcfg.get("n_dyadic", ucp.DEFAULT_N_DYADIC)
    probes = []
    for c in centers:
        attempted += 1
        try:
            probes.append(ucp.make_probe(domain, tuple(c), cell, n_dyadic))
            succeeded += 1
        except ucp.DiagnosticsError as exc:
            report.errors.append({"stage": "probe", "center": list(c),
                                  "error": str(exc)})
    if probes:
        try:
            report.probes = ucp.doubling_scan(field, probes, resolution)
        except ucp.DiagnosticsError as exc:
            report.errors.append({"stage": "doubling", "error": str(exc)})

    for probe in probes:
        for kind in ("hessian", "value"):
            attempted += 1
            outer = probe.outer_radius
            s = outer / 2 ** ucp.THREE_SPHERE_DEPTH[kind]
            try:
                report.three_sphere.append(ucp.three_sphere_check(
                    field, probe, s=s, r=0.5 * s, kind=kind,
                    resolution=resolution))
                succeeded += 1
            except ucp.DiagnosticsError as exc:
                report.errors.append({"stage": f"three_sphere_{kind}",
                                      "center": list(probe.center),
                                      "error": str(exc)})

    lcfg = dcfg.get("lps", {})
    total = None
    for s in lcfg.get("s", [0.05, 0.1]):
        attempted += 1
        try:
            res = ucp.lps_constant(field, float(s), domain,
                                   chi=lcfg.get("chi", 2.0),
                                   grid_shape=tuple(lcfg.get("grid", (7, 7))),
                                   resolution=resolution, total=total)
            total = res.total
            report.lps.append(res)
            succeeded += 1
        except ucp.DiagnosticsError as exc:
            report.errors.append({"stage": "lps", "s": float(s),
                                  "error": str(exc)})

    if probes:
        for p in dcfg.get("ap", {}).get("p", [2.0]):
            attempted += 1
            try:
                report.ap.append(ucp.ap_check(field, probes, p=float(p),
                                              domain=domain,
                                              resolution=resolution))
                succeeded += 1
            except ucp.DiagnosticsError as exc:
                report.errors.append({"stage": "ap", "p": float(p),
                                      "error": str(exc)})

    ccfg = dcfg.get("classical")
    if ccfg:
        attempted += 1
        try:
            report.classical = ucp.classical_inequality_checks(
                field, tuple(ccfg["center"]), float(ccfg["r"]),
                domain=domain, r0=domain.r0, resolution=resolution,
                h_max=ccfg.get("h_max"))
            succeeded += 1
        except ucp.DiagnosticsError as exc:
            report.errors.append({"stage": "classical", "error": str(exc)})

    if attempted and not succeeded:
        raise ucp.DiagnosticsError(
            "all diagnostics stages failed; first error: "
            f"{report.errors[0] if report.errors else 'none recorded'}")
    timings = {"diagnose_seconds": time.perf_counter() - t_start}
    return DiagnoseResult(report=report, built=built, field=field,
                          synthetic=synthetic, timings=timings)
