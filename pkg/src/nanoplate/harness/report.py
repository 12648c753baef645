"""Report emission: structured JSONL records, a flat CSV summary, figures.

Every JSONL record carries the report schema id, the record kind, the
data payload, and per-numeric-field units and tolerance-regime labels.
The CSV summary has a pinned column set so downstream tooling can rely
on it.  Figures are rendered headlessly next to the delimited output.
"""

from __future__ import annotations

import csv
import json
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from ..solver import save_solution  # noqa: E402
from .runner import (ConvergenceResult, DiagnoseResult, SolveResult,
                     SweepResult)  # noqa: E402

REPORT_SCHEMA = "nanoplate.report/1"
SUMMARY_SCHEMA = "nanoplate.summary/1"
SUMMARY_COLUMNS = ["area", "W", "W0", "gap", "rhoLower", "rhoUpperFat",
                   "rhoUpperGeneral", "F", "bracketLow", "bracketHigh"]

# unit tags are relative to the model unit system: F force, L length,
# U displacement; tolerance regimes name the guarantee each number is
# held to by the test suite.
TOL_DETERMINISM = "rerun determinism <= 1e-12 relative"
TOL_GOLDEN = "golden baseline <= 2% relative"
TOL_INFORMATIONAL = "informational; not reproducible"

WORK_UNITS = {
    "W": "F*L", "W0": "F*L", "gap": "F*L",
    "energy_residual_u": "dimensionless", "energy_residual_u0": "dimensionless",
    "I_D": "U^2", "bracketLow": "F*L", "bracketHigh": "F*L",
    "rhoLower": "L^2", "rhoLowerW0": "L^2", "rhoUpperFat": "L^2",
    "rhoUpperGeneral": "L^2", "p_used": "dimensionless", "F": "dimensionless",
}
WORK_TOL = {
    "gap": "sign law slack 1e-8*W0",
    "bracketLow": "sandwich slack factor 1.1",
    "bracketHigh": "sandwich slack factor 1.1",
    "energy_residual_u": "identity <= 1e-8 relative",
    "energy_residual_u0": "identity <= 1e-8 relative",
}


def _record(kind: str, data: dict, units: dict | None = None,
            tolerance: dict | None = None, default_tol=TOL_DETERMINISM) -> dict:
    units = dict(units or {})
    tolerance = dict(tolerance or {})
    for key, val in data.items():
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            units.setdefault(key, "dimensionless")
            tolerance.setdefault(key, default_tol)
    return {"schema": REPORT_SCHEMA, "record": kind, "data": data,
            "units": units, "tolerance": tolerance}


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_id"] + SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([SUMMARY_SCHEMA]
                            + [_csv_cell(row.get(c)) for c in SUMMARY_COLUMNS])


def _summary_row(area, work) -> dict:
    return {"area": area, "W": work.w, "W0": work.w0, "gap": work.gap,
            "rhoLower": work.rho_lower, "rhoUpperFat": work.rho_upper_fat,
            "rhoUpperGeneral": work.rho_upper_general, "F": work.f_value,
            "bracketLow": work.bracket_low, "bracketHigh": work.bracket_high}


def _timing_record(timings: dict) -> dict:
    return _record("timings", dict(timings),
                   units={k: "s" for k in timings},
                   default_tol=TOL_INFORMATIONAL)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def render_fields_figure(path, result: SolveResult, n: int = 96) -> None:
    built = result.built
    x0, x1, y0, y1 = built.domain.bounds
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    for ax, sol, title in ((axes[0], result.u0, "unperturbed u0"),
                           (axes[1], result.u, "with inclusion u")):
        z = sol.evaluate(pts, max_order=0)[:, 0].reshape(n, n)
        im = ax.pcolormesh(gx, gy, z, shading="auto")
        fig.colorbar(im, ax=ax, shrink=0.85)
        if built.inclusion is not None:
            chi = built.inclusion.indicator(pts).astype(float).reshape(n, n)
            ax.contour(gx, gy, chi, levels=[0.5], colors="k", linewidths=1.0)
        ax.set_aspect("equal")
        ax.set_title(title)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sweep_figure(path, result: SweepResult) -> None:
    areas = np.array([p.area for p in result.points])
    ratios = np.array([abs(p.work.gap) / p.work.w0 for p in result.points])
    fig, ax = plt.subplots(figsize=(5.5, 4.2), constrained_layout=True)
    if result.axis == "radius" and np.all(ratios > 0):
        ax.loglog(areas, ratios, "o", label="measured")
        if result.calibration is not None:
            c = result.calibration
            fit = np.exp(c.intercept) * areas ** c.slope
            ax.loglog(areas, fit, "--",
                      label=f"fit slope {c.slope:.3f}")
        ax.set_xlabel("inclusion area")
    else:
        values = [p.value for p in result.points]
        ax.plot(values, ratios, "o-")
        ax.set_xlabel(result.axis)
    ax.set_ylabel("|W0 - W| / W0")
    ax.grid(True, which="both", alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_convergence_figure(path, result: ConvergenceResult) -> None:
    hs = np.array([r.h for r in result.rows])
    fig, ax = plt.subplots(figsize=(5.5, 4.2), constrained_layout=True)
    for name, label in (("err_l2", "L2"), ("err_h2", "H2 semi"),
                        ("err_h3", "H3 semi")):
        errs = [getattr(r, name) for r in result.rows]
        ax.loglog(hs, errs, "o-", label=label)
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_doubling_figure(path, result: DiagnoseResult) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    for probe in result.report.probes:
        label = f"({probe.probe.center[0]:.2f},{probe.probe.center[1]:.2f})"
        axes[0].loglog(probe.radii, np.maximum(probe.h_table, 1e-300),
                       "o-", label=label)
        mid = probe.radii[:-1]
        axes[1].semilogx(mid, probe.ratios_hessian, "o-", label=label)
    axes[0].set_xlabel("r")
    axes[0].set_ylabel("H(r)")
    axes[1].axhline(4.0, color="k", lw=0.8, ls="--")
    axes[1].set_xlabel("r")
    axes[1].set_ylabel("H(2r)/H(r)")
    for ax in axes:
        ax.grid(True, which="both", alpha=0.3)
    if result.report.probes:
        axes[0].legend(fontsize=8)
    fig.savefig(path, dpi=130)
    plt.close(fig)


# ---------------------------------------------------------------------------
# per-stage writers
# ---------------------------------------------------------------------------

def _scenario_records(scenario) -> list[dict]:
    return [_record("scenario", scenario.echo(), default_tol=TOL_DETERMINISM)]


def write_solve_outputs(outdir, scenario, result: SolveResult) -> dict:
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = scenario.name
    records = _scenario_records(scenario)
    work_rec = result.work.to_record()
    records.append(_record("work", work_rec, units=WORK_UNITS,
                           tolerance=WORK_TOL))
    records.append(_record("frequency", {
        "F": result.frequency.f, "numerator": result.frequency.numerator,
        "denominator": result.frequency.denominator},
        units={"F": "dimensionless"}))
    records.append(_record("solver", dict(result.u0.diagnostics),
                           default_tol=TOL_INFORMATIONAL))
    records.append(_timing_record(result.timings))

    paths = {
        "jsonl": out / f"{name}_solve.jsonl",
        "csv": out / f"{name}_summary.csv",
        "figure": out / f"{name}_fields.png",
        "snapshot_u0": out / f"{name}_u0.npz",
        "snapshot_u": out / f"{name}_u.npz",
    }
    write_jsonl(paths["jsonl"], records)
    area = result.built.inclusion.area() if result.built.inclusion else 0.0
    write_summary_csv(paths["csv"], [_summary_row(area, result.work)])
    render_fields_figure(paths["figure"], result)
    save_solution(paths["snapshot_u0"], result.u0, {"role": "u0"})
    if result.u is not result.u0:
        save_solution(paths["snapshot_u"], result.u, {"role": "u"})
    else:
        paths.pop("snapshot_u")
    return {k: str(v) for k, v in paths.items()}


def write_sweep_outputs(outdir, scenario, result: SweepResult) -> dict:
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = scenario.name
    records = _scenario_records(scenario)
    rows = []
    for p in result.points:
        data = {"axis": result.axis, "value": p.value, "area": p.area}
        data.update(p.work.to_record())
        records.append(_record("sweep_point", data, units=dict(
            WORK_UNITS, value="axis units", area="L^2"), tolerance=WORK_TOL))
        row = _summary_row(p.area, p.work)
        row["F"] = result.frequency.f
        rows.append(row)
    if result.calibration is not None:
        records.append(_record("calibration", result.calibration.to_record(),
                               units={"C_low": "dimensionless",
                                      "C_up": "dimensionless",
                                      "slope": "dimensionless"}))
    records.append(_timing_record(result.timings))

    paths = {
        "jsonl": out / f"{name}_sweep.jsonl",
        "csv": out / f"{name}_summary.csv",
        "figure": out / f"{name}_sweep.png",
    }
    write_jsonl(paths["jsonl"], records)
    write_summary_csv(paths["csv"], rows)
    render_sweep_figure(paths["figure"], result)
    return {k: str(v) for k, v in paths.items()}


def write_convergence_outputs(outdir, scenario, result: ConvergenceResult) -> dict:
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = scenario.name
    records = _scenario_records(scenario)
    for row in result.rows:
        records.append(_record("convergence_row", {
            "cells": row.cells, "h": row.h, "err_l2": row.err_l2,
            "err_h2": row.err_h2, "err_h3": row.err_h3},
            units={"h": "L", "err_l2": "U*L", "err_h2": "U/L",
                   "err_h3": "U/L^2", "cells": "count"}))
    records.append(_record("convergence_orders", {
        "orders": result.orders, "monotone": result.monotone,
        "exact": result.exact_expr}))
    records.append(_timing_record(result.timings))

    paths = {
        "jsonl": out / f"{name}_convergence.jsonl",
        "csv": out / f"{name}_convergence.csv",
        "figure": out / f"{name}_convergence.png",
    }
    write_jsonl(paths["jsonl"], records)
    with open(paths["csv"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_id", "cells", "h", "err_l2", "err_h2",
                         "err_h3"])
        for row in result.rows:
            writer.writerow([SUMMARY_SCHEMA, row.cells, repr(row.h),
                             repr(row.err_l2), repr(row.err_h2),
                             repr(row.err_h3)])
    render_convergence_figure(paths["figure"], result)
    return {k: str(v) for k, v in paths.items()}


def write_diagnose_outputs(outdir, scenario, result: DiagnoseResult) -> dict:
    out = pathlib.Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = scenario.name
    records = _scenario_records(scenario)
    rep = result.report
    for probe in rep.probes:
        records.append(_record("probe", probe.to_record(),
                               units={"K_emp": "dimensionless",
                                      "N": "dimensionless",
                                      "N_bar": "dimensionless",
                                      "clearance": "L"},
                               tolerance={"K_emp": TOL_GOLDEN,
                                          "N": TOL_GOLDEN,
                                          "N_bar": TOL_GOLDEN},
                               default_tol=TOL_GOLDEN))
    for ts in rep.three_sphere:
        records.append(_record("three_sphere", ts.to_record(),
                               units={"s": "L", "r": "L", "R": "L"},
                               default_tol=TOL_GOLDEN))
    for lps in rep.lps:
        records.append(_record("lps", lps.to_record(),
                               units={"C_s": "dimensionless"},
                               default_tol=TOL_GOLDEN))
    for ap in rep.ap:
        records.append(_record("ap", ap.to_record(),
                               units={"B_emp": "dimensionless"},
                               default_tol=TOL_GOLDEN))
    if rep.classical is not None:
        records.append(_record("classical", rep.classical.to_record(),
                               default_tol=TOL_GOLDEN))
    for err in rep.errors:
        records.append(_record("diagnostics_error", dict(err),
                               default_tol=TOL_INFORMATIONAL))
    records.append(_timing_record(result.timings))

    paths = {
        "jsonl": out / f"{name}_diagnose.jsonl",
        "figure": out / f"{name}_doubling.png",
    }
    write_jsonl(paths["jsonl"], records)
    render_doubling_figure(paths["figure"], result)
    return {k: str(v) for k, v in paths.items()}
