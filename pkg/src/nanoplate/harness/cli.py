"""Command line entry points.

Exit codes: 0 success, 2 invalid scenario, 3 incompatible loads,
4 solver failure, 5 diagnostics or estimator failure.
"""

from __future__ import annotations

import functools
import sys

import click

from ..estimates import EstimatorError
from ..solver import IncompatibleLoadsError, SolverError
from ..ucp import DiagnosticsError
from . import report, runner
from .scenario import Scenario, ScenarioError, apply_overrides, load_scenario

EXIT_INVALID_SCENARIO = 2
EXIT_INCOMPATIBLE_LOADS = 3
EXIT_SOLVER_FAILURE = 4
EXIT_DIAGNOSTICS_FAILURE = 5


def _load(scenario_path, seed, threads, overrides) -> Scenario:
    sc = load_scenario(scenario_path)
    if overrides:
        sc = apply_overrides(sc, overrides)
    if seed is not None:
        sc = apply_overrides(sc, [f"seed={seed}"])
    if threads is not None:
        sc = apply_overrides(sc, [f"threads={threads}"])
    return sc


def _fail(code: int, exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def scenario_command(fn):
    """Shared flags plus the error-to-exit-code mapping."""

    @click.option("--scenario", "scenario_path", required=True,
                  type=click.Path(), help="scenario file (YAML or JSON)")
    @click.option("--out", "outdir", default="out", show_default=True,
                  type=click.Path(), help="output directory")
    @click.option("--threads", type=int, default=None,
                  help="recorded thread budget (computation is deterministic)")
    @click.option("--seed", type=int, default=None,
                  help="override the scenario seed")
    @click.option("--override", "overrides", multiple=True, metavar="KEY=VAL",
                  help="override a scenario entry, e.g. space.degree=4")
    @functools.wraps(fn)
    def wrapper(scenario_path, outdir, threads, seed, overrides, **kwargs):
        try:
            scenario = _load(scenario_path, seed, threads, overrides)
            fn(scenario, outdir, **kwargs)
        except ScenarioError as exc:
            _fail(EXIT_INVALID_SCENARIO, exc)
        except IncompatibleLoadsError as exc:
            _fail(EXIT_INCOMPATIBLE_LOADS, exc)
        except SolverError as exc:
            _fail(EXIT_SOLVER_FAILURE, exc)
        except (DiagnosticsError, EstimatorError) as exc:
            _fail(EXIT_DIAGNOSTICS_FAILURE, exc)

    return wrapper


@click.group()
@click.version_option(package_name="nanoplate")
def main():
    """Strain-gradient plate solver and inclusion-size estimator toolkit."""


@main.command()
@scenario_command
def solve(scenario, outdir):
    """Solve with and without the inclusion; report works and estimators."""
    result = runner.run_solve(scenario)
    paths = report.write_solve_outputs(outdir, scenario, result)
    w = result.work
    click.echo(f"W0={w.w0:.9e}  W={w.w:.9e}  gap={w.gap:.9e}")
    if w.bracket_low is not None:
        click.echo(f"bracket=[{w.bracket_low:.3e}, {w.bracket_high:.3e}] "
                   f"verdict={w.bracket_verdict}")
    if w.rho_lower is not None:
        click.echo(f"rhoLower={w.rho_lower:.6e}  rhoUpperFat="
                   f"{w.rho_upper_fat:.6e}  F={w.f_value:.6f}")
    click.echo(f"wrote {paths['jsonl']}")


@main.command()
@scenario_command
def sweep(scenario, outdir):
    """Run the configured inclusion sweep and calibrate the estimators."""
    result = runner.run_sweep(scenario)
    paths = report.write_sweep_outputs(outdir, scenario, result)
    for p in result.points:
        click.echo(f"{result.axis}={p.value:<8g} area={p.area:.6e} "
                   f"gap={p.work.gap:.6e}")
    if result.calibration is not None:
        c = result.calibration
        click.echo(f"slope={c.slope:.4f}  C_low={c.c_low:.4e}  "
                   f"C_up={c.c_up:.4e}")
    click.echo(f"wrote {paths['jsonl']}")


@main.command()
@scenario_command
def calibrate(scenario, outdir):
    """Sweep and report the empirical estimator constants."""
    result = runner.run_calibrate(scenario)
    paths = report.write_sweep_outputs(outdir, scenario, result)
    c = result.calibration
    click.echo(f"C_low={c.c_low:.6e}  C_up={c.c_up:.6e}  "
               f"C_up_general={c.c_up_general:.6e}")
    click.echo(f"slope={c.slope:.4f}  intercept={c.intercept:.4f}  "
               f"n={c.n_points}")
    click.echo(f"wrote {paths['jsonl']}")


@main.command()
@scenario_command
def convergence(scenario, outdir):
    """Manufactured-solution error study over the configured meshes."""
    result = runner.run_convergence(scenario)
    paths = report.write_convergence_outputs(outdir, scenario, result)
    for row in result.rows:
        click.echo(f"cells={row.cells:<4d} h={row.h:.4e} L2={row.err_l2:.4e} "
                   f"H2={row.err_h2:.4e} H3={row.err_h3:.4e}")
    click.echo(f"H3 orders: {['%.3f' % o for o in result.orders['err_h3']]}"
               f"  monotone={result.monotone}")
    click.echo(f"wrote {paths['jsonl']}")


@main.command()
@scenario_command
def diagnose(scenario, outdir):
    """Unique-continuation diagnostics on the unperturbed solution."""
    result = runner.run_diagnose(scenario)
    paths = report.write_diagnose_outputs(outdir, scenario, result)
    rep = result.report
    for probe in rep.probes:
        click.echo(f"probe {probe.probe.center}: K_emp={probe.k_emp:.4f} "
                   f"N_bar={probe.n_bar_freq:.4f}")
    for lps in rep.lps:
        click.echo(f"LPS s={lps.s}: C_s={lps.c_s:.6e} at {lps.argmin}")
    for ap in rep.ap:
        click.echo(f"A_p p={ap.p}: B_emp={ap.b_emp:.6f}")
    if rep.errors:
        click.echo(f"{len(rep.errors)} stage error(s) recorded")
    click.echo(f"wrote {paths['jsonl']}")


if __name__ == "__main__":
    main()
