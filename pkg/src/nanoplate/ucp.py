"""Empirical unique-continuation diagnostics for unperturbed solutions.

Measures, on a computed deflection field, the constants appearing in the
quantitative continuation inequalities that justify the size estimators:
doubling ratios of the Hessian energy H(r) over concentric balls, the
three-sphere interpolation constants (solution-level and Hessian-level),
frequency ratios, the Lipschitz propagation of smallness constant, the
A_p averaging bound, and the textbook Caccioppoli, Poincare and
interpolation quotients.

All constants are probe-relative empirical quantities: the probe's outer
radius stands in for the normalization radius of the idealized
statements, and radius-ordering constraints scale with it.

Ball integrals use a polar rule: composite Gauss panels in the radius
(panel width tied to the field's resolution scale) and a uniform angular
grid, exact for constant integrands and spectrally accurate for smooth
ones.  Tables over nested radii are accumulated annulus by annulus, so
monotonicity in r holds to rounding by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import AnalyticField
from .geometry import RectangleDomain
from .solver import Solution
from .splines import ORDER_SLICES, gauss_rule

K_BAR = 8
THETA_SLOPE = {"hessian": 6 * K_BAR, "value": 2 * K_BAR}
FREQ_DEPTH = {"hessian": 9, "value": 7}
THREE_SPHERE_DEPTH = {"hessian": 11, "value": 8}
OUTER_RADIUS_FRACTION = 0.9
DEFAULT_N_DYADIC = 12
AP_FLOOR_SCALE = 1e-14

# derivative order and component weights of each squared-density kind;
# "hessian" is the Frobenius tensor norm used by the energy statements,
# the *_multi kinds are the plain multi-index sums used by the Sobolev
# inequalities.
KIND_SPECS = {
    "value": (0, (1.0,)),
    "gradient": (1, (1.0, 1.0)),
    "hessian": (2, (1.0, 2.0, 1.0)),
    "d2_multi": (2, (1.0, 1.0, 1.0)),
    "d3_multi": (3, (1.0, 1.0, 1.0, 1.0)),
    "d4_multi": (4, (1.0, 1.0, 1.0, 1.0, 1.0)),
}


class DiagnosticsError(RuntimeError):
    """Probe placement, radius ordering, or degeneracy failure."""


def field_resolution(u) -> float | None:
    """Length scale below which the field has no features to resolve.

    Spline solutions vary at the cell scale; analytic fields return None
    and the quadrature picks a per-annulus scale.
    """
    if isinstance(u, Solution):
        return min(u.space.bx.cell_width, u.space.by.cell_width)
    return None


def weighted_square(u, points: np.ndarray, kind: str) -> np.ndarray:
    """Pointwise squared density of the given kind at the sample points."""
    order, weights = KIND_SPECS[kind]
    comps = u.evaluate(points, max_order=order)
    block = comps[:, ORDER_SLICES[order]]
    return block ** 2 @ np.asarray(weights)


def _require_order(u, order: int, what: str) -> None:
    if isinstance(u, Solution) and u.space.degree < order:
        raise DiagnosticsError(
            f"{what} needs derivatives of order {order}; "
            f"spline degree {u.space.degree} is insufficient")


# ---------------------------------------------------------------------------
# polar quadrature
# ---------------------------------------------------------------------------

def annulus_rule(center, r_lo: float, r_hi: float,
                 resolution: float | None = None,
                 n_radial: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights for the annulus r_lo < |x - x0| < r_hi.

    Radial direction: composite Gauss panels no wider than half the
    resolution scale.  Angular direction: uniform midpoint grid with the
    point count scaled to the circumference, floored at 48 and kept a
    multiple of 4.  Exact for constants, and for integrands that are
    polynomial across the annulus once the panels resolve them.
    """
    if r_hi <= r_lo:
        return np.zeros((0, 2)), np.zeros(0)
    if resolution is None:
        resolution = r_hi / 8.0
    n_panels = max(1, math.ceil((r_hi - r_lo) / (0.5 * resolution)))
    edges = np.linspace(r_lo, r_hi, n_panels + 1)
    rho = np.empty(n_panels * n_radial)
    w_rho = np.empty_like(rho)
    for k in range(n_panels):
        x, w = gauss_rule(n_radial, edges[k], edges[k + 1])
        rho[k * n_radial:(k + 1) * n_radial] = x
        w_rho[k * n_radial:(k + 1) * n_radial] = w

    n_theta = max(48, 2 * math.ceil(2.0 * math.pi * r_hi / resolution))
    n_theta += (-n_theta) % 4
    theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
    w_theta = 2.0 * math.pi / n_theta

    cx, cy = center
    px = cx + rho[:, None] * np.cos(theta)[None, :]
    py = cy + rho[:, None] * np.sin(theta)[None, :]
    points = np.column_stack([px.ravel(), py.ravel()])
    weights = (w_rho * rho)[:, None] * np.full(n_theta, w_theta)[None, :]
    return points, weights.ravel()


def ball_energy_table(u, center, radii, kind: str = "hessian",
                      resolution: float | None = None) -> np.ndarray:
    """Cumulative integrals of the kind density over nested balls.

    Integrates each annulus between consecutive radii once and prefix-sums,
    so the returned table is nondecreasing to rounding.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise DiagnosticsError("ball radii must be strictly increasing")
    if resolution is None:
        resolution = field_resolution(u)
    shells = np.empty(radii.shape[0])
    prev = 0.0
    for k, r in enumerate(radii):
        pts, w = annulus_rule(center, prev, r, resolution)
        shells[k] = w @ weighted_square(u, pts, kind) if w.size else 0.0
        prev = r
    return np.cumsum(shells)


def ball_energy(u, center, r: float, kind: str = "hessian",
                domain: RectangleDomain | None = None,
                resolution: float | None = None) -> float:
    """Integral of the kind density over the ball B_r(center)."""
    if r < 0:
        raise DiagnosticsError("negative ball radius")
    if r == 0.0:
        return 0.0
    if domain is not None and wall_clearance(domain, center) < r * (1 - 1e-12):
        raise DiagnosticsError(
            f"ball of radius {r:.4g} at {tuple(center)} exits the domain")
    return float(ball_energy_table(u, center, [r], kind, resolution)[0])


def rectangle_integral(u, domain: RectangleDomain, kind: str,
                       panels: int = 16, n_gauss: int = 6) -> float:
    """Integral of the kind density over the full rectangle."""
    x0, x1, y0, y1 = domain.bounds
    xe = np.linspace(x0, x1, panels + 1)
    ye = np.linspace(y0, y1, panels + 1)
    total = 0.0
    for i in range(panels):
        gx, wx = gauss_rule(n_gauss, xe[i], xe[i + 1])
        for j in range(panels):
            gy, wy = gauss_rule(n_gauss, ye[j], ye[j + 1])
            px, py = np.meshgrid(gx, gy, indexing="ij")
            pts = np.column_stack([px.ravel(), py.ravel()])
            w = np.outer(wx, wy).ravel()
            total += w @ weighted_square(u, pts, kind)
    return float(total)


def total_energy(u, domain: RectangleDomain | None = None,
                 kind: str = "hessian") -> float:
    """Integral of the kind density over the computational domain.

    Spline solutions are integrated cell by cell so the Gauss panels
    never straddle a knot line.
    """
    if isinstance(u, Solution):
        space = u.space
        nq = space.degree + 2
        total = 0.0
        for cx, cy in space.cells():
            ax, bx, ay, by = space.cell_rect(cx, cy)
            gx, wx = gauss_rule(nq, ax, bx)
            gy, wy = gauss_rule(nq, ay, by)
            px, py = np.meshgrid(gx, gy, indexing="ij")
            pts = np.column_stack([px.ravel(), py.ravel()])
            total += np.outer(wx, wy).ravel() @ weighted_square(u, pts, kind)
        return float(total)
    if domain is None:
        raise DiagnosticsError("analytic fields need an explicit domain")
    return rectangle_integral(u, domain, kind)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallProbe:
    """Concentric measurement balls around one interior point."""

    center: tuple[float, float]
    radii: tuple[float, ...]
    clearance: float

    def __post_init__(self):
        r = np.asarray(self.radii)
        if r.size == 0 or np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise DiagnosticsError("probe radii must be positive and increasing")

    @property
    def outer_radius(self) -> float:
        return self.radii[-1]


def wall_clearance(domain: RectangleDomain, point) -> float:
    """Scalar distance from one point to the domain boundary."""
    return float(domain.wall_clearance(point)[0])


def make_probe(domain: RectangleDomain, center, cell_size: float,
               n_dyadic: int = DEFAULT_N_DYADIC,
               outer_fraction: float = OUTER_RADIUS_FRACTION) -> BallProbe:
    """Dyadic probe with outer radius a fixed fraction of the clearance.

    The largest ball must stay inside the domain with at least one cell
    of slack, so that the outermost annuli are not dominated by boundary
    layers of the discretization.
    """
    clearance = wall_clearance(domain, center)
    outer = outer_fraction * clearance
    if outer <= 0 or clearance - outer < cell_size:
        raise DiagnosticsError(
            f"probe at {tuple(center)} too close to the boundary: "
            f"clearance {clearance:.4g}, margin needs {cell_size:.4g}")
    radii = tuple(outer / 2 ** j for j in range(n_dyadic, -1, -1))
    return BallProbe(center=tuple(float(c) for c in center),
                     radii=radii, clearance=float(clearance))


def probe_grid(domain: RectangleDomain, shape=(3, 3)) -> list[tuple[float, float]]:
    """Cell-centered lattice of candidate probe centers."""
    x0, x1, y0, y1 = domain.bounds
    nx, ny = shape
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    return [(float(x), float(y)) for x in xs for y in ys]


# ---------------------------------------------------------------------------
# doubling and frequency
# ---------------------------------------------------------------------------

@dataclass
class ProbeDiagnostics:
    """Energy tables and doubling data for one probe."""

    probe: BallProbe
    radii: np.ndarray
    h_table: np.ndarray
    u_table: np.ndarray
    ratios_hessian: np.ndarray
    ratios_value: np.ndarray
    k_emp: float
    k_emp_value: float
    n_freq: float
    n_bar_freq: float

    def to_record(self) -> dict:
        return {
            "center": list(self.probe.center),
            "clearance": self.probe.clearance,
            "radii": self.radii.tolist(),
            "H": self.h_table.tolist(),
            "U": self.u_table.tolist(),
            "doubling_H": self.ratios_hessian.tolist(),
            "doubling_U": self.ratios_value.tolist(),
            "K_emp": self.k_emp,
            "K_emp_value": self.k_emp_value,
            "N": self.n_freq,
            "N_bar": self.n_bar_freq,
        }


def _dyadic_ratio(radii: np.ndarray, table: np.ndarray, depth: int) -> float:
    """table(R) / table(R / 2^depth) when that radius is in the grid."""
    target = radii[-1] / 2 ** depth
    idx = np.nonzero(np.isclose(radii, target, rtol=1e-9))[0]
    if idx.size == 0 or table[idx[0]] == 0.0:
        return float("nan")
    return float(table[-1] / table[idx[0]])


def doubling_scan(u, probes, resolution: float | None = None) -> list[ProbeDiagnostics]:
    """H and U tables, doubling ratios, and frequency ratios per probe.

    Ratios pair radii (r, 2r) present in the probe grid.  K_emp is the
    largest Hessian doubling ratio observed; N and N_bar compare the
    outer-ball energy against the dyadically reduced one (depth 7 for the
    solution values, 9 for the Hessian).
    """
    _require_order(u, 2, "doubling scan")
    out = []
    for probe in probes:
        radii = np.asarray(probe.radii)
        h = ball_energy_table(u, probe.center, radii, "hessian", resolution)
        uu = ball_energy_table(u, probe.center, radii, "value", resolution)
        doubled = np.isclose(radii[1:], 2.0 * radii[:-1], rtol=1e-9)
        with np.errstate(divide="ignore", invalid="ignore"):
            rh = np.where(doubled, h[1:] / h[:-1], np.nan)
            ru = np.where(doubled, uu[1:] / uu[:-1], np.nan)
        out.append(ProbeDiagnostics(
            probe=probe, radii=radii, h_table=h, u_table=uu,
            ratios_hessian=rh, ratios_value=ru,
            k_emp=float(np.nanmax(rh)) if np.any(np.isfinite(rh)) else float("nan"),
            k_emp_value=float(np.nanmax(ru)) if np.any(np.isfinite(ru)) else float("nan"),
            n_freq=_dyadic_ratio(radii, uu, FREQ_DEPTH["value"]),
            n_bar_freq=_dyadic_ratio(radii, h, FREQ_DEPTH["hessian"]),
        ))
    return out


def theta_exponent(s: float, r: float, kind: str = "hessian") -> float:
    """Interpolation exponent of the three-sphere inequality.

    hessian: 1/(1 + 48 log2(s/r)); value: 1/(1 + 16 log2(s/r)).
    At s = 2r these are 1/49 and 1/17.
    """
    if kind not in THETA_SLOPE:
        raise DiagnosticsError(f"unknown three-sphere kind {kind!r}")
    if not (0 < r < s):
        raise DiagnosticsError("theta exponent needs 0 < r < s")
    return 1.0 / (1.0 + THETA_SLOPE[kind] * math.log2(s / r))


@dataclass(frozen=True)
class ThreeSphereResult:
    kind: str
    s: float
    r: float
    outer_radius: float
    theta: float
    e_r: float
    e_s: float
    e_outer: float
    c_emp: float

    def to_record(self) -> dict:
        return {"kind": self.kind, "s": self.s, "r": self.r,
                "R": self.outer_radius, "theta": self.theta,
                "E_r": self.e_r, "E_s": self.e_s, "E_R": self.e_outer,
                "C_emp": self.c_emp}


def three_sphere_check(u, probe: BallProbe, s: float, r: float,
                       kind: str = "hessian",
                       resolution: float | None = None) -> ThreeSphereResult:
    """Smallest constant closing the three-ball interpolation inequality.

        E(s) <= C_emp * E(R)^(1-theta) * E(r)^theta

    with R the probe's outer radius and E the Hessian or value energy.
    Radius ordering 2r <= s <= R/2^11 (hessian) or R/2^8 (value) is
    enforced proportionally to the probe.
    """
    if kind not in THREE_SPHERE_DEPTH:
        raise DiagnosticsError(f"unknown three-sphere kind {kind!r}")
    outer = probe.outer_radius
    cap = outer / 2 ** THREE_SPHERE_DEPTH[kind]
    tol = 1 + 1e-12
    if not (0 < r and 2 * r <= s * tol and s <= cap * tol):
        raise DiagnosticsError(
            f"radius ordering violated: need 2r <= s <= {cap:.4g} "
            f"(= R/2^{THREE_SPHERE_DEPTH[kind]}), got r={r:.4g}, s={s:.4g}")
    energy_kind = "hessian" if kind == "hessian" else "value"
    _require_order(u, KIND_SPECS[energy_kind][0], "three-sphere check")
    table = ball_energy_table(u, probe.center, [r, s, outer], energy_kind,
                              resolution)
    e_r, e_s, e_outer = (float(v) for v in table)
    if e_r <= 0.0 or e_outer <= 0.0:
        raise DiagnosticsError("three-sphere check degenerate: zero ball energy")
    th = theta_exponent(s, r, kind)
    c_emp = e_s / (e_outer ** (1.0 - th) * e_r ** th)
    return ThreeSphereResult(kind=kind, s=s, r=r, outer_radius=outer,
                             theta=th, e_r=e_r, e_s=e_s, e_outer=e_outer,
                             c_emp=c_emp)


# ---------------------------------------------------------------------------
# propagation of smallness and A_p
# ---------------------------------------------------------------------------

@dataclass
class LpsResult:
    c_s: float
    argmin: tuple[float, float]
    s: float
    chi: float
    total: float
    n_admissible: int
    table: list

    def to_record(self) -> dict:
        return {"C_s": self.c_s, "argmin": list(self.argmin), "s": self.s,
                "chi": self.chi, "total": self.total,
                "n_admissible": self.n_admissible, "table": self.table}


def lps_constant(u, s: float, domain: RectangleDomain,
                 chi: float = 2.0, grid_shape=(7, 7),
                 resolution: float | None = None,
                 total: float | None = None) -> LpsResult:
    """Worst-case fraction of Hessian energy seen by a ball of radius s*r0.

    Scans a lattice of centers with wall clearance above chi*s*r0 (chi > 1
    keeps each ball strictly interior) and returns the minimum of
    H_ball / H_total with its location.
    """
    if chi <= 1.0:
        raise DiagnosticsError("LPS clearance factor chi must exceed 1")
    _require_order(u, 2, "LPS constant")
    radius = s * domain.r0
    if total is None:
        total = total_energy(u, domain, "hessian")
    if total <= 0.0:
        raise DiagnosticsError("LPS refused: total Hessian energy is zero")
    centers = [c for c in probe_grid(domain, grid_shape)
               if wall_clearance(domain, c) > chi * radius]
    if not centers:
        raise DiagnosticsError(
            f"no admissible probe centers: clearance > {chi * radius:.4g} "
            f"unreachable on a {grid_shape} grid")
    table = []
    best = None
    for c in centers:
        frac = ball_energy(u, c, radius, "hessian", resolution=resolution) / total
        table.append({"center": list(c), "fraction": frac})
        if best is None or frac < best[0]:
            best = (frac, c)
    return LpsResult(c_s=float(best[0]), argmin=best[1], s=s, chi=chi,
                     total=float(total), n_admissible=len(centers), table=table)


@dataclass
class ApResult:
    b_emp: float
    p: float
    floor: float
    floor_scale: float
    table: list
    floor_sensitivity: float

    def to_record(self) -> dict:
        return {"B_emp": self.b_emp, "p": self.p, "floor": self.floor,
                "floor_scale": self.floor_scale, "table": self.table,
                "floor_sensitivity": self.floor_sensitivity}


def _ap_left_side(u, center, r: float, p: float, floor: float,
                  resolution: float | None) -> float:
    pts, w = annulus_rule(center, 0.0, r, resolution)
    vals = np.maximum(weighted_square(u, pts, "hessian"), floor)
    wsum = w.sum()
    m1 = (w @ vals) / wsum
    m2 = (w @ vals ** (-1.0 / (p - 1.0))) / wsum
    return float(m1 * m2 ** (p - 1.0))


def ap_check(u, probes, p: float = 2.0,
             domain: RectangleDomain | None = None,
             resolution: float | None = None,
             floor_scale: float = AP_FLOOR_SCALE) -> ApResult:
    """Muckenhoupt-style averaging bound of the Hessian density.

    For each probe ball reports

        (avg of w) * (avg of w^(-1/(p-1)))^(p-1),  w = max(|D2 u|^2, floor)

    and the sup B_emp over all probe/radius pairs.  The floor guards the
    negative power against isolated zeros of the Hessian; both averages
    use the floored density, and halving the floor is re-run to report
    the sensitivity of B_emp to that choice.
    """
    if p <= 1.0:
        raise DiagnosticsError("A_p exponent must satisfy p > 1")
    _require_order(u, 2, "A_p check")
    if isinstance(u, Solution):
        space = u.space
        area = space.bx.length * space.by.length
    else:
        if domain is None:
            raise DiagnosticsError("analytic fields need an explicit domain")
        area = domain.area
    mean = total_energy(u, domain, "hessian") / area
    floor = floor_scale * mean
    if floor <= 0.0:
        raise DiagnosticsError("A_p refused: field has zero Hessian energy")

    def scan(fl):
        rows, sup = [], 0.0
        for probe in probes:
            for r in probe.radii:
                lhs = _ap_left_side(u, probe.center, r, p, fl, resolution)
                rows.append({"center": list(probe.center), "r": float(r),
                             "lhs": lhs})
                sup = max(sup, lhs)
        return rows, sup

    table, b_emp = scan(floor)
    _, b_half = scan(0.5 * floor)
    sens = abs(b_half - b_emp) / max(b_emp, 1e-300)
    return ApResult(b_emp=float(b_emp), p=p, floor=float(floor),
                    floor_scale=floor_scale, table=table,
                    floor_sensitivity=float(sens))


# ---------------------------------------------------------------------------
# classical inequalities
# ---------------------------------------------------------------------------

def _ball_component_averages(u, center, r: float,
                             resolution: float | None) -> np.ndarray:
    """Averages of (u, u_x, u_y) over the ball B_r(center)."""
    pts, w = annulus_rule(center, 0.0, r, resolution)
    comps = u.evaluate(pts, max_order=1)[:, :3]
    return (w[:, None] * comps).sum(axis=0) / w.sum()


@dataclass
class PoincareResult:
    c_emp: float
    outer_radius: float
    averaging_radius: float
    sq_value: float
    sq_gradient: float
    sq_hessian: float

    def to_record(self) -> dict:
        return {"C_emp": self.c_emp, "R": self.outer_radius,
                "r": self.averaging_radius, "int_u2": self.sq_value,
                "int_Du2": self.sq_gradient, "int_D2u2": self.sq_hessian}


def poincare_quotient(u, center, outer_radius: float,
                      averaging_radius: float | None = None,
                      resolution: float | None = None) -> PoincareResult:
    """Empirical constant of the recentered two-ball Poincare inequality.

    With u~ = u - (u)_r - (Du)_r . (x - x0), averages over the inner
    ball, the quotient

        (int_{B_R} u~^2 + R^2 int_{B_R} |Du~|^2) / ((R^6/r^2) int_{B_R} |D2 u|^2)

    measures the constant; it is refused for affine inputs whose Hessian
    term vanishes.
    """
    _require_order(u, 2, "Poincare quotient")
    big_r = outer_radius
    small_r = averaging_radius if averaging_radius is not None else 0.5 * big_r
    if not (0 < small_r <= big_r):
        raise DiagnosticsError("Poincare radii must satisfy 0 < r <= R")
    avg = _ball_component_averages(u, center, small_r, resolution)
    pts, w = annulus_rule(center, 0.0, big_r, resolution)
    comps = u.evaluate(pts, max_order=2)
    dx = pts - np.asarray(center)
    tilde = comps[:, 0] - avg[0] - dx @ avg[1:]
    grad = comps[:, 1:3] - avg[1:]
    sq_val = float(w @ tilde ** 2)
    sq_grad = float(w @ (grad ** 2).sum(axis=1))
    sq_hess = float(w @ (comps[:, 3:6] ** 2 @ np.ones(3)))
    if sq_hess <= 0.0:
        raise DiagnosticsError("Poincare quotient degenerate for affine inputs")
    denom = (big_r ** 6 / small_r ** 2) * sq_hess
    return PoincareResult(c_emp=(sq_val + big_r ** 2 * sq_grad) / denom,
                          outer_radius=big_r, averaging_radius=small_r,
                          sq_value=sq_val, sq_gradient=sq_grad,
                          sq_hessian=sq_hess)


@dataclass
class ClassicalChecks:
    caccioppoli: dict
    caccioppoli_radius: float
    poincare: PoincareResult
    interpolation: float | None

    def to_record(self) -> dict:
        return {"caccioppoli": {str(k): v for k, v in self.caccioppoli.items()},
                "caccioppoli_radius": self.caccioppoli_radius,
                "poincare": self.poincare.to_record(),
                "interpolation": self.interpolation}


def sobolev_norm(u, domain: RectangleDomain | None, order: int,
                 r0: float = 1.0) -> float:
    """Dimensionless Sobolev norm with r0-weighted derivative terms.

        ||u||_m = r0^{-1} (sum_{i<=m} r0^{2i} int |D^i u|^2)^{1/2}

    with multi-index derivative sums.
    """
    kinds = ["value", "gradient", "d2_multi", "d3_multi", "d4_multi"]
    total = 0.0
    for i in range(order + 1):
        total += r0 ** (2 * i) * total_energy(u, domain, kinds[i])
    return math.sqrt(total) / r0


def interpolation_quotient(u, domain: RectangleDomain | None = None,
                           r0: float = 1.0) -> float:
    """||u||_{H3} / (||u||_{H2}^{1/2} ||u||_{H4}^{1/2}) over the domain."""
    _require_order(u, 4, "interpolation quotient")
    n2 = sobolev_norm(u, domain, 2, r0)
    n3 = sobolev_norm(u, domain, 3, r0)
    n4 = sobolev_norm(u, domain, 4, r0)
    if n2 <= 0.0 or n4 <= 0.0:
        raise DiagnosticsError("interpolation quotient degenerate: zero norm")
    return n3 / math.sqrt(n2 * n4)


def classical_inequality_checks(u, center, r: float,
                                domain: RectangleDomain | None = None,
                                r0: float = 1.0,
                                h_max: int | None = None,
                                resolution: float | None = None,
                                with_interpolation: bool | None = None,
                                ) -> ClassicalChecks:
    """Caccioppoli, Poincare and interpolation quotients near one point.

    Caccioppoli: C_h = r^h ||D^h u||_{L2(B_{r/2})} / ||u||_{L2(B_r)} for
    h = 1..3, extended to 4 when fourth derivatives exist.  The caller is
    responsible for placing the ball where u solves the homogeneous
    equation (away from the inclusion and the boundary).  Interpolation
    runs over the full domain and is skipped when the field cannot take
    four derivatives, unless explicitly requested.
    """
    max_avail = u.space.degree if isinstance(u, Solution) else 4
    if h_max is None:
        h_max = min(4, max_avail) if max_avail >= 4 else 3
    if h_max > max_avail:
        raise DiagnosticsError(
            f"Caccioppoli order {h_max} needs degree >= {h_max}, have {max_avail}")

    denom_sq = ball_energy(u, center, r, "value", resolution=resolution)
    if denom_sq <= 0.0:
        raise DiagnosticsError("Caccioppoli denominator vanishes on the ball")
    denom = math.sqrt(denom_sq)
    kinds = {1: "gradient", 2: "d2_multi", 3: "d3_multi", 4: "d4_multi"}
    cacc = {}
    for h in range(1, h_max + 1):
        num = math.sqrt(ball_energy(u, center, 0.5 * r, kinds[h],
                                    resolution=resolution))
        cacc[h] = r ** h * num / denom

    poin = poincare_quotient(u, center, r, resolution=resolution)

    if with_interpolation is None:
        with_interpolation = max_avail >= 4
    interp = (interpolation_quotient(u, domain, r0)
              if with_interpolation else None)
    return ClassicalChecks(caccioppoli=cacc, caccioppoli_radius=r,
                           poincare=poin, interpolation=interp)


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

@dataclass
class UcpReport:
    """Everything the diagnose stage measured, plus per-stage errors."""

    probes: list = dc_field(default_factory=list)
    three_sphere: list = dc_field(default_factory=list)
    lps: list = dc_field(default_factory=list)
    ap: list = dc_field(default_factory=list)
    classical: ClassicalChecks | None = None
    errors: list = dc_field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "probes": [p.to_record() for p in self.probes],
            "three_sphere": [t.to_record() for t in self.three_sphere],
            "lps": [l.to_record() for l in self.lps],
            "ap": [a.to_record() for a in self.ap],
            "classical": self.classical.to_record() if self.classical else None,
            "errors": self.errors,
        }
