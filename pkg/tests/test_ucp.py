"""Continuation-diagnostics checks against closed-form ball integrals.

Most oracles here are polynomial fields whose ball energies integrate in
closed form: u = x^2 has constant Hessian density 4, and the harmonic
quartic x^4 - 6 x^2 y^2 + y^4 has |D^2 u|^2 = 288 rho^4, so every
doubling ratio, three-sphere constant and averaging bound below is known
exactly before the code runs.
"""

import math

import numpy as np
import pytest

from nanoplate.fields import AnalyticField
from nanoplate.geometry import RectangleDomain
from nanoplate.ucp import (AP_FLOOR_SCALE, BallProbe, DiagnosticsError,
                           annulus_rule, ap_check, ball_energy,
                           ball_energy_table, classical_inequality_checks,
                           doubling_scan, interpolation_quotient, lps_constant,
                           make_probe, poincare_quotient, probe_grid,
                           theta_exponent, three_sphere_check, total_energy,
                           wall_clearance)

QUARTIC = "x**4 - 6*x**2*y**2 + y**4"


def unit_square():
    return RectangleDomain(width=1.0, height=1.0, r0=1.0)


def centered_square(side=2.0):
    return RectangleDomain(width=side, height=side, r0=1.0,
                           x0=-side / 2, y0=-side / 2)


def parabola():
    # u = x^2: constant Hessian, |D^2 u|^2 = 4 in both weightings
    return AnalyticField.quadratic(2.0, 0.0, 0.0)


def test_annulus_rule_exact_area_and_moment():
    pts, w = annulus_rule((0.3, -0.2), 0.2, 0.5)
    assert w.sum() == pytest.approx(math.pi * (0.5 ** 2 - 0.2 ** 2), rel=1e-13)
    # second moment about the center: int (x - cx)^2 = pi/4 (r1^4 - r0^4)
    moment = w @ (pts[:, 0] - 0.3) ** 2
    assert moment == pytest.approx(math.pi / 4 * (0.5 ** 4 - 0.2 ** 4),
                                   rel=1e-12)
    full, wf = annulus_rule((0.0, 0.0), 0.0, 0.7)
    assert wf.sum() == pytest.approx(math.pi * 0.49, rel=1e-13)
    assert np.all(np.hypot(full[:, 0], full[:, 1]) < 0.7)


def test_annulus_rule_degenerate_interval_is_empty():
    pts, w = annulus_rule((0.0, 0.0), 0.4, 0.4)
    assert pts.shape == (0, 2) and w.shape == (0,)
    pts, w = annulus_rule((0.0, 0.0), 0.5, 0.3)
    assert w.size == 0


def test_ball_energy_closed_forms_for_parabola():
    u = parabola()
    r = 0.37
    # constant density 4 integrates to 4 pi r^2 regardless of center
    assert ball_energy(u, (0.1, 0.2), r, "hessian") == pytest.approx(
        4 * math.pi * r ** 2, rel=1e-13)
    assert ball_energy(u, (0.1, 0.2), r, "d2_multi") == pytest.approx(
        4 * math.pi * r ** 2, rel=1e-13)
    # value energy at the origin picks up the x^4 moment pi r^6 / 8
    assert ball_energy(u, (0.0, 0.0), r, "value") == pytest.approx(
        math.pi * r ** 6 / 8, rel=1e-12)
    # gradient energy: int 4 x^2 = pi r^4
    assert ball_energy(u, (0.0, 0.0), r, "gradient") == pytest.approx(
        math.pi * r ** 4, rel=1e-12)
    assert ball_energy(u, (0.0, 0.0), 0.0, "hessian") == 0.0


def test_ball_energy_matches_masked_grid_oracle():
    u = AnalyticField("sin(1.3*x + 0.4)*cos(0.9*y - 0.2)")
    center, r = (0.45, 0.55), 0.3
    got = ball_energy(u, center, r, "hessian")
    # independent oracle: dense Cartesian midpoint rule masked to the ball
    n = 800
    xs = np.linspace(center[0] - r, center[0] + r, n, endpoint=False)
    xs += r / n
    ys = np.linspace(center[1] - r, center[1] + r, n, endpoint=False)
    ys += r / n
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    inside = (gx - center[0]) ** 2 + (gy - center[1]) ** 2 <= r ** 2
    pts = np.column_stack([gx[inside], gy[inside]])
    comps = u.evaluate(pts, 2)
    dens = comps[:, 3] ** 2 + 2 * comps[:, 4] ** 2 + comps[:, 5] ** 2
    cell = (2 * r / n) ** 2
    assert got == pytest.approx(dens.sum() * cell, rel=5e-3)


def test_ball_energy_table_is_cumulative_and_monotone():
    u = AnalyticField(QUARTIC)
    radii = np.array([0.1, 0.17, 0.25, 0.4])
    table = ball_energy_table(u, (0.0, 0.0), radii, "hessian")
    assert np.all(np.diff(table) > 0)
    for r, t in zip(radii, table):
        assert t == pytest.approx(96 * math.pi * r ** 6, rel=1e-12)
    with pytest.raises(DiagnosticsError):
        ball_energy_table(u, (0.0, 0.0), [0.1, 0.1, 0.2], "hessian")


def test_ball_energy_respects_domain_clearance():
    u = parabola()
    dom = unit_square()
    with pytest.raises(DiagnosticsError):
        ball_energy(u, (0.1, 0.5), 0.2, "hessian", domain=dom)
    val = ball_energy(u, (0.1, 0.5), 0.05, "hessian", domain=dom)
    assert val == pytest.approx(4 * math.pi * 0.05 ** 2, rel=1e-13)
    with pytest.raises(DiagnosticsError):
        ball_energy(u, (0.5, 0.5), -0.1, "hessian")


def test_probe_construction_and_wall_clearance():
    dom = unit_square()
    assert wall_clearance(dom, (0.3, 0.4)) == pytest.approx(0.3)
    probe = make_probe(dom, (0.5, 0.5), cell_size=1 / 32)
    assert probe.outer_radius == pytest.approx(0.45)
    assert len(probe.radii) == 13
    np.testing.assert_allclose(np.diff(np.log2(probe.radii)), 1.0, atol=1e-12)
    # margin between the outer ball and the wall must cover one cell
    with pytest.raises(DiagnosticsError):
        make_probe(dom, (0.05, 0.5), cell_size=0.1)
    with pytest.raises(DiagnosticsError):
        BallProbe(center=(0.0, 0.0), radii=(0.2, 0.1), clearance=1.0)
    centers = probe_grid(dom, shape=(3, 2))
    assert len(centers) == 6
    assert centers[0] == pytest.approx((1 / 6, 1 / 4))


def test_doubling_ratio_four_for_random_quadratics():
    # any quadratic has constant Hessian density, so H(2r)/H(r) = 4 exactly
    rng = np.random.default_rng(20)
    dom = centered_square()
    for _ in range(5):
        h11, h12, h22 = rng.uniform(-2.0, 2.0, size=3)
        if abs(h11) + abs(h12) + abs(h22) < 0.1:
            continue
        u = AnalyticField.quadratic(h11, h12, h22, grad=(0.3, -0.1), value=1.0)
        center = tuple(rng.uniform(-0.3, 0.3, size=2))
        probe = make_probe(dom, center, cell_size=0.01, n_dyadic=6)
        diag, = doubling_scan(u, [probe])
        np.testing.assert_allclose(diag.ratios_hessian, 4.0, atol=1e-10)
        assert diag.k_emp == pytest.approx(4.0, abs=1e-10)


def test_doubling_scan_quartic_closed_form():
    u = AnalyticField(QUARTIC)
    dom = centered_square()
    probe = make_probe(dom, (0.0, 0.0), cell_size=0.01)
    diag, = doubling_scan(u, [probe])
    # H(r) = 96 pi r^6 and U(r) ~ r^10, so the dyadic ratios are 2^6, 2^10
    np.testing.assert_allclose(diag.ratios_hessian, 64.0, rtol=1e-9)
    np.testing.assert_allclose(diag.ratios_value, 1024.0, rtol=1e-9)
    assert diag.k_emp == pytest.approx(64.0, rel=1e-9)
    assert diag.k_emp_value == pytest.approx(1024.0, rel=1e-9)
    assert diag.n_freq == pytest.approx(2.0 ** 70, rel=1e-8)
    assert diag.n_bar_freq == pytest.approx(2.0 ** 54, rel=1e-8)
    assert np.all(np.diff(diag.h_table) > 0)
    assert np.all(np.diff(diag.u_table) > 0)
    np.testing.assert_allclose(
        diag.h_table, 96 * math.pi * diag.radii ** 6, rtol=1e-10)


def test_doubling_ratios_are_amplitude_invariant():
    dom = centered_square()
    probe = make_probe(dom, (0.1, -0.2), cell_size=0.01, n_dyadic=6)
    base, = doubling_scan(AnalyticField(QUARTIC), [probe])
    scaled, = doubling_scan(AnalyticField(f"7.3*({QUARTIC})"), [probe])
    np.testing.assert_allclose(scaled.ratios_hessian, base.ratios_hessian,
                               rtol=1e-12)
    np.testing.assert_allclose(scaled.n_bar_freq, base.n_bar_freq, rtol=1e-12)


def test_theta_exponent_dyadic_values():
    assert theta_exponent(0.2, 0.1, "hessian") == 1.0 / 49.0
    assert theta_exponent(0.2, 0.1, "value") == 1.0 / 17.0
    assert theta_exponent(0.4, 0.1, "hessian") == pytest.approx(1.0 / 97.0)
    with pytest.raises(DiagnosticsError):
        theta_exponent(0.1, 0.2, "hessian")
    with pytest.raises(DiagnosticsError):
        theta_exponent(0.2, 0.1, "sobolev")


def test_three_sphere_constant_hessian_closed_form():
    u = parabola()
    dom = centered_square()
    probe = make_probe(dom, (0.0, 0.0), cell_size=0.01)
    big_r = probe.outer_radius
    s = big_r / 2 ** 11
    res = three_sphere_check(u, probe, s, s / 2, "hessian")
    # H(rho) = 4 pi rho^2 gives C = (s/R)^2 (R/r)^(2 theta) with theta = 1/49
    assert res.theta == pytest.approx(1.0 / 49.0, abs=1e-15)
    expected = 2.0 ** -22 * 2.0 ** (24.0 / 49.0)
    assert res.c_emp == pytest.approx(expected, rel=1e-8)
    assert res.e_r <= res.e_s <= res.e_outer

    s_val = big_r / 2 ** 8
    res_v = three_sphere_check(u, probe, s_val, s_val / 2, "value")
    # U(rho) = pi rho^6 / 8 at the origin, theta = 1/17
    expected_v = 2.0 ** -48 * 2.0 ** (54.0 / 17.0)
    assert res_v.theta == pytest.approx(1.0 / 17.0, abs=1e-15)
    assert res_v.c_emp == pytest.approx(expected_v, rel=1e-8)


def test_three_sphere_radius_ordering_enforced():
    u = parabola()
    dom = centered_square()
    probe = make_probe(dom, (0.0, 0.0), cell_size=0.01)
    cap = probe.outer_radius / 2 ** 11
    with pytest.raises(DiagnosticsError):
        three_sphere_check(u, probe, 4.0 * cap, cap, "hessian")
    with pytest.raises(DiagnosticsError):
        three_sphere_check(u, probe, cap, 0.9 * cap, "hessian")
    affine = AnalyticField.quadratic(0.0, 0.0, 0.0, grad=(1.0, 0.0))
    with pytest.raises(DiagnosticsError, match="degenerate"):
        three_sphere_check(affine, probe, cap, cap / 2, "hessian")


def test_lps_constant_hessian_gives_ball_area_fraction():
    u = parabola()
    dom = unit_square()
    res = lps_constant(u, 0.1, dom)
    # constant density cancels: C_s = pi s^2 r0^2 / |Omega|
    assert res.c_s == pytest.approx(math.pi * 0.01, rel=1e-10)
    assert res.n_admissible == 25
    assert res.total == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(DiagnosticsError):
        lps_constant(u, 0.1, dom, chi=1.0)
    with pytest.raises(DiagnosticsError):
        lps_constant(u, 0.5, dom)


def test_lps_argmin_sits_where_energy_is_thin():
    u = AnalyticField(QUARTIC)
    dom = centered_square()
    res = lps_constant(u, 0.1, dom)
    # the density 288 rho^4 is smallest at the origin, a lattice point
    assert res.argmin == pytest.approx((0.0, 0.0), abs=1e-12)
    assert res.c_s == pytest.approx(96 * math.pi * 0.1 ** 6 / (32256 / 45),
                                    rel=1e-10)
    fracs = [row["fraction"] for row in res.table]
    assert min(fracs) == res.c_s


def test_ap_bound_is_one_for_constant_hessian():
    u = parabola()
    dom = centered_square()
    probe = make_probe(dom, (0.0, 0.0), cell_size=0.01, n_dyadic=4)
    for p in (2.0, 3.0):
        res = ap_check(u, [probe], p=p, domain=dom)
        assert res.b_emp == pytest.approx(1.0, abs=1e-10)
        assert res.floor_sensitivity == 0.0
        assert res.floor == pytest.approx(4.0 * AP_FLOOR_SCALE, rel=1e-12)
    assert len(res.table) == 5


def test_ap_bound_exceeds_one_when_density_varies():
    u = AnalyticField(QUARTIC)
    dom = centered_square()
    probe = make_probe(dom, (0.0, 0.0), cell_size=0.01, n_dyadic=4)
    res = ap_check(u, [probe], p=2.0, domain=dom)
    assert res.b_emp > 1.5
    with pytest.raises(DiagnosticsError):
        ap_check(u, [probe], p=1.0, domain=dom)
    zero = AnalyticField.quadratic(0.0, 0.0, 0.0)
    with pytest.raises(DiagnosticsError):
        ap_check(zero, [probe], p=2.0, domain=dom)


def test_poincare_quotient_closed_form():
    u = parabola()
    big_r, small_r = 0.3, 0.15
    res = poincare_quotient(u, (0.0, 0.0), big_r)
    assert res.averaging_radius == pytest.approx(small_r)
    # u~ = x^2 - r^2/4 (gradient average vanishes by symmetry)
    sq_val = math.pi * (big_r ** 6 / 8 - small_r ** 2 * big_r ** 4 / 8
                        + small_r ** 4 * big_r ** 2 / 16)
    assert res.sq_value == pytest.approx(sq_val, rel=1e-10)
    assert res.sq_gradient == pytest.approx(math.pi * big_r ** 4, rel=1e-12)
    assert res.sq_hessian == pytest.approx(4 * math.pi * big_r ** 2, rel=1e-12)
    expected = (sq_val + big_r ** 2 * math.pi * big_r ** 4) / (
        (big_r ** 6 / small_r ** 2) * 4 * math.pi * big_r ** 2)
    assert res.c_emp == pytest.approx(expected, rel=1e-10)

    affine = AnalyticField.quadratic(0.0, 0.0, 0.0, grad=(2.0, 1.0), value=0.5)
    with pytest.raises(DiagnosticsError, match="affine"):
        poincare_quotient(affine, (0.0, 0.0), big_r)
    with pytest.raises(DiagnosticsError):
        poincare_quotient(u, (0.0, 0.0), 0.3, averaging_radius=0.4)


def test_caccioppoli_quotients_closed_form():
    u = parabola()
    dom = centered_square()
    checks = classical_inequality_checks(u, (0.0, 0.0), 0.3, domain=dom)
    # r^h ||D^h u||_{B_{r/2}} / ||u||_{B_r} for u = x^2 at the origin
    assert checks.caccioppoli[1] == pytest.approx(math.sqrt(2) / 2, rel=1e-10)
    assert checks.caccioppoli[2] == pytest.approx(2 * math.sqrt(2), rel=1e-10)
    assert checks.caccioppoli[3] == pytest.approx(0.0, abs=1e-14)
    assert checks.caccioppoli[4] == pytest.approx(0.0, abs=1e-14)
    assert checks.caccioppoli_radius == 0.3
    # quadratic: H3 and H4 add nothing, so the interpolation quotient is 1
    assert checks.interpolation == pytest.approx(1.0, rel=1e-12)
    assert checks.poincare.c_emp > 0


def test_caccioppoli_rejects_zero_denominator():
    zero = AnalyticField.quadratic(0.0, 0.0, 0.0)
    with pytest.raises(DiagnosticsError):
        classical_inequality_checks(zero, (0.0, 0.0), 0.3,
                                    domain=centered_square())


def test_interpolation_quotient_one_for_quadratics_and_scale_free():
    dom = centered_square()
    assert interpolation_quotient(parabola(), dom) == pytest.approx(1.0,
                                                                    rel=1e-12)
    # each Sobolev norm is 1-homogeneous so the quotient ignores amplitude
    q = interpolation_quotient(AnalyticField(QUARTIC), dom)
    q_scaled = interpolation_quotient(AnalyticField(f"3.7*({QUARTIC})"), dom)
    assert q > 0
    assert q_scaled == pytest.approx(q, rel=1e-12)
    assert total_energy(AnalyticField(QUARTIC), dom, "hessian") == \
        pytest.approx(32256 / 45, rel=1e-12)
