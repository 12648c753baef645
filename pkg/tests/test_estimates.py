"""Work gap, bracket, size-estimator and frequency-ratio checks."""

import numpy as np
import pytest

from nanoplate.estimates import (EstimatorError, WorkReport, calibrate,
                                 compute_works, energy_lemma_check, f_ratio,
                                 size_estimators, spectral_boundary_norm)
from nanoplate.geometry import Disk, InclusionSet, RectangleDomain
from nanoplate.materials import (IsotropicModuli, LengthScales, JumpKind,
                                 build_bending_operators, classify_jump)
from nanoplate.solver import (BoundaryLoads, CoefficientField,
                              loads_from_preset, solve)
from nanoplate.splines import SplineSpace


def default_ops(mu=1.0, lam=1.0):
    return build_bending_operators(IsotropicModuli(mu=mu, lam=lam),
                                   LengthScales(t=0.05, l0=0.02, l1=0.02, l2=0.02))


def classification(contrast):
    ops = default_ops()
    return classify_jump(ops, build_bending_operators(
        ops.moduli.scaled(contrast), ops.scales))


def fake_report(w, w0):
    return WorkReport(w=w, w0=w0, gap=w0 - w,
                      energy_residual_u=0.0, energy_residual_u0=0.0)


def small_solves(contrast=2.0, cells=8, radius=0.15):
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    space = SplineSpace.on_rectangle(3, cells, cells)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    ops = default_ops()
    inc_ops = build_bending_operators(ops.moduli.scaled(contrast), ops.scales)
    region = InclusionSet(primitives=(Disk(center=(0.5, 0.5), radius=radius),),
                          d0=0.1)
    field = CoefficientField(background=ops, inclusion_ops=inc_ops,
                             inclusion=region)
    u0 = solve(space, field.without_inclusion(), loads=loads)
    u = solve(space, field, loads=loads, check_compat=False)
    return dom, region, u, u0, loads


def test_compute_works_and_gap_sign():
    dom, region, u, u0, loads = small_solves()
    rep = compute_works(u, u0, loads=loads)
    assert rep.gap == rep.w0 - rep.w
    assert rep.gap > 0.0  # stiffer inclusion extracts work
    assert rep.energy_residual_u <= 1e-8
    assert rep.energy_residual_u0 <= 1e-8


def test_compute_works_rejects_mismatched_load_data():
    dom, region, u, u0, loads = small_solves()
    other = loads_from_preset("self_equilibrated_shear", dom, amplitude=1.1)
    space = u0.space
    u0_other = solve(space, u0.field, loads=other)
    with pytest.raises(EstimatorError):
        compute_works(u, u0_other)


def test_stiffer_estimator_arithmetic():
    dom = RectangleDomain(width=1.0, height=1.0, r0=2.0)
    rep = size_estimators(fake_report(w=0.95, w0=1.0), dom, classification(2.0))
    np.testing.assert_allclose(rep.rho_lower, 4.0 * 0.05 / 0.95, rtol=1e-14)
    np.testing.assert_allclose(rep.rho_lower_w0, 0.2, rtol=1e-14)
    np.testing.assert_allclose(rep.rho_upper_fat, 0.2, rtol=1e-14)
    np.testing.assert_allclose(rep.rho_upper_general,
                               4.0 * np.sqrt(0.05), rtol=1e-14)
    assert rep.p_used == 2.0
    for p in (1.25, 1.5, 2.0, 3.0):
        np.testing.assert_allclose(rep.rho_upper_general_curve[str(p)],
                                   4.0 * 0.05 ** (1.0 / p), rtol=1e-14)
    assert rep.jump_kind == "StifferEverywhere"


def test_softer_estimator_uses_w0_denominator():
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    rep = size_estimators(fake_report(w=1.05, w0=1.0), dom, classification(0.5))
    # softer: signed gap is W - W0 and the lower bound normalizes by W0
    np.testing.assert_allclose(rep.rho_lower, 0.05, rtol=1e-14)
    np.testing.assert_allclose(rep.rho_upper_fat, 0.05, rtol=1e-14)
    assert rep.jump_kind == "SofterEverywhere"


def test_wrong_sign_gap_is_refused_but_noise_is_clamped():
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    with pytest.raises(EstimatorError):
        size_estimators(fake_report(w=1.05, w0=1.0), dom, classification(2.0))
    rep = size_estimators(fake_report(w=1.0 + 1e-12, w0=1.0), dom,
                          classification(2.0))
    assert rep.rho_lower == 0.0
    assert rep.rho_upper_fat == 0.0


def test_indefinite_jump_is_refused():
    ops = default_ops()
    bad = classify_jump(
        build_bending_operators(IsotropicModuli(mu=1.0, lam=1.0),
                                LengthScales(t=0.05, l0=0.1, l1=0.1, l2=0.1)),
        build_bending_operators(IsotropicModuli(mu=1.2, lam=1.2),
                                LengthScales(t=0.05, l0=0.03, l1=0.03, l2=0.3)))
    assert bad.kind is JumpKind.INDEFINITE
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    with pytest.raises(EstimatorError):
        size_estimators(fake_report(w=0.9, w0=1.0), dom, bad)


def test_energy_bracket_on_a_small_solve():
    dom, region, u, u0, loads = small_solves()
    cls = classification(2.0)
    rep = compute_works(u, u0, loads=loads)
    rep = energy_lemma_check(rep, u0, cls, default_ops().scales, region)
    assert rep.i_d > 0.0
    assert 0.0 < rep.bracket_low < rep.bracket_high
    np.testing.assert_allclose(rep.bracket_margins[0],
                               rep.gap - rep.bracket_low, rtol=1e-12)
    np.testing.assert_allclose(rep.bracket_margins[1],
                               rep.bracket_high - rep.gap, rtol=1e-12)
    assert rep.jump_kind == "StifferEverywhere"


def test_energy_bracket_softer_flips_the_gap():
    dom, region, u, u0, loads = small_solves(contrast=0.5)
    cls = classification(0.5)
    rep = compute_works(u, u0, loads=loads)
    assert rep.gap < 0.0  # softer inclusion absorbs work
    rep = energy_lemma_check(rep, u0, cls, default_ops().scales, region)
    # margins refer to the signed gap W - W0 > 0
    np.testing.assert_allclose(rep.bracket_margins[0],
                               -rep.gap - rep.bracket_low, rtol=1e-12)
    assert rep.bracket_low > 0.0


def test_energy_bracket_refuses_indefinite():
    dom, region, u, u0, loads = small_solves()
    bad = classify_jump(
        build_bending_operators(IsotropicModuli(mu=1.0, lam=1.0),
                                LengthScales(t=0.05, l0=0.1, l1=0.1, l2=0.1)),
        build_bending_operators(IsotropicModuli(mu=1.2, lam=1.2),
                                LengthScales(t=0.05, l0=0.03, l1=0.03, l2=0.3)))
    rep = compute_works(u, u0, loads=loads)
    with pytest.raises(EstimatorError):
        energy_lemma_check(rep, u0, bad, default_ops().scales, region)


def test_spectral_norm_against_fourier_coefficients():
    """Three-term trigonometric signal: the norm must reduce to the
    weighted sum of its known Fourier coefficients."""
    n, ell, r0 = 512, 4.0, 1.3
    s = np.arange(n) * (ell / n)
    a0, a1, b3 = 0.7, -1.2, 0.4
    vals = (a0 + a1 * np.cos(2 * np.pi * s / ell)
            + b3 * np.sin(6 * np.pi * s / ell))
    for order in (-1.5, -0.5, 0.5):
        k1 = 2 * np.pi / ell
        k3 = 6 * np.pi / ell
        want = np.sqrt(a0 ** 2
                       + 2 * (1 + (k1 * r0) ** 2) ** order * (a1 / 2) ** 2
                       + 2 * (1 + (k3 * r0) ** 2) ** order * (b3 / 2) ** 2)
        got = spectral_boundary_norm(vals, order, r0, ell)
        np.testing.assert_allclose(got, want, rtol=1e-12)


def single_mode_loads(dom, mode, amplitude=1.0):
    chart = dom.chart()
    ell = chart.perimeter

    def v(s):
        return amplitude * np.cos(2 * np.pi * mode * np.asarray(s) / ell)

    zero = lambda s: np.zeros(np.shape(s))
    return BoundaryLoads(chart, v, zero, zero)


def test_f_ratio_single_mode_law():
    """One Fourier mode in the shear channel: every channel weight ratio
    collapses to (1 + k^2 r0^2)^(1/2)."""
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    for mode in (1, 2, 5):
        k = 2 * np.pi * mode / 4.0
        rep = f_ratio(single_mode_loads(dom, mode), dom)
        np.testing.assert_allclose(rep.f, np.sqrt(1 + k * k), rtol=1e-10)
    # amplitude invariance
    a = f_ratio(single_mode_loads(dom, 2, amplitude=1.0), dom).f
    b = f_ratio(single_mode_loads(dom, 2, amplitude=17.0), dom).f
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_f_ratio_constant_data_is_one():
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    chart = dom.chart()
    const = lambda s: np.full(np.shape(s), 2.0)
    zero = lambda s: np.zeros(np.shape(s))
    rep = f_ratio(BoundaryLoads(chart, const, zero, zero), dom)
    np.testing.assert_allclose(rep.f, 1.0, rtol=1e-13)


def test_f_ratio_mixture_is_bracketed_by_pure_modes():
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    chart = dom.chart()
    ell = chart.perimeter

    def v(s):
        s = np.asarray(s)
        return (np.cos(2 * np.pi * s / ell) + np.cos(8 * np.pi * s / ell))

    zero = lambda s: np.zeros(np.shape(s))
    rep = f_ratio(BoundaryLoads(chart, v, zero, zero), dom)
    f1 = np.sqrt(1 + (2 * np.pi / 4) ** 2)
    f4 = np.sqrt(1 + (8 * np.pi / 4) ** 2)
    assert f1 < rep.f < f4


def test_f_ratio_rejects_zero_data():
    dom = RectangleDomain(width=1.0, height=1.0, r0=1.0)
    chart = dom.chart()
    zero = lambda s: np.zeros(np.shape(s))
    with pytest.raises(EstimatorError):
        f_ratio(BoundaryLoads(chart, zero, zero, zero), dom)


def make_sweep_entry(area, ratio, r0=1.0):
    rep = fake_report(w=1.0 - ratio, w0=1.0)
    dom = RectangleDomain(width=1.0, height=1.0, r0=r0)
    return area, size_estimators(rep, dom, classification(2.0))


def test_calibration_on_an_exact_power_law():
    """Areas proportional to the gap ratio: slope 1, constants from the
    ratio formulas."""
    ratios = np.array([0.02, 0.04, 0.08, 0.16])
    entries = [make_sweep_entry(2.0 * g, g) for g in ratios]
    cal = calibrate(entries)
    np.testing.assert_allclose(cal.slope, 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.exp(cal.intercept), 0.5, rtol=1e-12)
    # rhoLower = g/(1-g) so area/rhoLower = 2(1-g); the minimum is at the
    # largest ratio
    np.testing.assert_allclose(cal.c_low, 2.0 * (1.0 - 0.16), rtol=1e-12)
    np.testing.assert_allclose(cal.c_up, 2.0, rtol=1e-12)
    assert cal.n_points == 4
    assert 0.0 < cal.c_low <= cal.c_up < np.inf


def test_calibration_input_validation():
    entries = [make_sweep_entry(2.0 * g, g) for g in (0.02, 0.04)]
    with pytest.raises(EstimatorError):
        calibrate(entries)
    same = [make_sweep_entry(0.1, g) for g in (0.02, 0.04, 0.08)]
    with pytest.raises(EstimatorError):
        calibrate(same)
