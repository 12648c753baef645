"""Univariate and tensor-product spline basis checks.

The solver needs trustworthy derivative tables up to third order, so the
basis is validated here against scipy's reference B-spline evaluator and
against exact polynomial reproduction.
"""

import numpy as np
import pytest
from scipy.interpolate import BSpline

from nanoplate.splines import (ORDER_SLICES, BSplineBasis1D, SplineSpace,
                               gauss_rule, n_components)


def test_gauss_rule_polynomial_exactness():
    # n-point Gauss integrates degree 2n-1 exactly
    for n in (2, 4, 6):
        xs, ws = gauss_rule(n, -1.5, 2.0)
        for deg in range(2 * n):
            exact = (2.0 ** (deg + 1) - (-1.5) ** (deg + 1)) / (deg + 1)
            np.testing.assert_allclose(np.sum(ws * xs ** deg), exact,
                                       rtol=1e-13, atol=1e-13)


def test_component_layout():
    assert n_components(0) == 1
    assert n_components(3) == 10
    assert n_components(4) == 15
    # slices tile [0, n_components) without gaps
    stop = 0
    for order in range(5):
        sl = ORDER_SLICES[order]
        assert sl.start == stop
        assert sl.stop - sl.start == order + 1
        stop = sl.stop


def test_partition_of_unity_and_derivative_sums():
    rng = np.random.default_rng(3)
    basis = BSplineBasis1D(degree=3, n_cells=7, x0=-0.4, length=2.3)
    x = rng.uniform(-0.4, 1.9, size=200)
    cells, table = basis.eval(x, 3)
    # sum over local basis functions: 1 for values, 0 for derivatives
    sums = table.sum(axis=1)
    np.testing.assert_allclose(sums[0], 1.0, atol=5e-15)
    for order in (1, 2, 3):
        np.testing.assert_allclose(sums[order], 0.0, atol=2e-11)


def test_derivatives_match_scipy():
    rng = np.random.default_rng(11)
    basis = BSplineBasis1D(degree=4, n_cells=6, x0=0.2, length=1.7)
    coeffs = rng.standard_normal(basis.n_basis)
    ref = BSpline(basis.knots, coeffs, basis.degree)
    x = rng.uniform(0.2, 1.9, size=150)
    cells, table = basis.eval(x, 4)
    for order in range(5):
        mine = np.zeros_like(x)
        for q in range(x.size):
            local = coeffs[cells[q]:cells[q] + basis.degree + 1]
            mine[q] = table[order, :, q] @ local
        theirs = ref.derivative(order)(x) if order else ref(x)
        np.testing.assert_allclose(mine, theirs, rtol=1e-11, atol=1e-9)


def test_endpoint_evaluation_is_clipped_into_range():
    basis = BSplineBasis1D(degree=3, n_cells=5)
    cells = basis.cell_of(np.array([0.0, 1.0]))
    assert cells[0] == 0
    assert cells[-1] == 4
    # open endpoints interpolate the first/last coefficient
    coeffs = np.zeros(basis.n_basis)
    coeffs[0] = 2.5
    cells, table = basis.eval(np.array([0.0]), 0)
    val = table[0, :, 0] @ coeffs[cells[0]:cells[0] + 4]
    np.testing.assert_allclose(val, 2.5, rtol=1e-14)


def test_greville_reproduces_identity():
    basis = BSplineBasis1D(degree=3, n_cells=9, x0=-1.0, length=3.0)
    coeffs = basis.greville()
    x = np.linspace(-1.0, 2.0, 77)
    cells, table = basis.eval(x, 1)
    vals = np.zeros_like(x)
    ders = np.zeros_like(x)
    for q in range(x.size):
        local = coeffs[cells[q]:cells[q] + 4]
        vals[q] = table[0, :, q] @ local
        ders[q] = table[1, :, q] @ local
    np.testing.assert_allclose(vals, x, atol=1e-13)
    np.testing.assert_allclose(ders, 1.0, atol=1e-11)


def test_derivative_order_above_degree_is_rejected():
    basis = BSplineBasis1D(degree=3, n_cells=4)
    with pytest.raises(ValueError):
        basis.eval_cell(0, np.array([0.1]), 4)


def test_space_polynomial_reproduction_with_derivatives():
    """interpolate_polynomial is exact for per-axis degree <= p,
    including all tabulated derivatives."""
    space = SplineSpace.on_rectangle(3, 5, 4, x0=0.5, y0=-0.5,
                                     width=2.0, height=1.5)

    def poly(x, y):
        return 1.0 + 2.0 * x - y + 0.5 * x * y + x ** 3 - 2.0 * y ** 3 + x ** 2 * y

    coeffs = space.interpolate_polynomial(poly)
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(0.5, 2.5, 64), rng.uniform(-0.5, 1.0, 64)])
    out = space.evaluate(coeffs, pts, 3)
    x, y = pts[:, 0], pts[:, 1]
    np.testing.assert_allclose(out[:, 0], poly(x, y), rtol=1e-12, atol=1e-12)
    # a few hand derivatives: u_x, u_xx, u_xxx, u_xxy
    np.testing.assert_allclose(out[:, 1], 2.0 + 0.5 * y + 3 * x ** 2 + 2 * x * y,
                               rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(out[:, 3], 6 * x + 2 * y, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(out[:, 6], 6.0, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(out[:, 7], 2.0, rtol=1e-9, atol=1e-9)


def test_space_evaluate_matches_pointwise_loop():
    rng = np.random.default_rng(19)
    space = SplineSpace.on_rectangle(3, 6, 5)
    coeffs = rng.standard_normal(space.n_dof)
    pts = rng.uniform(0.0, 1.0, size=(40, 2))
    out = space.evaluate(coeffs, pts, 2)
    ny = space.by.n_basis
    p = space.degree
    for q in range(pts.shape[0]):
        cx = int(space.bx.cell_of(pts[q:q + 1, 0])[0])
        cy = int(space.by.cell_of(pts[q:q + 1, 1])[0])
        tx = space.bx.eval_cell(cx, pts[q:q + 1, 0], 2)
        ty = space.by.eval_cell(cy, pts[q:q + 1, 1], 2)
        patch = coeffs[(np.arange(cx, cx + p + 1)[:, None] * ny
                        + np.arange(cy, cy + p + 1)[None, :])]
        comp = 0
        for o in range(3):
            for jy in range(o + 1):
                jx = o - jy
                want = tx[jx, :, 0] @ patch @ ty[jy, :, 0]
                np.testing.assert_allclose(out[q, comp], want, rtol=1e-12,
                                           atol=1e-12)
                comp += 1
