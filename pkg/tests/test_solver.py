"""Assembly, constrained solve, load handling and field integrals.

The weak-vs-strong quadrature oracle here is the main correctness anchor:
it checks the assembled bilinear form against the sixth-order strong form
c4*lap^2 u - c6*lap^3 u on smooth fields with a test function that
vanishes to second order on the boundary, so no boundary terms survive.
"""

import numpy as np
import pytest
import sympy

from nanoplate.geometry import Disk, InclusionSet, RectangleDomain
from nanoplate.materials import (IsotropicModuli, LengthScales,
                                 build_bending_operators,
                                 strong_form_constants)
from nanoplate.solver import (CoefficientField, IncompatibleLoadsError,
                              Solution, SolverError, assemble_constraints,
                              assemble_stiffness, check_compatibility,
                              domain_hessian_energy, load_solution_coeffs,
                              loads_from_preset, loads_from_table,
                              manufactured_problem, region_gradient_energy,
                              save_solution, solve)
from nanoplate.splines import SplineSpace, gauss_rule

X, Y = sympy.symbols("x y")


def default_ops(mu=1.0, lam=1.0, t=0.05, l=0.02):
    return build_bending_operators(IsotropicModuli(mu=mu, lam=lam),
                                   LengthScales(t=t, l0=l, l1=l, l2=l))


def unit_domain():
    return RectangleDomain(width=1.0, height=1.0, r0=1.0)


def reference_field(contrast=2.0, radius=0.12, cut_depth=4):
    ops = default_ops()
    inc_ops = build_bending_operators(ops.moduli.scaled(contrast), ops.scales)
    region = InclusionSet(primitives=(Disk(center=(0.5, 0.5), radius=radius),),
                          d0=0.1)
    return CoefficientField(background=ops, inclusion_ops=inc_ops,
                            inclusion=region, cut_depth=cut_depth)


def quad2d(fn, n=24):
    xs, wx = gauss_rule(n, 0.0, 1.0)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    vals = np.asarray(fn(gx, gy), dtype=float)
    return float(np.einsum("i,j,ij->", wx, wx, vals))


def test_weak_form_matches_strong_form_constants():
    """a(u, w) = integral((c4 lap^2 u - c6 lap^3 u) w) for w vanishing to
    second order on the boundary; 3 random coefficient sets at 1e-8."""
    rng = np.random.default_rng(17)
    u_expr = sympy.sin(sympy.Rational(13, 10) * X + sympy.Rational(2, 5)) \
        * sympy.cos(sympy.Rational(11, 10) * Y - sympy.Rational(1, 5))
    w_expr = (X * (1 - X) * Y * (1 - Y)) ** 3

    def comps2(e):
        return [sympy.diff(e, X, 2), sympy.diff(e, X, 1, Y, 1),
                sympy.diff(e, Y, 2)]

    def comps3(e):
        return [sympy.diff(e, X, 3), sympy.diff(e, X, 2, Y, 1),
                sympy.diff(e, X, 1, Y, 2), sympy.diff(e, Y, 3)]

    for _ in range(3):
        ops = build_bending_operators(
            IsotropicModuli(mu=rng.uniform(0.5, 2.0), lam=rng.uniform(0.1, 2.0)),
            LengthScales(t=rng.uniform(0.05, 0.4), l0=rng.uniform(0.01, 0.2),
                         l1=rng.uniform(0.01, 0.2), l2=rng.uniform(0.01, 0.2)))

        du, dw = comps2(u_expr), comps2(w_expr)
        tu, tw = comps3(u_expr), comps3(w_expr)
        weak = sum(ops.php_mat[i, j] * du[i] * dw[j]
                   for i in range(3) for j in range(3))
        weak += sum(ops.Q_mat[i, j] * tu[i] * tw[j]
                    for i in range(4) for j in range(4))

        c4, c6 = strong_form_constants(ops)
        lap = sympy.diff(u_expr, X, 2) + sympy.diff(u_expr, Y, 2)
        lap2 = sympy.diff(lap, X, 2) + sympy.diff(lap, Y, 2)
        lap3 = sympy.diff(lap2, X, 2) + sympy.diff(lap2, Y, 2)
        strong = (c4 * lap2 - c6 * lap3) * w_expr

        lhs = quad2d(sympy.lambdify((X, Y), weak, modules="numpy"))
        rhs = quad2d(sympy.lambdify((X, Y), strong, modules="numpy"))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-8)


def test_stiffness_is_symmetric_and_positive_semidefinite():
    space = SplineSpace.on_rectangle(3, 8, 8)
    k = assemble_stiffness(space, reference_field()).toarray()
    scale = np.abs(k).max()
    np.testing.assert_allclose(k, k.T, atol=1e-13 * scale)
    eigs = np.linalg.eigvalsh(k)
    assert eigs.min() > -1e-12 * eigs.max()


def test_kernel_dimension_is_exactly_three():
    """The bending form annihilates exactly the affine functions."""
    space = SplineSpace.on_rectangle(3, 10, 10)
    k = assemble_stiffness(space, CoefficientField(background=default_ops()))
    eigs = np.sort(np.linalg.eigvalsh(k.toarray()))
    knorm = eigs[-1]
    assert np.all(eigs[:3] <= 1e-10 * knorm)
    assert eigs[3] > 1e-10 * knorm
    # and the affine interpolants are honest null vectors
    for poly in (lambda x, y: np.ones_like(x), lambda x, y: x, lambda x, y: y):
        q = space.interpolate_polynomial(poly)
        assert np.linalg.norm(k @ q) <= 1e-10 * knorm * np.linalg.norm(q)


def test_constraints_bind_the_affine_kernel():
    space = SplineSpace.on_rectangle(3, 6, 6)
    c = assemble_constraints(space)
    assert c.shape == (3, space.n_dof)
    # the constraint functionals evaluated on 1, x, y give the integrals
    # of 1, x, y and their gradients over the unit square
    q1 = space.interpolate_polynomial(lambda x, y: np.ones_like(x))
    qx = space.interpolate_polynomial(lambda x, y: x)
    vals1 = c @ q1
    valsx = c @ qx
    np.testing.assert_allclose(vals1, [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(valsx, [0.5, 1.0, 0.0], atol=1e-12)


def test_in_space_solution_is_reproduced():
    """Solving with the consistent right-hand side of an in-space target
    returns that target (after kernel alignment) to 1e-9."""
    space = SplineSpace.on_rectangle(3, 8, 8)
    field = CoefficientField(background=default_ops())
    k = assemble_stiffness(space, field)

    def target(x, y):
        return x ** 3 - 2.0 * y ** 3 + x * y ** 2 + 0.5 * x ** 2 - y

    q_star = space.interpolate_polynomial(target)
    # remove the affine component so the target satisfies the
    # normalization constraints the solver enforces
    c = assemble_constraints(space)
    basis = np.column_stack([
        space.interpolate_polynomial(lambda x, y: np.ones_like(x)),
        space.interpolate_polynomial(lambda x, y: x),
        space.interpolate_polynomial(lambda x, y: y)])
    q_star = q_star - basis @ np.linalg.solve(c @ basis, c @ q_star)

    sol = solve(space, field, rhs_vector=k @ q_star)
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.0, 1.0, size=(80, 2))
    got = sol.evaluate(pts, 3)
    want = space.evaluate(q_star, pts, 3)
    err = np.abs(got - want).max()
    assert err <= 1e-9, err


def test_manufactured_cosine_errors_shrink_at_expected_rate():
    ops = default_ops(t=0.5, l=0.2)
    dom = unit_domain()
    u_exact = sympy.cos(sympy.pi * X) * sympy.cos(sympy.pi * Y)
    mp = manufactured_problem(u_exact, ops, dom)
    field = CoefficientField(background=ops)

    errs = []
    pts = np.column_stack([np.linspace(0.013, 0.987, 20).repeat(20),
                           np.tile(np.linspace(0.013, 0.987, 20), 20)])
    for cells in (8, 16):
        space = SplineSpace.on_rectangle(3, cells, cells)
        sol = solve(space, field, loads=mp.loads, volume=mp.volume)
        got = sol.evaluate(pts, 0)[:, 0]
        want = mp.exact.evaluate(pts, 0)[:, 0]
        errs.append(np.abs(got - want).max())
    # for the sixth-order problem at p = 3 the displacement rate is
    # duality-limited to 2(p - 2) = 2
    order = np.log2(errs[0] / errs[1])
    assert order > 1.7, (errs, order)
    assert errs[1] < 1e-4


def test_compatibility_presets_pass_and_constant_shear_fails():
    for dom in (unit_domain(),
                RectangleDomain(width=2.0, height=1.0, r0=0.5, x0=-1.0, y0=0.0)):
        for name in ("self_equilibrated_shear", "pure_moment", "high_order_moment"):
            loads = loads_from_preset(name, dom)
            rep = check_compatibility(loads, tol=1e-12)
            assert rep.passed, (name, rep.relative)

    dom = unit_domain()
    bad = loads_from_table(dom, ["bottom", "bottom"], [0.0, 1.0], [1.0, 1.0],
                           [0.0, 0.0], [0.0, 0.0], project=False)
    rep = check_compatibility(bad)
    assert not rep.passed
    with pytest.raises(IncompatibleLoadsError):
        rep.raise_if_failed()
    space = SplineSpace.on_rectangle(3, 6, 6)
    with pytest.raises(IncompatibleLoadsError):
        solve(space, CoefficientField(background=default_ops()), loads=bad)


def test_table_projection_restores_compatibility():
    dom = unit_domain()
    edges = ["bottom", "bottom", "right", "right", "top", "top", "left", "left"]
    s = [0.0, 1.0] * 4
    v = [1.0] * 8
    fixed = loads_from_table(dom, edges, s, v, [0.0] * 8, [0.0] * 8, project=True)
    rep = check_compatibility(fixed, tol=1e-10)
    assert rep.passed, rep.relative
    # the raw data was badly incompatible, so the projection had to move it
    assert fixed.meta["projection_relative"] > 0.5


def test_volume_compatibility_couples_to_boundary():
    """A volume load integrating to zero against 1, x, y passes on its own."""
    dom = unit_domain()
    loads = loads_from_preset("pure_moment", dom)
    vol = lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    rep = check_compatibility(loads, volume=vol, tol=1e-10)
    assert rep.passed, rep.relative


def test_work_equals_energy_identity():
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 8, 8)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    sol = solve(space, reference_field(), loads=loads)
    w = sol.work()
    np.testing.assert_allclose(sol.energy(), w, rtol=1e-10)
    assert sol.normalization_residual() <= 1e-10


def test_cg_agrees_with_direct():
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 8, 8)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    field = CoefficientField(background=default_ops())
    a = solve(space, field, loads=loads, method="direct")
    b = solve(space, field, loads=loads, method="cg", cg_tol=1e-13)
    np.testing.assert_allclose(b.work(), a.work(), rtol=1e-8)
    np.testing.assert_allclose(b.coeffs, a.coeffs,
                               atol=1e-7 * np.abs(a.coeffs).max())


def test_nested_inclusions_give_monotone_work():
    """Growing a stiffer inclusion keeps lowering the boundary work."""
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 12, 12)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    w0 = solve(space, CoefficientField(background=default_ops()), loads=loads).work()
    works = [w0]
    for radius in (0.10, 0.18):
        sol = solve(space, reference_field(radius=radius), loads=loads,
                    check_compat=False)
        works.append(sol.work())
    slack = 1e-8 * abs(w0)
    assert works[0] >= works[1] - slack
    assert works[1] >= works[2] - slack
    # and the drops are genuine, not within-slack ties
    assert works[0] - works[1] > 1e3 * slack
    assert works[1] - works[2] > 1e3 * slack


def test_work_gap_grows_with_contrast():
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 12, 12)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    w0 = solve(space, CoefficientField(background=default_ops()), loads=loads).work()
    gaps = []
    for c in (1.5, 2.0, 4.0):
        sol = solve(space, reference_field(contrast=c), loads=loads,
                    check_compat=False)
        gaps.append(w0 - sol.work())
    assert gaps[0] > 0.0
    assert gaps[0] < gaps[1] < gaps[2]


def test_cut_cell_depth_is_converged():
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 12, 12)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    works = {}
    for depth in (3, 5):
        sol = solve(space, reference_field(cut_depth=depth), loads=loads,
                    check_compat=False)
        works[depth] = sol.work()
    rel = abs(works[3] - works[5]) / abs(works[5])
    assert rel < 5e-3, rel


def test_region_energy_against_closed_form():
    """For a field with constant Hessian the region gradient energy over a
    disk is |H|^2 * area plus the (zero) third-order part."""
    space = SplineSpace.on_rectangle(3, 8, 8)
    coeffs = space.interpolate_polynomial(lambda x, y: x * x)
    field = Solution(space=space, field=CoefficientField(background=default_ops()),
                     coeffs=coeffs, multipliers=np.zeros(3),
                     load_vector=np.zeros(space.n_dof),
                     stiffness=assemble_stiffness(
                         space, CoefficientField(background=default_ops())),
                     constraints=assemble_constraints(space), diagnostics={})
    region = InclusionSet(primitives=(Disk(center=(0.5, 0.5), radius=0.2),))
    t = 0.05
    want = 4.0 * np.pi * 0.04  # |D2 u|^2 = 4 over the disk
    got = region_gradient_energy(field, space, region, t=t, depth=6)
    np.testing.assert_allclose(got, want, rtol=5e-4)
    # the cut-cell rule tightens with depth
    coarse = region_gradient_energy(field, space, region, t=t, depth=3)
    assert abs(got - want) < abs(coarse - want)

    total = domain_hessian_energy(field)
    np.testing.assert_allclose(total, 4.0, rtol=1e-12)


def test_snapshot_roundtrip(tmp_path):
    dom = unit_domain()
    space = SplineSpace.on_rectangle(3, 6, 6)
    loads = loads_from_preset("self_equilibrated_shear", dom)
    sol = solve(space, CoefficientField(background=default_ops()), loads=loads)
    path = tmp_path / "u.npz"
    save_solution(path, sol, extra_meta={"label": "check"})
    space2, coeffs, meta = load_solution_coeffs(path)
    np.testing.assert_array_equal(coeffs, sol.coeffs)
    assert meta["label"] == "check"
    assert meta["schema"] == "nanoplate.solution/1"
    pts = np.array([[0.3, 0.7], [0.9, 0.1]])
    np.testing.assert_array_equal(space2.evaluate(coeffs, pts, 2),
                                  sol.evaluate(pts, 2))


def test_solver_input_validation():
    space = SplineSpace.on_rectangle(3, 6, 6)
    field = CoefficientField(background=default_ops())
    with pytest.raises(ValueError):
        solve(space, field)  # no load data at all
    with pytest.raises(ValueError):
        solve(space, field, rhs_vector=np.zeros(space.n_dof), method="nope")
