"""Tensor-product B-spline spaces on axis-aligned rectangles.

Open uniform knot vectors, degree p >= 3, global smoothness C^{p-1}, which
is enough for conforming discretization of sixth-order problems (the weak
form needs square-integrable third derivatives).  The basis evaluation
returns, for each query point, the (p+1) basis functions that are nonzero
there together with their derivatives up to a requested order; assembly
and point evaluation are built on these local tables.

Component ordering for stacked derivative values follows total order, x
first within an order:

    [u, u_x, u_y, u_xx, u_xy, u_yy, u_xxx, u_xxy, u_xyy, u_yyy, ...]

Slices per order are available as ``ORDER_SLICES``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# slice of the stacked-component axis holding the derivatives of each total
# order; order k has k+1 distinct components (d/dx^(k-j) d/dy^j, j=0..k)
ORDER_SLICES = {
    0: slice(0, 1),
    1: slice(1, 3),
    2: slice(3, 6),
    3: slice(6, 10),
    4: slice(10, 15),
}

_N_COMPONENTS = {0: 1, 1: 3, 2: 6, 3: 10, 4: 15}


def n_components(max_order: int) -> int:
    """Number of stacked derivative components for orders 0..max_order."""
    return _N_COMPONENTS[max_order]


def gauss_rule(n: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _ders_basis(knots: np.ndarray, p: int, span: int, x: np.ndarray, n_ders: int) -> np.ndarray:
    """Nonzero basis functions and derivatives at points sharing one span.

    Cox-de Boor derivative recursion (the classical DersBasisFuns scheme),
    vectorized over the points.  ``span`` indexes into ``knots`` such that
    knots[span] <= x <= knots[span+1] with knots[span] < knots[span+1].

    Returns array of shape (n_ders+1, p+1, len(x)); entry [k, j, q] is the
    k-th derivative of basis function (span - p + j) at x[q].  Derivative
    orders beyond p come back as zero rows.
    """
    m = x.shape[0]
    nd = min(n_ders, p)
    ndu = np.empty((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    left = np.empty((p + 1, m))
    right = np.empty((p + 1, m))
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n_ders + 1, p + 1, m))
    ders[0] = ndu[:, p]

    a = np.empty((2, p + 1, m))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    fact = float(p)
    for k in range(1, nd + 1):
        ders[k] *= fact
        fact *= p - k
    return ders


@dataclass
class BSplineBasis1D:
    """Univariate B-spline basis on an interval with uniform cells.

    Attributes:
        degree: polynomial degree p (>= 1; the plate solver needs >= 3).
        n_cells: number of uniform knot spans.
        x0: left endpoint.
        length: interval length.
    """

    degree: int
    n_cells: int
    x0: float = 0.0
    length: float = 1.0
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        p = self.degree
        interior = np.linspace(self.x0, self.x0 + self.length, self.n_cells + 1)
        self.knots = np.concatenate([
            np.full(p, interior[0]), interior, np.full(p, interior[-1]),
        ])

    @property
    def n_basis(self) -> int:
        return self.n_cells + self.degree

    @property
    def cell_width(self) -> float:
        return self.length / self.n_cells

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        """Cell index for each point, clipped to valid range at endpoints."""
        t = (np.asarray(x, dtype=float) - self.x0) / self.cell_width
        return np.clip(np.floor(t).astype(int), 0, self.n_cells - 1)

    def cell_bounds(self, c: int) -> tuple[float, float]:
        h = self.cell_width
        return self.x0 + c * h, self.x0 + (c + 1) * h

    def eval_cell(self, c: int, x: np.ndarray, max_order: int) -> np.ndarray:
        """Derivative table for points known to lie in cell ``c``.

        Returns (max_order+1, p+1, npts); basis j is global index c + j.
        """
        if max_order > self.degree:
            raise ValueError(
                f"requested derivative order {max_order} exceeds degree {self.degree}")
        span = c + self.degree
        return _ders_basis(self.knots, self.degree, span, np.asarray(x, dtype=float), max_order)

    def eval(self, x: np.ndarray, max_order: int):
        """Derivative tables at arbitrary points, grouped by cell.

        Returns (cells, table) with cells (npts,) int and table of shape
        (max_order+1, p+1, npts); basis j of point q has global index
        cells[q] + j.
        """
        x = np.asarray(x, dtype=float)
        cells = self.cell_of(x)
        table = np.empty((max_order + 1, self.degree + 1, x.shape[0]))
        for c in np.unique(cells):
            sel = cells == c
            table[:, :, sel] = self.eval_cell(c, x[sel], max_order)
        return cells, table

    def greville(self) -> np.ndarray:
        """Greville abscissae; coefficient vector greville() reproduces x."""
        p = self.degree
        return np.array([self.knots[i + 1:i + p + 1].mean() for i in range(self.n_basis)])


@dataclass
class SplineSpace:
    """Tensor-product spline space on an axis-aligned rectangle.

    Global degrees of freedom are numbered ix * n_basis_y + iy.
    """

    bx: BSplineBasis1D
    by: BSplineBasis1D

    @classmethod
    def on_rectangle(cls, degree: int, cells_x: int, cells_y: int,
                     x0: float = 0.0, y0: float = 0.0,
                     width: float = 1.0, height: float = 1.0) -> "SplineSpace":
        return cls(BSplineBasis1D(degree, cells_x, x0, width),
                   BSplineBasis1D(degree, cells_y, y0, height))

    @property
    def degree(self) -> int:
        return self.bx.degree

    @property
    def n_dof(self) -> int:
        return self.bx.n_basis * self.by.n_basis

    @property
    def n_cells(self) -> tuple[int, int]:
        return self.bx.n_cells, self.by.n_cells

    def global_indices(self, cx: int, cy: int) -> np.ndarray:
        """Global dof indices of the (p+1)^2 basis functions on cell (cx, cy)."""
        p = self.degree
        ix = np.arange(cx, cx + p + 1)
        iy = np.arange(cy, cy + p + 1)
        return (ix[:, None] * self.by.n_basis + iy[None, :]).ravel()

    def cells(self):
        for cx in range(self.bx.n_cells):
            for cy in range(self.by.n_cells):
                yield cx, cy

    def cell_rect(self, cx: int, cy: int):
        ax, bx_ = self.bx.cell_bounds(cx)
        ay, by_ = self.by.cell_bounds(cy)
        return ax, bx_, ay, by_

    def local_values(self, tab_x: np.ndarray, tab_y: np.ndarray, max_order: int) -> np.ndarray:
        """Stacked derivative components on a tensor grid of points.

        Args:
            tab_x: (orders, p+1, nqx) from the x basis.
            tab_y: (orders, p+1, nqy) from the y basis.
            max_order: highest total derivative order wanted.

        Returns:
            (ncomp, (p+1)^2, nqx*nqy) array; component axis ordered per
            ORDER_SLICES, basis axis is ax*(p+1)+ay, point axis qx*nqy+qy.
        """
        p1 = tab_x.shape[1]
        nqx, nqy = tab_x.shape[2], tab_y.shape[2]
        out = np.empty((n_components(max_order), p1 * p1, nqx * nqy))
        comp = 0
        for order in range(max_order + 1):
            for jy in range(order + 1):
                jx = order - jy
                block = np.einsum("aq,br->abqr", tab_x[jx], tab_y[jy])
                out[comp] = block.reshape(p1 * p1, nqx * nqy)
                comp += 1
        return out

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray, max_order: int) -> np.ndarray:
        """Field values and derivatives at arbitrary points.

        Args:
            coeffs: (n_dof,) coefficient vector.
            points: (npts, 2) coordinates inside the rectangle (closed).
            max_order: highest derivative order (<= degree).

        Returns:
            (npts, ncomp) array of stacked derivative components.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        p = self.degree
        cxs = self.bx.cell_of(points[:, 0])
        cys = self.by.cell_of(points[:, 1])
        key = cxs * self.by.n_cells + cys
        order = np.argsort(key, kind="stable")
        ncomp = n_components(max_order)
        out = np.empty((points.shape[0], ncomp))
        ny = self.by.n_basis

        start = 0
        while start < order.size:
            k = key[order[start]]
            stop = start
            while stop < order.size and key[order[stop]] == k:
                stop += 1
            sel = order[start:stop]
            cx, cy = int(cxs[sel[0]]), int(cys[sel[0]])
            tx = self.bx.eval_cell(cx, points[sel, 0], max_order)
            ty = self.by.eval_cell(cy, points[sel, 1], max_order)
            patch = coeffs[(np.arange(cx, cx + p + 1)[:, None] * ny
                            + np.arange(cy, cy + p + 1)[None, :])]
            comp = 0
            for o in range(max_order + 1):
                for jy in range(o + 1):
                    jx = o - jy
                    # value_q = sum_ab tx[jx,a,q] * patch[a,b] * ty[jy,b,q]
                    out[sel, comp] = np.einsum("aq,ab,bq->q", tx[jx], patch, ty[jy])
                    comp += 1
            start = stop
        return out

    def greville_points(self) -> np.ndarray:
        gx = self.bx.greville()
        gy = self.by.greville()
        return np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)

    def interpolate_polynomial(self, poly_xy) -> np.ndarray:
        """Coefficients reproducing a polynomial of coordinate degree <= p.

        Solves the (well-conditioned) collocation system at the Greville
        grid; exact reproduction for polynomials inside the space.
        """
        pts = self.greville_points()
        vals = poly_xy(pts[:, 0], pts[:, 1])
        a = np.zeros((self.n_dof, self.n_dof))
        cxs, tabx = self.bx.eval(pts[:, 0], 0)
        cys, taby = self.by.eval(pts[:, 1], 0)
        p = self.degree
        ny = self.by.n_basis
        for q in range(pts.shape[0]):
            gi = (np.arange(cxs[q], cxs[q] + p + 1)[:, None] * ny
                  + np.arange(cys[q], cys[q] + p + 1)[None, :]).ravel()
            a[q, gi] = np.outer(tabx[0, :, q], taby[0, :, q]).ravel()
        return np.linalg.solve(a, vals)
