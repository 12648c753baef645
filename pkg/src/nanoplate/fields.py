"""Analytic displacement fields with the spline evaluation protocol.

An AnalyticField mirrors ``Solution.evaluate``: it maps (npts, 2) point
arrays to stacked derivative components ordered like
``splines.ORDER_SLICES``.  Uses: exact fields for manufactured-solution
convergence studies, and synthetic fields (constant Hessian, polynomial)
for closed-form checks of the unique-continuation diagnostics.
"""

from __future__ import annotations

import numpy as np
import sympy

from .splines import n_components

_X, _Y = sympy.symbols("x y")


class AnalyticField:
    """Wraps a sympy expression u(x, y) and its derivatives up to order 4."""

    def __init__(self, expr, max_order: int = 4):
        self.expr = sympy.sympify(expr)
        self.max_order = max_order
        self._funcs = []
        for order in range(max_order + 1):
            for jy in range(order + 1):
                jx = order - jy
                d = sympy.diff(self.expr, _X, jx, _Y, jy)
                self._funcs.append(sympy.lambdify((_X, _Y), d, modules="numpy"))

    @classmethod
    def quadratic(cls, h11: float, h12: float, h22: float,
                  grad=(0.0, 0.0), value: float = 0.0) -> "AnalyticField":
        """Field with constant Hessian (h11, h12; h12, h22)."""
        expr = (sympy.Rational(1, 2) * (h11 * _X ** 2 + h22 * _Y ** 2)
                + h12 * _X * _Y + grad[0] * _X + grad[1] * _Y + value)
        return cls(expr)

    def evaluate(self, points, max_order: int) -> np.ndarray:
        if max_order > self.max_order:
            raise ValueError(f"field only carries derivatives up to {self.max_order}")
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((p.shape[0], n_components(max_order)))
        for comp in range(out.shape[1]):
            v = self._funcs[comp](p[:, 0], p[:, 1])
            out[:, comp] = np.broadcast_to(np.asarray(v, dtype=float), (p.shape[0],))
        return out
