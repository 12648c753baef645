"""Strain-gradient plate bending on rectangles with H^3 spline spaces.

The package solves the sixth-order bending problem for a two-dimensional
plate model with strain-gradient regularization, under pure natural
(Neumann-type) boundary loads, with or without an elastic inclusion.  On
top of the solver sit the boundary-work inclusion size estimators and a
set of empirical unique-continuation diagnostics (doubling, three-sphere,
Muckenhoupt, Caccioppoli, Poincare, interpolation constants).

Modules
-------
materials
    Isotropic moduli, internal length scales, fourth/sixth order bending
    operators and the stiffness-jump classification.
geometry
    Rectangle domains, inclusion primitives, erosion/fatness, boundary
    arclength chart.
splines
    Tensor-product B-spline spaces with derivative tables up to the
    polynomial degree.
solver
    Weak-form assembly, constrained saddle solve, boundary load models,
    compatibility gate, manufactured solutions.
estimates
    Boundary works, two-sided energy bracket, size estimators, boundary
    data frequency ratio, calibration.
ucp
    Ball energies and empirical unique-continuation constants.
harness
    Scenario files, run orchestration, JSONL/CSV/PNG reports, CLI.
"""

__version__ = "0.1.0"
