"""Weighted extremal affine functions and the canonical potential.

For each standard case the weighted extremal affine function is constant,
and the weighted scalar curvature of the canonical potential equals that
constant at every interior point, so the canonical potential solves the
weighted Abreu equation.
"""
import numpy as np

from toricstab import extremal_affine, guillemin_potential, weighted_scalar_curvature
from toricstab.curvature import boundary_condition_residuals, max_boundary_residual
from toricstab.polytope import AffineFunction, interval, square, standard_simplex
from toricstab.quadrature import probe_points

CASES = [
    ("interval, f = 1", interval(), None),
    ("interval, f = 1 + x", interval(), AffineFunction([1.0], 1.0)),
    ("square, f = 1", square(), None),
    ("simplex, f = 1", standard_simplex(2), None),
]

for name, p, f in CASES:
    sol = extremal_affine(p, f)
    u0 = guillemin_potential(p)
    s = weighted_scalar_curvature(u0, f, probe_points(p))
    bc = max_boundary_residual(boundary_condition_residuals(u0))
    print(f"{name:22s} s = {sol.affine.constant:.10f}  slope {np.abs(sol.affine.gradient).max():.1e}"
          f"  curvature range [{s.min():.10f}, {s.max():.10f}]  facet residual {bc:.1e}")
