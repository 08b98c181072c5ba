"""Closed-form oracle suite, runnable from the command line.

Each check compares a computed value with a value derived by hand
(closed-form integrals on the interval, square and triangle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import (AffinePower, boundary_condition_residuals, integration_by_parts_residual,
                        max_boundary_residual, weighted_scalar_curvature)
from .energy import k_energy
from .polynomial import Polynomial
from .polytope import AffineFunction, interval, square, standard_simplex
from .potentials import guillemin_potential, inverse_hessian, make_pl
from .quadrature import probe_points
from .stability import boundary_norm, extremal_affine, futaki, futaki_mabuchi_form


@dataclass(frozen=True)
class OracleCheck:
    name: str
    value: float
    expected: float
    tol: float

    @property
    def error(self) -> float:
        return abs(self.value - self.expected)

    @property
    def passed(self) -> bool:
        return self.error <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name}: got {self.value:.12g}, expected "
                f"{self.expected:.12g} (err {self.error:.2e}, tol {self.tol:.0e})")


def oracle_cases():
    """(name, polytope, weight, extremal value) for the four standard cases."""
    one1 = AffineFunction.constant_function(1.0, 1)
    one2 = AffineFunction.constant_function(1.0, 2)
    return [
        ("interval f=1", interval(), one1, 4.0),
        ("interval f=1+x", interval(), AffineFunction([1.0], 1.0), 8.0),
        ("square f=1", square(), one2, 4.0),
        ("simplex f=1", standard_simplex(2), one2, 12.0),
    ]


def _max_dev(values, target):
    return float(np.max(np.abs(np.asarray(values) - target)))


def run_checks() -> list:
    out = []
    for name, p, f, s_val in oracle_cases():
        sol = extremal_affine(p, f)
        out.append(OracleCheck(f"extremal constant, {name}", sol.affine.constant, s_val, 1e-7))
        out.append(OracleCheck(f"extremal slope, {name}",
                               float(np.max(np.abs(sol.affine.gradient))), 0.0, 1e-7))
        u0 = guillemin_potential(p)
        s = weighted_scalar_curvature(u0, f, probe_points(p))
        out.append(OracleCheck(f"curvature of u_0, {name}", s_val + _max_dev(s, s_val),
                               s_val, 1e-8))
        out.append(OracleCheck(f"boundary conditions of u_0, {name}",
                               max_boundary_residual(boundary_condition_residuals(u0)), 0.0, 1e-6))
        m = p.dim
        phi = Polynomial.monomial((1,) * m)
        out.append(OracleCheck(f"integration by parts, {name}",
                               integration_by_parts_residual(p, f, u0, phi, AffinePower(f, 2 * m - 1)),
                               0.0, 1e-6))

    iv = interval()
    H = inverse_hessian(guillemin_potential(iv), np.array([[0.3]]))[0, 0, 0]
    out.append(OracleCheck("interval H(0.3) = 2x(1-x)", H, 0.42, 1e-14))
    tri = standard_simplex(2)
    H = inverse_hessian(guillemin_potential(tri), np.array([[1 / 3, 1 / 3]]))[0]
    out.append(OracleCheck("simplex H_12 at centroid", H[0, 1], -2 / 9, 1e-14))

    sq = square()
    crease = make_pl([AffineFunction([0.0, 0.0], 0.0), AffineFunction([1.0, 0.0], 0.0)])
    s4 = AffineFunction.constant_function(4.0, 2)
    out.append(OracleCheck("square F(max(0,x1))", futaki(sq, None, s4, crease), 2.0, 1e-8))
    out.append(OracleCheck("square |max(0,x1)|_b", boundary_norm(sq, None, crease), 3.0, 1e-8))
    fw = AffineFunction([1.0], 1.0)
    s8 = AffineFunction.constant_function(8.0, 1)
    kink = make_pl([AffineFunction([0.0], 0.0), AffineFunction([1.0], -0.5)])
    out.append(OracleCheck("interval f=1+x F(max(0,x-1/2))", futaki(iv, fw, s8, kink), 1 / 3, 1e-8))
    out.append(OracleCheck("interval f=1+x |max(0,x-1/2)|_b", boundary_norm(iv, fw, kink), 0.25, 1e-8))

    for name, p, f, expected in [("interval f=1", iv, None, 1.0),
                                 ("interval f=1+x", iv, fw, math.log(2)),
                                 ("square f=1", sq, None, 8.0)]:
        s = extremal_affine(p, f).affine
        out.append(OracleCheck(f"F(u_0) = m int dmu/f^(2m-1), {name}",
                               futaki(p, f, s, guillemin_potential(p)), expected, 1e-6))
    out.append(OracleCheck("K-energy of u_0 on the square", k_energy(sq, None, guillemin_potential(sq)).total,
                           8.0, 1e-6))
    c = AffineFunction([1.0], -0.5)
    out.append(OracleCheck("Futaki-Mabuchi form of x - 1/2", futaki_mabuchi_form(iv, None, c, c),
                           1 / 12, 1e-12))
    return out


def run_selftest(stream=None) -> bool:
    checks = run_checks()
    for chk in checks:
        print(chk.line(), file=stream)
    n_pass = sum(chk.passed for chk in checks)
    print(f"{n_pass}/{len(checks)} checks passed", file=stream)
    return n_pass == len(checks)
