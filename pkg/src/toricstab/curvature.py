"""Abreu and weighted Abreu operators, facet boundary conditions and the
integration-by-parts identity.

With psi = f^-(2m-1) the weighted scalar curvature is

    s_{u,f} = -f^(2m+1) sum_ij (psi H_ij)_{,ij}

and the product rule, using that f is affine, expands this to

    -f^2 sum H_ij,ij + 2k f sum_ij H_ij,j f_i - k(k+1) sum_ij H_ij f_i f_j,

where k = 2m - 1.  Everything is evaluated from exact jets of H.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryConditionFailure, BoundaryEvaluation, NotConvexAt
from .polynomial import Polynomial
from .polytope import AffineFunction, LabelledPolytope
from .potentials import SymplecticPotential, inverse_hessian_jets
from .quadrature import (integrate_boundary, integrate_interior, interior_nodes, resolve_scheme,
                         weighted_sum)


class AffinePower:
    """Scalar field f^-k for a positive affine f, with exact jets."""

    def __init__(self, f: AffineFunction, exponent: float):
        self.f = f
        self.exponent = float(exponent)

    def __call__(self, X):
        return self.f(X) ** -self.exponent

    def jet(self, X):
        X = np.atleast_2d(X)
        k = self.exponent
        g = self.f.gradient
        fx = self.f(X)
        val = fx ** -k
        grad = (-k * fx ** (-k - 1))[:, None] * g
        hess = (k * (k + 1) * fx ** (-k - 2))[:, None, None] * np.outer(g, g)
        return val, grad, hess

    def __repr__(self):
        return f"AffinePower({self.f!r}, {self.exponent:g})"


def _as_weight(dim, f):
    if f is None:
        return AffineFunction.constant_function(1.0, dim)
    if isinstance(f, (int, float)):
        return AffineFunction.constant_function(float(f), dim)
    return f


def _scalar_field_jet(psi, X):
    X = np.atleast_2d(X)
    if isinstance(psi, (int, float)):
        n, m = X.shape
        return np.full(n, float(psi)), np.zeros((n, m)), np.zeros((n, m, m))
    if isinstance(psi, AffineFunction):
        psi = Polynomial.from_affine(psi)
    if isinstance(psi, Polynomial):
        v, g, h = psi.jet(X, 2)
        return v, g, h
    return psi.jet(X)


def _checked_jets(u: SymplecticPotential, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if u.canonical:
        L = u.polytope.label_values(X)
        bad = np.min(L, axis=1) <= u.polytope.eps
        if np.any(bad):
            x = X[np.argmax(bad)]
            raise BoundaryEvaluation(f"point {x.tolist()} is on or outside the boundary")
    H, dH, d2H = inverse_hessian_jets(u, X)
    lam = np.linalg.eigvalsh(H)[:, 0]
    if np.any(lam <= 0):
        k = int(np.argmin(lam))
        raise NotConvexAt(f"Hessian not positive definite at {X[k].tolist()}", point=X[k])
    return X, H, dH, d2H


def _divergence_terms(H, dH, d2H):
    # A = sum_ij H_ij,ij ; B_i = sum_j H_ij,j
    A = np.einsum("nijij->n", d2H)
    B = np.einsum("njij->ni", dH)
    return A, B


def abreu_curvature(u: SymplecticPotential, x):
    """Unweighted Abreu scalar curvature -sum H_ij,ij (scalar or array)."""
    X, H, dH, d2H = _checked_jets(u, x)
    A, _ = _divergence_terms(H, dH, d2H)
    out = -A
    return float(out[0]) if np.ndim(x) == 1 else out


def weighted_scalar_curvature(u: SymplecticPotential, f, x):
    """s_{u,f} at a point (returns float) or at an (N, m) array of points.

    Raises
    ------
    BoundaryEvaluation, NotConvexAt
    """
    f = _as_weight(u.dim, f)
    X, H, dH, d2H = _checked_jets(u, x)
    out = _weighted_from_jets(u.dim, f, X, H, dH, d2H)
    return float(out[0]) if np.ndim(x) == 1 else out


def _weighted_from_jets(m, f, X, H, dH, d2H):
    k = 2 * m - 1
    A, B = _divergence_terms(H, dH, d2H)
    g = f.gradient
    fx = f(X)
    return (-fx ** 2 * A + 2 * k * fx * (B @ g)
            - k * (k + 1) * np.einsum("nij,i,j->n", H, g, g))


@dataclass(frozen=True)
class CurvatureSample:
    point: np.ndarray
    weighted: float
    unweighted: float
    condition: float


def sample_curvature(u: SymplecticPotential, f, points) -> list:
    """Weighted and unweighted curvature plus cond(Hess u) at each point."""
    f = _as_weight(u.dim, f)
    X, H, dH, d2H = _checked_jets(u, points)
    A, _ = _divergence_terms(H, dH, d2H)
    s = _weighted_from_jets(u.dim, f, X, H, dH, d2H)
    cond = np.linalg.cond(H)
    return [CurvatureSample(X[i], float(s[i]), float(-A[i]), float(cond[i]))
            for i in range(len(X))]


# -- boundary conditions ---------------------------------------------------------

@dataclass(frozen=True)
class FacetResidual:
    facet: int
    n_samples: int
    kernel: float        # max |H(xi) u_j|
    derivative: float    # max |dH(xi)(u_j, u_j) - 2 u_j|


_OFFSETS = (1e-3, 1e-4, 1e-5)


def _richardson_weights(ts):
    # Lagrange weights of the quadratic through (t_i, y_i) evaluated at t = 0
    ts = np.asarray(ts, dtype=float)
    w = np.ones(len(ts))
    for i in range(len(ts)):
        for j in range(len(ts)):
            if i != j:
                w[i] *= ts[j] / (ts[j] - ts[i])
    return w


def facet_sample_points(p: LabelledPolytope, i: int, n: int) -> np.ndarray:
    """n deterministic points in the relative interior of facet i."""
    V = p.facet_vertices(i)
    c = V.mean(axis=0)
    pts = [c]
    k = 0
    while len(pts) < n and len(V) > 1:
        v = V[k % len(V)]
        frac = 0.5 / (1 + k // len(V))
        pts.append(c + frac * (v - c))
        k += 1
    return np.array(pts[:n])


def boundary_condition_residuals(u: SymplecticPotential, samples_per_facet: int = 5) -> list:
    """Extrapolated facet residuals of H u_j = 0 and dH(u_j, u_j) = 2 u_j.

    Each quantity is evaluated at the inward offsets t in (1e-3, 1e-4, 1e-5)
    along the unit normal and extrapolated quadratically to t = 0.
    """
    p = u.polytope
    w = _richardson_weights(_OFFSETS)
    out = []
    for i in range(p.n_facets):
        uj = p.labels[i].gradient
        nrm = uj / np.linalg.norm(uj)
        xi = facet_sample_points(p, i, samples_per_facet)
        kern = np.zeros((len(xi), p.dim))
        deriv = np.zeros((len(xi), p.dim))
        for t, wt in zip(_OFFSETS, w):
            H, dH, _ = inverse_hessian_jets(u, xi + t * nrm)
            kern += wt * (H @ uj)
            deriv += wt * np.einsum("nkab,a,b->nk", dH, uj, uj)
        out.append(FacetResidual(
            i, len(xi),
            float(np.max(np.linalg.norm(kern, axis=1))),
            float(np.max(np.linalg.norm(deriv - 2 * uj, axis=1)))))
    return out


def max_boundary_residual(residuals) -> float:
    return max(max(r.kernel, r.derivative) for r in residuals)


# -- integral identities ---------------------------------------------------------

def integration_by_parts_residual(p: LabelledPolytope, f, u: SymplecticPotential,
                                  phi, psi=1.0, scheme=None, check_tol: float = 1e-6) -> float:
    """|int (psi H_ij)_,ij phi dmu - int psi H_ij phi_,ij dmu + 2 int_bd phi psi dsigma|.

    phi is a Polynomial or AffineFunction; psi is a number, a polynomial or
    an object with ``jet(X) -> (value, gradient, hessian)`` such as
    :class:`AffinePower`.

    Raises
    ------
    BoundaryConditionFailure
        if u does not satisfy the facet boundary conditions to check_tol.
    """
    f = _as_weight(p.dim, f)
    res = max_boundary_residual(boundary_condition_residuals(u, 3))
    if not res < check_tol:
        raise BoundaryConditionFailure(
            f"potential violates the facet boundary conditions (residual {res:.3g})")
    if isinstance(phi, AffineFunction):
        phi = Polynomial.from_affine(phi)
    scheme = resolve_scheme(p, scheme)

    def integrand(X):
        _, H, dH, d2H = _checked_jets(u, X)
        A, B = _divergence_terms(H, dH, d2H)
        pv, pg, ph = _scalar_field_jet(psi, X)
        div = (np.einsum("nij,nij->n", ph, H) + 2 * np.einsum("ni,ni->n", pg, B) + pv * A)
        _, _, phess = phi.jet(X, 2)
        return div * phi(X) - pv * np.einsum("nij,nij->n", H, phess)

    interior = integrate_interior(p, f, 0, integrand, scheme)
    boundary = integrate_boundary(p, f, 0, lambda X: phi(X) * _scalar_field_jet(psi, X)[0], scheme)
    return abs(interior + 2 * boundary)


def abreu_residual_norm(u: SymplecticPotential, f, p: LabelledPolytope,
                        target: AffineFunction, scheme=None) -> float:
    """(int (s_{u,f} - target)^2 dmu / f^(2m+1))^(1/2)."""
    f = _as_weight(p.dim, f)
    if isinstance(target, (int, float)):
        target = AffineFunction.constant_function(float(target), p.dim)
    scheme = resolve_scheme(p, scheme)
    X, W = interior_nodes(p, scheme)
    s = weighted_scalar_curvature(u, f, X)
    r2 = weighted_sum(W / f(X) ** (2 * p.dim + 1), (s - target(X)) ** 2)
    return float(np.sqrt(max(r2, 0.0)))
