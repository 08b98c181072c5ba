"""Symplectic potentials, piecewise-linear convex functions, normalization.

A symplectic potential is u = u_0 + p where u_0 = 1/2 sum_j L_j log L_j is the
canonical (Guillemin) potential of the labelled polytope and p is a
polynomial.  All derivatives are closed form.

The inverse Hessian H = Hess(u)^-1 is not obtained by inverting Hess(u)
directly, which loses the small normal components of H near a facet.
Instead H is the upper-left block of the inverse of the bordered matrix

    K(x) = [[Hess p(x), U^T], [U, -2 diag(L(x))]]

whose Schur complement is Hess u_0 + Hess p.  K is polynomial in x and stays
invertible up to the boundary of a simple polytope, so H and its derivatives
come out of K^-1 and the (constant) derivatives of K without cancellation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import BoundaryEvaluation, NotConvexAt, SpecFormatError
from .polynomial import Polynomial
from .polytope import AffineFunction, LabelledPolytope, _affine_from_json, affine_to_json
from .quadrature import probe_points


@dataclass(frozen=True)
class ConvexityCertificate:
    ok: bool
    min_eigenvalue: float
    resolution: int
    n_points: int
    margin: float


@dataclass(frozen=True, eq=False)
class SymplecticPotential:
    polytope: LabelledPolytope
    canonical: bool = True
    perturbation: Polynomial = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.perturbation is None:
            object.__setattr__(self, "perturbation", Polynomial.zero(self.polytope.dim))
        if self.perturbation.dim != self.polytope.dim:
            raise ValueError("perturbation dimension does not match polytope")

    @property
    def dim(self) -> int:
        return self.polytope.dim

    def with_perturbation(self, perturbation: Polynomial) -> "SymplecticPotential":
        return SymplecticPotential(self.polytope, self.canonical, perturbation)

    def __add__(self, other):
        if isinstance(other, AffineFunction):
            other = Polynomial.from_affine(other)
        if isinstance(other, Polynomial):
            return self.with_perturbation(self.perturbation + other)
        return NotImplemented

    # -- values ----------------------------------------------------------------

    def value(self, x):
        """u(x) for interior points (nan where some L_j <= 0)."""
        x = np.asarray(x, dtype=float)
        out = self.perturbation(x)
        if self.canonical:
            L = self.polytope.label_values(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = out + 0.5 * np.sum(np.where(L > 0, L * np.log(np.where(L > 0, L, 1.0)),
                                                  np.nan), axis=-1)
        return out

    __call__ = value

    def boundary_value(self, x):
        """Continuous extension of u to the closed polytope (0 log 0 = 0)."""
        x = np.asarray(x, dtype=float)
        out = self.perturbation(x)
        if self.canonical:
            L = np.maximum(self.polytope.label_values(x), 0.0)
            out = out + 0.5 * np.sum(xlogy(L, L), axis=-1)
        return out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = self.perturbation.gradient(x)
        if self.canonical:
            L = self.polytope.label_values(x)
            g = g + 0.5 * (np.log(L) + 1.0) @ self.polytope.normals
        return g

    @property
    def certificate(self) -> ConvexityCertificate:
        if "cert" not in self._cache:
            self._cache["cert"] = certify_convexity(self)
        return self._cache["cert"]


@dataclass
class PotentialJet:
    """Derivative data of a potential at one interior point.

    Index conventions: G[a, b], dG[k, a, b] = d_k G_ab,
    d2G[k, l, a, b] = d_k d_l G_ab; the same for H.
    """

    x: np.ndarray
    value: float
    gradient: np.ndarray
    G: np.ndarray
    dG: np.ndarray
    d2G: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    d2H: np.ndarray


def guillemin_potential(p: LabelledPolytope) -> SymplecticPotential:
    return SymplecticPotential(p, canonical=True)


# -- Hessian jets ---------------------------------------------------------------

def hessian_jets(u: SymplecticPotential, x):
    """Batched G, dG, d2G at interior points x of shape (N, m)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, _, G, dG, d2G = u.perturbation.jet(x, 4)
    dG = np.moveaxis(dG, -1, 1)            # [n, k, a, b]
    d2G = np.moveaxis(d2G, (-2, -1), (1, 2))
    if u.canonical:
        U = u.polytope.normals
        L = u.polytope.label_values(x)
        uu = U[:, :, None] * U[:, None, :]                       # (d, m, m)
        G = G + 0.5 * np.einsum("nj,jab->nab", 1 / L, uu)
        dG = dG - 0.5 * np.einsum("nj,jk,jab->nkab", 1 / L ** 2, U, uu)
        d2G = d2G + np.einsum("nj,jk,jl,jab->nklab", 1 / L ** 3, U, U, uu)
    return G, dG, d2G


def hessian_matrix(u: SymplecticPotential, x):
    """Batched Hess(u) only."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    G = u.perturbation.jet(x, 2)[2]
    if u.canonical:
        U = u.polytope.normals
        L = u.polytope.label_values(x)
        G = G + 0.5 * np.einsum("nj,ja,jb->nab", 1 / L, U, U)
    return G


def inverse_hessian(u: SymplecticPotential, x):
    """Batched H only, through the bordered matrix (valid up to the boundary)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = x.shape[1]
    P = u.perturbation.jet(x, 2)[2]
    if not u.canonical:
        return np.linalg.inv(P)
    U = u.polytope.normals
    d = U.shape[0]
    K = np.zeros((len(x), m + d, m + d))
    K[:, :m, :m] = P
    K[:, :m, m:] = U.T
    K[:, m:, :m] = U
    K[:, m + np.arange(d), m + np.arange(d)] = -2.0 * u.polytope.label_values(x)
    H = np.linalg.inv(K)[:, :m, :m]
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def inverse_hessian_jets(u: SymplecticPotential, x):
    """Batched H, dH, d2H at points x of shape (N, m).

    For canonical potentials this is well defined on the closed polytope.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    N, m = x.shape
    _, _, P, dP, d2P = u.perturbation.jet(x, 4)
    dP = np.moveaxis(dP, -1, 1)
    d2P = np.moveaxis(d2P, (-2, -1), (1, 2))
    if u.canonical:
        U = u.polytope.normals
        d = U.shape[0]
        n = m + d
        K = np.zeros((N, n, n))
        K[:, :m, :m] = P
        K[:, :m, m:] = U.T
        K[:, m:, :m] = U
        L = u.polytope.label_values(x)
        K[:, m + np.arange(d), m + np.arange(d)] = -2.0 * L
        dK = np.zeros((N, m, n, n))
        dK[:, :, :m, :m] = dP
        for k in range(m):
            dK[:, k, m + np.arange(d), m + np.arange(d)] = -2.0 * U[:, k]
    else:
        n = m
        K, dK = P, dP
    Z = np.linalg.inv(K)
    Zl = Z[:, :, :m]                       # columns feeding the H block
    Zt = Z[:, :m, :]
    H = Z[:, :m, :m]
    Y = (Zt[:, None] @ dK) @ Z[:, None]                     # rows of Z dK_k Z
    dH = -Y[:, :, :, :m]
    d2H = np.empty((N, m, m, m, m))
    for k in range(m):
        for l in range(k, m):
            t = (Y[:, l] @ dK[:, k] @ Zl + Y[:, k] @ dK[:, l] @ Zl
                 - H @ d2P[:, k, l] @ H)
            d2H[:, k, l] = t
            d2H[:, l, k] = t
    # symmetrize away rounding asymmetry
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    dH = 0.5 * (dH + np.swapaxes(dH, -1, -2))
    d2H = 0.5 * (d2H + np.swapaxes(d2H, -1, -2))
    return H, dH, d2H


def potential_jet(u: SymplecticPotential, x) -> PotentialJet:
    """Full jet at one interior point.

    Raises BoundaryEvaluation within eps of a facet and NotConvexAt when the
    Hessian is not positive definite.
    """
    x = np.asarray(x, dtype=float)
    p = u.polytope
    if u.canonical and np.min(p.label_values(x)) <= p.eps:
        raise BoundaryEvaluation(f"point {x.tolist()} is on or outside the boundary")
    G, dG, d2G = hessian_jets(u, x[None])
    if np.linalg.eigvalsh(G[0])[0] <= 0:
        raise NotConvexAt(f"Hessian not positive definite at {x.tolist()}", point=x)
    H, dH, d2H = inverse_hessian_jets(u, x[None])
    return PotentialJet(x, float(u.value(x)), u.gradient(x), G[0], dG[0], d2G[0],
                        H[0], dH[0], d2H[0])


def certify_convexity(u: SymplecticPotential, resolution: int = 32,
                      margin: float = 1e-10) -> ConvexityCertificate:
    """Positive-definiteness of Hess(u) on a boundary-graded probe grid."""
    pts = probe_points(u.polytope, resolution)
    G = hessian_matrix(u, pts)
    lam = np.linalg.eigvalsh(G)[:, 0]
    lo = float(lam.min())
    return ConvexityCertificate(bool(lo > margin), lo, resolution, len(pts), margin)


# -- piecewise-linear convex functions --------------------------------------------

@dataclass(frozen=True, eq=False)
class PLConvexFunction:
    """max of finitely many affine pieces."""

    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ValueError("a piecewise-linear function needs at least one piece")

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(np.stack([phi(x) for phi in self.pieces]), axis=0)

    boundary_value = __call__

    def active_pieces(self, x, tol=1e-12) -> list:
        vals = np.array([phi(x) for phi in self.pieces])
        scale = 1.0 + np.max(np.abs(vals))
        return [k for k, v in enumerate(vals) if v >= vals.max() - tol * scale]

    def subgradient(self, x) -> np.ndarray:
        """Average gradient of the pieces active at x."""
        act = self.active_pieces(x)
        return np.mean([self.pieces[k].gradient for k in act], axis=0)

    def __add__(self, other):
        if isinstance(other, AffineFunction):
            return PLConvexFunction(tuple(phi + other for phi in self.pieces))
        return NotImplemented

    def __repr__(self):
        return f"PLConvexFunction({len(self.pieces)} pieces)"


def make_pl(pieces) -> PLConvexFunction:
    return PLConvexFunction(tuple(pieces))


# -- normalization -----------------------------------------------------------------

def _is_fixed(value, xi, scale):
    return abs(value) <= 1e-14 * scale and np.max(np.abs(xi)) <= 1e-14 * scale


def normalize(v, x0):
    """Project v modulo affine functions onto the functions vanishing to first
    order at x0: v - v(x0) - <xi, x - x0>, xi a (sub)gradient at x0."""
    x0 = np.asarray(x0, dtype=float)
    if isinstance(v, AffineFunction):
        return AffineFunction(np.zeros(v.dim), 0.0)
    if isinstance(v, PLConvexFunction):
        val = float(v(x0))
        xi = v.subgradient(x0)
        scale = 1.0 + max(float(np.max(np.abs(phi.coefficients()))) for phi in v.pieces)
        if _is_fixed(val, xi, scale):
            return v
        shift = AffineFunction(-xi, -val + float(xi @ x0))
        return PLConvexFunction(tuple(phi + shift for phi in v.pieces))
    if isinstance(v, SymplecticPotential):
        val = float(v.value(x0))
        xi = v.gradient(x0)
        if _is_fixed(val, xi, 1.0 + abs(val)):
            return v
        return v + AffineFunction(-xi, -val + float(xi @ x0))
    if isinstance(v, Polynomial):
        val = float(v(x0))
        xi = v.gradient(x0)
        if _is_fixed(val, xi, 1.0 + abs(val)):
            return v
        return v + Polynomial.from_affine(AffineFunction(-xi, -val + float(xi @ x0)))
    raise TypeError(f"cannot normalize object of type {type(v).__name__}")


# -- spec files ----------------------------------------------------------------------

def parse_potential_spec(obj: dict, p: LabelledPolytope):
    """Potential spec -> SymplecticPotential; PL spec -> PLConvexFunction."""
    if not isinstance(obj, dict):
        raise SpecFormatError("potential spec must be a JSON object")
    if set(obj) == {"pieces"}:
        pieces = [_affine_from_json(q, p.dim, f"pieces[{k}]") for k, q in enumerate(obj["pieces"])]
        if not pieces:
            raise SpecFormatError("'pieces' must not be empty")
        return make_pl(pieces)
    unknown = set(obj) - {"canonical", "perturbation"}
    if unknown:
        raise SpecFormatError(f"unknown fields in potential spec: {sorted(unknown)}")
    canonical = obj.get("canonical", True)
    if not isinstance(canonical, bool):
        raise SpecFormatError("'canonical' must be true or false")
    terms = {}
    for k, t in enumerate(obj.get("perturbation", [])):
        if not isinstance(t, dict) or set(t) != {"exponents", "coeff"}:
            raise SpecFormatError(f"perturbation[{k}]: expected keys 'exponents' and 'coeff'")
        alpha = t["exponents"]
        if (not isinstance(alpha, list) or len(alpha) != p.dim
                or not all(isinstance(a, int) and a >= 0 for a in alpha)):
            raise SpecFormatError(f"perturbation[{k}]: bad exponents {alpha!r}")
        terms[tuple(alpha)] = terms.get(tuple(alpha), 0.0) + float(t["coeff"])
    return SymplecticPotential(p, canonical, Polynomial(terms, p.dim))


def potential_to_spec(v) -> dict:
    if isinstance(v, PLConvexFunction):
        return {"pieces": [affine_to_json(phi) for phi in v.pieces]}
    return {"canonical": v.canonical, "perturbation": v.perturbation.to_json()}
