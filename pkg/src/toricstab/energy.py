"""Weighted relative K-energy, its first variation and a descent minimizer.

For u = u_0 + p with p polynomial,

    E(u) = F(u) - int log det(Hess u / Hess u_0) dmu / f^(2m-1),

and det(Hess u)/det(Hess u_0) = det(I + H_0 Hess p) is bounded up to the
boundary, so the entropy integrand is evaluated in that form.  The
derivative along a perturbation b is

    dE/dc_b = F(b) - int tr(H_u Hess b) dmu / f^(2m-1)                (weak)
            = int (s_{u,f} - s) b dmu / f^(2m+1)                      (strong)

The two agree by the integration-by-parts identity.  The weak form is the
exact derivative of the discretized energy and is used by the minimizer.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .curvature import abreu_residual_norm, weighted_scalar_curvature
from .errors import LostConvexity, MaxItersExceeded, NotConvex
from .polynomial import Polynomial, monomial_exponents
from .polytope import AffineFunction, LabelledPolytope
from .potentials import (SymplecticPotential, guillemin_potential, hessian_matrix,
                         inverse_hessian)
from .quadrature import (boundary_nodes, integrate_interior, interior_nodes, probe_points,
                         resolve_scheme, weighted_sum)
from .stability import extremal_affine, futaki


def _weight(p, f):
    return AffineFunction.constant_function(1.0, p.dim) if f is None else f


@dataclass(frozen=True)
class EnergyValue:
    total: float
    futaki: float
    entropy: float


def _require_convex(u: SymplecticPotential):
    if not u.canonical:
        raise NotConvex("the relative K-energy needs the canonical part")
    cert = u.certificate
    if not cert.ok:
        raise NotConvex(f"convexity certificate failed (min eigenvalue {cert.min_eigenvalue:.3g})")


def log_det_one_plus(A):
    """log det(I + A) for a batch of small square matrices.

    det(I + A) - 1 = e_1 + ... + e_m with e_k the elementary symmetric
    functions of the eigenvalues of A (Newton's identities on tr A^k), so
    log1p keeps full relative accuracy when A is small.  Entries where
    det(I + A) <= 0 come back as nan.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[-1]
    power = np.broadcast_to(np.eye(m), A.shape).copy()
    p = []
    for _ in range(m):
        power = power @ A
        p.append(np.trace(power, axis1=-2, axis2=-1))
    e = [np.ones(A.shape[:-2])]
    for k in range(1, m + 1):
        acc = sum((-1) ** (i - 1) * e[k - i] * p[i - 1] for i in range(1, k + 1))
        e.append(acc / k)
    t = sum(e[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(t > -1.0, np.log1p(np.maximum(t, -1.0 + 1e-300)), np.nan)


def _log_det_ratio(u: SymplecticPotential, X):
    H0 = inverse_hessian(guillemin_potential(u.polytope), X)
    P = u.perturbation.jet(X, 2)[2]
    logdet = log_det_one_plus(H0 @ P)
    if np.any(~np.isfinite(logdet)):
        raise NotConvex("Hessian of u is not positive definite at a quadrature node")
    return logdet


def k_energy(p: LabelledPolytope, f, u: SymplecticPotential, scheme=None, s=None) -> EnergyValue:
    """Relative K-energy of u, split into its Futaki and entropy parts.

    Raises
    ------
    NotConvex
    """
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    _require_convex(u)
    s = extremal_affine(p, f, scheme).affine if s is None else s
    fu = futaki(p, f, s, u, scheme)
    X, W = interior_nodes(p, scheme)
    ent = weighted_sum(W / f(X) ** (2 * p.dim - 1), _log_det_ratio(u, X))
    return EnergyValue(fu - ent, fu, ent)


def _basis_polys(basis, dim):
    return [b if isinstance(b, Polynomial) else Polynomial.monomial(tuple(b)) for b in basis]


def k_energy_gradient(p: LabelledPolytope, f, u: SymplecticPotential, basis, scheme=None,
                      s=None, form: str = "weak") -> np.ndarray:
    """dE/dc_b for u + sum c_b b at c = 0, one entry per basis element.

    form="weak" differentiates the discretized energy exactly;
    form="strong" integrates (s_{u,f} - s) b against dmu/f^(2m+1).
    """
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    _require_convex(u)
    s = extremal_affine(p, f, scheme).affine if s is None else s
    basis = _basis_polys(basis, p.dim)
    m = p.dim
    X, W = interior_nodes(p, scheme)
    if form == "strong":
        resid = weighted_scalar_curvature(u, f, X) - s(X)
        Wi = W / f(X) ** (2 * m + 1)
        return np.array([weighted_sum(Wi, resid * b(X)) for b in basis])
    if form != "weak":
        raise ValueError(f"unknown gradient form {form!r}")
    H = inverse_hessian(u, X)
    We = W / f(X) ** (2 * m - 1)
    out = []
    for b in basis:
        tr = np.einsum("nab,nab->n", H, b.jet(X, 2)[2])
        out.append(futaki(p, f, s, b, scheme) - weighted_sum(We, tr))
    return np.array(out)


def k_energy_convexity_check(p: LabelledPolytope, f, u1: SymplecticPotential,
                             u2: SymplecticPotential, steps: int = 10, scheme=None,
                             s=None) -> float:
    """Smallest discrete second difference of E along (1-t) u1 + t u2.

    Raises
    ------
    NotConvex
        if some point of the segment fails the convexity certificate.
    """
    if u1.canonical != u2.canonical:
        raise ValueError("segment end points must share the canonical flag")
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    s = extremal_affine(p, f, scheme).affine if s is None else s
    E = []
    for j in range(steps + 1):
        t = j / steps
        w = u1.with_perturbation(u1.perturbation * (1 - t) + u2.perturbation * t)
        E.append(k_energy(p, f, w, scheme, s).total)
    E = np.array(E)
    if len(E) < 3:
        return 0.0
    return float(np.min(E[:-2] - 2 * E[1:-1] + E[2:]))


# -- minimizer ------------------------------------------------------------------------

class EnergyModel:
    """E and dE/dc on the slice u_0 + q + sum_b c_b b with node data cached.

    q is a fixed polynomial (the part of the initial perturbation outside the
    basis span).  Every quantity here equals what :func:`k_energy` and
    :func:`k_energy_gradient` return for the same potential up to rounding.
    """

    def __init__(self, p: LabelledPolytope, f, basis, scheme=None, s=None,
                 fixed: Polynomial | None = None, probe_resolution: int = 32,
                 margin: float = 1e-10):
        self.p = p
        self.f = _weight(p, f)
        self.scheme = resolve_scheme(p, scheme)
        self.s = extremal_affine(p, self.f, self.scheme).affine if s is None else s
        self.basis = _basis_polys(basis, p.dim)
        self.fixed = Polynomial.zero(p.dim) if fixed is None else fixed
        self.margin = margin
        m = p.dim
        u0 = guillemin_potential(p)
        X, W = interior_nodes(p, self.scheme)
        self.We = W / self.f(X) ** (2 * m - 1)
        self.H0 = inverse_hessian(u0, X)
        self.B2 = np.stack([b.jet(X, 2)[2] for b in self.basis], axis=1)   # (N, nb, m, m)
        self.Q = self.fixed.jet(X, 2)[2]
        self.F0 = futaki(p, self.f, self.s, u0, self.scheme)
        self.Fq = futaki(p, self.f, self.s, self.fixed, self.scheme)
        self.Fb = np.array([futaki(p, self.f, self.s, b, self.scheme) for b in self.basis])
        Y = probe_points(p, probe_resolution)
        self.G0_probe = hessian_matrix(u0, Y)
        self.B2_probe = np.stack([b.jet(Y, 2)[2] for b in self.basis], axis=1)
        self.Q_probe = self.fixed.jet(Y, 2)[2]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def perturbation(self, c) -> Polynomial:
        out = self.fixed
        for ck, b in zip(c, self.basis):
            out = out + b * float(ck)
        return out

    def potential(self, c) -> SymplecticPotential:
        return SymplecticPotential(self.p, True, self.perturbation(c))

    def _P(self, c):
        return self.Q + np.einsum("b,nbij->nij", np.asarray(c, dtype=float), self.B2)

    def certified(self, c) -> bool:
        G = self.G0_probe + self.Q_probe + np.einsum("b,nbij->nij", c, self.B2_probe)
        return bool(np.linalg.eigvalsh(G)[:, 0].min() > self.margin)

    def energy(self, c) -> EnergyValue:
        """EnergyValue, with total = inf when Hess u fails at a node."""
        logdet = log_det_one_plus(self.H0 @ self._P(c))
        fu = self.F0 + self.Fq + float(np.dot(c, self.Fb))
        if np.any(~np.isfinite(logdet)):
            return EnergyValue(math.inf, fu, -math.inf)
        ent = weighted_sum(self.We, logdet)
        return EnergyValue(fu - ent, fu, ent)

    def energy_difference(self, c1, c2) -> float:
        """E(c1) - E(c2), differencing node by node before summing so that
        the common part of the two energies cancels exactly."""
        l1 = log_det_one_plus(self.H0 @ self._P(c1))
        l2 = log_det_one_plus(self.H0 @ self._P(c2))
        dfu = float(np.dot(np.asarray(c1) - np.asarray(c2), self.Fb))
        return dfu - weighted_sum(self.We, l1 - l2)

    def gradient(self, c) -> np.ndarray:
        m = self.p.dim
        M = np.eye(m) + self.H0 @ self._P(c)
        Hu = np.linalg.solve(M, self.H0)
        tr = np.einsum("nab,nkab->nk", Hu, self.B2)
        return self.Fb - np.array([weighted_sum(self.We, tr[:, k]) for k in range(self.dim)])

    def metric(self) -> np.ndarray:
        """Second variation of E at u_0 + q: int tr(H B_a H B_b) dmu/f^(2m-1)."""
        m = self.p.dim
        H = np.linalg.solve(np.eye(m) + self.H0 @ self.Q, self.H0)
        HB = H[:, None] @ self.B2                                    # (N, nb, m, m)
        T = np.einsum("naij,nbji->nab", HB, HB)
        nb = self.dim
        M = np.empty((nb, nb))
        for a in range(nb):
            for b in range(a, nb):
                M[a, b] = M[b, a] = weighted_sum(self.We, T[:, a, b])
        return M

    def residual(self, c) -> float:
        return abreu_residual_norm(self.potential(c), self.f, self.p, self.s, self.scheme)


def finite_difference_gradient(model: EnergyModel, c, step: float = 1e-5) -> np.ndarray:
    """Fourth-order central differences of E along each coefficient.

    The two-point difference has truncation error of order step^2 times the
    third derivative, which near a minimizer is comparable to the gradient.
    """
    c = np.asarray(c, dtype=float)
    out = np.empty(len(c))
    for k, e in enumerate(np.eye(len(c))):
        d1 = model.energy_difference(c + step * e, c - step * e)
        d2 = model.energy_difference(c + 2 * step * e, c - 2 * step * e)
        out[k] = (8 * d1 - d2) / (12 * step)
    return out


def gradient_check(model: EnergyModel, c, step: float = 1e-5) -> float:
    """|grad - fd| / |grad| in the Euclidean norm."""
    g = model.gradient(c)
    return float(np.linalg.norm(g - finite_difference_gradient(model, c, step))
                 / max(np.linalg.norm(g), 1e-300))


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 500
    tol: float = 1e-5
    grad_tol: float = 1e-7
    initial_step: float = 1.0
    backtrack: float = 0.5
    min_step: float = 1e-12
    armijo: float = 1e-4
    metric: str = "second_variation"
    seed: int = 0
    raise_on_max_iters: bool = False

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    energy: float
    residual: float
    step: float
    grad_norm: float


@dataclass
class MinimizeResult:
    potential: SymplecticPotential
    history: list
    coefficients: list          # coefficient vector at every recorded iterate
    reason: str
    basis: list
    futaki_final: float
    identity_target: float      # m int dmu / f^(2m-1)
    options: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.reason in ("residual", "gradient")

    @property
    def iterations(self) -> int:
        return self.history[-1].iteration

    @property
    def energy(self) -> float:
        return self.history[-1].energy

    @property
    def residual(self) -> float:
        return self.history[-1].residual

    @property
    def identity_error(self) -> float:
        return self.futaki_final - self.identity_target

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "energy", "residual", "step"])
        for r in self.history:
            w.writerow([r.iteration, repr(r.energy), repr(r.residual), repr(r.step)])
        return buf.getvalue()


def minimization_basis(dim: int, degree: int) -> list:
    """Monomials of degree 2..degree (affine terms do not change E)."""
    return [Polynomial.monomial(a) for a in monomial_exponents(dim, degree, 2)]


def _split_initial(initial: Polynomial | None, basis_exps, dim):
    c = np.zeros(len(basis_exps))
    fixed = {}
    if initial is not None:
        index = {a: k for k, a in enumerate(basis_exps)}
        for a, coeff in initial.terms.items():
            if a in index:
                c[index[a]] = coeff
            else:
                fixed[a] = coeff
    return c, Polynomial(fixed, dim)


def identity_target(p: LabelledPolytope, f, scheme=None) -> float:
    """m int dmu / f^(2m-1), the Futaki invariant of a solution."""
    f = _weight(p, f)
    return p.dim * integrate_interior(p, f, 2 * p.dim - 1, lambda X: np.ones(len(X)),
                                      resolve_scheme(p, scheme))


def minimize_k_energy(p: LabelledPolytope, f=None, degree: int = 4,
                      options: MinimizeOptions | None = None,
                      initial: Polynomial | None = None, scheme=None) -> MinimizeResult:
    """Gradient descent on the perturbation coefficients.

    The descent direction is the gradient with respect to a fixed inner
    product on the coefficients: the second variation of E at the starting
    slice origin (metric="second_variation") or the Euclidean one
    (metric="euclidean").  Steps use Armijo backtracking; a trial point is rejected when the energy
    does not decrease enough or when the convexity certificate fails.  Stops
    when the weighted Abreu residual drops below ``tol``, the gradient norm
    below ``grad_tol``, or after ``max_iters`` iterations (result flagged).

    Raises
    ------
    NotConvex
        if the initial potential is not certified.
    LostConvexity
        if every trial step down to ``min_step`` breaks convexity.
    MaxItersExceeded
        only with ``raise_on_max_iters``.
    """
    opts = MinimizeOptions() if options is None else options
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    exps = monomial_exponents(p.dim, degree, 2)
    c, fixed = _split_initial(initial, exps, p.dim)
    model = EnergyModel(p, f, minimization_basis(p.dim, degree), scheme, fixed=fixed)
    if not model.certified(c):
        raise NotConvex("initial potential fails the convexity certificate")
    if opts.metric == "second_variation":
        chol = cho_factor(model.metric())
        direction = lambda g: cho_solve(chol, g)
    elif opts.metric == "euclidean":
        direction = lambda g: g
    else:
        raise ValueError(f"unknown metric {opts.metric!r}")

    E = model.energy(c).total
    g = model.gradient(c)
    res = model.residual(c)
    history = [IterateRecord(0, E, res, 0.0, float(np.linalg.norm(g)))]
    coeffs = [c.copy()]
    step = opts.initial_step
    reason = "max_iters"
    for it in range(1, opts.max_iters + 1):
        if res < opts.tol:
            reason = "residual"
            break
        if float(np.linalg.norm(g)) < opts.grad_tol:
            reason = "gradient"
            break
        d = direction(g)
        slope = float(g @ d)
        alpha = min(step * 2.0, 1e6) if it > 1 else step
        accepted = False
        tried = blocked = 0
        while alpha >= opts.min_step:
            trial = c - alpha * d
            tried += 1
            if not model.certified(trial):
                blocked += 1
                alpha *= opts.backtrack
                continue
            Et = model.energy(trial).total
            if Et <= E - opts.armijo * alpha * slope:
                accepted = True
                break
            alpha *= opts.backtrack
        if not accepted:
            if tried and blocked == tried:
                raise LostConvexity("every trial step above the minimum step size broke "
                                    "the convexity certificate")
            reason = "line_search"
            break
        c, E, step = trial, Et, alpha
        g = model.gradient(c)
        res = model.residual(c)
        history.append(IterateRecord(it, E, res, alpha, float(np.linalg.norm(g))))
        coeffs.append(c.copy())
    else:
        if res < opts.tol:
            reason = "residual"
        elif float(np.linalg.norm(g)) < opts.grad_tol:
            reason = "gradient"

    u = model.potential(c)
    result = MinimizeResult(u, history, coeffs, reason, model.basis,
                            futaki(p, f, model.s, u, scheme), identity_target(p, f, scheme),
                            opts.as_dict())
    if reason == "max_iters" and opts.raise_on_max_iters:
        raise MaxItersExceeded(f"no convergence in {opts.max_iters} iterations "
                               f"(residual {res:.3g})")
    return result
