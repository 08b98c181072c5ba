"""Integration over a labelled polytope and its boundary.

Smooth integrands use a conical-product Gauss rule on a fan decomposition:
every simplex is the cone from its apex over a lower-dimensional base, and the
radial coordinate of each cone is graded geometrically toward the base.  At
the top level the base lies on a facet of the polytope, so the nodes cluster
toward the boundary where symplectic potentials behave like L log L.

Piecewise-linear integrands (maxima of affine pieces) are integrated exactly
piece by piece: the polytope is clipped into the cells where each piece is
maximal and a plain simplex rule is applied on each cell.

All sums are compensated (``math.fsum``) and run in a fixed node order, so
results do not depend on anything but the inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import DegenerateSimplex, NodeEvaluationFailure
from .polytope import AffineFunction, LabelledPolytope


@dataclass(frozen=True)
class QuadratureScheme:
    """Parameters of the graded rule.

    order and boundary_order are the polynomial exactness degrees on each
    simplex; refine is the number of uniform bisection levels of the radial
    coordinate; grade is the number of extra dyadic levels toward the base.
    """

    order: int = 6
    boundary_order: int = 6
    refine: int = 3
    grade: int = 6

    def __post_init__(self):
        if self.order < 0 or self.boundary_order < 0 or self.refine < 0 or self.grade < 0:
            raise ValueError("scheme parameters must be nonnegative")

    def points_per_direction(self, order: int, dim: int) -> int:
        # a degree-`order` polynomial times the radial Jacobian t^(dim-1)
        return max(1, math.ceil((order + dim) / 2))

    def as_dict(self) -> dict:
        return {"order": self.order, "boundary_order": self.boundary_order,
                "refine": self.refine, "grade": self.grade}


DEFAULT_SCHEME = QuadratureScheme()
# the recursive cone construction multiplies node counts per dimension
_SCHEME_3D = QuadratureScheme(order=4, boundary_order=4, refine=1, grade=3)


def default_scheme(dim: int) -> QuadratureScheme:
    return DEFAULT_SCHEME if dim <= 2 else _SCHEME_3D


def resolve_scheme(p, scheme):
    return default_scheme(p.dim) if scheme is None else scheme


@dataclass
class Triangulation:
    simplices: list                      # arrays (m+1, m)
    facet_simplices: dict = field(default_factory=dict)   # facet -> list of (m, m)
    centroid: np.ndarray = None

    def volumes(self) -> np.ndarray:
        return np.array([simplex_volume(s) for s in self.simplices])

    def facet_volumes(self, i) -> np.ndarray:
        return np.array([simplex_volume(s) for s in self.facet_simplices[i]])


# -- elementary geometry -------------------------------------------------------

def simplex_volume(vertices) -> float:
    """k-dimensional volume of a k-simplex embedded in R^m (Gram determinant)."""
    V = np.asarray(vertices, dtype=float)
    k = len(V) - 1
    if k == 0:
        return 1.0
    E = (V[1:] - V[0]).T
    g = np.linalg.det(E.T @ E)
    return math.sqrt(max(g, 0.0)) / math.factorial(k)


def compensated_sum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def weighted_sum(weights, values) -> float:
    return compensated_sum(np.asarray(weights) * np.asarray(values))


# -- triangulation -------------------------------------------------------------

def _face_vertex_ids(p: LabelledPolytope, S: frozenset) -> list:
    vals = p.label_values(p.vertices)
    mask = np.ones(len(p.vertices), dtype=bool)
    for j in S:
        mask &= np.abs(vals[:, j]) <= p.eps
    return [int(k) for k in np.flatnonzero(mask)]


def _triangulate_face(p: LabelledPolytope, S: frozenset, dim: int) -> list:
    """Simplices of a face of dimension `dim` cut out by the labels in S."""
    ids = _face_vertex_ids(p, S)
    pts = p.vertices[ids]
    if len(ids) == dim + 1:
        return [pts.copy()]
    c = pts.mean(axis=0)
    out = []
    for j in range(p.n_facets):
        if j in S:
            continue
        T = S | {j}
        sub = _face_vertex_ids(p, T)
        if len(sub) < dim:
            continue
        sub_pts = p.vertices[sub]
        if dim > 1 and np.linalg.matrix_rank(sub_pts[1:] - sub_pts[0], tol=1e-9) != dim - 1:
            continue
        for s in _triangulate_face(p, T, dim - 1):
            out.append(np.vstack([c, s]))
    return out


def triangulate(p: LabelledPolytope) -> Triangulation:
    """Fan triangulation from the vertex centroid over facet triangulations."""
    key = ("triangulation",)
    if key in p._cache:
        return p._cache[key]
    m = p.dim
    c = p.centroid
    facets = {}
    simplices = []
    for i in range(p.n_facets):
        fs = _triangulate_face(p, frozenset([i]), m - 1)
        facets[i] = fs
        for s in fs:
            S = np.vstack([c, s])
            if simplex_volume(S) <= 1e-14 * max(1.0, p.diameter) ** m:
                raise DegenerateSimplex(f"zero-volume simplex over facet {i}")
            simplices.append(S)
    tri = Triangulation(simplices, facets, c)
    p._cache[key] = tri
    return tri


# -- one-dimensional building blocks ----------------------------------------------

def _gauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


def graded_breakpoints(refine: int, grade: int) -> np.ndarray:
    """Breakpoints of [0, 1]: 2**refine uniform cells, the last one split
    geometrically `grade` more times toward 1."""
    n = 2 ** refine
    delta = 1.0 / n
    pts = [k / n for k in range(n)]
    pts += [1.0 - delta / 2 ** j for j in range(1, grade + 1)]
    pts.append(1.0)
    return np.array(pts)


def composite_rule(breaks: np.ndarray, n: int):
    x, w = _gauss01(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    return (a + (b - a) * x).ravel(), ((b - a) * w).ravel()


# -- graded conical rule -----------------------------------------------------------

def _cone(apex, base_x, base_w, t, wt, k, height):
    # x = apex + t (y - apex); volume element t^(k-1) * height dt dA(y)
    X = apex + t[:, None, None] * (base_x[None, :, :] - apex)
    W = (wt * t ** (k - 1) * height)[:, None] * base_w[None, :]
    return X.reshape(-1, apex.shape[0]), W.ravel()


def graded_simplex_rule(vertices, n: int, refine: int, grade: int):
    """Rule on a k-simplex (k+1 points in R^m), graded toward its boundary.

    The simplex is split into cones from its centroid over its facets; each
    cone is a conical product of a graded radial rule and the (recursively
    graded) rule on the facet.
    """
    V = np.asarray(vertices, dtype=float)
    k = len(V) - 1
    if k == 0:
        return V.copy(), np.ones(1)
    c = V.mean(axis=0)
    t, wt = composite_rule(graded_breakpoints(refine, grade), n)
    xs, ws = [], []
    for i in range(k + 1):
        B = np.delete(V, i, axis=0)
        bx, bw = graded_simplex_rule(B, n, refine, grade)
        height = k * simplex_volume(np.vstack([c, B])) / simplex_volume(B)
        X, W = _cone(c, bx, bw, t, wt, k, height)
        xs.append(X)
        ws.append(W)
    return np.vstack(xs), np.concatenate(ws)


def interior_nodes(p: LabelledPolytope, scheme: QuadratureScheme | None = None):
    """Graded interior nodes and weights for dmu (cached per scheme)."""
    scheme = resolve_scheme(p, scheme)
    key = ("interior", scheme)
    if key not in p._cache:
        tri = triangulate(p)
        m = p.dim
        n = scheme.points_per_direction(scheme.order, m)
        t, wt = composite_rule(graded_breakpoints(scheme.refine, scheme.grade), n)
        xs, ws = [], []
        for i in range(p.n_facets):
            for B in tri.facet_simplices[i]:
                bx, bw = graded_simplex_rule(B, n, scheme.refine, scheme.grade)
                height = m * simplex_volume(np.vstack([tri.centroid, B])) / simplex_volume(B)
                X, W = _cone(tri.centroid, bx, bw, t, wt, m, height)
                xs.append(X)
                ws.append(W)
        X, W = np.vstack(xs), np.concatenate(ws)
        X.setflags(write=False)
        W.setflags(write=False)
        p._cache[key] = (X, W)
    return p._cache[key]


def boundary_nodes(p: LabelledPolytope, scheme: QuadratureScheme | None = None):
    """Nodes on the facets with weights for dsigma (density 1/|u_i| folded in).

    Returns (X, W, facet_index).
    """
    scheme = resolve_scheme(p, scheme)
    key = ("boundary", scheme)
    if key not in p._cache:
        tri = triangulate(p)
        m = p.dim
        n = scheme.points_per_direction(scheme.boundary_order, m - 1)
        xs, ws, ids = [], [], []
        for i in range(p.n_facets):
            density = 1.0 / np.linalg.norm(p.labels[i].gradient)
            for B in tri.facet_simplices[i]:
                bx, bw = graded_simplex_rule(B, n, scheme.refine, scheme.grade)
                xs.append(bx)
                ws.append(bw * density)
                ids.append(np.full(len(bw), i))
        X, W, I = np.vstack(xs), np.concatenate(ws), np.concatenate(ids)
        for a in (X, W, I):
            a.setflags(write=False)
        p._cache[key] = (X, W, I)
    return p._cache[key]


# -- plain simplex rule (for cells of piecewise-linear integrands) ------------------

def _duffy_reference_rule(k: int, n: int, refine: int):
    """Collapsed-coordinate Gauss rule on the unit k-simplex {y >= 0, sum y <= 1}."""
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = composite_rule(np.linspace(0, 1, 2 ** refine + 1), n)
    grids = np.meshgrid(*([x] * k), indexing="ij")
    wgrid = np.meshgrid(*([w] * k), indexing="ij")
    xi = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    Y = np.zeros_like(xi)
    rest = np.ones(len(xi))
    for j in range(k):
        # Jacobian is triangular with diagonal prod_{i<j} (1 - xi_i)
        Y[:, j] = rest * xi[:, j]
        W = W * rest
        rest = rest * (1 - xi[:, j])
    return Y, W


_REF_CACHE: dict = {}


def simplex_rule(vertices, order: int, refine: int = 0):
    """Gauss rule on an arbitrary k-simplex in R^m, exact to degree `order`."""
    V = np.asarray(vertices, dtype=float)
    k = len(V) - 1
    n = max(1, math.ceil((order + k) / 2))
    key = (k, n, refine)
    if key not in _REF_CACHE:
        _REF_CACHE[key] = _duffy_reference_rule(k, n, refine)
    Y, W = _REF_CACHE[key]
    if k == 0:
        return V.copy(), np.ones(1)
    X = V[0] + Y @ (V[1:] - V[0])
    return X, W * simplex_volume(V) * math.factorial(k)


# -- clipping --------------------------------------------------------------------------

def _clip_segment(S, s, tol):
    a, b = S
    sa, sb = s
    if sa >= -tol and sb >= -tol:
        return [S]
    if sa <= tol and sb <= tol:
        return []
    t = sa / (sa - sb)
    P = a + t * (b - a)
    return [np.vstack([a, P])] if sa > 0 else [np.vstack([P, b])]


def _clip_polygon(poly, phi, tol):
    """Sutherland-Hodgman step for a convex polygon (ordered vertex cycle)."""
    s = phi(poly)
    out = []
    n = len(poly)
    for i in range(n):
        P, Q = poly[i], poly[(i + 1) % n]
        sp, sq = s[i], s[(i + 1) % n]
        if sp >= -tol:
            out.append(P)
        if (sp > tol and sq < -tol) or (sp < -tol and sq > tol):
            t = sp / (sp - sq)
            out.append(P + t * (Q - P))
    return np.array(out) if out else np.zeros((0, poly.shape[1]))


def _fan(poly):
    return [np.vstack([poly[0], poly[i], poly[i + 1]]) for i in range(1, len(poly) - 1)]


def _clip_simplex_general(S, s, tol):
    keep = [S[i] for i in range(len(S)) if s[i] >= -tol]
    for i in range(len(S)):
        for j in range(i + 1, len(S)):
            if (s[i] > tol and s[j] < -tol) or (s[i] < -tol and s[j] > tol):
                t = s[i] / (s[i] - s[j])
                keep.append(S[i] + t * (S[j] - S[i]))
    pts = np.array(keep)
    k = len(S) - 1
    if len(pts) < k + 1:
        return []
    origin = S[0]
    basis, _ = np.linalg.qr((S[1:] - origin).T)
    local = (pts - origin) @ basis
    if np.linalg.matrix_rank(local[1:] - local[0], tol=1e-12) < k:
        return []
    tri = Delaunay(local)
    return [pts[simp] for simp in tri.simplices]


def clip_simplices(simplices, halfspaces, tol=1e-13):
    """Intersect a list of k-simplices with {phi >= 0 for phi in halfspaces}."""
    out = []
    for S in simplices:
        k = len(S) - 1
        if k == 2:
            polys = [S]
            for phi in halfspaces:
                polys = [_clip_polygon(P, phi, tol) for P in polys]
                polys = [P for P in polys if len(P) >= 3]
                if not polys:
                    break
            for P in polys:
                out.extend(_fan(P))
            continue
        cur = [S]
        for phi in halfspaces:
            nxt = []
            for T in cur:
                s = phi(T)
                if k == 0:
                    if s[0] >= -tol:
                        nxt.append(T)
                elif k == 1:
                    nxt.extend(_clip_segment(T, s, tol))
                else:
                    if np.all(s >= -tol):
                        nxt.append(T)
                    elif np.all(s <= tol):
                        continue
                    else:
                        nxt.extend(_clip_simplex_general(T, s, tol))
            cur = nxt
            if not cur:
                break
        out.extend(cur)
    scale = max(1.0, max((np.abs(S).max() for S in simplices), default=1.0))
    return [T for T in out if len(T) == 1 or simplex_volume(T) > 1e-15 * scale ** (len(T) - 1)]


def _distinct_pieces(pieces):
    out = []
    for phi in pieces:
        v = phi.coefficients()
        if not any(np.allclose(v, q.coefficients(), rtol=1e-14, atol=1e-14) for q in out):
            out.append(phi)
    return out


def pl_cells(simplices, pieces):
    """[(piece, cell simplex)] covering the simplices, piece maximal on cell."""
    pieces = _distinct_pieces(pieces)
    cells = []
    for k, phi in enumerate(pieces):
        hs = [phi - psi for l, psi in enumerate(pieces) if l != k]
        for T in clip_simplices(simplices, hs):
            cells.append((phi, T))
    return cells


# -- public integration API ------------------------------------------------------------

def _as_weight(p, f):
    if f is None:
        return AffineFunction.constant_function(1.0, p.dim)
    return f


def _evaluate(h, X):
    vals = np.asarray(h(X), dtype=float)
    if vals.shape != (len(X),):
        vals = np.broadcast_to(vals, (len(X),)).astype(float)
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argmax(bad))
        raise NodeEvaluationFailure(f"integrand is not finite at node {X[k].tolist()}",
                                    node=X[k])
    return vals


def _is_piecewise_linear(h) -> bool:
    return hasattr(h, "pieces")


def integrate_interior(p: LabelledPolytope, f, k: int, h, scheme=None,
                       multiplier=None) -> float:
    """Approximate the integral of h dmu / f^k over the polytope.

    h is a vectorized callable on (N, m) arrays, or a piecewise-linear
    function (anything with a ``pieces`` attribute), which is integrated cell
    by cell.  `multiplier`, if given, is an extra smooth factor.
    """
    scheme = resolve_scheme(p, scheme)
    f = _as_weight(p, f)
    if _is_piecewise_linear(h):
        total = []
        for phi, T in pl_cells(triangulate(p).simplices, h.pieces):
            X, W = simplex_rule(T, scheme.order + 2, scheme.refine)
            v = phi(X) / f(X) ** k
            if multiplier is not None:
                v = v * _evaluate(multiplier, X)
            total.append(W * v)
        return compensated_sum(np.concatenate(total)) if total else 0.0
    X, W = interior_nodes(p, scheme)
    v = _evaluate(h, X)
    if multiplier is not None:
        v = v * _evaluate(multiplier, X)
    return weighted_sum(W / f(X) ** k, v)


def integrate_boundary(p: LabelledPolytope, f, k: int, h, scheme=None) -> float:
    """Approximate the integral of h dsigma / f^k over the boundary."""
    scheme = resolve_scheme(p, scheme)
    f = _as_weight(p, f)
    if _is_piecewise_linear(h):
        tri = triangulate(p)
        total = []
        for i in range(p.n_facets):
            density = 1.0 / np.linalg.norm(p.labels[i].gradient)
            for phi, T in pl_cells(tri.facet_simplices[i], h.pieces):
                X, W = simplex_rule(T, scheme.boundary_order + 2, scheme.refine)
                total.append(density * W * phi(X) / f(X) ** k)
        return compensated_sum(np.concatenate(total)) if total else 0.0
    X, W, _ = boundary_nodes(p, scheme)
    v = _evaluate(h, X)
    return weighted_sum(W / f(X) ** k, v)


def integrate_facet(p: LabelledPolytope, i: int, f, k: int, h, scheme=None) -> float:
    scheme = resolve_scheme(p, scheme)
    f = _as_weight(p, f)
    X, W, I = boundary_nodes(p, scheme)
    sel = I == i
    return weighted_sum(W[sel] / f(X[sel]) ** k, _evaluate(h, X[sel]))


# -- moments ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentData:
    """Weighted moments feeding the extremal-affine Gram system."""

    interior0: float
    interior1: np.ndarray
    interior2: np.ndarray
    boundary0: float
    boundary1: np.ndarray
    interior_exponent: int
    boundary_exponent: int
    scheme: QuadratureScheme

    @property
    def gram(self) -> np.ndarray:
        m = len(self.interior1)
        A = np.empty((m + 1, m + 1))
        A[0, 0] = self.interior0
        A[0, 1:] = A[1:, 0] = self.interior1
        A[1:, 1:] = self.interior2
        return A

    @property
    def boundary_vector(self) -> np.ndarray:
        return np.concatenate([[self.boundary0], self.boundary1])


def weighted_moments(p: LabelledPolytope, f, scheme=None) -> MomentData:
    """Moments of 1, x_i, x_i x_j against dmu/f^(2m+1) and of 1, x_i against
    dsigma/f^(2m-1)."""
    scheme = resolve_scheme(p, scheme)
    f = _as_weight(p, f)
    m = p.dim
    ki, kb = 2 * m + 1, 2 * m - 1
    X, W = interior_nodes(p, scheme)
    Wf = W / f(X) ** ki
    i0 = weighted_sum(Wf, 1.0)
    i1 = np.array([weighted_sum(Wf, X[:, a]) for a in range(m)])
    i2 = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            i2[a, b] = i2[b, a] = weighted_sum(Wf, X[:, a] * X[:, b])
    Xb, Wb, _ = boundary_nodes(p, scheme)
    Wbf = Wb / f(Xb) ** kb
    b0 = weighted_sum(Wbf, 1.0)
    b1 = np.array([weighted_sum(Wbf, Xb[:, a]) for a in range(m)])
    return MomentData(i0, i1, i2, b0, b1, ki, kb, scheme)


# -- probe points --------------------------------------------------------------------

def probe_points(p: LabelledPolytope, resolution: int = 32) -> np.ndarray:
    """Interior points clustered toward the boundary (Chebyshev in each
    conical coordinate); about resolution**m points in total."""
    key = ("probe", resolution)
    if key in p._cache:
        return p._cache[key]
    tri = triangulate(p)
    m = p.dim
    nper = max(2, round(resolution / max(1, len(tri.simplices)) ** (1 / m)))
    j = np.arange(nper)
    t = (1 - np.cos(np.pi * (j + 0.5) / nper)) / 2
    pts = []
    for S in tri.simplices:
        c, B = S[0], S[1:]
        if m == 1:
            base = B
        else:
            grids = np.meshgrid(*([t] * (m - 1)), indexing="ij")
            xi = np.stack([g.ravel() for g in grids], axis=1)
            Y = np.zeros_like(xi)
            rest = np.ones(len(xi))
            for a in range(m - 1):
                Y[:, a] = rest * xi[:, a]
                rest = rest * (1 - xi[:, a])
            base = B[0] + Y @ (B[1:] - B[0])
        pts.append(c + t[:, None, None] * (base[None] - c))
    P = np.vstack([q.reshape(-1, m) for q in pts])
    P = P[np.all(p.label_values(P) > p.eps, axis=1)]
    p._cache[key] = P
    return P
