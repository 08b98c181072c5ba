"""Labelled polytopes {x : L_i(x) >= 0} and their boundary measure.

A labelled polytope is stored through its affine labels L_i(x) = <u_i, x> + c_i.
Vertices and facets are enumerated once at construction; the object is
immutable afterwards (apart from an internal cache of quadrature node sets).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .errors import (EmptyInterior, NonPositiveWeight, NotSimple,
                     RedundantLabel, SpecFormatError, Unbounded)


@dataclass(frozen=True, eq=False)
class AffineFunction:
    """phi(x) = <gradient, x> + constant."""

    gradient: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gradient, dtype=float)).copy()
        g.setflags(write=False)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def constant_function(cls, value: float, dim: int) -> "AffineFunction":
        return cls(np.zeros(dim), value)

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.gradient + self.constant

    def grad(self, x=None):
        return self.gradient

    def hessian(self, x=None):
        return np.zeros((self.dim, self.dim))

    def __add__(self, other):
        if isinstance(other, AffineFunction):
            return AffineFunction(self.gradient + other.gradient,
                                  self.constant + other.constant)
        return AffineFunction(self.gradient, self.constant + float(other))

    __radd__ = __add__

    def __neg__(self):
        return AffineFunction(-self.gradient, -self.constant)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return AffineFunction(scalar * self.gradient, scalar * self.constant)

    __rmul__ = __mul__

    def coefficients(self) -> np.ndarray:
        """(constant, gradient...) as one vector."""
        return np.concatenate([[self.constant], self.gradient])

    def __repr__(self):
        return (f"AffineFunction(gradient={self.gradient.tolist()}, "
                f"constant={self.constant!r})")


@dataclass(frozen=True)
class FacetMeasure:
    """Boundary measure on one facet: density 1/|u_i| times Euclidean measure."""

    facet: int
    density: float
    total: float


@dataclass(frozen=True, eq=False)
class LabelledPolytope:
    dim: int
    labels: tuple
    vertices: np.ndarray
    facets: tuple          # ((label index, (vertex indices...)), ...)
    basepoint: np.ndarray
    eps: float
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def normals(self) -> np.ndarray:
        return np.array([L.gradient for L in self.labels])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([L.constant for L in self.labels])

    @property
    def n_facets(self) -> int:
        return len(self.labels)

    @property
    def is_test_dimension(self) -> bool:
        # 1-d polytopes are accepted for closed-form checks only
        return self.dim == 1

    def label_values(self, x) -> np.ndarray:
        """L_i(x) for every label; shape (..., d)."""
        x = np.asarray(x, dtype=float)
        return x @ self.normals.T + self.offsets

    def contains(self, x, tol=None) -> np.ndarray:
        tol = self.eps if tol is None else tol
        return np.all(self.label_values(x) >= -tol, axis=-1)

    def facet_vertices(self, i: int) -> np.ndarray:
        return self.vertices[list(self.facets[i][1])]

    def active_labels(self, vertex_index: int) -> tuple:
        vals = self.label_values(self.vertices[vertex_index])
        return tuple(int(j) for j in np.flatnonzero(np.abs(vals) <= self.eps))

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @property
    def volume(self) -> float:
        if self.dim == 1:
            return float(np.ptp(self.vertices[:, 0]))
        return float(ConvexHull(self.vertices).volume)

    def __repr__(self):
        return (f"LabelledPolytope(dim={self.dim}, n_labels={len(self.labels)}, "
                f"n_vertices={len(self.vertices)})")


def geometric_tolerance(normals, offsets) -> float:
    return 1e-12 * (1.0 + np.max(np.abs(offsets)) + np.max(np.linalg.norm(normals, axis=1)))


def _check_bounded(U: np.ndarray):
    m = U.shape[1]
    if np.linalg.matrix_rank(U) < m:
        raise Unbounded("label normals do not span R^m; the region contains a line")
    # any y != 0 with <u_i, y> >= 0 for all i is a recession direction
    res = linprog(-U.sum(axis=0), A_ub=-U, b_ub=np.zeros(len(U)),
                  bounds=[(-1, 1)] * m, method="highs")
    if res.status == 0 and -res.fun > 1e-9 * np.abs(U).max():
        raise Unbounded(f"recession direction {np.round(res.x, 12).tolist()}")


def _chebyshev_radius(U: np.ndarray, c: np.ndarray):
    m = U.shape[1]
    norms = np.linalg.norm(U, axis=1)
    # maximize r subject to <u_i, x> + c_i >= r |u_i|
    A = np.hstack([-U, norms[:, None]])
    res = linprog(np.r_[np.zeros(m), -1.0], A_ub=A, b_ub=c,
                  bounds=[(None, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        return -np.inf, None
    return -res.fun, res.x[:m]


def _affine_rank(points: np.ndarray, tol: float) -> int:
    if len(points) <= 1:
        return 0
    diffs = points[1:] - points[0]
    s = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def build_polytope(labels: Sequence[AffineFunction], basepoint=None) -> LabelledPolytope:
    """Build a labelled polytope from its labels.

    Vertices are found by solving every m-subset of the equations L_i = 0 and
    keeping the feasible solutions.

    Raises
    ------
    Unbounded, EmptyInterior, NotSimple, RedundantLabel
    """
    labels = tuple(labels)
    if not labels:
        raise EmptyInterior("no labels given")
    m = labels[0].dim
    if any(L.dim != m for L in labels):
        raise ValueError("labels have inconsistent dimensions")
    d = len(labels)
    if d < m + 1:
        raise Unbounded(f"need at least {m + 1} labels in dimension {m}, got {d}")
    U = np.array([L.gradient for L in labels])
    c = np.array([L.constant for L in labels])
    if np.any(np.linalg.norm(U, axis=1) == 0):
        raise ValueError("every label needs a nonzero normal")
    eps = geometric_tolerance(U, c)

    _check_bounded(U)
    r, _ = _chebyshev_radius(U, c)
    if not r > eps:
        raise EmptyInterior(f"region has empty interior (inradius {r:.3g})")

    verts = []
    for S in itertools.combinations(range(d), m):
        A = U[list(S)]
        if abs(np.linalg.det(A)) <= 1e-12 * np.prod(np.linalg.norm(A, axis=1)):
            continue
        x = np.linalg.solve(A, -c[list(S)])
        if np.all(U @ x + c >= -eps):
            if not any(np.linalg.norm(x - v) <= 1e3 * eps for v in verts):
                verts.append(x)
    # lexicographic vertex order makes the result independent of label order
    verts = np.array(sorted(verts, key=lambda v: tuple(np.round(v, 9))))

    vals = verts @ U.T + c
    active = np.abs(vals) <= 1e3 * eps
    facets = []
    for i in range(d):
        idx = tuple(int(k) for k in np.flatnonzero(active[:, i]))
        if len(idx) < m or _affine_rank(verts[list(idx)], 1e-9) != m - 1:
            raise RedundantLabel(
                f"label {i} does not cut out a facet (touches {len(idx)} vertices)")
        facets.append((i, idx))
    for k, row in enumerate(active):
        if row.sum() != m:
            raise NotSimple(f"vertex {verts[k].tolist()} lies on {int(row.sum())} facets "
                            f"(expected {m})")

    x0 = verts.mean(axis=0) if basepoint is None else np.asarray(basepoint, dtype=float)
    if x0.shape != (m,) or not np.all(U @ x0 + c > eps):
        raise ValueError(f"basepoint {x0.tolist()} is not an interior point")
    verts.setflags(write=False)
    x0.setflags(write=False)
    return LabelledPolytope(dim=m, labels=labels, vertices=verts,
                            facets=tuple(facets), basepoint=x0, eps=float(eps))


def _facet_euclidean_measure(p: LabelledPolytope, i: int) -> float:
    pts = p.facet_vertices(i)
    m = p.dim
    if m == 1:
        return 1.0
    n = p.labels[i].gradient / np.linalg.norm(p.labels[i].gradient)
    # orthonormal basis of the facet hyperplane
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(m)]))
    basis = q[:, 1:m]
    local = (pts - pts[0]) @ basis
    if m == 2:
        return float(np.ptp(local[:, 0]))
    return float(ConvexHull(local).volume)


def facet_measure(p: LabelledPolytope, i: int) -> FacetMeasure:
    """Density 1/|u_i| and total sigma-measure of facet i."""
    if not 0 <= i < p.n_facets:
        raise IndexError(f"facet index {i} out of range")
    density = 1.0 / float(np.linalg.norm(p.labels[i].gradient))
    return FacetMeasure(i, density, density * _facet_euclidean_measure(p, i))


@dataclass(frozen=True)
class CheckedWeight:
    weight: AffineFunction
    min_value: float
    max_value: float


def validate_weight(p: LabelledPolytope, f: AffineFunction) -> CheckedWeight:
    """Accept f iff it is positive at every vertex (hence on the polytope)."""
    if f.dim != p.dim:
        raise ValueError("weight dimension does not match polytope")
    vals = f(p.vertices)
    k = int(np.argmin(vals))
    if vals[k] <= 0:
        raise NonPositiveWeight(
            f"weight is {vals[k]:.6g} at vertex {p.vertices[k].tolist()}",
            vertex=p.vertices[k])
    return CheckedWeight(f, float(vals.min()), float(vals.max()))


def delzant_warnings(p: LabelledPolytope) -> list:
    """Vertices whose normals do not form a Z-basis (informational only)."""
    out = []
    U = p.normals
    if not np.allclose(U, np.round(U)):
        return ["label normals are not integral"]
    for k in range(len(p.vertices)):
        S = list(p.active_labels(k))
        if abs(round(abs(np.linalg.det(U[S])))) != 1:
            out.append(f"vertex {p.vertices[k].tolist()}: normals are not a Z-basis")
    return out


# -- spec files --------------------------------------------------------------

def _affine_from_json(obj, dim, where) -> AffineFunction:
    if not isinstance(obj, dict) or set(obj) != {"normal", "offset"}:
        raise SpecFormatError(f"{where}: expected exactly the keys 'normal' and 'offset'")
    normal = obj["normal"]
    if not isinstance(normal, list) or len(normal) != dim:
        raise SpecFormatError(f"{where}: 'normal' must be a list of {dim} numbers")
    try:
        return AffineFunction(np.array(normal, dtype=float), float(obj["offset"]))
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"{where}: {exc}") from None


def affine_to_json(phi: AffineFunction) -> dict:
    return {"normal": phi.gradient.tolist(), "offset": phi.constant}


_POLYTOPE_KEYS = {"dim", "labels", "weight", "basepoint"}


def parse_polytope_spec(obj: dict):
    """Parse a polytope spec mapping; returns (polytope, weight)."""
    if not isinstance(obj, dict):
        raise SpecFormatError("polytope spec must be a JSON object")
    unknown = set(obj) - _POLYTOPE_KEYS
    if unknown:
        raise SpecFormatError(f"unknown fields in polytope spec: {sorted(unknown)}")
    if "dim" not in obj or "labels" not in obj:
        raise SpecFormatError("polytope spec needs 'dim' and 'labels'")
    dim = obj["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SpecFormatError("'dim' must be a positive integer")
    labels = [_affine_from_json(L, dim, f"labels[{k}]") for k, L in enumerate(obj["labels"])]
    if "weight" in obj:
        weight = _affine_from_json(obj["weight"], dim, "weight")
    else:
        weight = AffineFunction.constant_function(1.0, dim)
    basepoint = obj.get("basepoint")
    if basepoint is not None and (not isinstance(basepoint, list) or len(basepoint) != dim):
        raise SpecFormatError(f"'basepoint' must be a list of {dim} numbers")
    p = build_polytope(labels, basepoint)
    return p, weight


def load_polytope_spec(path):
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecFormatError(f"{path}: {exc}") from None
    return parse_polytope_spec(obj)


def polytope_to_spec(p: LabelledPolytope, weight: AffineFunction | None = None) -> dict:
    out = {"dim": p.dim, "labels": [affine_to_json(L) for L in p.labels]}
    if weight is not None:
        out["weight"] = affine_to_json(weight)
    out["basepoint"] = p.basepoint.tolist()
    return out


# -- standard examples -------------------------------------------------------

def interval(a: float = 0.0, b: float = 1.0) -> LabelledPolytope:
    return build_polytope([AffineFunction([1.0], -a), AffineFunction([-1.0], b)])


def square(half_width: float = 1.0) -> LabelledPolytope:
    h = half_width
    return build_polytope([AffineFunction([1.0, 0.0], h), AffineFunction([-1.0, 0.0], h),
                           AffineFunction([0.0, 1.0], h), AffineFunction([0.0, -1.0], h)])


def standard_simplex(dim: int = 2) -> LabelledPolytope:
    labels = [AffineFunction(np.eye(dim)[k], 0.0) for k in range(dim)]
    labels.append(AffineFunction(-np.ones(dim), 1.0))
    return build_polytope(labels)


def cube(half_width: float = 1.0, dim: int = 3) -> LabelledPolytope:
    labels = []
    for k in range(dim):
        labels.append(AffineFunction(np.eye(dim)[k], half_width))
        labels.append(AffineFunction(-np.eye(dim)[k], half_width))
    return build_polytope(labels)
