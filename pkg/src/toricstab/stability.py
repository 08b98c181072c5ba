"""Weighted extremal affine function, Donaldson-Futaki invariant, boundary
norm, Futaki-Mabuchi pairing and the stability scan.

With m = dim, integrals against dmu carry the weight f^-(2m+1) and boundary
integrals against dsigma carry f^-(2m-1):

    F(v)    = 2 int_bd v dsigma / f^(2m-1) - int s v dmu / f^(2m+1)
    ||v||_b = int_bd v dsigma / f^(2m-1)
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import IllConditionedGram, NotNormalized
from .polynomial import Polynomial
from .polytope import AffineFunction, LabelledPolytope
from .potentials import PLConvexFunction, SymplecticPotential, normalize
from .quadrature import (MomentData, integrate_boundary, integrate_interior, probe_points,
                         resolve_scheme, weighted_moments)

GRAM_CONDITION_LIMIT = 1e12


def _weight(p, f):
    return AffineFunction.constant_function(1.0, p.dim) if f is None else f


# -- extremal affine function ---------------------------------------------------

@dataclass(frozen=True)
class ExtremalAffineSolution:
    affine: AffineFunction
    gram: np.ndarray
    rhs: np.ndarray
    residual: float
    condition: float
    moments: MomentData

    @property
    def coefficients(self) -> np.ndarray:
        return self.affine.coefficients()


def extremal_affine(p: LabelledPolytope, f=None, scheme=None) -> ExtremalAffineSolution:
    """Affine s with F(phi) = 0 for every affine phi.

    Solves A a = 2 b, A the Gram matrix of (1, x_1, ..., x_m) for
    dmu/f^(2m+1) and b the moments of (1, x_i) for dsigma/f^(2m-1).

    Raises
    ------
    IllConditionedGram
        if cond(A) exceeds 1e12.
    """
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    mom = weighted_moments(p, f, scheme)
    A = mom.gram
    rhs = 2.0 * mom.boundary_vector
    cond = float(np.linalg.cond(A))
    if not cond <= GRAM_CONDITION_LIMIT:
        raise IllConditionedGram(f"Gram matrix condition number {cond:.3g} exceeds "
                                 f"{GRAM_CONDITION_LIMIT:.0e}")
    a = cho_solve(cho_factor(A), rhs)
    residual = float(np.linalg.norm(A @ a - rhs))
    return ExtremalAffineSolution(AffineFunction(a[1:], a[0]), A, rhs, residual, cond, mom)


# -- Futaki invariant and boundary norm ----------------------------------------------

def _interior_and_boundary(v):
    """(interior evaluator, boundary evaluator) for a test function."""
    if isinstance(v, SymplecticPotential):
        return v.value, v.boundary_value
    if isinstance(v, (PLConvexFunction, AffineFunction, Polynomial)):
        return v, v
    if callable(v):
        return v, v
    raise TypeError(f"cannot integrate object of type {type(v).__name__}")


def _boundary_integral(p, f, v, scheme):
    _, vb = _interior_and_boundary(v)
    h = v if isinstance(v, PLConvexFunction) else vb
    return integrate_boundary(p, f, 2 * p.dim - 1, h, scheme)


def futaki(p: LabelledPolytope, f, s: AffineFunction, v, scheme=None) -> float:
    """Donaldson-Futaki invariant of v (PL, affine, polynomial or potential)."""
    f = _weight(p, f)
    scheme = resolve_scheme(p, scheme)
    m = p.dim
    vi, _ = _interior_and_boundary(v)
    h = v if isinstance(v, PLConvexFunction) else vi
    interior = integrate_interior(p, f, 2 * m + 1, h, scheme, multiplier=s)
    return 2.0 * _boundary_integral(p, f, v, scheme) - interior


def check_normalized(p: LabelledPolytope, v, x0=None, tol_value=1e-12, tol_min=1e-10):
    """Raise NotNormalized unless v(x0) = 0 and v >= 0 on the probe grid."""
    x0 = p.basepoint if x0 is None else np.asarray(x0, dtype=float)
    vi, vb = _interior_and_boundary(v)
    val = float(vi(x0))
    if abs(val) > tol_value:
        raise NotNormalized(f"v(x0) = {val:.3g}; apply normalize first")
    lo = min(float(np.min(vi(probe_points(p)))), float(np.min(vb(p.vertices))))
    if lo < -tol_min:
        raise NotNormalized(f"v takes the negative value {lo:.3g}; apply normalize first")


def boundary_norm(p: LabelledPolytope, f, v, scheme=None, x0=None) -> float:
    """int_bd v dsigma / f^(2m-1) for normalized v.

    Raises
    ------
    NotNormalized
    """
    f = _weight(p, f)
    check_normalized(p, v, x0)
    return _boundary_integral(p, f, v, resolve_scheme(p, scheme))


def taming_constant(p: LabelledPolytope, f=None, x0=None) -> float:
    """C with ||v||_b >= C int v dmu for every normalized convex v.

    Writing x = x0 + t (y - x0) with y on the boundary, convexity and
    v(x0) = 0 give v(x) <= t v(y).  Integrating over the cones on the facets
    yields int v dmu <= max_F L_F(x0) / (m + 1) * int_bd v dsigma, and the
    weight costs at most a factor max f^(2m-1) (attained at a vertex).
    """
    f = _weight(p, f)
    x0 = p.basepoint if x0 is None else np.asarray(x0, dtype=float)
    m = p.dim
    fmax = float(np.max(f(p.vertices)))
    return (m + 1) / (float(np.max(p.label_values(x0))) * fmax ** (2 * m - 1))


def futaki_mabuchi_form(p: LabelledPolytope, f, phi1: AffineFunction, phi2: AffineFunction,
                        scheme=None) -> float:
    """int phi1 phi2 dmu/f^(2m+1) after centering each phi to weighted mean 0."""
    f = _weight(p, f)
    M = weighted_moments(p, f, resolve_scheme(p, scheme)).gram
    C = M - np.outer(M[:, 0], M[0, :]) / M[0, 0]
    return float(phi1.coefficients() @ C @ phi2.coefficients())


# -- stability scan ----------------------------------------------------------------

@dataclass(frozen=True)
class ScanConfig:
    """Sample counts for the stability scan.

    crease_directions is the number of unit directions (angles in 2-d,
    a spiral point set plus the coordinate axes in 3-d; 1-d always uses +-1).
    Each direction gets the offset 0 plus crease_offsets offsets at least
    5% of the diameter from x0.  When random_maxima is None the random
    family fills the scan up to total_samples generated functions.
    """

    crease_directions: int = 24
    crease_offsets: int = 4
    random_maxima: int | None = None
    pieces: int = 3
    total_samples: int = 500
    seed: int = 0
    min_offset_fraction: float = 0.05

    def as_dict(self) -> dict:
        return {"crease_directions": self.crease_directions,
                "crease_offsets": self.crease_offsets, "random_maxima": self.random_maxima,
                "pieces": self.pieces, "total_samples": self.total_samples,
                "seed": self.seed,
                "min_offset_fraction": self.min_offset_fraction}


@dataclass(frozen=True)
class ScanSample:
    sample_id: int
    family: str
    params: str
    function: PLConvexFunction
    futaki: float
    bnorm: float
    ratio: float


@dataclass
class StabilityReport:
    """Result of a stability scan.

    lambda_hat is the smallest ratio found, which bounds the best uniform
    stability constant from above.
    """

    samples: list
    n_skipped: int
    seed: int
    config: dict
    scheme: dict
    extremal: AffineFunction
    families: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([smp.ratio for smp in self.samples])

    @property
    def argmin(self):
        if not self.samples:
            return None
        return min(self.samples, key=lambda smp: (smp.ratio, smp.sample_id))

    @property
    def lambda_hat(self) -> float:
        best = self.argmin
        return math.nan if best is None else best.ratio

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "family", "params", "futaki", "bnorm", "ratio"])
        for smp in self.samples:
            w.writerow([smp.sample_id, smp.family, smp.params,
                        repr(smp.futaki), repr(smp.bnorm), repr(smp.ratio)])
        return buf.getvalue()


def _fmt(values) -> str:
    return "[" + " ".join(repr(float(x)) for x in np.ravel(values)) + "]"


def scan_directions(dim: int, count: int) -> np.ndarray:
    if count <= 0:
        return np.zeros((0, dim))
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    # golden-angle spiral on the sphere
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z ** 2)
    phi = np.pi * (3 - np.sqrt(5)) * k
    spiral = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    if dim > 3:
        return axes
    return np.vstack([axes, spiral])


def crease_functions(p: LabelledPolytope, config: ScanConfig):
    """Yield (params, PL crease) with the crease hyperplane inside the polytope."""
    x0 = p.basepoint
    cmin = config.min_offset_fraction * p.diameter
    for a in scan_directions(p.dim, config.crease_directions):
        reach = float(np.max((p.vertices - x0) @ a))
        offsets = [0.0]
        if reach > cmin:
            n = config.crease_offsets
            offsets += [cmin + (reach - cmin) * j / n for j in range(n)]
        for c in offsets:
            phi = AffineFunction(a, -float(a @ x0) - c)
            yield f"a={_fmt(a)};c={c!r}", PLConvexFunction((AffineFunction.constant_function(0.0, p.dim), phi))


def random_maxima(p: LabelledPolytope, config: ScanConfig, count: int):
    """Yield (params, pi(v)) for seeded random maxima of affine pieces whose
    zero sets pass through random points of the polytope."""
    rng = np.random.default_rng(config.seed)
    V = p.vertices
    for _ in range(count):
        pieces = []
        for _ in range(config.pieces):
            g = rng.standard_normal(p.dim)
            lam = rng.dirichlet(np.ones(len(V)))
            y = lam @ V
            pieces.append(AffineFunction(g, -float(g @ y)))
        v = normalize(PLConvexFunction(tuple(pieces)), p.basepoint)
        params = "pieces=" + ";".join(_fmt(phi.coefficients()) for phi in pieces)
        yield params, v


def stability_scan(p: LabelledPolytope, f, s: AffineFunction, config: ScanConfig | None = None,
                   scheme=None, min_bnorm: float = 1e-10) -> StabilityReport:
    """Ratios F(v)/||v||_b over creases and random PL maxima.

    Samples with ||v||_b < min_bnorm are skipped.  Results are in generation
    order, so a fixed seed and config give an identical report.
    """
    f = _weight(p, f)
    config = ScanConfig() if config is None else config
    scheme = resolve_scheme(p, scheme)
    samples, skipped = [], 0
    families = {"crease": 0, "random_max": 0}
    sid = 0
    creases = list(crease_functions(p, config))
    count = config.random_maxima
    if count is None:
        count = max(0, config.total_samples - len(creases))
    gens = [("crease", creases), ("random_max", random_maxima(p, config, count))]
    for family, gen in gens:
        for params, v in gen:
            bn = boundary_norm(p, f, v, scheme)
            if bn < min_bnorm:
                skipped += 1
                continue
            fu = futaki(p, f, s, v, scheme)
            samples.append(ScanSample(sid, family, params, v, fu, bn, fu / bn))
            families[family] += 1
            sid += 1
    return StabilityReport(samples, skipped, config.seed, config.as_dict(),
                           scheme.as_dict(), s, families)
