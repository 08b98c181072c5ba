import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_interior_points
from toricstab.errors import BoundaryEvaluation, NotConvexAt, SpecFormatError
from toricstab.polynomial import Polynomial
from toricstab.polytope import AffineFunction, cube, interval, square, standard_simplex
from toricstab.potentials import (PLConvexFunction, SymplecticPotential, certify_convexity,
                                  guillemin_potential, hessian_jets, inverse_hessian,
                                  inverse_hessian_jets, make_pl, normalize, parse_potential_spec,
                                  potential_jet, potential_to_spec)

POLYTOPES = {"interval": interval, "square": square,
             "simplex": lambda: standard_simplex(2), "cube": cube}


def quartic(dim, coeff=0.1):
    terms = {tuple(4 if k == j else 0 for k in range(dim)): coeff for j in range(dim)}
    return Polynomial(terms, dim)


def example_potentials():
    for name, make in POLYTOPES.items():
        p = make()
        yield f"{name}-u0", guillemin_potential(p)
        yield f"{name}-quartic", guillemin_potential(p) + quartic(p.dim)


POTENTIALS = list(example_potentials())


class TestClosedForms:
    def test_interval(self, rng):
        x = rng.uniform(0.01, 0.99, size=(20, 1))
        H = inverse_hessian(guillemin_potential(interval()), x)[:, 0, 0]
        np.testing.assert_allclose(H, 2 * x[:, 0] * (1 - x[:, 0]), rtol=1e-13)

    def test_square(self, rng):
        x = rng.uniform(-0.99, 0.99, size=(20, 2))
        H = inverse_hessian(guillemin_potential(square()), x)
        expected = np.zeros((20, 2, 2))
        expected[:, 0, 0] = 1 - x[:, 0] ** 2
        expected[:, 1, 1] = 1 - x[:, 1] ** 2
        np.testing.assert_allclose(H, expected, atol=1e-14)

    def test_simplex(self, rng):
        p = standard_simplex(2)
        x = random_interior_points(p, 20, rng)
        H = inverse_hessian(guillemin_potential(p), x)
        x1, x2 = x[:, 0], x[:, 1]
        expected = 2 * np.stack([np.stack([x1 * (1 - x1), -x1 * x2], -1),
                                 np.stack([-x1 * x2, x2 * (1 - x2)], -1)], -2)
        np.testing.assert_allclose(H, expected, atol=1e-14)

    def test_hessian_and_third_derivative(self, rng):
        p = standard_simplex(2)
        x = random_interior_points(p, 10, rng)
        G, dG, _ = hessian_jets(guillemin_potential(p), x)
        N = p.normals
        L = p.label_values(x)
        G_ref = 0.5 * np.einsum("nj,ja,jb->nab", 1 / L, N, N)
        dG_ref = -0.5 * np.einsum("nj,jk,ja,jb->nkab", 1 / L ** 2, N, N, N)
        np.testing.assert_allclose(G, G_ref, rtol=1e-13)
        np.testing.assert_allclose(dG, dG_ref, rtol=1e-13)


class TestJet:
    def test_interval_midpoint(self):
        jet = potential_jet(guillemin_potential(interval()), [0.5])
        assert jet.G[0, 0] == pytest.approx(2.0, rel=1e-14)
        assert jet.H[0, 0] == pytest.approx(0.5, rel=1e-14)
        assert jet.dH[0, 0, 0] == pytest.approx(0.0, abs=1e-14)
        # H = 2x(1-x): H'' = -4
        assert jet.d2H[0, 0, 0, 0] == pytest.approx(-4.0, rel=1e-12)

    def test_simplex_centroid(self):
        jet = potential_jet(guillemin_potential(standard_simplex(2)), [1 / 3, 1 / 3])
        np.testing.assert_allclose(jet.H, 2 * np.array([[2 / 9, -1 / 9], [-1 / 9, 2 / 9]]),
                                   atol=1e-15)

    def test_value_and_gradient(self):
        u = guillemin_potential(interval())
        jet = potential_jet(u, [0.25])
        assert jet.value == pytest.approx(0.5 * (0.25 * math.log(0.25) + 0.75 * math.log(0.75)))
        assert jet.gradient[0] == pytest.approx(0.5 * (math.log(0.25) - math.log(0.75)))

    @pytest.mark.parametrize("name, u", POTENTIALS, ids=[n for n, _ in POTENTIALS])
    def test_identities(self, name, u, rng):
        X = random_interior_points(u.polytope, 100, rng)
        G, dG, d2G = hessian_jets(u, X)
        H, dH, d2H = inverse_hessian_jets(u, X)
        eye = np.broadcast_to(np.eye(u.dim), H.shape)
        assert np.max(np.abs(H @ G - eye)) <= 1e-10
        ref1 = -H[:, None] @ dG @ H[:, None]
        assert np.max(np.abs(dH - ref1)) <= 1e-10
        ref2 = (-dH[:, None, :] @ dG[:, :, None] @ H[:, None, None]
                - H[:, None, None] @ d2G @ H[:, None, None]
                - H[:, None, None] @ dG[:, :, None] @ dH[:, None, :])
        assert np.max(np.abs(d2H - ref2)) <= 1e-8

    @pytest.mark.parametrize("name, u", POTENTIALS, ids=[n for n, _ in POTENTIALS])
    def test_finite_differences(self, name, u, rng):
        X = random_interior_points(u.polytope, 20, rng, margin=0.05)
        H, dH, d2H = inverse_hessian_jets(u, X)
        h = 1e-5
        for k in range(u.dim):
            e = np.zeros(u.dim)
            e[k] = h
            Hp, dHp, _ = inverse_hessian_jets(u, X + e)
            Hm, dHm, _ = inverse_hessian_jets(u, X - e)
            fd = (Hp - Hm) / (2 * h)
            scale = np.max(np.abs(dH[:, k]))
            assert np.max(np.abs(fd - dH[:, k])) <= 1e-6 * scale
            fd2 = (dHp - dHm) / (2 * h)
            scale2 = np.max(np.abs(d2H[:, :, k]))
            assert np.max(np.abs(fd2 - d2H[:, :, k])) <= 1e-6 * scale2

    def test_gradient_finite_differences(self, rng):
        u = guillemin_potential(square()) + quartic(2)
        X = random_interior_points(u.polytope, 10, rng, margin=0.05)
        h = 1e-5
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (u(X + e) - u(X - e)) / (2 * h)
            np.testing.assert_allclose(fd, u.gradient(X)[:, k], rtol=1e-8, atol=1e-9)

    def test_errors(self):
        u = guillemin_potential(square())
        with pytest.raises(BoundaryEvaluation):
            potential_jet(u, [1.0, 0.0])
        with pytest.raises(BoundaryEvaluation):
            potential_jet(u, [2.0, 0.0])
        concave = SymplecticPotential(square(), canonical=False,
                                      perturbation=Polynomial({(2, 0): -1.0, (0, 2): 1.0}, 2))
        with pytest.raises(NotConvexAt) as exc:
            potential_jet(concave, [0.0, 0.0])
        np.testing.assert_allclose(exc.value.point, [0.0, 0.0])


def _point_with_label(p, i, t):
    """Point with L_i = t on the segment from the centroid of facet i to the basepoint."""
    vids = dict(p.facets)[i]
    fc = p.vertices[list(vids)].mean(axis=0)
    b = p.basepoint
    return fc + (t / p.label_values(b)[i]) * (b - fc)


@pytest.mark.parametrize("make", [interval, square, lambda: standard_simplex(2), cube])
def test_facet_degeneracy_is_linear(make):
    p = make()
    u = guillemin_potential(p) + quartic(p.dim, 0.05)
    ts = np.array([1e-2, 1e-3, 1e-4])
    for i in range(p.n_facets):
        norms = np.array([np.linalg.norm(inverse_hessian(u, _point_with_label(p, i, t)[None])[0]
                                         @ p.normals[i]) for t in ts])
        ratios = norms / ts
        assert np.max(ratios) / np.min(ratios) < 1.05


class TestBoundaryValue:
    def test_examples(self):
        u = guillemin_potential(interval())
        assert u.boundary_value(np.array([0.0])) == 0.0
        sq = guillemin_potential(square())
        assert sq.boundary_value(np.array([1.0, 0.0])) == pytest.approx(math.log(2), rel=1e-15)
        v = sq + Polynomial({(2, 0): 1.0}, 2)
        assert v.boundary_value(np.array([1.0, 0.0])) == pytest.approx(math.log(2) + 1, rel=1e-15)

    def test_continuous_extension(self):
        u = guillemin_potential(square())
        edge = np.array([1.0, 0.3])
        near = edge - np.array([1e-9, 0.0])
        assert u(near) == pytest.approx(u.boundary_value(edge), abs=1e-7)

    def test_value_is_nan_outside(self):
        assert np.isnan(guillemin_potential(interval())(np.array([1.5])))


class TestNormalize:
    def test_affine(self):
        out = normalize(AffineFunction([2.0, -1.0], 3.0), np.zeros(2))
        np.testing.assert_array_equal(out.coefficients(), [0.0, 0.0, 0.0])

    def test_already_normalized(self):
        v = Polynomial({(2,): 1.0}, 1)
        assert normalize(v, np.array([0.0])) is v

    def test_tent(self):
        v = make_pl([AffineFunction([1.0], 0.0), AffineFunction([-1.0], 1.0)])
        w = normalize(v, np.array([0.5]))
        xs = np.linspace(0, 1, 11)[:, None]
        np.testing.assert_allclose(w(xs), np.maximum(xs[:, 0], 1 - xs[:, 0]) - 0.5, atol=1e-15)

    def test_potential(self):
        p = square()
        u = guillemin_potential(p) + quartic(2)
        x0 = np.array([0.2, -0.1])
        w = normalize(u, x0)
        assert abs(w(x0)) <= 1e-14
        np.testing.assert_allclose(w.gradient(x0), 0.0, atol=1e-14)
        pts = random_interior_points(p, 50, np.random.default_rng(1))
        assert np.all(w(pts) >= -1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2)),
                    min_size=1, max_size=5),
           st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2)))
    def test_idempotent_and_affine_invariant(self, raw, aff):
        x0 = np.array([0.1, -0.2])
        v = make_pl([AffineFunction([a, b], c) for a, b, c in raw])
        w = normalize(v, x0)
        assert normalize(w, x0) is w
        phi = AffineFunction([aff[0], aff[1]], aff[2])
        w2 = normalize(v + phi, x0)
        pts = np.random.default_rng(0).uniform(-1, 1, size=(30, 2))
        scale = 1 + max(abs(x) for t in raw + [aff] for x in t)
        np.testing.assert_allclose(w2(pts), w(pts), atol=1e-12 * scale)
        assert np.all(w(pts) >= -1e-12 * scale)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    def test_polynomial_affine_invariance(self, a, b, c):
        v = Polynomial({(2, 0): 1.0, (1, 1): 0.3, (0, 4): 0.5}, 2)
        x0 = np.array([0.3, 0.1])
        w = normalize(v, x0)
        w2 = normalize(v + Polynomial.from_affine(AffineFunction([a, b], c)), x0)
        pts = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
        np.testing.assert_allclose(w2(pts), w(pts), atol=1e-13)
        assert normalize(w, x0) is w


class TestPL:
    def test_crease(self):
        v = make_pl([AffineFunction([0.0, 0.0], 0.0), AffineFunction([1.0, 0.0], 0.0)])
        pts = np.array([[-0.5, 0.3], [0.7, -0.2]])
        np.testing.assert_allclose(v(pts), [0.0, 0.7])

    def test_single_piece(self):
        phi = AffineFunction([1.0, 2.0], -1.0)
        pts = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
        np.testing.assert_allclose(make_pl([phi])(pts), phi(pts))

    def test_redundant_pieces_retained(self):
        phi = AffineFunction([1.0], 0.0)
        v = make_pl([phi, phi, AffineFunction([-1.0], -5.0)])
        assert len(v.pieces) == 3

    def test_subgradient_at_kink(self):
        v = make_pl([AffineFunction([1.0], 0.0), AffineFunction([-1.0], 1.0)])
        np.testing.assert_allclose(v.subgradient(np.array([0.5])), [0.0])
        np.testing.assert_allclose(v.subgradient(np.array([0.8])), [1.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            make_pl([])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2)),
                    min_size=1, max_size=5),
           st.floats(0, 1))
    def test_convex(self, raw, t):
        v = make_pl([AffineFunction([a, b], c) for a, b, c in raw])
        x, y = np.array([-0.8, 0.5]), np.array([0.6, -0.9])
        mid = (1 - t) * x + t * y
        assert v(mid) <= (1 - t) * v(x) + t * v(y) + 1e-12 * (1 + abs(v(x)) + abs(v(y)))


class TestCertificate:
    def test_canonical_is_certified(self):
        cert = certify_convexity(guillemin_potential(square()))
        assert cert.ok and cert.min_eigenvalue > 0 and cert.resolution == 32

    def test_large_concave_perturbation_fails(self):
        u = guillemin_potential(square()) + Polynomial({(2, 0): -5.0}, 2)
        assert not u.certificate.ok


class TestSpec:
    def test_round_trip_potential(self):
        p = square()
        u = guillemin_potential(p) + quartic(2)
        v = parse_potential_spec(json.loads(json.dumps(potential_to_spec(u))), p)
        assert isinstance(v, SymplecticPotential) and v.canonical
        assert v.perturbation == u.perturbation

    def test_round_trip_pl(self):
        p = square()
        w = make_pl([AffineFunction([0.0, 0.0], 0.0), AffineFunction([1.0, 0.5], -0.2)])
        v = parse_potential_spec(potential_to_spec(w), p)
        assert isinstance(v, PLConvexFunction)
        pts = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
        np.testing.assert_allclose(v(pts), w(pts))

    @pytest.mark.parametrize("obj", [
        [],
        {"pieces": []},
        {"canonical": "yes"},
        {"perturbation": [{"exponents": [1], "coeff": 1.0}]},
        {"perturbation": [{"exponents": [1, -1], "coeff": 1.0}]},
        {"perturbation": [{"exponents": [1, 1]}]},
        {"canonical": True, "colour": 1},
    ])
    def test_malformed(self, obj):
        with pytest.raises(SpecFormatError):
            parse_potential_spec(obj, square())
