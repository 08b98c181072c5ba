import numpy as np
import pytest

from conftest import random_interior_points
from toricstab.curvature import (AffinePower, abreu_curvature, abreu_residual_norm,
                                 boundary_condition_residuals, facet_sample_points,
                                 integration_by_parts_residual, max_boundary_residual,
                                 sample_curvature, weighted_scalar_curvature)
from toricstab.errors import BoundaryConditionFailure, BoundaryEvaluation
from toricstab.polynomial import Polynomial
from toricstab.polytope import AffineFunction, cube, interval, square, standard_simplex
from toricstab.potentials import SymplecticPotential, guillemin_potential, inverse_hessian
from toricstab.quadrature import QuadratureScheme, probe_points


def quartic(dim, coeff=0.1):
    return Polynomial({tuple(4 if k == j else 0 for k in range(dim)): coeff
                       for j in range(dim)}, dim)


class TestExamples:
    def test_guillemin_solutions(self, case):
        _, p, f, s = case
        vals = weighted_scalar_curvature(guillemin_potential(p), f, probe_points(p))
        assert np.max(np.abs(vals - s)) <= 1e-8

    def test_guillemin_solutions_random_points(self, case, rng):
        _, p, f, s = case
        X = random_interior_points(p, 100, rng, margin=1e-4)
        vals = weighted_scalar_curvature(guillemin_potential(p), f, X)
        assert np.max(np.abs(vals - s)) <= 1e-8

    def test_unweighted_constants(self):
        for p, s in ((interval(), 4.0), (square(), 4.0), (standard_simplex(2), 12.0),
                     (cube(), 6.0)):
            vals = abreu_curvature(guillemin_potential(p), probe_points(p, 12))
            assert np.max(np.abs(vals - s)) <= 1e-9

    def test_scalar_input(self):
        val = weighted_scalar_curvature(guillemin_potential(interval()),
                                        AffineFunction([1.0], 1.0), np.array([0.3]))
        assert isinstance(val, float) and val == pytest.approx(8.0, abs=1e-12)

    def test_boundary_point_raises(self):
        with pytest.raises(BoundaryEvaluation):
            weighted_scalar_curvature(guillemin_potential(square()), None, np.array([1.0, 0.0]))


@pytest.mark.parametrize("make", [interval, square, lambda: standard_simplex(2), cube])
def test_unit_weight_matches_abreu(make, rng):
    p = make()
    u = guillemin_potential(p) + quartic(p.dim)
    X = probe_points(p, 10)
    w = weighted_scalar_curvature(u, None, X)
    a = abreu_curvature(u, X)
    assert np.max(np.abs(w - a)) <= 1e-10 * (1 + np.max(np.abs(a)))
    for smp in sample_curvature(u, None, X[:5]):
        assert smp.weighted == pytest.approx(smp.unweighted, abs=1e-10 * (1 + abs(smp.unweighted)))
        assert smp.condition >= 1.0


@pytest.mark.parametrize("make, f", [
    (interval, AffineFunction([1.0], 1.0)),
    (square, AffineFunction([0.2, -0.1], 1.0)),
    (lambda: standard_simplex(2), AffineFunction([0.5, 0.25], 1.0)),
])
def test_expanded_formula_matches_divergence_differences(make, f, rng):
    p = make()
    m = p.dim
    u = guillemin_potential(p) + quartic(m, 0.05)
    h = 1e-4

    def g(x):
        return inverse_hessian(u, x[None])[0] / f(x) ** (2 * m - 1)

    E = np.eye(m) * h
    for x in random_interior_points(p, 8, rng, margin=0.1):
        div = 0.0
        for i in range(m):
            for j in range(m):
                if i == j:
                    d2 = (g(x + E[i]) - 2 * g(x) + g(x - E[i])) / h ** 2
                else:
                    d2 = (g(x + E[i] + E[j]) - g(x + E[i] - E[j])
                          - g(x - E[i] + E[j]) + g(x - E[i] - E[j])) / (4 * h ** 2)
                div += d2[i, j]
        ref = -f(x) ** (2 * m + 1) * div
        assert weighted_scalar_curvature(u, f, x) == pytest.approx(ref, rel=1e-5)


class TestBoundaryConditions:
    @pytest.mark.parametrize("make", [interval, square, lambda: standard_simplex(2), cube])
    def test_guillemin_and_perturbed(self, make):
        p = make()
        for u in (guillemin_potential(p), guillemin_potential(p) + quartic(p.dim)):
            res = boundary_condition_residuals(u)
            assert len(res) == p.n_facets
            assert max_boundary_residual(res) < 1e-6

    def test_square_with_x1_squared(self):
        u = guillemin_potential(square()) + Polynomial({(2, 0): 1.0}, 2)
        assert max_boundary_residual(boundary_condition_residuals(u)) < 1e-6

    def test_interval_closed_form(self):
        # H = 2x(1-x) vanishes at 0 and H' = 2 - 4x equals 2 u with u = 1
        u = guillemin_potential(interval())
        res = boundary_condition_residuals(u, 1)
        assert res[0].kernel < 1e-12 and res[0].derivative < 1e-10

    def test_simplex_facet_kernel(self):
        p = standard_simplex(2)
        res = boundary_condition_residuals(guillemin_potential(p), 3)
        assert all(r.kernel < 1e-10 for r in res)

    def test_non_canonical_fails(self):
        u = SymplecticPotential(square(), canonical=False,
                                perturbation=Polynomial({(2, 0): 1.0, (0, 2): 1.0}, 2))
        assert max_boundary_residual(boundary_condition_residuals(u)) > 0.1

    def test_sample_points_lie_on_facet(self):
        p = standard_simplex(3)
        for i in range(p.n_facets):
            xi = facet_sample_points(p, i, 5)
            assert len(xi) == 5
            L = p.label_values(xi)
            np.testing.assert_allclose(L[:, i], 0.0, atol=1e-14)
            assert np.all(np.delete(L, i, axis=1) > 0)


class TestIntegrationByParts:
    @pytest.mark.parametrize("psi_kind", ["one", "power"])
    def test_standard_cases(self, case, psi_kind):
        _, p, f, _ = case
        m = p.dim
        u = guillemin_potential(p)
        psi = 1.0 if psi_kind == "one" else AffinePower(f, 2 * m - 1)
        phis = [Polynomial.monomial((0,) * m)]
        phis += [Polynomial.monomial(tuple(int(k == i) for k in range(m))) for i in range(m)]
        phis += [Polynomial.monomial(tuple(int(k == i) + int(k == j) for k in range(m)))
                 for i in range(m) for j in range(i, m)]
        for phi in phis:
            assert integration_by_parts_residual(p, f, u, phi, psi) < 1e-6

    def test_interval_x_squared(self):
        u = guillemin_potential(interval())
        r = integration_by_parts_residual(interval(), None, u, Polynomial({(2,): 1.0}, 1))
        assert r < 1e-8

    def test_simplex_x1x2(self):
        p = standard_simplex(2)
        r = integration_by_parts_residual(p, None, guillemin_potential(p),
                                          Polynomial({(1, 1): 1.0}, 2), AffinePower(
                                              AffineFunction([0.0, 0.0], 1.0), 3))
        assert r < 1e-7

    def test_affine_phi(self):
        p = square()
        r = integration_by_parts_residual(p, None, guillemin_potential(p) + quartic(2),
                                          AffineFunction([1.0, -2.0], 0.5))
        assert r < 1e-6

    @pytest.mark.parametrize("make, f, phi", [
        (interval, AffineFunction([1.0], 1.0), Polynomial({(2,): 1.0}, 1)),
        (lambda: standard_simplex(2), AffineFunction([0.5, 0.25], 1.0),
         Polynomial({(1, 1): 1.0}, 2)),
        (square, AffineFunction([0.2, 0.1], 1.0), Polynomial({(2, 0): 1.0, (0, 2): 1.0}, 2)),
    ])
    def test_refinement_order(self, make, f, phi):
        p = make()
        u = guillemin_potential(p)
        psi = AffinePower(f, 2 * p.dim - 1)
        errs = [integration_by_parts_residual(p, f, u, phi, psi, QuadratureScheme(2, 2, r, 0))
                for r in range(4)]
        assert errs[-1] < errs[0]
        assert np.log2(errs[-2] / errs[-1]) >= 2.0

    def test_requires_boundary_conditions(self):
        u = SymplecticPotential(square(), canonical=False,
                                perturbation=Polynomial({(2, 0): 1.0, (0, 2): 1.0}, 2))
        with pytest.raises(BoundaryConditionFailure):
            integration_by_parts_residual(square(), None, u, Polynomial({(1, 0): 1.0}, 2))


class TestAbreuResidual:
    def test_interval_solutions(self):
        iv = interval()
        u = guillemin_potential(iv)
        assert abreu_residual_norm(u, None, iv, 4.0) < 1e-8
        assert abreu_residual_norm(u, AffineFunction([1.0], 1.0), iv, 8.0) < 1e-8

    def test_all_cases(self, case):
        _, p, f, s = case
        assert abreu_residual_norm(guillemin_potential(p), f, p, s) < 1e-7

    def test_perturbed_square_is_not_a_solution(self):
        p = square()
        u = guillemin_potential(p) + Polynomial({(4, 0): 0.1}, 2)
        assert abreu_residual_norm(u, None, p, 4.0) > 0.1

    def test_power_field_jet(self):
        f = AffineFunction([0.5, 0.25], 1.0)
        psi = AffinePower(f, 3)
        X = np.array([[0.2, 0.3]])
        v, g, h = psi.jet(X)
        fx = f(X[0])
        assert v[0] == pytest.approx(fx ** -3)
        np.testing.assert_allclose(g[0], -3 * fx ** -4 * f.gradient)
        np.testing.assert_allclose(h[0], 12 * fx ** -5 * np.outer(f.gradient, f.gradient))

