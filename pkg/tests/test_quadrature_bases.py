import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvem.bases import (
    RankDeficiencyError,
    build_vector_basis,
    exponents,
    mgs,
    mgs_twice,
    n_grad,
    n_perp,
    n_poly,
    orthonormalize_element_basis,
    orthonormalize_unit_interval_basis,
    scaled_monomial_vandermonde,
)
from mvem.quadrature import gauss_legendre_unit_interval, polygon_quadrature, triangle_rule

from conftest import L_SHAPE, element_geometry


def test_midpoint_rule():
    r = gauss_legendre_unit_interval(1)
    np.testing.assert_allclose(r.nodes, [0.5])
    np.testing.assert_allclose(r.weights, [1.0])


def test_two_point_rule():
    r = gauss_legendre_unit_interval(2)
    d = 1 / (2 * np.sqrt(3))
    np.testing.assert_allclose(r.nodes, [0.5 - d, 0.5 + d])
    np.testing.assert_allclose(r.weights, [0.5, 0.5])


def test_three_point_rule_integrates_quintic():
    r = gauss_legendre_unit_interval(3)
    assert r.integrate(r.nodes**5) == pytest.approx(1 / 6, abs=1e-15)


@pytest.mark.parametrize("order", range(0, 13))
def test_triangle_rule_exactness(order):
    # int over the reference triangle of x^a y^b = a! b! / (a + b + 2)!
    from math import factorial

    r = triangle_rule((0, 0), (1, 0), (0, 1), order)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = r.integrate(r.nodes[:, 0] ** a * r.nodes[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-12)


def test_polygon_rule_on_unit_square():
    g = element_geometry("square")
    r = polygon_quadrature(g.vertices, g.star_center, 4)
    assert r.integrate(np.ones(len(r.weights))) == pytest.approx(1.0)
    assert r.integrate(r.nodes[:, 0] * r.nodes[:, 1]) == pytest.approx(0.25)


def test_polygon_rule_against_grid_oracle():
    g = element_geometry("L")
    r = polygon_quadrature(g.vertices, g.star_center, 4)
    got = r.integrate(r.nodes[:, 0] ** 2 * r.nodes[:, 1])
    # midpoint grids with 200 and 400 cells per unit length, masked to the L;
    # one Richardson step removes the h^2 term of the midpoint error

    def grid(n):
        s = (np.arange(2 * n) + 0.5) / n
        X, Y = np.meshgrid(s, s)
        inside = ~((X > 1) & (Y > 1))
        return np.sum((X**2 * Y)[inside]) / n**2

    oracle = (4 * grid(400) - grid(200)) / 3
    assert got == pytest.approx(oracle, abs=1e-6)
    assert got == pytest.approx(11 / 6, rel=1e-13)


def test_polygon_rule_rejects_bad_star_centre():
    verts = np.asarray(L_SHAPE, dtype=float)
    with pytest.raises(ValueError, match="star"):
        polygon_quadrature(verts, (1.8, 0.2), 2)


def test_monomial_ordering():
    np.testing.assert_array_equal(exponents(2), [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]])


def test_scaled_monomials_at_reference_points():
    g = element_geometry("pentagon")
    V = scaled_monomial_vandermonde(g.centroid, g.diameter, [g.centroid + [g.diameter, 0.0]], 3)
    assert V[0, 0] == 1.0
    assert V[0, 1] == pytest.approx(1.0)
    assert V[0, 2] == pytest.approx(0.0)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-2, 2), y=st.floats(-2, 2), k=st.integers(0, 6))
def test_monomial_gradients_match_finite_differences(x, y, k):
    c, h, eps = np.array([0.3, -0.2]), 1.7, 1e-6
    _, Vx, Vy = scaled_monomial_vandermonde(c, h, [[x, y]], k, with_gradients=True)
    fx = (scaled_monomial_vandermonde(c, h, [[x + eps, y]], k) - scaled_monomial_vandermonde(c, h, [[x - eps, y]], k))
    fy = (scaled_monomial_vandermonde(c, h, [[x, y + eps]], k) - scaled_monomial_vandermonde(c, h, [[x, y - eps]], k))
    np.testing.assert_allclose(Vx, fx / (2 * eps), atol=1e-6)
    np.testing.assert_allclose(Vy, fy / (2 * eps), atol=1e-6)


def test_dimension_counts():
    assert (n_grad(0), n_perp(0)) == (2, 0)
    assert (n_grad(1), n_perp(1)) == (5, 1)
    assert n_grad(-1) == n_perp(-1) == n_poly(-1) == 0


def test_mgs_flags_dependent_columns():
    A = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(RankDeficiencyError):
        mgs(A)


def test_mgs_twice_factorization():
    A = np.random.default_rng(3).standard_normal((30, 8))
    Q, R = mgs_twice(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(8), atol=1e-14)
    np.testing.assert_allclose(Q @ R, A, atol=1e-13)


@pytest.mark.parametrize("scale, value", [(1.0, 1.0), (2.0, 0.5)])
def test_constant_orthonormal_function(scale, value):
    g = element_geometry("square")
    verts = g.vertices * scale
    quad = polygon_quadrature(verts, g.star_center * scale, 2)
    basis = orthonormalize_element_basis(verts.mean(axis=0), g.diameter * scale, quad, 0)
    V = scaled_monomial_vandermonde(verts.mean(axis=0), g.diameter * scale, quad.nodes, 0)
    np.testing.assert_allclose(basis.evaluate(V), value)


def test_scalar_basis_is_hierarchical(element):
    quad = polygon_quadrature(element.vertices, element.star_center, 14)
    high = orthonormalize_element_basis(element.centroid, element.diameter, quad, 6)
    for k in range(6):
        low = orthonormalize_element_basis(element.centroid, element.diameter, quad, k)
        np.testing.assert_allclose(high.truncate(k).coef, low.coef, atol=1e-13 * np.abs(low.coef).max())


def test_interval_basis_closed_forms():
    b = orthonormalize_unit_interval_basis(3)
    s = np.linspace(0, 1, 7)
    T = b.evaluate(s)
    np.testing.assert_allclose(T[:, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(T[:, 1], np.sqrt(3) * (2 * s - 1), atol=1e-13)
    r = gauss_legendre_unit_interval(6)
    Tr = b.evaluate(r.nodes)
    assert abs(r.integrate(Tr[:, 2] * Tr[:, 1])) < 1e-14


def test_vector_basis_sizes():
    g = element_geometry("pentagon")
    for k in range(4):
        vb = build_vector_basis(g.centroid, g.diameter, k, "monomial")
        assert len(vb) == 2 * n_poly(k) == n_grad(k) + n_perp(k)


def test_vector_basis_k0_is_scaled_unit_vectors():
    g = element_geometry("pentagon")
    vb = build_vector_basis(g.centroid, g.diameter, 0, "monomial")
    np.testing.assert_allclose(vb.frame[:, :, 0], np.eye(2) / g.diameter)


def test_orthonormal_vector_basis_square_k2():
    g = element_geometry("square")
    quad = polygon_quadrature(g.vertices, g.star_center, 6)
    vb = build_vector_basis(g.centroid, g.diameter, 2, "orthonormal", quad)
    gx, gy = vb.evaluate(scaled_monomial_vandermonde(g.centroid, g.diameter, quad.nodes, 2))
    w = quad.weights[:, None]
    gram = gx.T @ (w * gx) + gy.T @ (w * gy)
    assert gram.shape == (12, 12)
    np.testing.assert_allclose(gram, np.eye(12), atol=1e-12)


@pytest.mark.parametrize("kind", ["monomial", "orthonormal"])
def test_gradient_block_matches_its_potential(element, kind):
    k = 3
    quad = polygon_quadrature(element.vertices, element.star_center, 2 * k + 2)
    vb = build_vector_basis(element.centroid, element.diameter, k, kind, quad)
    _, Vx, Vy = scaled_monomial_vandermonde(element.centroid, element.diameter, quad.nodes, k + 1, True)
    gx, gy = vb.evaluate(scaled_monomial_vandermonde(element.centroid, element.diameter, quad.nodes, k))
    ng = vb.n_grad
    np.testing.assert_allclose(gx[:, :ng], Vx @ vb.potential.T, atol=1e-10)
    np.testing.assert_allclose(gy[:, :ng], Vy @ vb.potential.T, atol=1e-10)
