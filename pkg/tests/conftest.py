import numpy as np
import pytest

from mvem.bases import n_poly
from mvem.mesh import PolygonalMesh, build_cartesian, compute_geometry
from mvem.problems import manufactured

SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
PENTAGON = [(0.0, 0.0), (1.0, 0.0), (1.3, 0.7), (0.5, 1.2), (-0.2, 0.6)]
L_SHAPE = [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)]

ELEMENTS = {"square": SQUARE, "pentagon": PENTAGON, "L": L_SHAPE}


def single_cell(vertices) -> PolygonalMesh:
    return PolygonalMesh.from_cells(vertices, [list(range(len(vertices)))])


@pytest.fixture(params=sorted(ELEMENTS))
def element(request):
    return compute_geometry(single_cell(ELEMENTS[request.param]), 0)


def element_geometry(name):
    return compute_geometry(single_cell(ELEMENTS[name]), 0)


def random_poly_field(ctx, k, rng):
    """Random field in [P_k]^2 expressed in the element's scaled monomials."""
    cx, cy = rng.standard_normal(n_poly(k)), rng.standard_normal(n_poly(k))

    def field(x):
        V = ctx.monomials(x, k)
        return np.column_stack([V @ cx, V @ cy])

    return field


def polynomial_problem(k, D=((2.0, 0.5), (0.5, 1.0)), dirichlet=lambda m: True, domain=(0.0, 1.0, 0.0, 1.0)):
    """Manufactured problem with exact pressure ``p = x^k + x y^(k-1) + 1`` (degree k)."""

    def p(x):
        x = np.atleast_2d(x)
        return x[:, 0] ** k + x[:, 0] * x[:, 1] ** max(k - 1, 0) * (k >= 1) + 1.0

    def grad(x):
        x = np.atleast_2d(x)
        gx = k * x[:, 0] ** max(k - 1, 0) * (k >= 1) + x[:, 1] ** max(k - 1, 0) * (k >= 1)
        gy = (k - 1) * x[:, 0] * x[:, 1] ** max(k - 2, 0) * (k >= 2)
        return np.column_stack([gx, gy])

    def hess(x):
        x = np.atleast_2d(x)
        H = np.zeros((len(x), 2, 2))
        if k >= 2:
            H[:, 0, 0] = k * (k - 1) * x[:, 0] ** (k - 2)
            H[:, 0, 1] = H[:, 1, 0] = (k - 1) * x[:, 1] ** (k - 2)
        if k >= 3:
            H[:, 1, 1] = (k - 1) * (k - 2) * x[:, 0] * x[:, 1] ** (k - 3)
        return H

    return manufactured(f"poly{k}", domain, np.asarray(D), p, grad, hess, dirichlet)


@pytest.fixture
def unit_square_mesh():
    return build_cartesian(1, 1)
