"""Gauss rules on [0, 1], triangles and star-shaped polygons."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (n,) on [0, 1] or (n, 2) on a polygon
    weights: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _leggauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_unit_interval(n: int) -> QuadratureRule:
    """``n``-point Gauss-Legendre rule on [0, 1], exact up to degree ``2n - 1``."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = _leggauss01(n)
    return QuadratureRule(x, w, 2 * n - 1)


def edge_rule(k: int) -> QuadratureRule:
    """Edge rule of order 2(k+1) with k+2 nodes."""
    return gauss_legendre_unit_interval(k + 2)


@lru_cache(maxsize=None)
def _reference_triangle(order: int):
    # collapsed (Duffy) rule: x = u (1 - v), y = v, Jacobian (1 - v)
    n = order // 2 + 1
    u, wu = _leggauss01(n)
    t, wt = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (t + 1.0)
    wv = wt / 4.0
    U, V = np.meshgrid(u, v, indexing="ij")
    nodes = np.column_stack([(U * (1 - V)).ravel(), V.ravel()])
    weights = np.outer(wu, wv).ravel()
    return nodes, weights


def triangle_rule(a, b, c, order: int) -> QuadratureRule:
    """Rule exact up to total degree ``order`` on the triangle (a, b, c)."""
    ref, w = _reference_triangle(order)
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    jac = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    nodes = a + ref[:, :1] * (b - a) + ref[:, 1:] * (c - a)
    return QuadratureRule(nodes, w * abs(jac), order)


def polygon_quadrature(vertices: np.ndarray, star_center, order: int) -> QuadratureRule:
    """Fan-triangulate a star-shaped polygon from ``star_center`` and glue triangle rules.

    Raises
    ------
    ValueError
        If a fan triangle has non-positive area, i.e. the point does not see the
        whole boundary.
    """
    vertices = np.asarray(vertices, dtype=float)
    ref, w = _reference_triangle(order)
    s = np.asarray(star_center, dtype=float)
    a = vertices - s
    b = np.roll(vertices, -1, axis=0) - s
    jac = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(jac <= 0):
        raise ValueError("invalid star centre: fan triangle with non-positive area")
    # nodes[t, q] = s + ref_u * a_t + ref_v * b_t
    nodes = s + ref[None, :, :1] * a[:, None, :] + ref[None, :, 1:] * b[:, None, :]
    weights = jac[:, None] * w[None, :]
    return QuadratureRule(nodes.reshape(-1, 2), weights.ravel(), order)
