"""Scaled monomials, L2-orthonormal scalar bases and the G-grad / G-perp vector bases.

Polynomials of degree ``k`` are stored as coefficient vectors over the scaled
monomials ``m_a = ((x - x_E) / h_E) ** a`` ordered by total degree and, inside a
degree, by decreasing power of x. Vector polynomials of degree ``k`` are stored
as arrays of shape ``(..., 2, n_k)`` holding the coefficients of their x and y
components.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .quadrature import QuadratureRule, gauss_legendre_unit_interval


class RankDeficiencyError(np.linalg.LinAlgError):
    """A Gram-Schmidt step met a (numerically) dependent column."""


def n_poly(k: int) -> int:
    """Dimension of P_k in two variables (0 for negative ``k``)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def n_grad(k: int) -> int:
    return n_poly(k) + k + 1 if k >= 0 else 0


def n_perp(k: int) -> int:
    return n_poly(k) - k - 1 if k >= 0 else 0


@lru_cache(maxsize=None)
def exponents(k: int) -> np.ndarray:
    """Exponent pairs in basis order: (0,0), (1,0), (0,1), (2,0), (1,1), ..."""
    out = np.array([(d - j, j) for d in range(k + 1) for j in range(d + 1)], dtype=int)
    out.setflags(write=False)
    return out.reshape(-1, 2)


def monomial_index(a: int, b: int) -> int:
    d = a + b
    return n_poly(d - 1) + b


def scaled_monomial_vandermonde(centroid, diameter, points, k, with_gradients=False):
    """Values (and optionally gradients) of the scaled monomials of degree <= k.

    Returns ``V`` of shape ``(n_points, n_k)``; with gradients also ``(Vx, Vy)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi = (pts[:, 0] - centroid[0]) / diameter
    eta = (pts[:, 1] - centroid[1]) / diameter
    exps = exponents(k)
    xp = xi[:, None] ** np.arange(k + 1)[None, :]
    yp = eta[:, None] ** np.arange(k + 1)[None, :]
    V = xp[:, exps[:, 0]] * yp[:, exps[:, 1]]
    if not with_gradients:
        return V
    ax, ay = exps[:, 0], exps[:, 1]
    Vx = np.where(ax > 0, ax * xp[:, np.maximum(ax - 1, 0)] * yp[:, ay], 0.0) / diameter
    Vy = np.where(ay > 0, ay * xp[:, ax] * yp[:, np.maximum(ay - 1, 0)], 0.0) / diameter
    return V, Vx, Vy


@lru_cache(maxsize=None)
def _derivative_maps(k: int):
    # d/dxi and d/deta as (n_k, n_{k-1}) matrices on coefficient rows
    exps = exponents(k)
    dx = np.zeros((n_poly(k), n_poly(k - 1)))
    dy = np.zeros_like(dx)
    for i, (a, b) in enumerate(exps):
        if a > 0:
            dx[i, monomial_index(a - 1, b)] = a
        if b > 0:
            dy[i, monomial_index(a, b - 1)] = b
    return dx, dy


def derivative_matrices(k: int, diameter: float):
    """Matrices mapping a degree-k coefficient row to the rows of its x and y derivatives."""
    dx, dy = _derivative_maps(k)
    return dx / diameter, dy / diameter


@lru_cache(maxsize=None)
def _shift_maps(k: int):
    # multiplication by xi and by eta: (n_{k-1}, n_k)
    sx = np.zeros((n_poly(k - 1), n_poly(k)))
    sy = np.zeros_like(sx)
    for i, (a, b) in enumerate(exponents(k - 1) if k >= 1 else []):
        sx[i, monomial_index(a + 1, b)] = 1.0
        sy[i, monomial_index(a, b + 1)] = 1.0
    return sx, sy


def mgs(A: np.ndarray, rtol: float = 1e-14):
    """Modified Gram-Schmidt QR of the columns of ``A``.

    Raises :class:`RankDeficiencyError` when a column collapses below
    ``rtol`` times its original norm.
    """
    Q = np.array(A, dtype=float, copy=True)
    n = Q.shape[1]
    R = np.zeros((n, n))
    norms0 = np.linalg.norm(Q, axis=0)
    for j in range(n):
        r = np.linalg.norm(Q[:, j])
        if not r > rtol * norms0[j]:
            raise RankDeficiencyError(
                f"column {j} is numerically dependent (relative norm {r / max(norms0[j], 1e-300):.2e})"
            )
        R[j, j] = r
        Q[:, j] /= r
        if j + 1 < n:
            R[j, j + 1 :] = Q[:, j] @ Q[:, j + 1 :]
            Q[:, j + 1 :] -= np.outer(Q[:, j], R[j, j + 1 :])
    return Q, R


def mgs_twice(A: np.ndarray):
    """MGS followed by a reorthogonalization pass; returns ``Q`` and ``R2 @ R1``."""
    Q1, R1 = mgs(A)
    Q2, R2 = mgs(Q1)
    return Q2, R2 @ R1


@dataclass(frozen=True)
class ScalarBasis2D:
    degree: int
    kind: str  # "monomial" or "orthonormal"
    coef: np.ndarray  # (n_k, n_k), rows over scaled monomials, lower triangular

    def truncate(self, k: int) -> "ScalarBasis2D":
        n = n_poly(k)
        return ScalarBasis2D(k, self.kind, self.coef[:n, :n])

    def evaluate(self, V: np.ndarray) -> np.ndarray:
        """Basis values from a monomial Vandermonde of at least this degree."""
        n = n_poly(self.degree)
        return V[:, :n] @ self.coef.T


def monomial_basis(k: int) -> ScalarBasis2D:
    return ScalarBasis2D(k, "monomial", np.eye(n_poly(k)))


def orthonormalize_element_basis(centroid, diameter, quad: QuadratureRule, k: int) -> ScalarBasis2D:
    """L2(E)-orthonormal basis of P_k(E) from two MGS passes on the weighted Vandermonde.

    The coefficient matrix is ``(R2 R1)^{-T}`` so that the basis is hierarchical:
    truncating a degree-k basis gives the basis of any lower degree built
    with the same quadrature.
    """
    V = scaled_monomial_vandermonde(centroid, diameter, quad.nodes, k)
    _, R = mgs_twice(np.sqrt(quad.weights)[:, None] * V)
    L = sla.solve_triangular(R, np.eye(len(R)), lower=False).T
    return ScalarBasis2D(k, "orthonormal", L)


@dataclass(frozen=True)
class ScalarBasis1D:
    degree: int
    coef: np.ndarray  # (degree+1, degree+1): t_j(s) = sum_i coef[j, i] (2s - 1)**i

    def evaluate(self, s) -> np.ndarray:
        x = 2.0 * np.asarray(s, dtype=float) - 1.0
        return (x[:, None] ** np.arange(self.degree + 1)[None, :]) @ self.coef.T


@lru_cache(maxsize=None)
def orthonormalize_unit_interval_basis(k: int) -> ScalarBasis1D:
    """L2([0,1])-orthonormal basis {t_1, ..., t_{k+2}} of P_{k+1}([0, 1]).

    Built once per degree from the (k+2)-point Gauss rule: the Vandermonde of
    the midpoint-scaled monomials ``(2s - 1)**i`` is factored by MGS, the weighted Q factor is factored again and
    ``coef = (R2 R1)^{-T}``.
    """
    rule = gauss_legendre_unit_interval(k + 2)
    V = (2.0 * rule.nodes[:, None] - 1.0) ** np.arange(k + 2)[None, :]
    Q1, R1 = mgs(V)
    _, R2 = mgs(np.sqrt(rule.weights)[:, None] * Q1)
    L = sla.solve_triangular(R2 @ R1, np.eye(k + 2), lower=False).T
    L.setflags(write=False)
    return ScalarBasis1D(k + 1, L)


@dataclass(frozen=True)
class VectorBasis:
    """Basis of [P_k(E)]^2 split into a gradient block and a complement block.

    ``frame`` holds component coefficients ``(n_grad + n_perp, 2, n_k)``.
    ``potential`` holds, for each gradient-block field, the degree-(k+1)
    coefficients of a scalar whose gradient it is.
    """

    degree: int
    kind: str
    frame: np.ndarray
    potential: np.ndarray

    @property
    def n_grad(self) -> int:
        return n_grad(self.degree)

    @property
    def n_perp(self) -> int:
        return n_perp(self.degree)

    def __len__(self) -> int:
        return self.frame.shape[0]

    def evaluate(self, V: np.ndarray):
        """x and y components at the points of a monomial Vandermonde, each ``(n_pts, n_vec)``."""
        n = n_poly(self.degree)
        return V[:, :n] @ self.frame[:, 0, :].T, V[:, :n] @ self.frame[:, 1, :].T


def _monomial_generators(k: int, diameter: float):
    dx, dy = derivative_matrices(k + 1, diameter)
    grad = np.stack([dx[1:], dy[1:]], axis=1)  # (n_grad, 2, n_k)
    sx, sy = _shift_maps(k)
    # m_a * (eta, -xi) for m_a of degree <= k - 1
    perp = np.stack([sy, -sx], axis=1)
    return grad, perp


def build_vector_basis(centroid, diameter, k: int, kind: str = "monomial", quad: QuadratureRule | None = None,
                       scalar: ScalarBasis2D | None = None) -> VectorBasis:
    """Vector basis of [P_k(E)]^2.

    ``kind="monomial"`` uses the gradients of the scaled monomials of degree
    k+1 and the fields ``m_a (eta, -xi)`` with ``deg m_a <= k-1``.
    ``kind="orthonormal"`` orthonormalizes the gradients of the orthonormal
    degree-(k+1) basis, then the complement generators against them, with two
    MGS passes; both need ``quad`` (and accept a prebuilt ``scalar`` basis of
    degree k+1).
    """
    grad, perp = _monomial_generators(k, diameter)
    ng = n_grad(k)
    if kind == "monomial":
        potential = np.zeros((ng, n_poly(k + 1)))
        potential[:, 1:] = np.eye(ng)
        return VectorBasis(k, kind, np.concatenate([grad, perp]), potential)
    if kind != "orthonormal":
        raise ValueError(f"unknown vector basis kind {kind!r}")
    if quad is None:
        raise ValueError("orthonormal vector basis needs a quadrature rule")
    if scalar is None:
        scalar = orthonormalize_element_basis(centroid, diameter, quad, k + 1)
    Lq = scalar.coef[1:, :]  # q_2 .. q_{n_{k+1}}
    grad_q = np.einsum("ag,gcm->acm", Lq, grad_full(k, diameter))
    gens = np.concatenate([grad_q, perp])
    V = scaled_monomial_vandermonde(centroid, diameter, quad.nodes, k)
    sw = np.sqrt(quad.weights)[:, None]
    A = np.concatenate([sw * (V @ gens[:, 0, :].T), sw * (V @ gens[:, 1, :].T)])
    _, R = mgs_twice(A)
    T = sla.solve_triangular(R, np.eye(len(R)), lower=False)
    frame = np.einsum("ba,bcm->acm", T, gens)
    potential = T[:ng, :ng].T @ Lq
    return VectorBasis(k, kind, frame, potential)


def grad_full(k: int, diameter: float) -> np.ndarray:
    """Gradients of all degree-(k+1) scaled monomials, ``(n_{k+1}, 2, n_k)``."""
    dx, dy = derivative_matrices(k + 1, diameter)
    return np.stack([dx, dy], axis=1)
