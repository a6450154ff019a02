"""Element-level mixed VEM operators.

Every virtual function is handled through its degrees of freedom only. The
boundary DOFs of an element are ordered edge by edge following the cell loop;
on each edge they follow the global edge parameterization and are taken with
respect to the cell's outward normal. The internal DOFs follow: first the
moments against the gradient block of degree k-1, then against the complement
block of degree k.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .bases import (
    ScalarBasis1D,
    ScalarBasis2D,
    VectorBasis,
    build_vector_basis,
    monomial_basis,
    n_grad,
    n_perp,
    n_poly,
    orthonormalize_element_basis,
    orthonormalize_unit_interval_basis,
    scaled_monomial_vandermonde,
)
from .mesh import ElementGeometry
from .quadrature import QuadratureRule, edge_rule, gauss_legendre_unit_interval, polygon_quadrature


class SingularGramError(np.linalg.LinAlgError):
    pass


class DofVariant(enum.Enum):
    """The four combinations of boundary (a: point values, b: moments) and internal DOFs."""

    MON_A = ("a", "monomial")
    MON_B = ("b", "monomial")
    ORTHO_A = ("a", "orthonormal")
    ORTHO_B = ("b", "orthonormal")

    @property
    def boundary(self) -> str:
        return self.value[0]

    @property
    def internal(self) -> str:
        return self.value[1]

    @property
    def label(self) -> str:
        return f"{'Mon' if self.internal == 'monomial' else 'Ortho'}({self.boundary})"

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text) -> "DofVariant":
        if isinstance(text, cls):
            return text
        m = re.fullmatch(r"\s*(mon|ortho)\s*[(_ ]?\s*([ab])\s*\)?\s*", str(text), re.IGNORECASE)
        if not m:
            raise ValueError(f"unknown DOF variant {text!r}; expected Mon(a), Mon(b), Ortho(a) or Ortho(b)")
        internal = "monomial" if m.group(1).lower() == "mon" else "orthonormal"
        return cls((m.group(2).lower(), internal))


ALL_VARIANTS = (DofVariant.MON_A, DofVariant.MON_B, DofVariant.ORTHO_A, DofVariant.ORTHO_B)


@dataclass(frozen=True)
class DofiDofi:
    constant: float = 1.0

    @property
    def label(self) -> str:
        return f"dofi-dofi({self.constant:g})"


@dataclass(frozen=True)
class DRecipe:
    constant: float = 1.0

    @property
    def label(self) -> str:
        return f"d-recipe({self.constant:g})"


@dataclass(frozen=True)
class EdgeNormalDRecipe:
    @property
    def label(self) -> str:
        return "edge-normal-d-recipe"


_STAB_RE = re.compile(r"\s*([a-z\-_ ]+?)\s*(?:\(\s*([^)]*)\s*\))?\s*$", re.IGNORECASE)


def parse_stabilization(text):
    """Parse ``dofi-dofi(C)``, ``d-recipe(C)`` or ``edge-normal-d-recipe``."""
    if isinstance(text, (DofiDofi, DRecipe, EdgeNormalDRecipe)):
        return text
    m = _STAB_RE.fullmatch(str(text))
    if not m:
        raise ValueError(f"cannot parse stabilization {text!r}")
    name = m.group(1).lower().replace("_", "-").replace(" ", "-")
    arg = m.group(2)
    const = float(arg) if arg not in (None, "") else 1.0
    if name in ("dofi-dofi", "dofidofi"):
        return DofiDofi(const)
    if name in ("d-recipe", "drecipe"):
        return DRecipe(const)
    if name in ("edge-normal-d-recipe", "edge-normal", "edgenormal"):
        if arg not in (None, ""):
            raise ValueError("edge-normal-d-recipe takes no constant")
        return EdgeNormalDRecipe()
    raise ValueError(f"unknown stabilization {text!r}")


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_edges: int
    variant: DofVariant
    signs: np.ndarray

    @property
    def per_edge(self) -> int:
        return self.k + 1

    @property
    def n_boundary(self) -> int:
        return self.n_edges * self.per_edge

    @property
    def n_internal_grad(self) -> int:
        return n_grad(self.k - 1)

    @property
    def n_internal_perp(self) -> int:
        return n_perp(self.k)

    @property
    def n_internal(self) -> int:
        return self.n_internal_grad + self.n_internal_perp

    @property
    def n_dof(self) -> int:
        return self.n_boundary + self.n_internal

    def edge_slice(self, i: int) -> slice:
        return slice(i * self.per_edge, (i + 1) * self.per_edge)

    @property
    def grad_slice(self) -> slice:
        return slice(self.n_boundary, self.n_boundary + self.n_internal_grad)

    @property
    def perp_slice(self) -> slice:
        return slice(self.n_boundary + self.n_internal_grad, self.n_dof)

    @property
    def internal_basis_index(self) -> np.ndarray:
        """Index in the degree-k vector basis of the field tested by each internal DOF."""
        return np.concatenate(
            [np.arange(self.n_internal_grad), n_grad(self.k) + np.arange(self.n_internal_perp)]
        ).astype(int)

    def dof_signs(self) -> np.ndarray:
        """Local-to-global sign for every DOF (+1 for internal DOFs)."""
        return np.concatenate([np.repeat(self.signs, self.per_edge), np.ones(self.n_internal, dtype=int)])


def build_dof_layout(geom: ElementGeometry, k: int, variant) -> DofLayout:
    if k < 0:
        raise ValueError("degree must be non-negative")
    return DofLayout(k, geom.n_edges, DofVariant.parse(variant), np.asarray(geom.signs))


def _lagrange_at_gauss(k: int, s: np.ndarray) -> np.ndarray:
    """Lagrange polynomials on the (k+1) Gauss nodes of [0, 1] evaluated at ``s``: (len(s), k+1)."""
    nodes = gauss_legendre_unit_interval(k + 1).nodes
    leg = np.polynomial.legendre.legvander
    return leg(2 * s - 1, k) @ np.linalg.inv(leg(2 * nodes - 1, k))


@dataclass
class ElementContext:
    """Geometry, quadrature and polynomial bases of one element for a given degree and variant."""

    geom: ElementGeometry
    k: int
    variant: DofVariant
    layout: DofLayout
    quad: QuadratureRule
    fine_quad: QuadratureRule
    V: np.ndarray  # degree-(k+1) scaled monomials at quad nodes
    pressure: ScalarBasis2D
    vector: VectorBasis
    t1d: ScalarBasis1D
    edge_functionals: list  # per edge: (n_{k+1}, k+1), int_e phi_i.n_e m_beta
    gram: np.ndarray
    pressure_mass: np.ndarray
    _vec_at_quad: tuple = field(default=None, repr=False)

    @property
    def orthonormal(self) -> bool:
        return self.variant.internal == "orthonormal"

    def monomials(self, points, degree=None):
        deg = self.k + 1 if degree is None else degree
        return scaled_monomial_vandermonde(self.geom.centroid, self.geom.diameter, points, deg)

    def vector_at(self, points):
        return self.vector.evaluate(self.monomials(points, self.k))

    def pressure_at(self, points):
        return self.pressure.evaluate(self.monomials(points, self.k))

    def vector_at_quad(self):
        if self._vec_at_quad is None:
            self._vec_at_quad = self.vector.evaluate(self.V)
        return self._vec_at_quad


def element_context(geom: ElementGeometry, k: int, variant, quad_margin: int = 0) -> ElementContext:
    """Quadrature and bases for element ``geom``.

    The element rule has order ``2k + 2 + quad_margin``; the rule used for
    load moments and errors has order ``2k + 4 + quad_margin``.
    """
    variant = DofVariant.parse(variant)
    layout = build_dof_layout(geom, k, variant)
    quad = polygon_quadrature(geom.vertices, geom.star_center, 2 * k + 2 + quad_margin)
    fine = polygon_quadrature(geom.vertices, geom.star_center, 2 * k + 4 + quad_margin)
    xc, h = geom.centroid, geom.diameter
    V = scaled_monomial_vandermonde(xc, h, quad.nodes, k + 1)
    nk = n_poly(k)
    if variant.internal == "orthonormal":
        scalar = orthonormalize_element_basis(xc, h, quad, k + 1)
        pressure = scalar.truncate(k)
        vector = build_vector_basis(xc, h, k, "orthonormal", quad, scalar)
        gram = np.eye(len(vector))
        pmass = np.eye(nk)
    else:
        pressure = monomial_basis(k)
        vector = build_vector_basis(xc, h, k, "monomial")
        gx, gy = vector.evaluate(V)
        w = quad.weights[:, None]
        gram = gx.T @ (w * gx) + gy.T @ (w * gy)
        Vk = V[:, :nk]
        pmass = Vk.T @ (w * Vk)
    t1d = orthonormalize_unit_interval_basis(k)
    ctx = ElementContext(
        geom=geom, k=k, variant=variant, layout=layout, quad=quad, fine_quad=fine, V=V,
        pressure=pressure, vector=vector, t1d=t1d, edge_functionals=[], gram=gram, pressure_mass=pmass,
    )
    ctx.edge_functionals = [_edge_functional(ctx, i) for i in range(geom.n_edges)]
    return ctx


def edge_trace_coefficients(geom: ElementGeometry, edge: int, degree: int) -> np.ndarray:
    """Coefficients of the traces of the scaled monomials of degree <= ``degree`` on an edge.

    Row ``b`` holds ``C[b, j] = int_0^1 m_b(F(s)) t_j(s) ds`` for the
    orthonormal basis ``t_1..t_{degree+1}`` of P_degree([0, 1]).
    """
    k = degree - 1
    rule = edge_rule(k)
    t = orthonormalize_unit_interval_basis(k).evaluate(rule.nodes)
    m = scaled_monomial_vandermonde(geom.centroid, geom.diameter, geom.edge_map(edge, rule.nodes), degree)
    return m.T @ (rule.weights[:, None] * t)


def _edge_functional(ctx: ElementContext, i: int) -> np.ndarray:
    # E[b, j] = int_e phi_j . n_e  m_b  for the DOFs phi_j living on edge i
    geom, k = ctx.geom, ctx.k
    if ctx.variant.boundary == "a":
        rule = gauss_legendre_unit_interval(k + 1)
        m = ctx.monomials(geom.edge_map(i, rule.nodes))
        return (m * (geom.edge_lengths[i] * rule.weights)[:, None]).T
    C = edge_trace_coefficients(geom, i, k + 1)
    return C[:, : k + 1]


def _edge_test_functions(ctx: ElementContext, i: int, s: np.ndarray) -> np.ndarray:
    """psi_j(s) with int_e phi_j . n_e g = int_0^1 psi_j(s) g(F(s)) ds, shape (len(s), k+1)."""
    if ctx.variant.boundary == "a":
        return ctx.geom.edge_lengths[i] * _lagrange_at_gauss(ctx.k, s)
    return ctx.t1d.evaluate(s)[:, : ctx.k + 1]


def interpolate_dofs(field: Callable, ctx: ElementContext) -> np.ndarray:
    """Local DOF values of a vector field ``field(points) -> (n, 2)``."""
    geom, k, layout = ctx.geom, ctx.k, ctx.layout
    out = np.zeros(layout.n_dof)
    for i in range(geom.n_edges):
        n = geom.normals[i]
        out[layout.edge_slice(i)] = interpolate_normal_flux(
            lambda x: np.asarray(field(x)) @ n, ctx, i
        )
    if layout.n_internal:
        gx, gy = ctx.vector_at(ctx.quad.nodes)
        idx = layout.internal_basis_index
        v = np.asarray(field(ctx.quad.nodes))
        w = ctx.quad.weights
        out[layout.n_boundary :] = (w * v[:, 0]) @ gx[:, idx] + (w * v[:, 1]) @ gy[:, idx]
        out[layout.n_boundary :] /= geom.area
    return out


def interpolate_normal_flux(flux: Callable, ctx: ElementContext, i: int) -> np.ndarray:
    """DOFs on edge ``i`` of a field whose outward normal component is ``flux(points)``."""
    geom, k = ctx.geom, ctx.k
    if ctx.variant.boundary == "a":
        s = gauss_legendre_unit_interval(k + 1).nodes
        return np.asarray(flux(geom.edge_map(i, s)), dtype=float)
    rule = edge_rule(k)
    t = ctx.t1d.evaluate(rule.nodes)[:, : k + 1]
    vals = np.asarray(flux(geom.edge_map(i, rule.nodes)), dtype=float)
    return geom.edge_lengths[i] * (rule.weights * vals) @ t


def edge_load(g: Callable, ctx: ElementContext, i: int) -> np.ndarray:
    """``int_e g (phi_j . n_e)`` for the DOFs of edge ``i`` (order 2(k+1) edge rule)."""
    rule = edge_rule(ctx.k)
    psi = _edge_test_functions(ctx, i, rule.nodes)
    vals = np.asarray(g(ctx.geom.edge_map(i, rule.nodes)), dtype=float)
    return (rule.weights * vals) @ psi


def _grad_pressure_in_internal_basis(ctx: ElementContext) -> np.ndarray:
    # c with grad p_a = sum_b c[a, b] g_b over the first n_grad(k-1) gradient fields
    k, nk = ctx.k, n_poly(ctx.k)
    ng = n_grad(k - 1)
    if ng == 0:
        return np.zeros((nk, 0))
    P = ctx.vector.potential[:ng, 1:nk]
    return sla.solve(P.T, ctx.pressure.coef[:, 1:nk].T).T


def divergence_matrix(ctx: ElementContext) -> np.ndarray:
    """``W[a, i] = (p_a, div phi_i)_E`` from the DOFs only."""
    layout = ctx.layout
    nk = n_poly(ctx.k)
    W = np.zeros((nk, layout.n_dof))
    Lp = ctx.pressure.coef
    for i, E in enumerate(ctx.edge_functionals):
        W[:, layout.edge_slice(i)] = Lp @ E[:nk, :]
    c = _grad_pressure_in_internal_basis(ctx)
    W[:, layout.grad_slice] = -ctx.geom.area * c
    return W


def vector_basis_dofs(ctx: ElementContext) -> np.ndarray:
    """DOF values of every vector-basis field: ``(n_dof, n_vec)``."""
    layout, geom = ctx.layout, ctx.geom
    nv = len(ctx.vector)
    D = np.zeros((layout.n_dof, nv))
    for i in range(geom.n_edges):
        n = geom.normals[i]

        def flux(x, n=n):
            gx, gy = ctx.vector_at(x)
            return gx * n[0] + gy * n[1]

        D[layout.edge_slice(i)] = _interpolate_flux_matrix(flux, ctx, i)
    D[layout.n_boundary :] = ctx.gram[layout.internal_basis_index] / geom.area
    return D


def _interpolate_flux_matrix(flux, ctx, i):
    geom, k = ctx.geom, ctx.k
    if ctx.variant.boundary == "a":
        s = gauss_legendre_unit_interval(k + 1).nodes
        return flux(geom.edge_map(i, s))
    rule = edge_rule(k)
    t = ctx.t1d.evaluate(rule.nodes)[:, : k + 1]
    vals = flux(geom.edge_map(i, rule.nodes))
    return geom.edge_lengths[i] * t.T @ (rule.weights[:, None] * vals)


def l2_projector(ctx: ElementContext, W: Optional[np.ndarray] = None):
    """Vector-basis coefficients of the L2 projection of every local basis function.

    Returns ``(Pi, gram_condition)`` with ``Pi`` of shape ``(n_vec, n_dof)``.
    """
    layout, geom, k = ctx.layout, ctx.geom, ctx.k
    if W is None:
        W = divergence_matrix(ctx)
    nk, nk1 = n_poly(k), n_poly(k + 1)
    ng = n_grad(k)
    P = ctx.vector.potential
    w = ctx.quad.weights[:, None]
    # int_E p_a P_b with P_b the potentials of the gradient block
    X = ctx.pressure.coef @ (ctx.V[:, :nk].T @ (w * ctx.V[:, :nk1])) @ P.T
    div = W if ctx.orthonormal else sla.solve(ctx.pressure_mass, W, assume_a="pos")
    B = np.zeros((len(ctx.vector), layout.n_dof))
    B[:ng] = -X.T @ div
    for i, E in enumerate(ctx.edge_functionals):
        B[:ng, layout.edge_slice(i)] += P @ E
    B[ng:, layout.perp_slice] = geom.area * np.eye(layout.n_internal_perp)
    if ctx.orthonormal:
        return B, 1.0
    cond = np.linalg.cond(ctx.gram)
    if not np.isfinite(cond):
        raise SingularGramError(f"vector-basis Gram matrix is singular (condition {cond:.3e})")
    # symmetric diagonal equilibration before the pivoted LU; no regularization
    scale = 1.0 / np.sqrt(np.diag(ctx.gram))
    try:
        lu = sla.lu_factor(scale[:, None] * ctx.gram * scale[None, :], check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularGramError(f"vector-basis Gram factorization failed (condition {cond:.3e})") from exc
    return scale[:, None] * sla.lu_solve(lu, scale[:, None] * B), cond


def weighted_vector_mass(ctx: ElementContext, Dinv: Callable) -> np.ndarray:
    """``M[a, b] = int_E g_a . Dinv g_b`` with ``Dinv`` evaluated at quadrature nodes."""
    gx, gy = ctx.vector_at_quad()
    K = np.asarray(Dinv(ctx.quad.nodes), dtype=float)
    if K.ndim == 2:
        K = np.broadcast_to(K, (len(ctx.quad.nodes), 2, 2))
    det = K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] * K[:, 1, 0]
    if np.any(K[:, 0, 0] <= 0) or np.any(det <= 0) or not np.allclose(K[:, 0, 1], K[:, 1, 0], rtol=1e-10, atol=0):
        raise ValueError("inverse diffusion tensor is not symmetric positive definite at a quadrature node")
    w = ctx.quad.weights
    kx = K[:, 0, 0, None] * gx + K[:, 0, 1, None] * gy
    ky = K[:, 1, 0, None] * gx + K[:, 1, 1, None] * gy
    M = gx.T @ (w[:, None] * kx) + gy.T @ (w[:, None] * ky)
    return 0.5 * (M + M.T)


def consistency_matrix(ctx: ElementContext, Pi: np.ndarray, Dinv: Callable) -> np.ndarray:
    M = weighted_vector_mass(ctx, Dinv)
    A = Pi.T @ M @ Pi
    return 0.5 * (A + A.T)


def stabilization_weights(ctx: ElementContext, stabilization, A_C: np.ndarray, Dinv: Optional[Callable] = None) -> np.ndarray:
    layout, geom = ctx.layout, ctx.geom
    S = np.zeros(layout.n_dof)
    nb = layout.n_boundary
    diag = np.diag(A_C)[:nb]
    if isinstance(stabilization, DofiDofi):
        S[:nb] = stabilization.constant * geom.area
    elif isinstance(stabilization, DRecipe):
        S[:nb] = stabilization.constant * geom.area * np.maximum(1.0, diag)
    elif isinstance(stabilization, EdgeNormalDRecipe):
        if Dinv is None:
            raise ValueError("edge-normal D-recipe needs the inverse diffusion tensor")
        K = np.asarray(Dinv(geom.edge_midpoints()), dtype=float)
        if K.ndim == 2:
            K = np.broadcast_to(K, (geom.n_edges, 2, 2))
        nn = np.einsum("ei,eij,ej->e", geom.normals, K, geom.normals)
        S[:nb] = geom.area * np.maximum(np.repeat(nn, layout.per_edge), diag)
    else:
        raise ValueError(f"unknown stabilization {stabilization!r}")
    return S


def stabilization_matrix(ctx: ElementContext, Pi: np.ndarray, stabilization, A_C: np.ndarray,
                         Dinv: Optional[Callable] = None) -> np.ndarray:
    """``sum_i S_ii dof_i((I - Pi) u) dof_i((I - Pi) v)`` on the local basis."""
    T = np.eye(ctx.layout.n_dof) - vector_basis_dofs(ctx) @ Pi
    S = stabilization_weights(ctx, stabilization, A_C, Dinv)
    A = T.T @ (S[:, None] * T)
    return 0.5 * (A + A.T)


def local_saddle(A_C: np.ndarray, A_S: np.ndarray, W: np.ndarray) -> np.ndarray:
    if A_C.shape != A_S.shape or A_C.shape[0] != A_C.shape[1] or W.shape[1] != A_C.shape[0]:
        raise ValueError(f"dimension mismatch: A_C {A_C.shape}, A_S {A_S.shape}, W {W.shape}")
    n, m = A_C.shape[0], W.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = A_C + A_S
    K[:n, n:] = -W.T
    K[n:, :n] = W
    return K


@dataclass
class LocalOperators:
    Pi: np.ndarray
    A_C: np.ndarray
    A_S: np.ndarray
    W: np.ndarray
    K: np.ndarray
    gram_condition: float


def local_operators(ctx: ElementContext, Dinv: Callable, stabilization) -> LocalOperators:
    stabilization = parse_stabilization(stabilization)
    W = divergence_matrix(ctx)
    Pi, cond = l2_projector(ctx, W)
    A_C = consistency_matrix(ctx, Pi, Dinv)
    A_S = stabilization_matrix(ctx, Pi, stabilization, A_C, Dinv)
    return LocalOperators(Pi, A_C, A_S, W, local_saddle(A_C, A_S, W), cond)
