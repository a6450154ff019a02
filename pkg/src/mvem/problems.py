"""Model problems with closed-form solutions and their stabilization catalogues."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .local import DofiDofi, DRecipe, EdgeNormalDRecipe
from .mesh import PolygonalMesh

_TOL = 1e-10


class SingularFieldError(ValueError):
    """The magnetic field vanishes where the diffusion tensor is requested."""


@dataclass(frozen=True)
class ProblemSpec:
    """Diffusion problem ``div(-D grad p) = f`` with boundary data and optional exact solution.

    Tensor callables take points ``(n, 2)`` and return ``(n, 2, 2)``; scalar
    callables return ``(n,)``; ``g_N(points, normal)`` is the prescribed outward
    normal flux ``u . n``.
    """

    name: str
    domain: tuple
    D: Callable
    Dinv: Callable
    f: Callable
    g_D: Callable
    g_N: Callable
    is_dirichlet: Callable = lambda x: True
    exact_p: Optional[Callable] = None
    exact_u: Optional[Callable] = None
    variable_coefficients: bool = False
    params: dict = field(default_factory=dict)

    def label_mesh(self, mesh: PolygonalMesh) -> PolygonalMesh:
        return mesh.with_boundary_labels(self.is_dirichlet)


def constant_tensor(D) -> tuple:
    D = np.asarray(D, dtype=float)
    Dinv = np.linalg.inv(D)

    def tensor(x):
        return np.broadcast_to(D, (len(np.atleast_2d(x)), 2, 2))

    def inverse(x):
        return np.broadcast_to(Dinv, (len(np.atleast_2d(x)), 2, 2))

    return tensor, inverse


def flux_from_velocity(u: Callable) -> Callable:
    def g_N(x, n):
        return np.asarray(u(x)) @ np.asarray(n)

    return g_N


def manufactured(name, domain, D, p, grad_p, hessian_p, is_dirichlet=lambda x: True, params=None) -> ProblemSpec:
    """Problem with constant tensor ``D`` whose solution is ``p``.

    ``grad_p(x) -> (n, 2)`` and ``hessian_p(x) -> (n, 2, 2)``.
    """
    tensor, inverse = constant_tensor(D)
    Dm = np.asarray(D, dtype=float)

    def u(x):
        return -np.asarray(grad_p(x)) @ Dm.T

    def f(x):
        return -np.einsum("ij,nij->n", Dm, np.asarray(hessian_p(x)))

    return ProblemSpec(name, tuple(domain), tensor, inverse, f, p, flux_from_velocity(u), is_dirichlet,
                       p, u, False, dict(params or {}))


def _on(v, target):
    return abs(v - target) < _TOL


def test1() -> ProblemSpec:
    """Poisson problem on (0,2)^2 with ``p = sin(pi x) sin(pi y)`` and homogeneous Dirichlet data."""
    pi = np.pi

    def p(x):
        x = np.atleast_2d(x)
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad(x):
        x = np.atleast_2d(x)
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi * np.column_stack([cx * sy, sx * cy])

    def hess(x):
        x = np.atleast_2d(x)
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = H[:, 1, 1] = -(pi**2) * sx * sy
        H[:, 0, 1] = H[:, 1, 0] = pi**2 * cx * cy
        return H

    return manufactured("test1", (0.0, 2.0, 0.0, 2.0), np.eye(2), p, grad, hess)


def _nearly_neumann(delta):
    def is_dirichlet(m):
        return (_on(m[0], 1.0) and m[1] >= 1.0 - delta - _TOL) or (_on(m[1], 1.0) and m[0] >= 1.0 - delta - _TOL)

    return is_dirichlet


def test2(epsilon: float = 1.0, bc: str = "dirichlet", level: int = 1) -> ProblemSpec:
    """Anisotropic problem on (0,1)^2 with ``D = diag(1, eps)`` and ``p = exp(-2 pi sqrt(eps) x) sin(2 pi y)``.

    ``bc`` is ``dirichlet``, ``mixed`` (Dirichlet on x=0 and y=0) or
    ``nearly-neumann`` (Dirichlet only on the ``delta`` strip next to the corner
    (1,1), with ``delta = 1 / (5 * 2**(level-1))``).
    """
    if not 1e-6 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [1e-6, 1]")
    a = 2 * np.pi * np.sqrt(epsilon)
    b = 2 * np.pi

    def p(x):
        x = np.atleast_2d(x)
        return np.exp(-a * x[:, 0]) * np.sin(b * x[:, 1])

    def grad(x):
        x = np.atleast_2d(x)
        e = np.exp(-a * x[:, 0])
        return np.column_stack([-a * e * np.sin(b * x[:, 1]), b * e * np.cos(b * x[:, 1])])

    def hess(x):
        x = np.atleast_2d(x)
        e = np.exp(-a * x[:, 0])
        s, c = np.sin(b * x[:, 1]), np.cos(b * x[:, 1])
        H = np.empty((len(x), 2, 2))
        H[:, 0, 0] = a * a * e * s
        H[:, 0, 1] = H[:, 1, 0] = -a * b * e * c
        H[:, 1, 1] = -b * b * e * s
        return H

    if bc == "dirichlet":
        pred = lambda m: True  # noqa: E731
    elif bc == "mixed":
        pred = lambda m: _on(m[0], 0.0) or _on(m[1], 0.0)  # noqa: E731
    elif bc == "nearly-neumann":
        if level < 1:
            raise ValueError("nearly-neumann needs a refinement level >= 1")
        pred = _nearly_neumann(1.0 / (5 * 2 ** (level - 1)))
    else:
        raise ValueError(f"unknown boundary condition mode {bc!r} for test2")
    return manufactured("test2", (0.0, 1.0, 0.0, 1.0), np.diag([1.0, epsilon]), p, grad, hess, pred,
                        {"epsilon": epsilon, "bc": bc, "level": level})


def magnetic_field(x) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.column_stack([
        -np.pi * np.sin(np.pi * x[:, 1]),
        0.2 * np.pi * np.sin(2 * np.pi * (x[:, 0] - 1.5)),
    ])


def field_direction(x) -> np.ndarray:
    B = magnetic_field(x)
    norm = np.hypot(B[:, 0], B[:, 1])
    if np.any(norm < 1e-12):
        raise SingularFieldError("magnetic field vanishes at an evaluation point (O- or X-point)")
    return B / norm[:, None]


def test3(d_par: float = 1.0, bc: str = "dirichlet", d_perp: float = 1.0) -> ProblemSpec:
    """Two magnetic islands on (-1,1)x(-0.5,0.5).

    The tensor is ``d_par b b^T + d_perp b_perp b_perp^T`` with ``b`` the unit
    magnetic field direction; the exact pressure
    ``cos(cos(2 pi (x - 3/2)) / 10 + cos(pi y))`` has gradient orthogonal to
    ``b``, so the velocity is ``-d_perp grad p`` for every ``d_par``.
    """
    pi = np.pi

    def phi_parts(x):
        x = np.atleast_2d(x)
        X = 2 * pi * (x[:, 0] - 1.5)
        Y = pi * x[:, 1]
        phi = 0.1 * np.cos(X) + np.cos(Y)
        gx = -0.2 * pi * np.sin(X)
        gy = -pi * np.sin(Y)
        lap = -0.4 * pi**2 * np.cos(X) - pi**2 * np.cos(Y)
        return phi, gx, gy, lap

    def p(x):
        return np.cos(phi_parts(x)[0])

    def u(x):
        phi, gx, gy, _ = phi_parts(x)
        # grad p = -sin(phi) grad(phi)
        return d_perp * np.sin(phi)[:, None] * np.column_stack([gx, gy])

    def f(x):
        phi, gx, gy, lap = phi_parts(x)
        return d_perp * (np.cos(phi) * (gx * gx + gy * gy) + np.sin(phi) * lap)

    def tensor(x):
        b = field_direction(x)
        bp = np.column_stack([-b[:, 1], b[:, 0]])
        return d_par * np.einsum("ni,nj->nij", b, b) + d_perp * np.einsum("ni,nj->nij", bp, bp)

    def inverse(x):
        b = field_direction(x)
        bp = np.column_stack([-b[:, 1], b[:, 0]])
        return np.einsum("ni,nj->nij", b, b) / d_par + np.einsum("ni,nj->nij", bp, bp) / d_perp

    if bc == "dirichlet":
        pred = lambda m: True  # noqa: E731
    elif bc == "mixed":
        pred = lambda m: not (_on(m[0], -1.0) or _on(m[0], 1.0))  # noqa: E731
    else:
        raise ValueError(f"unknown boundary condition mode {bc!r} for test3")
    return ProblemSpec("test3", (-1.0, 1.0, -0.5, 0.5), tensor, inverse, f, p, flux_from_velocity(u), pred,
                       p, u, True, {"d_par": d_par, "bc": bc})


def builtin_problem(name: str, **params) -> ProblemSpec:
    """``test1``, ``test2`` (epsilon, bc, level) or ``test3`` (d_par, bc)."""
    builders = {"test1": test1, "test2": test2, "test3": test3}
    if name not in builders:
        raise ValueError(f"unknown problem {name!r}")
    return builders[name](**params)


def stabilization_catalog(name: str, **params) -> list:
    if name == "test1":
        return [DofiDofi(1.0)]
    if name == "test2":
        eps = params.get("epsilon", 1.0)
        return [DofiDofi(1.0 / eps), DofiDofi(1.0), DRecipe(1.0)]
    if name == "test3":
        d_par = params.get("d_par", 1.0)
        return [DofiDofi(1.0 / d_par), DRecipe(1.0), EdgeNormalDRecipe()]
    raise ValueError(f"unknown problem {name!r}")
