"""Global DOF numbering, saddle-point assembly, direct solve and conditioning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .bases import n_poly
from .local import (
    DofLayout,
    DofVariant,
    edge_load,
    element_context,
    interpolate_normal_flux,
    local_operators,
    parse_stabilization,
)
from .mesh import BoundaryLabel, PolygonalMesh, compute_geometry

logger = logging.getLogger(__name__)

MAX_DENSE_ROWS = 20_000


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GlobalDofMap:
    """Velocity DOFs are numbered edge by edge, then element-internal; pressures per element.

    ``cell_dofs[c]`` maps local velocity DOFs to the full velocity numbering
    (free and constrained) and ``cell_signs[c]`` holds the local-to-global sign.
    """

    k: int
    variant: DofVariant
    n_velocity: int
    free: np.ndarray  # bool mask over the full velocity numbering
    cell_dofs: tuple
    cell_signs: tuple
    cell_pressure: tuple
    n_pressure: int

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def n_constrained(self) -> int:
        return self.n_velocity - self.n_free

    @property
    def size(self) -> int:
        return self.n_free + self.n_pressure

    def free_index(self) -> np.ndarray:
        """Reduced row of every full velocity DOF (-1 when constrained)."""
        out = np.full(self.n_velocity, -1)
        out[self.free] = np.arange(self.n_free)
        return out


def build_global_dof_map(mesh: PolygonalMesh, k: int, variant) -> GlobalDofMap:
    variant = DofVariant.parse(variant)
    per_edge = k + 1
    n_edge_dofs = mesh.n_edges * per_edge
    free = np.ones(n_edge_dofs, dtype=bool)
    for e in np.flatnonzero(mesh.edge_labels == BoundaryLabel.NEUMANN):
        free[e * per_edge : (e + 1) * per_edge] = False
    cell_dofs, cell_signs, cell_pressure = [], [], []
    offset = n_edge_dofs
    nk = n_poly(k)
    for c in range(mesh.n_cells):
        edges = mesh.cell_edges[c]
        layout = DofLayout(k, len(edges), variant, mesh.cell_signs[c])
        bdofs = (edges[:, None] * per_edge + np.arange(per_edge)[None, :]).ravel()
        idofs = offset + np.arange(layout.n_internal)
        offset += layout.n_internal
        cell_dofs.append(np.concatenate([bdofs, idofs]).astype(int))
        cell_signs.append(layout.dof_signs())
        cell_pressure.append(c * nk + np.arange(nk))
    free = np.concatenate([free, np.ones(offset - n_edge_dofs, dtype=bool)])
    return GlobalDofMap(k, variant, offset, free, tuple(cell_dofs), tuple(cell_signs),
                        tuple(cell_pressure), mesh.n_cells * nk)


@dataclass
class GlobalSystem:
    K: sps.csr_matrix
    rhs: np.ndarray
    dof_map: GlobalDofMap
    constrained_values: np.ndarray  # full velocity vector, zero on free DOFs
    mesh: PolygonalMesh
    contexts: list
    operators: list
    pressure_loads: list  # per element: int_E f p_a
    stabilization: object = None

    @property
    def k(self) -> int:
        return self.dof_map.k

    @property
    def variant(self) -> DofVariant:
        return self.dof_map.variant


def assemble_global(mesh: PolygonalMesh, problem, k: int, variant, stabilization) -> GlobalSystem:
    """Assemble the reduced saddle-point system on ``mesh`` for ``problem``.

    Boundary edges are labeled from ``problem.is_dirichlet``; Neumann DOFs are
    fixed from the normal flux data and eliminated from the unknowns.
    """
    variant = DofVariant.parse(variant)
    stabilization = parse_stabilization(stabilization)
    mesh = problem.label_mesh(mesh)
    dmap = build_global_dof_map(mesh, k, variant)
    margin = 2 if problem.variable_coefficients else 0

    rhs_full = np.zeros(dmap.n_velocity)
    fixed = np.zeros(dmap.n_velocity)
    rows, cols, vals = [], [], []
    wrows, wcols, wvals = [], [], []
    contexts, operators, loads = [], [], []
    for c in range(mesh.n_cells):
        geom = compute_geometry(mesh, c)
        ctx = element_context(geom, k, variant, quad_margin=margin)
        ops = local_operators(ctx, problem.Dinv, stabilization)
        dofs, signs = dmap.cell_dofs[c], dmap.cell_signs[c]
        A = signs[:, None] * (ops.A_C + ops.A_S) * signs[None, :]
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(A.ravel())
        pdofs = dmap.cell_pressure[c]
        wrows.append(np.repeat(pdofs, len(dofs)))
        wcols.append(np.tile(dofs, len(pdofs)))
        wvals.append((ops.W * signs[None, :]).ravel())

        layout = ctx.layout
        for i, e in enumerate(mesh.cell_edges[c]):
            label = mesh.edge_labels[e]
            sl = layout.edge_slice(i)
            if label == BoundaryLabel.DIRICHLET:
                rhs_full[dofs[sl]] -= signs[sl] * edge_load(problem.g_D, ctx, i)
            elif label == BoundaryLabel.NEUMANN:
                n = geom.normals[i]
                fixed[dofs[sl]] = signs[sl] * interpolate_normal_flux(lambda x, n=n: problem.g_N(x, n), ctx, i)

        fq = ctx.fine_quad
        loads.append(ctx.pressure_at(fq.nodes).T @ (fq.weights * problem.f(fq.nodes)))
        contexts.append(ctx)
        operators.append(ops)

    nv = dmap.n_velocity
    A = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv)).tocsr()
    W = sps.coo_matrix((np.concatenate(wvals), (np.concatenate(wrows), np.concatenate(wcols))),
                       shape=(dmap.n_pressure, nv)).tocsr()
    free = dmap.free
    A_ff = A[free][:, free]
    W_f = W[:, free]
    rhs_v = rhs_full[free] - A[free][:, ~free] @ fixed[~free]
    rhs_p = np.concatenate(loads) - W[:, ~free] @ fixed[~free]
    K = sps.bmat([[A_ff, -W_f.T], [W_f, None]], format="csr")
    rhs = np.concatenate([rhs_v, rhs_p])
    return GlobalSystem(K, rhs, dmap, fixed, mesh, contexts, operators, loads, stabilization)


@dataclass
class Solution:
    velocity: np.ndarray  # full velocity DOF vector (free and constrained)
    pressure: list  # per element coefficient vectors in the pressure basis
    projected: list  # per element vector-basis coefficients of the projected velocity
    residual: float
    warnings: list = field(default_factory=list)


def solve_direct(system: GlobalSystem, residual_tol: float = 1e-10, refine_steps: int = 2) -> Solution:
    """Sparse LU solve with iterative refinement; a residual above ``residual_tol`` is attached as a warning."""
    K = system.K.tocsc()
    if K.shape[0] == 0:
        x = np.zeros(0)
    else:
        try:
            lu = spla.splu(K)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular global matrix: {exc}") from exc
        x = lu.solve(system.rhs)
        # a couple of refinement sweeps recover digits lost to ill-conditioned bases
        for _ in range(refine_steps):
            r = system.rhs - system.K @ x
            if not np.all(np.isfinite(r)):
                break
            x = x + lu.solve(r)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("direct solve produced non-finite values")
    bnorm = np.linalg.norm(system.rhs)
    res = np.linalg.norm(system.K @ x - system.rhs)
    res = res / bnorm if bnorm > 0 else res
    warnings = []
    if res > residual_tol:
        msg = f"relative residual {res:.2e} exceeds {residual_tol:.0e}"
        logger.warning(msg)
        warnings.append(msg)
    dmap = system.dof_map
    vel = system.constrained_values.copy()
    vel[dmap.free] = x[: dmap.n_free]
    p = x[dmap.n_free :]
    sol = Solution(vel, [p[idx] for idx in dmap.cell_pressure], [], float(res), warnings)
    sol.projected = project_solution(sol, system)
    return sol


def local_velocity(solution: Solution, system: GlobalSystem, c: int) -> np.ndarray:
    dmap = system.dof_map
    return dmap.cell_signs[c] * solution.velocity[dmap.cell_dofs[c]]


def project_solution(solution: Solution, system: GlobalSystem) -> list:
    """Vector-basis coefficients of the projected velocity on every element."""
    return [ops.Pi @ local_velocity(solution, system, c) for c, ops in enumerate(system.operators)]


def divergence_defect(solution: Solution, system: GlobalSystem) -> float:
    """Relative L2 gap between the reconstructed divergence of u_h and the P_k projection of f."""
    num, ref, scale = 0.0, 0.0, 0.0
    for c, (ctx, ops) in enumerate(zip(system.contexts, system.operators)):
        u = local_velocity(solution, system, c)
        Mp = ctx.pressure_mass
        wu = ops.W @ u
        gap = wu - system.pressure_loads[c]
        # coefficient solves with the pressure mass give squared L2(E) norms
        num += gap @ np.linalg.solve(Mp, gap)
        ref += system.pressure_loads[c] @ np.linalg.solve(Mp, system.pressure_loads[c])
        aw = np.abs(ops.W) @ np.abs(u)
        scale += aw @ np.linalg.solve(Mp, aw) if not ctx.orthonormal else aw @ aw
    denom = max(np.sqrt(ref), np.sqrt(abs(scale)), 1e-300)
    return float(np.sqrt(max(num, 0.0)) / denom)


def condition_number(system_or_matrix, max_rows: int = MAX_DENSE_ROWS) -> float:
    """2-norm condition number from a full SVD of the (reduced) global matrix."""
    K = system_or_matrix.K if isinstance(system_or_matrix, GlobalSystem) else system_or_matrix
    n = K.shape[0]
    if n > max_rows:
        raise ValueError(f"matrix with {n} rows exceeds the dense SVD guard of {max_rows}")
    dense = K.toarray() if sps.issparse(K) else np.asarray(K, dtype=float)
    s = np.linalg.svd(dense, compute_uv=False)
    if s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])
