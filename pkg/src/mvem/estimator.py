"""scikit-learn style front-end: fit on a mesh, predict pressure and velocity at points."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import assemble_global, condition_number, divergence_defect, solve_direct
from .local import DofVariant, parse_stabilization
from .mesh import PolygonalMesh
from .problems import ProblemSpec, builtin_problem
from .study import compute_errors


def _locate(mesh: PolygonalMesh, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Index of a cell containing each point (-1 outside). Ties on shared edges go to the lowest index."""
    owner = np.full(len(points), -1)
    x, y = points[:, 0], points[:, 1]
    for c, loop in enumerate(mesh.cells):
        todo = owner < 0
        if not todo.any():
            break
        xy = mesh.vertices[loop]
        lo, hi = xy.min(axis=0) - tol, xy.max(axis=0) + tol
        cand = np.flatnonzero(todo & (x >= lo[0]) & (x <= hi[0]) & (y >= lo[1]) & (y <= hi[1]))
        if cand.size == 0:
            continue
        px, py = x[cand][:, None], y[cand][:, None]
        a, b = xy, np.roll(xy, -1, axis=0)
        # winding test with an on-edge tolerance
        cross = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (px - a[:, 0])
        seg = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
        t = ((px - a[:, 0]) * (b[:, 0] - a[:, 0]) + (py - a[:, 1]) * (b[:, 1] - a[:, 1])) / seg**2
        on_edge = (np.abs(cross) <= tol * seg) & (t >= -tol) & (t <= 1 + tol)
        up = (a[:, 1] <= py) & (b[:, 1] > py) & (cross > 0)
        down = (a[:, 1] > py) & (b[:, 1] <= py) & (cross < 0)
        winding = up.sum(axis=1) - down.sum(axis=1)
        inside = (winding != 0) | on_edge.any(axis=1)
        owner[cand[inside]] = c
    return owner


class MixedVEM(BaseEstimator, RegressorMixin):
    """Mixed virtual element solver for ``div(-D grad p) = f``.

    Parameters
    ----------
    problem : ProblemSpec or str, optional
        Problem to solve; a string names a built-in benchmark. Can also be
        passed to :meth:`fit`.
    k : int
        Polynomial degree.
    variant : str
        DOF variant label, e.g. ``"Ortho(b)"``.
    stabilization : str or stabilization object
        e.g. ``"dofi-dofi(1)"`` or ``"d-recipe(1)"``.
    compute_condition : bool
        Whether :meth:`fit` stores the 2-norm condition number of the global matrix.

    Attributes
    ----------
    mesh_, system_, solution_ :
        Labeled mesh, assembled system and solution.
    div_defect_ : float
    errors_ : ErrorReport or None
        Relative errors when the problem carries an exact solution.
    condition_number_ : float or None
    """

    def __init__(self, problem=None, k: int = 1, variant: str = "Ortho(b)", stabilization="dofi-dofi(1)",
                 compute_condition: bool = False):
        self.problem = problem
        self.k = k
        self.variant = variant
        self.stabilization = stabilization
        self.compute_condition = compute_condition

    def _resolve_problem(self, problem) -> ProblemSpec:
        problem = self.problem if problem is None else problem
        if problem is None:
            raise ValueError("no problem given")
        return builtin_problem(problem) if isinstance(problem, str) else problem

    def fit(self, X: PolygonalMesh, y=None):
        """Assemble and solve on mesh ``X``; ``y`` optionally overrides the problem."""
        if not isinstance(X, PolygonalMesh):
            raise TypeError(f"expected a PolygonalMesh, got {type(X).__name__}")
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 0):
            raise ValueError(f"k must be a non-negative integer, got {self.k!r}")
        problem = self._resolve_problem(y)
        variant = DofVariant.parse(self.variant)
        stab = parse_stabilization(self.stabilization)
        self.system_ = assemble_global(X, problem, int(self.k), variant, stab)
        self.mesh_ = self.system_.mesh
        self.problem_ = problem
        self.solution_ = solve_direct(self.system_)
        self.div_defect_ = divergence_defect(self.solution_, self.system_)
        self.errors_ = None
        if problem.exact_p is not None and problem.exact_u is not None:
            self.errors_ = compute_errors(self.solution_, self.system_, problem)
        self.condition_number_ = condition_number(self.system_) if self.compute_condition else None
        return self

    def _cells(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"points must have two columns, got {X.shape[1]}")
        cells = _locate(self.mesh_, X)
        if np.any(cells < 0):
            raise ValueError(f"{int(np.sum(cells < 0))} point(s) lie outside the mesh")
        return X, cells

    def predict(self, X) -> np.ndarray:
        """Discrete pressure at the points ``X`` of shape (n, 2)."""
        check_is_fitted(self, "solution_")
        X, cells = self._cells(X)
        out = np.empty(len(X))
        for c in np.unique(cells):
            idx = cells == c
            ctx = self.system_.contexts[c]
            out[idx] = ctx.pressure_at(X[idx]) @ self.solution_.pressure[c]
        return out

    def predict_velocity(self, X) -> np.ndarray:
        """Projected discrete velocity at ``X``, shape (n, 2)."""
        check_is_fitted(self, "solution_")
        X, cells = self._cells(X)
        out = np.empty((len(X), 2))
        for c in np.unique(cells):
            idx = cells == c
            gx, gy = self.system_.contexts[c].vector_at(X[idx])
            coef = self.solution_.projected[c]
            out[idx] = np.column_stack([gx @ coef, gy @ coef])
        return out
