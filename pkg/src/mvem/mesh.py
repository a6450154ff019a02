"""Polygonal meshes: construction, geometry, validation and a plain-text format."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull


class MeshError(ValueError):
    """Raised when a mesh cannot be built or a cell is degenerate."""


class BoundaryLabel(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


_LABEL_NAMES = {"interior": 0, "dirichlet": 1, "neumann": 2}


@dataclass(frozen=True)
class PolygonalMesh:
    """Immutable polygonal tessellation.

    Edges carry a global orientation ``edges[e] = (v1, v2)`` with ``v1 < v2``;
    the global edge normal is the tangent rotated clockwise. ``cell_signs[c][i]``
    is +1 when the outward normal of cell ``c`` on its ``i``-th local edge
    matches the global normal.
    """

    vertices: np.ndarray
    cells: tuple
    edges: np.ndarray
    edge_labels: np.ndarray
    cell_edges: tuple
    cell_signs: tuple
    star_centers: np.ndarray
    domain: Optional[tuple] = None
    name: str = "mesh"
    _edge_cells: list = field(default=None, repr=False, compare=False)

    @classmethod
    def from_cells(cls, vertices, cells, star_centers=None, domain=None, name="mesh"):
        vertices = np.asarray(vertices, dtype=float)
        cells = tuple(np.asarray(c, dtype=int) for c in cells)
        edge_index: dict = {}
        edges = []
        cell_edges = []
        cell_signs = []
        for loop in cells:
            ids, signs = [], []
            for a, b in zip(loop, np.roll(loop, -1)):
                key = (min(a, b), max(a, b))
                if key not in edge_index:
                    edge_index[key] = len(edges)
                    edges.append(key)
                ids.append(edge_index[key])
                signs.append(1 if a < b else -1)
            cell_edges.append(np.array(ids, dtype=int))
            cell_signs.append(np.array(signs, dtype=int))
        edges = np.array(edges, dtype=int).reshape(-1, 2)

        counts = np.zeros(len(edges), dtype=int)
        for ids in cell_edges:
            counts[ids] += 1
        labels = np.where(counts == 1, BoundaryLabel.DIRICHLET, BoundaryLabel.INTERIOR).astype(int)

        if star_centers is None:
            star_centers = np.array([find_star_center(vertices[c]) for c in cells])
        return cls(
            vertices=vertices,
            cells=cells,
            edges=edges,
            edge_labels=labels,
            cell_edges=tuple(cell_edges),
            cell_signs=tuple(cell_signs),
            star_centers=np.asarray(star_centers, dtype=float),
            domain=domain,
            name=name,
        )

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edge_cells(self) -> list:
        """List of (cell, local edge index) pairs incident to each edge."""
        if self._edge_cells is None:
            inc = [[] for _ in range(self.n_edges)]
            for c, ids in enumerate(self.cell_edges):
                for i, e in enumerate(ids):
                    inc[e].append((c, i))
            object.__setattr__(self, "_edge_cells", inc)
        return self._edge_cells

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_labels != BoundaryLabel.INTERIOR)

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def mesh_size(self) -> float:
        """Maximum cell diameter."""
        return max(_diameter(self.vertices[c]) for c in self.cells)

    def with_boundary_labels(self, is_dirichlet: Callable[[np.ndarray], bool]) -> "PolygonalMesh":
        """Return a copy whose boundary edges are labeled by a midpoint predicate.

        Boundary edges whose midpoint satisfies ``is_dirichlet`` become Dirichlet,
        the others Neumann.
        """
        counts = np.array([len(c) for c in self.edge_cells()])
        mids = self.edge_midpoints()
        labels = np.full(self.n_edges, int(BoundaryLabel.INTERIOR))
        for e in np.flatnonzero(counts == 1):
            labels[e] = BoundaryLabel.DIRICHLET if is_dirichlet(mids[e]) else BoundaryLabel.NEUMANN
        return replace(self, edge_labels=labels, _edge_cells=self._edge_cells)


@dataclass(frozen=True)
class ElementGeometry:
    vertices: np.ndarray  # (m, 2) CCW loop
    centroid: np.ndarray
    diameter: float
    area: float
    star_center: np.ndarray
    edge_lengths: np.ndarray
    normals: np.ndarray  # outward unit normals, (m, 2)
    edge_starts: np.ndarray  # F(0) in global orientation
    edge_ends: np.ndarray  # F(1) in global orientation
    signs: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_lengths)

    def edge_map(self, i: int, s: np.ndarray) -> np.ndarray:
        """Affine map F: [0, 1] -> edge ``i`` in the global orientation."""
        s = np.asarray(s, dtype=float)
        a, b = self.edge_starts[i], self.edge_ends[i]
        return a[None, :] + s[:, None] * (b - a)[None, :]

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.edge_starts + self.edge_ends)


def polygon_area(xy: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise loops)."""
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def _diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def reflex_vertices(xy: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Indices of vertices with interior angle larger than pi (CCW loop)."""
    before = xy - np.roll(xy, 1, axis=0)
    after = np.roll(xy, -1, axis=0) - xy
    cross = before[:, 0] * after[:, 1] - before[:, 1] * after[:, 0]
    return np.flatnonzero(cross < -tol)


def is_star_center(xy: np.ndarray, point, tol: float = 1e-12) -> bool:
    rel = xy - np.asarray(point)[None, :]
    nxt = np.roll(rel, -1, axis=0)
    cross = rel[:, 0] * nxt[:, 1] - rel[:, 1] * nxt[:, 0]
    return bool(np.all(cross > tol * max(1.0, _diameter(xy)) ** 2))


def find_star_center(xy: np.ndarray) -> np.ndarray:
    """A point in the interior of the kernel of a CCW polygon.

    The centroid is used when it sees every edge; otherwise the Chebyshev
    centre of the kernel is found by linear programming.
    """
    xy = np.asarray(xy, dtype=float)
    c = polygon_centroid(xy)
    if is_star_center(xy, c):
        return c
    t = np.roll(xy, -1, axis=0) - xy
    lengths = np.hypot(t[:, 0], t[:, 1])
    inward = np.column_stack([-t[:, 1], t[:, 0]]) / lengths[:, None]
    # inward . (x - a) >= r  <=>  -inward . x + r <= -inward . a
    a_ub = np.column_stack([-inward, np.ones(len(xy))])
    b_ub = -(inward * xy).sum(1)
    res = linprog([0, 0, -1], A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * 2 + [(0, None)])
    if not res.success or res.x[2] <= 0:
        raise MeshError("polygon is not star-shaped")
    return res.x[:2]


def compute_geometry(mesh: PolygonalMesh, cell: int) -> ElementGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell index {cell} out of range")
    loop = mesh.cells[cell]
    xy = mesh.vertices[loop]
    area = polygon_area(xy)
    if not area > 0:
        raise MeshError(f"cell {cell} has non-positive area {area}")
    nxt = np.roll(xy, -1, axis=0)
    t = nxt - xy
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    signs = mesh.cell_signs[cell]
    starts = np.where(signs[:, None] > 0, xy, nxt)
    ends = np.where(signs[:, None] > 0, nxt, xy)
    return ElementGeometry(
        vertices=xy,
        centroid=polygon_centroid(xy),
        diameter=_diameter(xy),
        area=area,
        star_center=mesh.star_centers[cell],
        edge_lengths=lengths,
        normals=normals,
        edge_starts=starts,
        edge_ends=ends,
        signs=signs,
    )


def _grid(nx, ny, domain):
    if nx < 1 or ny < 1:
        raise MeshError("grid counts must be positive")
    x0, x1, y0, y1 = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(ny)
        for i in range(nx)
    ]
    return vertices, cells


def build_cartesian(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0)) -> PolygonalMesh:
    """Uniform ``nx`` x ``ny`` quadrilateral mesh of ``domain = (x0, x1, y0, y1)``."""
    vertices, cells = _grid(nx, ny, domain)
    centers = np.array([vertices[c].mean(0) for c in cells])
    return PolygonalMesh.from_cells(
        vertices, cells, star_centers=centers, domain=tuple(domain), name=f"cartesian-{nx}x{ny}"
    )


def build_sine_distorted(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0), amplitude: float = 0.3) -> PolygonalMesh:
    """Cartesian mesh whose interior vertices are moved by a sine bump.

    Each interior vertex moves by ``amplitude * cell_size * sin(2 pi xh) sin(2 pi yh)``
    in both coordinates, with ``(xh, yh)`` the vertex position mapped to the unit square.
    """
    vertices, cells = _grid(nx, ny, domain)
    x0, x1, y0, y1 = domain
    xh = (vertices[:, 0] - x0) / (x1 - x0)
    yh = (vertices[:, 1] - y0) / (y1 - y0)
    bump = np.sin(2 * np.pi * xh) * np.sin(2 * np.pi * yh)
    interior = (
        ~np.isclose(xh, 0.0) & ~np.isclose(xh, 1.0) & ~np.isclose(yh, 0.0) & ~np.isclose(yh, 1.0)
    )
    bump = np.where(interior, bump, 0.0)
    moved = vertices.copy()
    moved[:, 0] += amplitude * (x1 - x0) / nx * bump
    moved[:, 1] += amplitude * (y1 - y0) / ny * bump
    for c in cells:
        xy = moved[c]
        if polygon_area(xy) <= 0:
            raise MeshError("distortion produced an inverted cell")
        if not _is_simple(xy):
            raise MeshError("distortion produced a self-intersecting cell")
    centers = np.array([find_star_center(moved[c]) for c in cells])
    return PolygonalMesh.from_cells(
        moved, cells, star_centers=centers, domain=tuple(domain),
        name=f"distorted-{nx}x{ny}",
    )


# Local sub-square offsets inside a 2x2 block, counter-clockwise from bottom-left.
_QUADRANTS = ((0, 0), (1, 0), (1, 1), (0, 1))


def build_agglomerated_concave(level: int, domain=(0.0, 2.0, 0.0, 2.0)) -> PolygonalMesh:
    """Concave mesh of L-shaped and square cells.

    The domain is split into ``2**(level+2)`` sub-squares per side and every
    2x2 block of sub-squares is agglomerated into an L-shaped cell (three
    sub-squares) plus one square. The removed quadrant rotates from block to
    block. Every L-shaped cell stores the centre of its corner sub-square as
    star centre.
    """
    if level < 1:
        raise MeshError("level must be >= 1")
    n = 2 ** (level + 2)
    x0, x1, y0, y1 = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    sx, sy = (x1 - x0) / n, (y1 - y0) / n

    def vid(i, j):
        return j * (n + 1) + i

    cells, centers = [], []
    nb = n // 2
    for bj in range(nb):
        for bi in range(nb):
            missing = (bi + 2 * bj) % 4
            i0, j0 = 2 * bi, 2 * bj
            mi, mj = _QUADRANTS[missing]
            # square cell
            a, b = i0 + mi, j0 + mj
            cells.append([vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)])
            centers.append([xs[a] + 0.5 * sx, ys[b] + 0.5 * sy])
            # L cell: boundary of the 2x2 block with the missing quadrant carved out
            cells.append(_l_loop(i0, j0, missing, vid))
            ci, cj = _QUADRANTS[(missing + 2) % 4]
            centers.append([xs[i0 + ci] + 0.5 * sx, ys[j0 + cj] + 0.5 * sy])
    return PolygonalMesh.from_cells(
        vertices, cells, star_centers=np.array(centers), domain=tuple(domain),
        name=f"concave-{level}",
    )


def _l_loop(i0, j0, missing, vid):
    # CCW boundary of the block: 8 lattice points, bottom-left first
    ring = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    corner = [(0, 0), (2, 0), (2, 2), (0, 2)][missing]
    k = ring.index(corner)
    # replace the missing corner by the block centre
    pts = ring[:k] + [(1, 1)] + ring[k + 1:]
    return [vid(i0 + p, j0 + q) for p, q in pts]


def _segments_cross(p1, p2, q1, q2, tol=1e-14) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < -tol) and (d3 * d4 < -tol)


def _is_simple(xy: np.ndarray) -> bool:
    m = len(xy)
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(xy[i], xy[(i + 1) % m], xy[j], xy[(j + 1) % m]):
                return False
    return True


@dataclass
class MeshDiagnostics:
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok


def validate_mesh(mesh: PolygonalMesh, rtol: float = 1e-12) -> MeshDiagnostics:
    """Check orientation, simplicity, edge incidence and tiling of ``mesh``."""
    diag = MeshDiagnostics()
    total = 0.0
    for c, loop in enumerate(mesh.cells):
        xy = mesh.vertices[loop]
        area = polygon_area(xy)
        total += area
        if area <= 0:
            diag.failures.append(f"orientation: cell {c} has non-positive area {area:.3e}")
        elif not _is_simple(xy):
            diag.failures.append(f"simplicity: cell {c} self-intersects")
        elif not is_star_center(xy, mesh.star_centers[c]):
            diag.failures.append(f"star: cell {c} star centre does not see every edge")

    for e, inc in enumerate(mesh.edge_cells()):
        if len(inc) == 0:
            diag.failures.append(f"incidence: edge {e} is dangling")
        elif len(inc) > 2:
            diag.failures.append(f"incidence: edge {e} borders {len(inc)} cells")
        elif len(inc) == 2:
            (c0, i0), (c1, i1) = inc
            if mesh.cell_signs[c0][i0] != -mesh.cell_signs[c1][i1]:
                diag.failures.append(f"incidence: interior edge {e} has equal orientation signs")
            if mesh.edge_labels[e] != BoundaryLabel.INTERIOR:
                diag.failures.append(f"incidence: interior edge {e} carries a boundary label")
        elif mesh.edge_labels[e] == BoundaryLabel.INTERIOR:
            diag.failures.append(f"incidence: boundary edge {e} labeled interior")

    if mesh.domain is not None:
        x0, x1, y0, y1 = mesh.domain
        expected = (x1 - x0) * (y1 - y0)
    else:
        used = np.unique(np.concatenate(mesh.cells))
        expected = ConvexHull(mesh.vertices[used]).volume
    if abs(total - expected) > rtol * abs(expected):
        diag.failures.append(f"tiling: cell areas sum to {total!r}, domain area {expected!r}")
    return diag


def write_mesh(mesh: PolygonalMesh, path) -> None:
    names = {v: k for k, v in _LABEL_NAMES.items()}
    lines = [f"{mesh.n_vertices} {mesh.n_cells} {mesh.n_edges}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [" ".join(map(str, [len(c), *c])) for c in mesh.cells]
    lines += [f"{a} {b} {names[int(lab)]}" for (a, b), lab in zip(mesh.edges, mesh.edge_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, domain=None) -> PolygonalMesh:
    """Read the plain-text mesh format written by :func:`write_mesh`."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        nv, nc, ne = map(int, rows[0])
        vertices = np.array([[float(t) for t in r] for r in rows[1 : 1 + nv]])
        cells = []
        for r in rows[1 + nv : 1 + nv + nc]:
            m = int(r[0])
            if len(r) != m + 1:
                raise MeshError(f"cell record {' '.join(r)!r} has wrong length")
            cells.append([int(t) for t in r[1:]])
        edge_rows = rows[1 + nv + nc : 1 + nv + nc + ne]
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(edge_rows) != ne or len(vertices) != nv:
        raise MeshError(f"malformed mesh file {path}: record counts do not match header")
    mesh = PolygonalMesh.from_cells(vertices, cells, domain=domain, name=Path(path).stem)
    labels = mesh.edge_labels.copy()
    index = {tuple(e): i for i, e in enumerate(mesh.edges.tolist())}
    for r in edge_rows:
        a, b = sorted((int(r[0]), int(r[1])))
        if (a, b) not in index:
            raise MeshError(f"edge {a} {b} is not an edge of any cell")
        labels[index[(a, b)]] = _LABEL_NAMES[r[2].lower()]
    return replace(mesh, edge_labels=labels)

