import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvem.mesh import (
    BoundaryLabel,
    MeshError,
    PolygonalMesh,
    build_agglomerated_concave,
    build_cartesian,
    build_sine_distorted,
    compute_geometry,
    polygon_area,
    read_mesh,
    reflex_vertices,
    validate_mesh,
    write_mesh,
)

from conftest import L_SHAPE, single_cell


def test_unit_square_geometry():
    g = compute_geometry(build_cartesian(1, 1), 0)
    assert g.area == pytest.approx(1.0)
    np.testing.assert_allclose(g.centroid, [0.5, 0.5])
    assert g.diameter == pytest.approx(np.sqrt(2))
    np.testing.assert_allclose(np.linalg.norm(g.normals, axis=1), 1.0)


def test_triangle_geometry():
    g = compute_geometry(single_cell([(0, 0), (1, 0), (0, 1)]), 0)
    assert g.area == pytest.approx(0.5)
    np.testing.assert_allclose(g.centroid, [1 / 3, 1 / 3])


def test_l_shape_geometry_and_reflex_vertex():
    g = compute_geometry(single_cell(L_SHAPE), 0)
    assert g.area == pytest.approx(3.0)
    reflex = reflex_vertices(np.asarray(L_SHAPE, dtype=float))
    np.testing.assert_array_equal(np.asarray(L_SHAPE)[reflex], [[1.0, 1.0]])


def test_edge_maps_follow_global_orientation():
    mesh = build_cartesian(2, 2)
    for c in range(mesh.n_cells):
        g = compute_geometry(mesh, c)
        for i, e in enumerate(mesh.cell_edges[c]):
            a, b = mesh.vertices[mesh.edges[e]]
            np.testing.assert_allclose(g.edge_map(i, np.array([0.0, 1.0])), [a, b])


@pytest.mark.parametrize("nx, ny, ncell", [(1, 1, 1), (2, 3, 6), (5, 5, 25)])
def test_cartesian_counts(nx, ny, ncell):
    mesh = build_cartesian(nx, ny)
    assert mesh.n_cells == ncell
    assert mesh.n_edges == nx * (ny + 1) + ny * (nx + 1)
    assert validate_mesh(mesh)


def test_cartesian_single_cell_all_boundary():
    mesh = build_cartesian(1, 1)
    assert mesh.n_edges == 4
    assert np.all(mesh.edge_labels != BoundaryLabel.INTERIOR)


def test_cartesian_mesh_size():
    assert build_cartesian(5, 5).mesh_size() == pytest.approx(np.sqrt(2) / 5)


def test_cartesian_edge_length_on_island_domain():
    mesh = build_cartesian(16, 8, (-1.0, 1.0, -0.5, 0.5))
    lengths = np.linalg.norm(np.diff(mesh.vertices[mesh.edges], axis=1)[:, 0], axis=1)
    np.testing.assert_allclose(lengths, 1 / 8)


def test_cartesian_rejects_zero_counts():
    with pytest.raises(MeshError):
        build_cartesian(0, 3)


def test_distortion_zero_amplitude_is_cartesian():
    a, b = build_sine_distorted(4, 3, amplitude=0.0), build_cartesian(4, 3)
    np.testing.assert_allclose(a.vertices, b.vertices)
    assert all(np.array_equal(x, y) for x, y in zip(a.cells, b.cells))


def test_distorted_mesh_is_valid_and_keeps_boundary():
    d, c = build_sine_distorted(5, 5, amplitude=0.3), build_cartesian(5, 5)
    assert validate_mesh(d)
    areas = [polygon_area(d.vertices[loop]) for loop in d.cells]
    assert sum(areas) == pytest.approx(1.0, rel=1e-12)
    on_boundary = np.unique(d.edges[d.boundary_edges()])
    np.testing.assert_allclose(d.vertices[on_boundary], c.vertices[on_boundary])
    assert not np.allclose(d.vertices, c.vertices)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_concave_family(level):
    mesh = build_agglomerated_concave(level)
    diag = validate_mesh(mesh)
    assert diag, diag.failures
    areas = [polygon_area(mesh.vertices[loop]) for loop in mesh.cells]
    assert sum(areas) == pytest.approx(4.0, rel=1e-12)
    nonconvex = [len(reflex_vertices(mesh.vertices[loop])) > 0 for loop in mesh.cells]
    assert sum(nonconvex) == mesh.n_cells // 2


def test_concave_level_one_size():
    assert build_agglomerated_concave(1).n_cells == 32


def test_validate_reports_reversed_loop():
    mesh = build_cartesian(2, 2)
    cells = list(mesh.cells)
    cells[0] = cells[0][::-1]
    bad = PolygonalMesh.from_cells(mesh.vertices, cells, star_centers=mesh.star_centers, domain=mesh.domain)
    diag = validate_mesh(bad)
    assert not diag
    assert any(f.startswith("orientation") for f in diag.failures)


def test_validate_reports_dangling_edge():
    mesh = build_cartesian(2, 2)
    bad = dataclasses.replace(
        mesh,
        edges=np.vstack([mesh.edges, [[0, 4]]]),
        edge_labels=np.append(mesh.edge_labels, BoundaryLabel.INTERIOR),
    )
    diag = validate_mesh(bad)
    assert any("dangling" in f for f in diag.failures)


def test_with_boundary_labels_marks_neumann():
    mesh = build_cartesian(2, 2).with_boundary_labels(lambda m: m[0] < 1e-12)
    mids = mesh.edge_midpoints()
    b = mesh.boundary_edges()
    dirichlet = b[mesh.edge_labels[b] == BoundaryLabel.DIRICHLET]
    np.testing.assert_allclose(mids[dirichlet, 0], 0.0)
    assert np.sum(mesh.edge_labels == BoundaryLabel.NEUMANN) == len(b) - 2


def test_mesh_file_round_trip(tmp_path):
    mesh = build_agglomerated_concave(1).with_boundary_labels(lambda m: m[1] < 1.0)
    path = tmp_path / "concave.mesh"
    write_mesh(mesh, path)
    back = read_mesh(path, domain=mesh.domain)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.edge_labels, mesh.edge_labels)
    assert validate_mesh(back)


def test_read_mesh_rejects_truncated_file(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("4 1 4\n0 0\n1 0\n1 1\n")
    with pytest.raises(MeshError):
        read_mesh(path)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 6), ny=st.integers(1, 6), amp=st.floats(0.0, 0.3))
def test_incidence_signs_are_opposite(nx, ny, amp):
    mesh = build_sine_distorted(nx, ny, amplitude=amp)
    for e, inc in enumerate(mesh.edge_cells()):
        if len(inc) == 2:
            (c0, i0), (c1, i1) = inc
            assert mesh.cell_signs[c0][i0] == -mesh.cell_signs[c1][i1]
        else:
            assert mesh.edge_labels[e] != BoundaryLabel.INTERIOR
    areas = [polygon_area(mesh.vertices[loop]) for loop in mesh.cells]
    assert sum(areas) == pytest.approx(1.0, rel=1e-12)
