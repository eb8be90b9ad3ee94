import numpy as np
import pytest

from adhesim.mesh import (
    GAMMA1,
    GAMMA2,
    GAMMAC,
    MeshError,
    build_rect_mesh,
    build_spaces,
    extract_surface,
)


def test_counting_2x2_default():
    m = build_rect_mesh(2, 2)
    assert m.n_vertices == 9
    assert m.triangles.shape[0] == 8
    bottom = m.edges_with_tag(GAMMAC)
    assert bottom.shape[0] == 2
    assert np.all(m.vertices[bottom.ravel()][:, 1] == 0.0)


def test_areas_partition_rectangle():
    m = build_rect_mesh(5, 3, extents=(2.0, 0.7))
    assert np.sum(m.triangle_areas()) == pytest.approx(1.4, abs=1e-12)
    assert np.all(m.triangle_areas() > 0)


def test_contact_length_equals_width():
    m = build_rect_mesh(4, 4, extents=(3.0, 1.0))
    s = extract_surface(m)
    assert s.total_length == pytest.approx(3.0, abs=1e-12)


def test_surface_nodes_and_parent_roundtrip():
    m = build_rect_mesh(4, 4)
    s = extract_surface(m)
    assert s.n_nodes == 5
    # parent node coordinates are bit-identical
    assert np.array_equal(s.coords, m.vertices[s.parent])
    sp_ = build_spaces(m, s)
    tm = sp_.trace_matrix()
    values = np.arange(m.n_vertices, dtype=float)
    assert np.array_equal(tm @ values, values[s.parent])
    # boolean selector rows
    assert np.array_equal(np.asarray(tm.sum(axis=1)).ravel(), np.ones(s.n_nodes))


def test_noncontiguous_contact_rejected():
    with pytest.raises(MeshError):
        m = build_rect_mesh(
            3,
            3,
            tag_layout={"bottom": GAMMAC, "top": GAMMAC, "left": GAMMA1, "right": GAMMA2},
        )
        extract_surface(m)


def test_missing_parts_rejected():
    with pytest.raises(MeshError):
        build_rect_mesh(3, 3, tag_layout={"bottom": GAMMAC, "top": GAMMA2, "left": GAMMA2, "right": GAMMA2})
    with pytest.raises(MeshError):
        build_rect_mesh(3, 3, tag_layout={"bottom": GAMMA2, "top": GAMMA1, "left": GAMMA2, "right": GAMMA2})
    with pytest.raises(MeshError):
        build_rect_mesh(1, 3)


def test_space_dimensions_4x4():
    m = build_rect_mesh(4, 4)
    s = extract_surface(m)
    spc = build_spaces(m, s)
    assert spc.n_scalar == 25
    assert spc.n_surface == 5
    # top row (gamma1) clamps 5 vertices, both components
    assert spc.n_vector_free == 2 * 25 - 10


def test_constraint_application_zeroes_gamma1():
    m = build_rect_mesh(3, 3)
    s = extract_surface(m)
    spc = build_spaces(m, s)
    u = np.random.default_rng(0).normal(size=2 * m.n_vertices)
    uc = spc.apply_constraints(u)
    clamped = ~spc.free_mask
    assert np.all(uc[clamped] == 0.0)
    assert np.array_equal(uc[spc.free_mask], u[spc.free_mask])
    # expand/restrict roundtrip
    assert np.array_equal(spc.restrict(spc.expand(spc.restrict(u))), spc.restrict(u))


def test_trace_of_constant_is_ones():
    m = build_rect_mesh(4, 4)
    s = extract_surface(m)
    spc = build_spaces(m, s)
    ones = np.ones(spc.n_scalar)
    assert np.array_equal(spc.trace_scalar(ones), np.ones(spc.n_surface))


def test_refinement_doubles_contact_nodes():
    m1 = extract_surface(build_rect_mesh(4, 4))
    m2 = extract_surface(build_rect_mesh(8, 8))
    assert m2.n_nodes == 2 * m1.n_nodes - 1
    assert m2.total_length == pytest.approx(m1.total_length, abs=1e-12)


def test_boundary_length_invariant_and_normals():
    for n in (3, 6):
        m = build_rect_mesh(n, n, extents=(2.0, 1.0))
        lengths = []
        for (a, b) in m.boundary_edges:
            lengths.append(np.linalg.norm(m.vertices[a] - m.vertices[b]))
        assert np.sum(lengths) == pytest.approx(2 * (2.0 + 1.0), abs=1e-12)
    s = extract_surface(build_rect_mesh(4, 4))
    # default contact side is the bottom: outward normal points down
    assert np.all(s.seg_normals[:, 1] == -1.0)
    assert np.all(s.seg_normals[:, 0] == 0.0)


def test_side_tag_layouts():
    m = build_rect_mesh(
        3, 4, tag_layout={"bottom": GAMMA2, "top": GAMMA2, "left": GAMMA1, "right": GAMMAC}
    )
    s = extract_surface(m)
    assert s.n_nodes == 5
    assert np.all(s.seg_normals[:, 0] == 1.0)
    # ordering follows ascending coordinate along the side
    assert np.all(np.diff(s.coords[:, 1]) > 0)


def test_mesh_export_roundtrip(tmp_path):
    m = build_rect_mesh(3, 2)
    path = tmp_path / "mesh.txt"
    m.write(path)
    nodes, tris, edges = {}, {}, {}
    for line in path.read_text().splitlines():
        kind, idx, *rest = line.split()
        if kind == "node":
            nodes[int(idx)] = (float(rest[0]), float(rest[1]))
        elif kind == "tri":
            tris[int(idx)] = tuple(map(int, rest))
        elif kind == "edge":
            edges[int(idx)] = (int(rest[0]), int(rest[1]), rest[2])
    assert len(nodes) == m.n_vertices
    assert len(tris) == m.triangles.shape[0]
    assert len(edges) == m.boundary_edges.shape[0]
    assert nodes[0] == tuple(m.vertices[0])
    assert edges[0][2] in (GAMMA1, GAMMA2, GAMMAC)
