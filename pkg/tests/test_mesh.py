import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fiberfo.mesh import (SQUARE_TAGS, DegenerateGeometryError, GmshParseError, Mesh, MeshError,
                          boundary_normals, facet_normals, format_gmsh, generate_annulus, generate_interval,
                          generate_lv_ellipsoid, generate_slab, generate_unit_sphere_shell,
                          generate_unit_square, load_gmsh, locate_apex, parse_gmsh, refine, write_gmsh)


def test_interval_layout():
    m = generate_interval(4, 2.0)
    assert (m.n_vertices, m.n_cells) == (5, 4)
    assert m.vertices_of("left").tolist() == [0]
    assert m.vertices_of("right").tolist() == [4]
    np.testing.assert_allclose(m.geometry.volumes, 0.5)


@pytest.mark.parametrize("pattern,cells", [("alternating", 800), ("right", 800), ("left", 800), ("crossed", 1600)])
def test_square_cell_counts(pattern, cells):
    m = generate_unit_square(20, pattern)
    assert m.n_cells == cells
    assert math.isclose(m.geometry.volumes.sum(), 1.0, rel_tol=1e-12)
    assert {m.tag_names[k] for k in SQUARE_TAGS} == {"left", "right", "bottom", "top"}


def test_square_tags_on_correct_sides():
    m = generate_unit_square(6)
    v = m.vertices
    assert np.all(v[m.vertices_of("left"), 0] == 0.0)
    assert np.all(v[m.vertices_of("right"), 0] == 1.0)
    assert np.all(v[m.vertices_of("bottom"), 1] == 0.0)
    assert np.all(v[m.vertices_of("top"), 1] == 1.0)


def test_cells_are_positively_oriented(square8, lv_coarse):
    for m in (square8, lv_coarse, generate_interval(3)):
        X = m.vertices[m.cells]
        J = np.stack([X[:, k, :m.dim] - X[:, 0, :m.dim] for k in range(1, m.dim + 1)], axis=-1)
        assert np.all(np.linalg.det(J) > 0)


def test_annulus_area_and_tags():
    m = generate_annulus(0.5, 1.0, 64)
    area = math.pi * (1 - 0.25)
    # inscribed polygons: area deficit is O(1/n^2)
    assert abs(m.geometry.volumes.sum() - area) < 5e-3
    r = np.hypot(*m.vertices[:, :2].T)
    np.testing.assert_allclose(r[m.vertices_of("inner")], 0.5)
    np.testing.assert_allclose(r[m.vertices_of("outer")], 1.0)


def test_lv_default_counts_and_apex():
    m = generate_lv_ellipsoid()
    # frozen from the generator run with default geometry
    assert (m.n_vertices, m.n_cells) == (1347, 5184)
    apex = locate_apex(m)
    np.testing.assert_allclose(m.vertices[apex], [0.0, 0.0, -20.0], atol=1e-12)
    assert m.vertices_of("apex").tolist() == [apex]
    np.testing.assert_allclose(m.vertices[m.vertices_of("base"), 2], 5.0)
    assert abs(m.geometry.volumes.sum() - 3201.9) < 1.0


def cap(a, c, z0):
    """Volume of the spheroid ``x^2/a^2 + z^2/c^2 <= 1`` below ``z = z0``."""
    return math.pi * a * a * (z0 - z0 ** 3 / (3 * c * c) + 2 * c / 3)


def test_lv_volume_tends_to_analytic_shell():
    exact = cap(10, 20, 5) - cap(7, 17, 5)
    coarse = generate_lv_ellipsoid(target_h=2.0).geometry.volumes.sum()
    fine = generate_lv_ellipsoid(target_h=1.0).geometry.volumes.sum()
    assert abs(fine - exact) < abs(coarse - exact)
    assert abs(fine - exact) / exact < 0.01


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
def test_apex_translation_equivariant(dx, dy, dz):
    m = generate_lv_ellipsoid(target_h=5.0)
    a = locate_apex(m)
    t = m.translated([dx, dy, dz])
    assert locate_apex(t) == a
    np.testing.assert_allclose(t.vertices[a], m.vertices[a] + [dx, dy, dz])


def test_slab_orientation():
    m = generate_slab(4, 2, thickness=0.5)
    assert np.all(m.vertices[m.vertices_of("endo"), 2] == 0.0)
    assert np.allclose(m.vertices[m.vertices_of("epi"), 2], 0.5)


def test_sphere_shell_volume():
    m = generate_unit_sphere_shell(0.5, 1.0, 0.1)
    exact = cap(1.0, 1.0, 0.45) - cap(0.5, 0.5, 0.45)
    assert abs(m.geometry.volumes.sum() - exact) / exact < 0.05


@pytest.mark.parametrize("make", [lambda: generate_unit_square(4), lambda: generate_lv_ellipsoid(target_h=5.0),
                                  lambda: generate_interval(3)])
def test_refine_preserves_volume_and_tags(make):
    m = make()
    r = refine(m)
    assert r.n_cells == m.n_cells * 2 ** m.dim
    assert math.isclose(r.geometry.volumes.sum(), m.geometry.volumes.sum(), rel_tol=1e-12)
    assert r.tag_names == m.tag_names
    for t in set(m.tag_names.values()) - {"apex"}:
        fm, fr = m.facets_of(t), r.facets_of(t)
        assert len(fr) == len(fm) * 2 ** (m.dim - 1)


def test_outward_normals_on_square(square8):
    n, meas = facet_normals(square8)
    centroids = square8.vertices[square8.facets].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", n, centroids - 0.5) > 0)
    assert math.isclose(meas.sum(), 4.0)


def test_vertex_normals_unit_on_lv(lv_coarse):
    nf = boundary_normals(lv_coarse, tags=["epi"])
    v = lv_coarse.vertices_of("epi")
    np.testing.assert_allclose(np.linalg.norm(nf.at(v), axis=1), 1.0)
    # epicardial normals point away from the cavity axis
    p = lv_coarse.vertices[v]
    assert np.mean(np.einsum("ij,ij->i", nf.at(v)[:, :2], p[:, :2]) >= 0) > 0.95


def test_facet_not_on_boundary_rejected():
    verts = [[0, 0], [1, 0], [0, 1], [1, 1]]
    cells = [[0, 1, 2], [1, 3, 2]]
    with pytest.raises(MeshError, match="expected exactly 1"):
        Mesh(2, verts, cells, [[1, 2]], [1], {1: "inner"})


def test_unnamed_tag_rejected():
    with pytest.raises(MeshError, match="without a name"):
        Mesh(1, [[0], [1]], [[0, 1]], [[0], [1]], [1, 2], {1: "left"})


def test_degenerate_cell_detected():
    m = Mesh(2, [[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [1, 1, 1], {1: "b"})
    with pytest.raises(DegenerateGeometryError):
        m.geometry


def test_gmsh_roundtrip(tmp_path, lv_coarse):
    for m in (generate_interval(5), generate_unit_square(3), lv_coarse):
        p = tmp_path / "m.msh"
        write_gmsh(m, p)
        r = load_gmsh(p)
        assert r.dim == m.dim
        np.testing.assert_allclose(r.vertices, m.vertices)
        np.testing.assert_array_equal(r.cells, m.cells)
        assert sorted(r.tag_names.values()) == sorted(m.tag_names.values())
        for t in m.tag_names.values():
            np.testing.assert_array_equal(r.vertices_of(t), m.vertices_of(t))


def test_fixture_mesh_file_loads():
    from pathlib import Path

    m = load_gmsh(Path(__file__).parent / "data" / "square.msh")
    assert m.dim == 2 and m.n_cells == 8
    assert sorted(m.tag_names.values()) == ["bottom", "left", "right", "top"]


def test_gmsh_errors():
    with pytest.raises(GmshParseError, match="empty"):
        parse_gmsh("")
    text = format_gmsh(generate_unit_square(2))
    with pytest.raises(GmshParseError, match="unsupported MSH version"):
        parse_gmsh(text.replace("4.1 0 8", "2.2 0 8"))
    # drop the "top" facet block: those facets lose their physical group
    lines = text.splitlines()
    start = lines.index("$Elements")
    i = start + 2
    out = lines[: start + 2]
    while lines[i] != "$EndElements":
        d, t, _, n = (int(x) for x in lines[i].split())
        block = lines[i: i + 1 + n]
        if not (d == 1 and t == 4):
            out += block
        i += 1 + n
    out += lines[i:]
    header = out[start + 1].split()
    out[start + 1] = f"{int(header[0]) - 1} {header[1]} {header[2]} {header[3]}"
    with pytest.raises(GmshParseError, match="boundary tag missing"):
        parse_gmsh("\n".join(out))
