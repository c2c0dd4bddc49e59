import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fiberfo import io as fio
from fiberfo.mesh import generate_unit_square


def test_vtu_roundtrip(tmp_path, square8, rng):
    d = rng.standard_normal((square8.n_vertices, 3))
    phi = rng.standard_normal(square8.n_vertices)
    p = tmp_path / "out.vtu"
    fio.write_vtu(p, square8, {"director": d, "potential": phi}, {"quality": np.ones(square8.n_cells)})
    verts, cells, pdata = fio.read_vtu(p)
    np.testing.assert_array_equal(verts, square8.vertices)
    np.testing.assert_array_equal(cells, square8.cells)
    np.testing.assert_array_equal(pdata["director"], d)
    np.testing.assert_array_equal(pdata["potential"], phi)
    assert fio.read_vtu_cell_data(p)["quality"].shape == (square8.n_cells,)


def test_vtu_accepts_flat_component_major(square8, tmp_path):
    d = np.arange(3 * square8.n_vertices, dtype=float)
    fio.write_vtu(tmp_path / "f.vtu", square8, {"director": d})
    _, _, pdata = fio.read_vtu(tmp_path / "f.vtu")
    np.testing.assert_array_equal(pdata["director"][:, 0], d[: square8.n_vertices])


def test_vtu_rejects_wrong_length(square8):
    with pytest.raises(ValueError, match="rows"):
        fio.format_vtu(square8, {"bad": np.zeros(3)})


def test_boundary_vtu_has_tag_cell_array(tmp_path, lv_coarse):
    fio.write_boundary_vtu(tmp_path / "b.vtu", lv_coarse)
    tags = fio.read_vtu_cell_data(tmp_path / "b.vtu")["tag"]
    assert len(tags) == len(lv_coarse.facets)
    assert set(tags.astype(int).tolist()) == {lv_coarse.tag_id(t) for t in ("endo", "epi", "base")}


def test_legacy_vtk_format(square8):
    text = fio.format_legacy_vtk(square8, {"potential": np.zeros(square8.n_vertices),
                                           "fiber": np.zeros((square8.n_vertices, 3))})
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"POINTS {square8.n_vertices} double" in text
    assert "SCALARS potential double 1" in text and "VECTORS fiber double" in text


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_floats_roundtrip_exactly(values):
    text = fio.format_csv(["i", "x"], [(i, v) for i, v in enumerate(values)])
    rows = [line.split(",") for line in text.splitlines()[1:]]
    assert [float(r[1]) for r in rows] == values


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    fio.atomic_write_text(p, "one")
    fio.atomic_write_text(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["a.txt"]


def test_atomic_write_failure_keeps_old_file(tmp_path, monkeypatch):
    p = tmp_path / "a.txt"
    fio.atomic_write_text(p, "old")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(fio.os, "replace", boom)
    with pytest.raises(OSError):
        fio.atomic_write_text(p, "new")
    assert p.read_text() == "old"
    assert [q.name for q in tmp_path.iterdir()] == ["a.txt"]


def test_csv_file_roundtrip(tmp_path):
    fio.write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, 1e-300)])
    header, rows = fio.read_csv(tmp_path / "t.csv")
    assert header == ["a", "b"] and rows == [["1", "0.1"], ["2", "1e-300"]]


def test_square_vtu_is_deterministic():
    m = generate_unit_square(3)
    assert fio.format_vtu(m, {"x": m.vertices}) == fio.format_vtu(m, {"x": m.vertices})
