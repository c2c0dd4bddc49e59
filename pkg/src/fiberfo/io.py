"""File output: VTU (XML UnstructuredGrid), legacy ASCII VTK and CSV tables.

Every writer goes through :func:`atomic_write_text`, so a reader never sees a
half-written file.
"""
from __future__ import annotations

import csv
import io as _io
import os
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .mesh import Mesh

# VTK cell type ids for P1 simplices
_VTK_CELL = {1: 3, 2: 5, 3: 10}


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary sibling file and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _as_point_array(mesh: Mesh, name, values):
    a = np.asarray(values, dtype=float)
    nv = mesh.n_vertices
    if a.ndim == 1 and a.size == 3 * nv:
        a = a.reshape(3, nv).T  # component-major flat vector
    if a.shape[0] != nv:
        raise ValueError(f"point array {name!r} has {a.shape[0]} rows, mesh has {nv} vertices")
    return a


def _fmt(a):
    return " ".join(repr(float(v)) for v in np.ravel(a))


def format_vtu(mesh: Mesh, point_data=None, cell_data=None) -> str:
    point_data = point_data or {}
    cell_data = cell_data or {}
    root = ET.Element("VTKFile", type="UnstructuredGrid", version="1.0", byte_order="LittleEndian")
    grid = ET.SubElement(root, "UnstructuredGrid")
    piece = ET.SubElement(grid, "Piece", NumberOfPoints=str(mesh.n_vertices), NumberOfCells=str(mesh.n_cells))
    pts = ET.SubElement(piece, "Points")
    ET.SubElement(pts, "DataArray", type="Float64", NumberOfComponents="3", format="ascii").text = _fmt(mesh.vertices)
    cells = ET.SubElement(piece, "Cells")
    ET.SubElement(cells, "DataArray", type="Int64", Name="connectivity", format="ascii").text = " ".join(
        map(str, mesh.cells.ravel().tolist()))
    offsets = (np.arange(mesh.n_cells) + 1) * (mesh.dim + 1)
    ET.SubElement(cells, "DataArray", type="Int64", Name="offsets", format="ascii").text = " ".join(
        map(str, offsets.tolist()))
    ET.SubElement(cells, "DataArray", type="UInt8", Name="types", format="ascii").text = " ".join(
        [str(_VTK_CELL[mesh.dim])] * mesh.n_cells)
    if point_data:
        pd = ET.SubElement(piece, "PointData")
        for name, values in point_data.items():
            a = _as_point_array(mesh, name, values)
            ncomp = 1 if a.ndim == 1 else a.shape[1]
            ET.SubElement(pd, "DataArray", type="Float64", Name=name, NumberOfComponents=str(ncomp),
                          format="ascii").text = _fmt(a)
    if cell_data:
        cd = ET.SubElement(piece, "CellData")
        for name, values in cell_data.items():
            a = np.asarray(values, dtype=float)
            if a.shape[0] != mesh.n_cells:
                raise ValueError(f"cell array {name!r} has {a.shape[0]} rows, mesh has {mesh.n_cells} cells")
            ncomp = 1 if a.ndim == 1 else a.shape[1]
            ET.SubElement(cd, "DataArray", type="Float64", Name=name, NumberOfComponents=str(ncomp),
                          format="ascii").text = _fmt(a)
    ET.indent(root)
    return '<?xml version="1.0"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_vtu(path, mesh: Mesh, point_data=None, cell_data=None) -> None:
    atomic_write_text(path, format_vtu(mesh, point_data, cell_data))


def format_boundary_vtu(mesh: Mesh) -> str:
    """Boundary facets as VTU cells with their tag id in the cell array ``tag``."""
    fdim = mesh.dim - 1
    n = len(mesh.facets)
    root = ET.Element("VTKFile", type="UnstructuredGrid", version="1.0", byte_order="LittleEndian")
    piece = ET.SubElement(ET.SubElement(root, "UnstructuredGrid"), "Piece",
                          NumberOfPoints=str(mesh.n_vertices), NumberOfCells=str(n))
    ET.SubElement(ET.SubElement(piece, "Points"), "DataArray", type="Float64", NumberOfComponents="3",
                  format="ascii").text = _fmt(mesh.vertices)
    cells = ET.SubElement(piece, "Cells")
    ET.SubElement(cells, "DataArray", type="Int64", Name="connectivity", format="ascii").text = " ".join(
        map(str, mesh.facets.ravel().tolist()))
    ET.SubElement(cells, "DataArray", type="Int64", Name="offsets", format="ascii").text = " ".join(
        map(str, ((np.arange(n) + 1) * (fdim + 1)).tolist()))
    ET.SubElement(cells, "DataArray", type="UInt8", Name="types", format="ascii").text = " ".join(
        [str(_VTK_CELL.get(fdim, 1))] * n)
    ET.SubElement(ET.SubElement(piece, "CellData"), "DataArray", type="Int64", Name="tag",
                  format="ascii").text = " ".join(map(str, mesh.facet_tags.tolist()))
    ET.indent(root)
    return '<?xml version="1.0"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_boundary_vtu(path, mesh: Mesh) -> None:
    atomic_write_text(path, format_boundary_vtu(mesh))


def read_vtu(path):
    """Read a VTU written by :func:`write_vtu`.

    Returns ``(vertices, cells, point_data)`` where ``point_data`` maps array
    names to ``(n_points, n_components)`` arrays (1-D for scalars).
    """
    tree = ET.parse(path)
    piece = tree.getroot().find("UnstructuredGrid/Piece")
    if piece is None:
        raise ValueError(f"{path}: not a VTU UnstructuredGrid file")
    npts = int(piece.get("NumberOfPoints"))

    def arr(el, dtype=float):
        return np.array((el.text or "").split(), dtype=dtype)

    verts = arr(piece.find("Points/DataArray")).reshape(npts, 3)
    conn = {el.get("Name"): el for el in piece.findall("Cells/DataArray")}
    offsets = arr(conn["offsets"], np.int64)
    width = int(offsets[0]) if len(offsets) else 0
    cells = arr(conn["connectivity"], np.int64).reshape(-1, width)
    point_data = {}
    for el in piece.findall("PointData/DataArray"):
        a = arr(el)
        ncomp = int(el.get("NumberOfComponents", "1"))
        point_data[el.get("Name")] = a if ncomp == 1 else a.reshape(npts, ncomp)
    return verts, cells, point_data


def read_vtu_cell_data(path):
    """Cell arrays of a VTU file as a name to 1-D array map."""
    piece = ET.parse(path).getroot().find("UnstructuredGrid/Piece")
    if piece is None:
        raise ValueError(f"{path}: not a VTU UnstructuredGrid file")
    return {el.get("Name"): np.array((el.text or "").split(), dtype=float)
            for el in piece.findall("CellData/DataArray")}


def format_legacy_vtk(mesh: Mesh, point_data=None, title="fiberfo") -> str:
    out = _io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {mesh.n_vertices} double\n")
    for p in mesh.vertices:
        out.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")
    k = mesh.dim + 1
    out.write(f"CELLS {mesh.n_cells} {mesh.n_cells * (k + 1)}\n")
    for c in mesh.cells:
        out.write(f"{k} " + " ".join(map(str, c.tolist())) + "\n")
    out.write(f"CELL_TYPES {mesh.n_cells}\n")
    out.write((f"{_VTK_CELL[mesh.dim]}\n") * mesh.n_cells)
    if point_data:
        out.write(f"POINT_DATA {mesh.n_vertices}\n")
        for name, values in point_data.items():
            a = _as_point_array(mesh, name, values)
            if a.ndim == 1:
                out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                out.write("\n".join(repr(float(v)) for v in a) + "\n")
            else:
                out.write(f"VECTORS {name} double\n")
                for row in a:
                    out.write(" ".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def write_legacy_vtk(path, mesh: Mesh, point_data=None) -> None:
    atomic_write_text(path, format_legacy_vtk(mesh, point_data))


def format_csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, format_csv(header, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
