"""Tagged simplicial meshes in 1D, 2D and 3D.

Vertices are always stored with three coordinates; unused axes are zero.
Boundary facets carry an integer tag whose name lives in ``tag_names``.
Single-vertex tags (the LV apex) are stored in ``point_tags``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations

import numpy as np


class MeshError(ValueError):
    """Invalid mesh input or topology."""


class DegenerateGeometryError(MeshError):
    """A cell or facet has zero measure."""


@dataclass(frozen=True)
class ElementGeometry:
    volumes: np.ndarray  # (nc,)
    diameters: np.ndarray  # (nc,) longest edge
    grads: np.ndarray  # (nc, dim+1, 3) constant shape-function gradients


@dataclass(frozen=True)
class NormalField:
    vertex: np.ndarray  # (nv, 3); zero rows away from the selected boundary
    facet: np.ndarray  # (nf, 3) outward unit normals of every boundary facet
    facet_measure: np.ndarray  # (nf,)

    def at(self, vertices):
        return self.vertex[np.asarray(vertices)]


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    tag_names: dict = field(default_factory=dict)
    point_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise MeshError(f"dim must be 1, 2 or 3, got {self.dim}")
        verts = np.zeros((len(self.vertices), 3))
        v = np.asarray(self.vertices, dtype=float)
        verts[:, : v.shape[1]] = v
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.dim + 1)
        cells = _orient_cells(verts, cells, self.dim)
        facets = np.asarray(self.facets, dtype=np.int64).reshape(-1, self.dim)
        tags = np.asarray(self.facet_tags, dtype=np.int64).reshape(-1)
        if len(tags) != len(facets):
            raise MeshError("facet_tags must have one entry per boundary facet")
        used = set(tags.tolist()) | set(self.point_tags)
        missing = used - set(self.tag_names)
        if missing:
            raise MeshError(f"tag ids without a name: {sorted(missing)}")
        point_tags = {int(k): np.asarray(val, dtype=np.int64).reshape(-1) for k, val in self.point_tags.items()}
        for name, arr in (("vertices", verts), ("cells", cells), ("facets", facets), ("facet_tags", tags)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tag_names", {int(k): str(s) for k, s in self.tag_names.items()})
        object.__setattr__(self, "point_tags", point_tags)
        cell_of = _facet_cells(cells, facets, self.dim)
        cell_of.setflags(write=False)
        object.__setattr__(self, "facet_cells", cell_of)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def tag_id(self, name):
        for k, s in self.tag_names.items():
            if s == name:
                return k
        raise KeyError(f"mesh has no tag named {name!r}; available: {sorted(self.tag_names.values())}")

    def has_tag(self, name):
        return name in self.tag_names.values()

    def facets_of(self, *names):
        """Indices of boundary facets carrying any of the given tag names."""
        ids = [self.tag_id(n) for n in names]
        return np.flatnonzero(np.isin(self.facet_tags, ids))

    def vertices_of(self, *names):
        """Sorted vertex ids touched by the named facet or point tags."""
        out = []
        for n in names:
            tid = self.tag_id(n)
            if tid in self.point_tags:
                out.append(self.point_tags[tid])
            out.append(self.facets[self.facet_tags == tid].ravel())
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(out))

    def boundary_vertices(self):
        return np.unique(self.facets.ravel())

    @cached_property
    def geometry(self) -> ElementGeometry:
        return element_geometry(self)

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return Mesh(self.dim, self.vertices + shift, self.cells, self.facets, self.facet_tags,
                    self.tag_names, self.point_tags)

    def with_point_tag(self, name, vertex):
        names = dict(self.tag_names)
        pts = dict(self.point_tags)
        if self.has_tag(name):
            tid = self.tag_id(name)
        else:
            tid = max(names, default=0) + 1
            names[tid] = name
        pts[tid] = np.array([vertex], dtype=np.int64)
        return Mesh(self.dim, self.vertices, self.cells, self.facets, self.facet_tags, names, pts)


def _signed_volumes(verts, cells, dim):
    x0 = verts[cells[:, 0], :dim]
    J = np.stack([verts[cells[:, k], :dim] - x0 for k in range(1, dim + 1)], axis=-1)
    return np.linalg.det(J) / math.factorial(dim)


def _orient_cells(verts, cells, dim):
    if len(cells) == 0:
        raise MeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= len(verts):
        raise MeshError("cell references a vertex index out of range")
    vol = _signed_volumes(verts, cells, dim)
    cells = cells.copy()
    flip = vol < 0
    cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()
    return cells


def cell_faces(cells, dim):
    """All (dim)-vertex faces of every cell, shape (nc, dim+1, dim); face k omits vertex k."""
    idx = [[j for j in range(dim + 1) if j != k] for k in range(dim + 1)]
    return cells[:, idx]


def boundary_facets_of(cells, dim):
    """Facets that belong to exactly one cell, with that cell's index."""
    faces = cell_faces(np.asarray(cells, dtype=np.int64), dim)
    nc = len(cells)
    flat = np.sort(faces.reshape(-1, dim), axis=1)
    _, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    once = counts[inv] == 1
    owner = np.repeat(np.arange(nc), dim + 1)
    return faces.reshape(-1, dim)[once], owner[once]


def _facet_cells(cells, facets, dim):
    if len(facets) == 0:
        return np.zeros(0, dtype=np.int64)
    faces = np.sort(cell_faces(cells, dim).reshape(-1, dim), axis=1)
    owner = np.repeat(np.arange(len(cells)), dim + 1)
    key = np.sort(facets, axis=1)
    both = np.concatenate([faces, key])
    _, inv, counts = np.unique(both, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    face_inv, facet_inv = inv[: len(faces)], inv[len(faces):]
    # counts include the facet row itself: boundary facet => 1 cell + 1 facet entry
    n_cells_per_key = np.bincount(face_inv, minlength=len(counts))
    bad = np.flatnonzero(n_cells_per_key[facet_inv] != 1)
    if len(bad):
        f = bad[0]
        k = n_cells_per_key[facet_inv[f]]
        raise MeshError(
            f"boundary facet {f} (vertices {facets[f].tolist()}) belongs to {k} cells, expected exactly 1"
        )
    first = np.full(len(counts), -1, dtype=np.int64)
    first[face_inv[::-1]] = owner[::-1]
    return first[facet_inv]


def element_geometry(mesh: Mesh) -> ElementGeometry:
    dim = mesh.dim
    X = mesh.vertices[mesh.cells]  # (nc, dim+1, 3)
    J = np.stack([X[:, k, :dim] - X[:, 0, :dim] for k in range(1, dim + 1)], axis=-1)
    det = np.linalg.det(J)
    if np.any(np.abs(det) <= 1e-300):
        bad = int(np.flatnonzero(np.abs(det) <= 1e-300)[0])
        raise DegenerateGeometryError(f"cell {bad} has zero volume")
    Jinv = np.linalg.inv(J)  # rows are gradients of barycentric coords 1..dim
    grads = np.zeros((mesh.n_cells, dim + 1, 3))
    grads[:, 1:, :dim] = Jinv
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    vols = np.abs(det) / math.factorial(dim)
    diam = np.zeros(mesh.n_cells)
    for a in range(dim + 1):
        for b in range(a + 1, dim + 1):
            diam = np.maximum(diam, np.linalg.norm(X[:, a] - X[:, b], axis=1))
    return ElementGeometry(vols, diam, grads)


def facet_normals(mesh: Mesh):
    """Outward unit normals and measures of all boundary facets."""
    dim = mesh.dim
    F = mesh.vertices[mesh.facets]  # (nf, dim, 3)
    nf = len(F)
    if dim == 1:
        n = np.zeros((nf, 3))
        n[:, 0] = 1.0
        meas = np.ones(nf)
    elif dim == 2:
        t = F[:, 1] - F[:, 0]
        n = np.stack([t[:, 1], -t[:, 0], np.zeros(nf)], axis=1)
        meas = np.linalg.norm(t, axis=1)
    else:
        n = np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0])
        meas = 0.5 * np.linalg.norm(n, axis=1)
    length = np.linalg.norm(n, axis=1)
    if np.any(meas <= 1e-300) or np.any(length <= 1e-300):
        bad = int(np.flatnonzero((meas <= 1e-300) | (length <= 1e-300))[0])
        raise DegenerateGeometryError(f"boundary facet {bad} has zero measure")
    n = n / length[:, None]
    cell_centroid = mesh.vertices[mesh.cells[mesh.facet_cells]].mean(axis=1)
    facet_centroid = F.mean(axis=1)
    sign = np.sign(np.einsum("ij,ij->i", n, facet_centroid - cell_centroid))
    sign[sign == 0] = 1.0
    return n * sign[:, None], meas


def boundary_normals(mesh: Mesh, tags=None) -> NormalField:
    """Facet normals plus measure-weighted, renormalized vertex normals.

    ``tags`` restricts the vertex averaging to facets with those tag names, so
    that a vertex on the rim between two surfaces gets the normal of the
    requested surface only.
    """
    if len(mesh.facets) == 0:
        raise MeshError("mesh has no boundary facets")
    n, meas = facet_normals(mesh)
    sel = np.arange(len(mesh.facets)) if tags is None else mesh.facets_of(*tags)
    acc = np.zeros((mesh.n_vertices, 3))
    w = n[sel] * meas[sel, None]
    for a in range(mesh.dim):
        np.add.at(acc, mesh.facets[sel, a], w)
    norms = np.linalg.norm(acc, axis=1)
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[mesh.facets[sel].ravel()] = True
    if np.any(norms[touched] <= 1e-14):
        bad = int(np.flatnonzero(touched & (norms <= 1e-14))[0])
        raise DegenerateGeometryError(f"vertex {bad} has cancelling facet normals")
    acc[touched] /= norms[touched, None]
    return NormalField(acc, n, meas)


def locate_apex(mesh: Mesh) -> int:
    """Epicardial vertex with minimal z; ties go to the smallest index.

    Meshes without an ``epi`` tag fall back to all vertices.
    """
    cand = mesh.vertices_of("epi") if mesh.has_tag("epi") else np.arange(mesh.n_vertices)
    z = mesh.vertices[cand, 2]
    return int(cand[np.argmin(z)])  # cand is sorted, argmin takes the first minimum


# ---------------------------------------------------------------- generators

def _tagged(dim, verts, cells, classify, names):
    """Build a mesh whose boundary facets are tagged by ``classify(facets) -> tag ids``."""
    cells = np.asarray(cells, dtype=np.int64)
    facets, _ = boundary_facets_of(cells, dim)
    tags = classify(facets)
    if np.any(tags < 0):
        f = int(np.flatnonzero(tags < 0)[0])
        raise MeshError(f"boundary facet {facets[f].tolist()} matched no tag")
    return Mesh(dim, verts, cells, facets, tags, names)


def generate_interval(n: int, length: float = 1.0) -> Mesh:
    if n < 1:
        raise ValueError(f"interval needs at least one cell, got n={n}")
    x = np.linspace(0.0, length, n + 1)
    verts = np.zeros((n + 1, 3))
    verts[:, 0] = x
    cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    facets = np.array([[0], [n]])
    return Mesh(1, verts, cells, facets, [1, 2], {1: "left", 2: "right"})


SQUARE_TAGS = {1: "left", 2: "right", 3: "bottom", 4: "top"}


def generate_unit_square(n: int, pattern: str = "alternating") -> Mesh:
    """Structured triangulation of (0,1)^2 with ``n`` cells per side.

    ``pattern`` picks the diagonal of each square cell: ``"right"`` splits
    along (0,0)-(1,1), ``"left"`` along the other diagonal, ``"alternating"``
    flips the diagonal in a checkerboard (union-jack) so the mesh is invariant
    under quarter turns about the centre for even ``n``; all three give
    ``2 n^2`` triangles. ``"crossed"`` adds a centre vertex per cell for
    ``4 n^2`` triangles.
    """
    if n < 1:
        raise ValueError(f"unit square needs at least one cell per side, got n={n}")
    if pattern not in ("right", "left", "alternating", "crossed"):
        raise ValueError(f"unknown diagonal pattern {pattern!r}")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)

    def vid(i, j):
        return j * (n + 1) + i

    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    if pattern == "crossed":
        centres = np.stack([(xs[I] + xs[I + 1]) / 2, (xs[J] + xs[J + 1]) / 2, np.zeros(len(I))], axis=1)
        c = len(verts) + np.arange(len(I))
        verts = np.vstack([verts, centres])
        cells = np.concatenate([
            np.stack([v00, v10, c], 1), np.stack([v10, v11, c], 1),
            np.stack([v11, v01, c], 1), np.stack([v01, v00, c], 1)])
    else:
        if pattern == "right":
            flip = np.zeros(len(I), dtype=bool)
        elif pattern == "left":
            flip = np.ones(len(I), dtype=bool)
        else:
            flip = (I + J) % 2 == 1
        a = np.where(flip[:, None], np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
        b = np.where(flip[:, None], np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
        cells = np.concatenate([a, b])

    def classify(facets):
        p = verts[facets]
        tags = np.full(len(facets), -1)
        tol = 1e-12
        tags[np.all(np.abs(p[:, :, 0]) < tol, axis=1)] = 1
        tags[np.all(np.abs(p[:, :, 0] - 1) < tol, axis=1)] = 2
        tags[np.all(np.abs(p[:, :, 1]) < tol, axis=1)] = 3
        tags[np.all(np.abs(p[:, :, 1] - 1) < tol, axis=1)] = 4
        return tags

    return _tagged(2, verts, cells, classify, SQUARE_TAGS)


def generate_annulus(rho: float, R: float, n: int, n_radial: int | None = None) -> Mesh:
    """Ring ``rho <= |x| <= R`` with ``n`` angular and ``n_radial`` radial cells."""
    if not (0 < rho < R):
        raise ValueError(f"annulus needs 0 < rho < R, got rho={rho}, R={R}")
    if n < 3:
        raise ValueError(f"annulus needs at least 3 angular cells, got n={n}")
    if n_radial is None:
        n_radial = max(1, int(round(n * (R - rho) / (math.pi * (R + rho)))))
    r = np.linspace(rho, R, n_radial + 1)
    th = 2 * math.pi * np.arange(n) / n
    Rr, Tt = np.meshgrid(r, th, indexing="ij")
    verts = np.stack([(Rr * np.cos(Tt)).ravel(), (Rr * np.sin(Tt)).ravel(), np.zeros(Rr.size)], axis=1)

    def vid(k, j):
        return k * n + (j % n)

    K, Jj = np.meshgrid(np.arange(n_radial), np.arange(n), indexing="ij")
    K, Jj = K.ravel(), Jj.ravel()
    v00, v10, v01, v11 = vid(K, Jj), vid(K + 1, Jj), vid(K, Jj + 1), vid(K + 1, Jj + 1)
    flip = ((K + Jj) % 2 == 1)[:, None]
    a = np.where(flip, np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
    b = np.where(flip, np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
    cells = np.concatenate([a, b])
    layer = np.repeat(np.arange(n_radial + 1), n)

    def classify(facets):
        lay = layer[facets]
        tags = np.full(len(facets), -1)
        tags[np.all(lay == 0, axis=1)] = 1
        tags[np.all(lay == n_radial, axis=1)] = 2
        return tags

    return _tagged(2, verts, cells, classify, {1: "inner", 2: "outer"})


@dataclass(frozen=True)
class LVGeometry:
    """Idealized left ventricle: two confocal-free prolate spheroids cut by a plane.

    Lengths are in millimetres. The apex points towards -z and the base is the
    plane ``z = base_z``.
    """

    r_endo_short: float = 7.0
    r_endo_long: float = 17.0
    r_epi_short: float = 10.0
    r_epi_long: float = 20.0
    base_z: float = 5.0
    target_h: float = 2.0


LV_TAGS = {1: "endo", 2: "epi", 3: "base", 4: "apex"}


def generate_lv_ellipsoid(
    r_endo_short: float = LVGeometry.r_endo_short,
    r_endo_long: float = LVGeometry.r_endo_long,
    r_epi_short: float = LVGeometry.r_epi_short,
    r_epi_long: float = LVGeometry.r_epi_long,
    base_cut_height: float = LVGeometry.base_z,
    target_h: float = LVGeometry.target_h,
) -> Mesh:
    """Tetrahedral truncated prolate-spheroid shell tagged endo/epi/base/apex.

    The shell is parametrized by wall depth ``t``, meridional fraction ``s``
    and azimuth; every structured hexahedron is cut into Kuhn tetrahedra and
    the cells touching the polar axis collapse onto one vertex per depth, so
    the epicardial pole ``(0, 0, -r_epi_long)`` is an exact mesh vertex.
    """
    if not (0 < r_endo_short < r_epi_short and 0 < r_endo_long < r_epi_long):
        raise ValueError("endocardial radii must be positive and strictly inside the epicardial radii")
    if not (-r_endo_long < base_cut_height < r_endo_long):
        raise ValueError("base cut must intersect both shells: need |base_cut_height| < r_endo_long")
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    thick = min(r_epi_short - r_endo_short, r_epi_long - r_endo_long)
    nt = max(2, math.ceil(thick / target_h))
    nc = max(8, 4 * math.ceil(2 * math.pi * r_epi_short / target_h / 4))
    mu_epi = math.acos(-base_cut_height / r_epi_long)
    approx_len = mu_epi * 0.5 * (r_epi_short + r_epi_long)
    nl = max(4, math.ceil(approx_len / target_h))

    t = np.linspace(0.0, 1.0, nt + 1)
    a = r_endo_short + (r_epi_short - r_endo_short) * t
    c = r_endo_long + (r_epi_long - r_endo_long) * t
    mu_max = np.arccos(-base_cut_height / c)
    s = np.linspace(0.0, 1.0, nl + 1)
    th = 2 * math.pi * np.arange(nc) / nc

    n_ring = nl * nc
    layer_size = 1 + n_ring

    def vid(k, i, j):
        k, i, j = np.broadcast_arrays(k, i, j)
        out = k * layer_size + 1 + (i - 1) * nc + (j % nc)
        return np.where(i == 0, k * layer_size, out)

    verts = np.zeros(((nt + 1) * layer_size, 3))
    depth = np.zeros(len(verts), dtype=np.int64)
    merid = np.zeros(len(verts), dtype=np.int64)
    for k in range(nt + 1):
        verts[k * layer_size] = (0.0, 0.0, -c[k])
        depth[k * layer_size] = k
        mu = s[1:] * mu_max[k]
        M, T = np.meshgrid(mu, th, indexing="ij")
        sl = slice(k * layer_size + 1, (k + 1) * layer_size)
        verts[sl, 0] = (a[k] * np.sin(M) * np.cos(T)).ravel()
        verts[sl, 1] = (a[k] * np.sin(M) * np.sin(T)).ravel()
        verts[sl, 2] = (-c[k] * np.cos(M)).ravel()
        depth[sl] = k
        merid[sl] = np.repeat(np.arange(1, nl + 1), nc)
    # exact base plane for the last ring
    verts[merid == nl, 2] = base_cut_height

    K, I, J = np.meshgrid(np.arange(nt), np.arange(nl), np.arange(nc), indexing="ij")
    K, I, J = K.ravel(), I.ravel(), J.ravel()
    tets = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        tets.append(np.stack([vid(K + p[0], I + p[1], J + p[2]) for p in path], axis=1))
    cells = np.concatenate(tets)
    srt = np.sort(cells, axis=1)
    keep = np.all(np.diff(srt, axis=1) > 0, axis=1)
    cells = cells[keep]

    def classify(facets):
        dk = depth[facets]
        mi = merid[facets]
        tags = np.full(len(facets), -1)
        tags[np.all(dk == 0, axis=1)] = 1
        tags[np.all(dk == nt, axis=1)] = 2
        tags[np.all(mi == nl, axis=1)] = 3
        return tags

    base_names = {1: "endo", 2: "epi", 3: "base"}
    mesh = _tagged(3, verts, cells, classify, base_names)
    return mesh.with_point_tag("apex", locate_apex(mesh))


def generate_slab(n: int, m: int = 1, thickness: float = 1.0, width: float | None = None) -> Mesh:
    """Box ``[0, width]^2 x [0, thickness]`` in tetrahedra, tagged endo (z=0),
    epi (z=thickness) and base (the four lateral sides).

    ``n`` cells across the thickness, ``m`` cells along each lateral direction.
    """
    if n < 1 or m < 1:
        raise ValueError("slab needs at least one cell in each direction")
    width = thickness if width is None else width
    xs = np.linspace(0, width, m + 1)
    zs = np.linspace(0, thickness, n + 1)
    Z, Y, X = np.meshgrid(zs, xs, xs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(k, j, i):
        return (k * (m + 1) + j) * (m + 1) + i

    K, J, I = np.meshgrid(np.arange(n), np.arange(m), np.arange(m), indexing="ij")
    K, J, I = K.ravel(), J.ravel(), I.ravel()
    tets = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        tets.append(np.stack([vid(K + p[0], J + p[1], I + p[2]) for p in path], axis=1))
    cells = np.concatenate(tets)

    def classify(facets):
        p = verts[facets]
        tags = np.full(len(facets), 3)
        tags[np.all(np.abs(p[:, :, 2]) < 1e-12, axis=1)] = 1
        tags[np.all(np.abs(p[:, :, 2] - thickness) < 1e-12, axis=1)] = 2
        return tags

    return _tagged(3, verts, cells, classify, {1: "endo", 2: "epi", 3: "base"})


def generate_unit_sphere_shell(rho: float, R: float, target_h: float) -> Mesh:
    """Thick spherical shell tagged endo (inner sphere), epi (outer) and base.

    Built as an LV ellipsoid with equal short and long radii and a base cut
    close to the north pole.
    """
    return generate_lv_ellipsoid(rho, rho, R, R, 0.9 * rho, target_h)


# ---------------------------------------------------------------- refinement

def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: every cell splits into ``2**dim`` children."""
    dim = mesh.dim
    cells = mesh.cells
    edges_local = [(a, b) for a in range(dim + 1) for b in range(a + 1, dim + 1)]
    all_edges = np.sort(np.concatenate([cells[:, [a, b]] for a, b in edges_local]), axis=1)
    uniq, inv = np.unique(all_edges, axis=0, return_inverse=True)
    inv = inv.reshape(len(edges_local), -1).T  # (nc, n_local_edges)
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    m = {e: nv + inv[:, i] for i, e in enumerate(edges_local)}

    def mid(a, b):
        return m[(min(a, b), max(a, b))]

    v = [cells[:, k] for k in range(dim + 1)]
    if dim == 1:
        new = [np.stack([v[0], mid(0, 1)], 1), np.stack([mid(0, 1), v[1]], 1)]
    elif dim == 2:
        new = [np.stack([v[0], mid(0, 1), mid(0, 2)], 1), np.stack([v[1], mid(1, 2), mid(0, 1)], 1),
               np.stack([v[2], mid(0, 2), mid(1, 2)], 1), np.stack([mid(0, 1), mid(1, 2), mid(0, 2)], 1)]
    else:
        e01, e02, e03, e12, e13, e23 = mid(0, 1), mid(0, 2), mid(0, 3), mid(1, 2), mid(1, 3), mid(2, 3)
        new = [np.stack([v[0], e01, e02, e03], 1), np.stack([e01, v[1], e12, e13], 1),
               np.stack([e02, e12, v[2], e23], 1), np.stack([e03, e13, e23, v[3]], 1),
               np.stack([e01, e02, e03, e13], 1), np.stack([e01, e02, e12, e13], 1),
               np.stack([e02, e03, e13, e23], 1), np.stack([e02, e12, e13, e23], 1)]
    new_cells = np.concatenate(new)

    lookup = {tuple(e): nv + i for i, e in enumerate(uniq.tolist())}
    f = mesh.facets
    if dim == 1:
        new_f, new_t = f, mesh.facet_tags
    else:
        def fmid(a, b):
            key = np.sort(np.stack([f[:, a], f[:, b]], 1), axis=1)
            return np.array([lookup[tuple(k)] for k in key.tolist()], dtype=np.int64)

        if dim == 2:
            q = fmid(0, 1)
            new_f = np.concatenate([np.stack([f[:, 0], q], 1), np.stack([q, f[:, 1]], 1)])
            new_t = np.concatenate([mesh.facet_tags] * 2)
        else:
            q01, q02, q12 = fmid(0, 1), fmid(0, 2), fmid(1, 2)
            new_f = np.concatenate([np.stack([f[:, 0], q01, q02], 1), np.stack([q01, f[:, 1], q12], 1),
                                    np.stack([q02, q12, f[:, 2]], 1), np.stack([q01, q12, q02], 1)])
            new_t = np.concatenate([mesh.facet_tags] * 4)
    return Mesh(dim, verts, new_cells, new_f, new_t, mesh.tag_names, mesh.point_tags)


# ---------------------------------------------------------------- gmsh I/O

_GMSH_TYPES = {15: (0, 1), 1: (1, 2), 2: (2, 3), 4: (3, 4)}
_GMSH_OF_DIM = {0: 15, 1: 1, 2: 2, 3: 4}


class GmshParseError(MeshError):
    pass


def _sections(text):
    lines = text.splitlines()
    out = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            if j == len(lines):
                raise GmshParseError(f"section ${name} is not terminated")
            out[name] = [ln.split() for ln in lines[i + 1:j] if ln.strip()]
            i = j
        i += 1
    return out


def load_gmsh(path) -> Mesh:
    """Read an MSH 4.1 ASCII file whose boundary facets are in physical groups."""
    with open(path) as fh:
        text = fh.read()
    return parse_gmsh(text)


def parse_gmsh(text: str) -> Mesh:
    if not text.strip():
        raise GmshParseError("empty mesh file")
    sec = _sections(text)
    if "MeshFormat" not in sec:
        raise GmshParseError("missing $MeshFormat section")
    version = sec["MeshFormat"][0][0]
    if version != "4.1":
        raise GmshParseError(f"unsupported MSH version {version}; only 4.1 ASCII is read")
    if sec["MeshFormat"][0][1] != "0":
        raise GmshParseError("binary MSH files are not supported")
    for name in ("Nodes", "Elements"):
        if name not in sec:
            raise GmshParseError(f"missing ${name} section")
    names = {}
    for row in sec.get("PhysicalNames", [])[1:]:
        names[(int(row[0]), int(row[1]))] = " ".join(row[2:]).strip('"')
    entity_phys = {}
    if "Entities" in sec:
        rows = sec["Entities"]
        counts = [int(x) for x in rows[0]]
        r = 1
        for edim, cnt in enumerate(counts):
            for _ in range(cnt):
                row = rows[r]
                r += 1
                tag = int(row[0])
                if edim == 0:
                    nphys = int(row[4])
                    phys = [int(x) for x in row[5:5 + nphys]]
                else:
                    nphys = int(row[7])
                    phys = [int(x) for x in row[8:8 + nphys]]
                entity_phys[(edim, tag)] = phys

    rows = sec["Nodes"]
    n_blocks = int(rows[0][0])
    coords = {}
    r = 1
    for _ in range(n_blocks):
        _, _, parametric, nn = (int(x) for x in rows[r])
        r += 1
        tags = [int(rows[r + k][0]) for k in range(nn)]
        r += nn
        for k in range(nn):
            coords[tags[k]] = [float(x) for x in rows[r + k][:3]]
        r += nn
        if parametric:
            raise GmshParseError("parametric node coordinates are not supported")
    node_ids = np.array(sorted(coords))
    index = {t: i for i, t in enumerate(node_ids.tolist())}
    verts = np.array([coords[t] for t in node_ids.tolist()])

    rows = sec["Elements"]
    n_blocks = int(rows[0][0])
    by_dim = {0: [], 1: [], 2: [], 3: []}
    r = 1
    for _ in range(n_blocks):
        edim, etag, etype, ne = (int(x) for x in rows[r])
        r += 1
        if etype not in _GMSH_TYPES:
            raise GmshParseError(f"unsupported element type {etype} in entity ({edim}, {etag})")
        _, nnodes = _GMSH_TYPES[etype]
        conn = np.array([[index[int(x)] for x in rows[r + k][1:1 + nnodes]] for k in range(ne)], dtype=np.int64)
        r += ne
        by_dim[edim].append((etag, conn))
    dim = max(d for d in by_dim if by_dim[d])
    if dim == 0:
        raise GmshParseError("mesh has no cells")
    cells = np.concatenate([c for _, c in by_dim[dim]])

    tag_names = {}
    ids = {}

    def phys_name(edim, etag):
        phys = entity_phys.get((edim, etag), [])
        if not phys:
            return None
        p = phys[0]
        return names.get((edim, p), f"{edim}:{p}")

    def tid(name):
        if name not in ids:
            ids[name] = len(ids) + 1
            tag_names[ids[name]] = name
        return ids[name]

    geo_facets, _ = boundary_facets_of(cells, dim)
    lookup = {}
    for etag, conn in by_dim[dim - 1]:
        name = phys_name(dim - 1, etag)
        if name is None:
            continue
        for row in conn:
            lookup[tuple(sorted(row.tolist()))] = tid(name)
    tags = np.empty(len(geo_facets), dtype=np.int64)
    for f, row in enumerate(geo_facets):
        key = tuple(sorted(row.tolist()))
        if key not in lookup:
            raise GmshParseError(
                f"boundary facet with nodes {[int(node_ids[v]) for v in row]} has no physical group "
                "(boundary tag missing)"
            )
        tags[f] = lookup[key]
    point_tags = {}
    if dim > 1:
        for etag, conn in by_dim[0]:
            name = phys_name(0, etag)
            if name is not None:
                point_tags[tid(name)] = conn[:, 0]
    return Mesh(dim, verts, cells, geo_facets, tags, tag_names, point_tags)


def format_gmsh(mesh: Mesh) -> str:
    """Serialize to MSH 4.1 ASCII: one entity per tag plus one volume entity."""
    dim = mesh.dim
    lines = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat", "$PhysicalNames"]
    phys = []
    for tid, name in sorted(mesh.tag_names.items()):
        edim = 0 if tid in mesh.point_tags else dim - 1
        phys.append((edim, tid, name))
    phys.append((dim, 1000, "domain"))
    lines.append(str(len(phys)))
    lines += [f'{d} {t} "{n}"' for d, t, n in phys]
    lines.append("$EndPhysicalNames")
    counts = [0, 0, 0, 0]
    ent_lines = {0: [], 1: [], 2: [], 3: []}
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    box = " ".join(f"{v:.17g}" for v in (*lo, *hi))
    for d, t, _ in phys:
        counts[d] += 1
        if d == 0:
            first = mesh.point_tags[t][0] if t in mesh.point_tags else mesh.facets[mesh.facet_tags == t][0, 0]
            p = mesh.vertices[first]
            ent_lines[0].append(f"{t} {p[0]:.17g} {p[1]:.17g} {p[2]:.17g} 1 {t}")
        else:
            ent_lines[d].append(f"{t} {box} 1 {t} 0")
    lines += ["$Entities", " ".join(map(str, counts))]
    for d in range(4):
        lines += ent_lines[d]
    lines.append("$EndEntities")
    nv = mesh.n_vertices
    lines += ["$Nodes", f"1 {nv} 1 {nv}", f"{dim} 1000 0 {nv}"]
    lines += [str(i + 1) for i in range(nv)]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines.append("$EndNodes")
    blocks = []
    for d, t, _ in phys:
        if d == 0 and t in mesh.point_tags:
            conn = mesh.point_tags[t][:, None]
        elif d == dim:
            conn = mesh.cells
        else:
            conn = mesh.facets[mesh.facet_tags == t]
        blocks.append((d, t, _GMSH_OF_DIM[d], conn))
    total = sum(len(b[3]) for b in blocks)
    lines += ["$Elements", f"{len(blocks)} {total} 1 {total}"]
    eid = 1
    for d, t, etype, conn in blocks:
        lines.append(f"{d} {t} {etype} {len(conn)}")
        for row in conn:
            lines.append(" ".join([str(eid)] + [str(int(v) + 1) for v in row]))
            eid += 1
    lines.append("$EndElements")
    return "\n".join(lines) + "\n"


def write_gmsh(mesh: Mesh, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_gmsh(mesh))
