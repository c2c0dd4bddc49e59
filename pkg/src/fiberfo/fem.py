"""P1 finite elements on simplices: assembly, Nitsche terms, gradients and norms.

Scalar fields are arrays of shape ``(n_vertices,)``. Vector fields are
``(n_vertices, 3)`` arrays; assembled vector operators use component-major
ordering, so the flat unknown is ``d.T.ravel()`` (all x-components, then y,
then z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import kernels
from .linalg import as_csr
from .mesh import DegenerateGeometryError, Mesh, MeshError, NormalField, boundary_normals

NITSCHE_TERMS = ("consistency", "symmetry", "penalty")


def flatten(d):
    """``(nv, 3)`` vector field to a component-major flat vector."""
    return np.ascontiguousarray(np.asarray(d, dtype=float).T).ravel()


def unflatten(x, n_vertices=None):
    x = np.asarray(x, dtype=float)
    nv = x.size // 3 if n_vertices is None else n_vertices
    return np.ascontiguousarray(x.reshape(3, nv).T)


def _geometry(mesh):
    try:
        return mesh.geometry
    except DegenerateGeometryError as exc:
        raise DegenerateGeometryError(f"assembly failed: {exc}") from None


def _scatter_local(mesh, local):
    """Sum per-cell ``(nc, k, k)`` matrices into a global CSR matrix."""
    n = mesh.n_vertices
    c = mesh.cells
    k = c.shape[1]
    rows = np.repeat(c, k, axis=1).ravel()
    cols = np.tile(c, (1, k)).ravel()
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def assemble_stiffness_scalar(mesh: Mesh) -> sp.csr_matrix:
    """``A_ij = int grad psi_i . grad psi_j``."""
    g = _geometry(mesh)
    local = np.einsum("cid,cjd->cij", g.grads, g.grads) * g.volumes[:, None, None]
    return _scatter_local(mesh, local)


def vector_operator(K) -> sp.csr_matrix:
    """Three copies of a scalar operator on the diagonal (component-major)."""
    return as_csr(sp.block_diag([K, K, K]))


def assemble_stiffness_vector(mesh: Mesh) -> sp.csr_matrix:
    return vector_operator(assemble_stiffness_scalar(mesh))


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Row sums of the P1 mass matrix: ``|T|/(dim+1)`` gathered per vertex."""
    g = _geometry(mesh)
    w = np.repeat((g.volumes / (mesh.dim + 1))[:, None], mesh.dim + 1, axis=1)
    out = np.zeros(mesh.n_vertices)
    for a in range(mesh.dim + 1):
        out += np.bincount(mesh.cells[:, a], weights=w[:, a], minlength=mesh.n_vertices)
    return out


def assemble_mass(mesh: Mesh, lumped: bool = False):
    """Consistent P1 mass matrix, or the lumped (diagonal) variant as a CSR matrix."""
    if lumped:
        return as_csr(sp.diags(lumped_mass(mesh)))
    g = _geometry(mesh)
    d = mesh.dim
    ref = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return _scatter_local(mesh, g.volumes[:, None, None] * ref[None])


# ---------------------------------------------------------------- Nitsche

@dataclass(frozen=True)
class NitscheParams:
    C: float = 10.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"Nitsche penalty must be positive, got C={self.C}")


@dataclass
class NitscheNotes:
    tags: tuple
    C: float
    terms: tuple
    n_facets: int
    h_min: float = float("nan")
    h_max: float = float("nan")
    messages: list = field(default_factory=list)


def assemble_nitsche(mesh: Mesh, normals: NormalField | None, tags, C: float = 10.0, terms=NITSCHE_TERMS):
    """Weak ``d . N = 0`` on the facets carrying ``tags``.

    Returns ``(B, notes)`` where ``B`` is the ``3 nv x 3 nv`` addition to the
    vector stiffness. With trial ``d`` and test ``v`` the form is::

        - int_F (v.N) N.([grad d] N) - int_F (d.N) N.([grad v] N)
        + C / h_T int_F (d.N)(v.N)

    using the exact facet normal and the diameter ``h_T`` of the cell that
    owns each facet. Any subset of ``terms`` may be requested.
    """
    NitscheParams(C)
    terms = tuple(terms)
    bad = set(terms) - set(NITSCHE_TERMS)
    if bad:
        raise ValueError(f"unknown Nitsche terms {sorted(bad)}")
    tags = tuple([tags] if isinstance(tags, str) else tags)
    nv = mesh.n_vertices
    n = 3 * nv
    sel = mesh.facets_of(*tags) if tags else np.zeros(0, dtype=np.int64)
    notes = NitscheNotes(tags, float(C), terms, len(sel))
    if len(sel) == 0:
        notes.messages.append("no facets carry the requested tags; nothing assembled")
        return sp.csr_matrix((n, n)), notes
    if normals is None:
        normals = boundary_normals(mesh)
    owner = mesh.facet_cells[sel]
    if np.any(owner < 0):
        f = int(sel[np.flatnonzero(owner < 0)[0]])
        raise MeshError(f"facet {f} has no adjacent cell")
    g = _geometry(mesh)
    dim = mesh.dim
    N = normals.facet[sel]  # (m, 3)
    meas = normals.facet_measure[sel]
    h = g.diameters[owner]
    notes.h_min, notes.h_max = float(h.min()), float(h.max())
    F = mesh.facets[sel]  # (m, dim)
    T = mesh.cells[owner]  # (m, dim+1)
    NN = np.einsum("ma,mc->mac", N, N)  # (m, 3, 3)
    comp = np.arange(3)
    rows, cols, vals = [], [], []

    def add(r_vert, c_vert, weight):
        # weight: (m, len(r_vert), len(c_vert)); entry (c,i),(a,j) = weight_ij N_c N_a
        m, ki, kj = weight.shape
        v = weight[:, :, :, None, None] * NN[:, None, None, :, :]  # (m, ki, kj, c, a)
        R = comp[None, None, None, :, None] * nv + r_vert[:, :, None, None, None]
        Cc = comp[None, None, None, None, :] * nv + c_vert[:, None, :, None, None]
        R, Cc = np.broadcast_arrays(R, Cc)
        rows.append(R.ravel())
        cols.append(Cc.ravel())
        vals.append(np.broadcast_to(v, R.shape).ravel())

    if "penalty" in terms:
        ref = (np.ones((dim, dim)) + np.eye(dim)) / (dim * (dim + 1))
        w = (C / h * meas)[:, None, None] * ref[None]
        add(F, F, w)
    if "consistency" in terms or "symmetry" in terms:
        gN = np.einsum("mjd,md->mj", g.grads[owner], N)  # grad psi_j . N on the owner cell
        w = -(meas / dim)[:, None, None] * np.repeat(gN[:, None, :], dim, axis=1)  # (m, dim, dim+1)
        if "consistency" in terms:
            add(F, T, w)
        if "symmetry" in terms:
            add(T, F, np.transpose(w, (0, 2, 1)))
    B = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    B = as_csr(B)
    B.data[np.abs(B.data) < 1e-300] = 0.0
    B.eliminate_zeros()
    return B, notes


# ---------------------------------------------------------------- gradients

def cell_gradient(mesh: Mesh, values) -> np.ndarray:
    """Exact gradient of the P1 interpolant on every cell.

    Scalar input gives ``(nc, 3)``; vector input ``(nv, 3)`` gives
    ``(nc, 3, 3)`` with ``G[c, i, j] = d u_i / d x_j``.
    """
    g = mesh.geometry
    u = np.asarray(values, dtype=float)
    U = u[mesh.cells]  # (nc, k) or (nc, k, 3)
    if u.ndim == 1:
        return np.einsum("ck,ckd->cd", U, g.grads)
    return np.einsum("cki,ckd->cid", U, g.grads)


def recover_nodal_gradient(mesh: Mesh, values, backend=None) -> np.ndarray:
    """Volume-weighted average of the adjacent cell gradients at every vertex."""
    G = cell_gradient(mesh, values)
    vol = mesh.geometry.volumes
    shape = G.shape[1:]
    W = (G * vol.reshape((-1,) + (1,) * len(shape))).reshape(mesh.n_cells, -1)
    num = kernels.scatter_cells(mesh.cells, W, mesh.n_vertices, backend=backend)
    den = kernels.scatter_cells(mesh.cells, vol[:, None], mesh.n_vertices, backend=backend)
    return (num / den).reshape((mesh.n_vertices,) + shape)


def gradient_norm_sq_nodal(mesh: Mesh, d, backend=None) -> np.ndarray:
    """Nodal ``|grad d|^2`` (Frobenius) from the recovered gradient."""
    R = recover_nodal_gradient(mesh, d, backend=backend)
    return np.einsum("nij,nij->n", R, R) if R.ndim == 3 else np.einsum("nj,nj->n", R, R)


# ---------------------------------------------------------------- quadrature and norms

@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, degree: int = 5):
    """Collapsed Gauss-Legendre rule on the reference simplex.

    Returns ``(bary, weights)`` with barycentric points of shape ``(q, dim+1)``
    and weights summing to one; exact for polynomials of total degree
    ``degree``.
    """
    m = (degree + dim) // 2 + 1
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if dim == 1:
        pts = x[:, None]
        wts = w
    elif dim == 2:
        U, V = np.meshgrid(x, x, indexing="ij")
        WU, WV = np.meshgrid(w, w, indexing="ij")
        pts = np.stack([U.ravel(), (V * (1 - U)).ravel()], axis=1)
        wts = (WU * WV * (1 - U)).ravel()
    else:
        U, V, W = np.meshgrid(x, x, x, indexing="ij")
        WU, WV, WW = np.meshgrid(w, w, w, indexing="ij")
        pts = np.stack([U.ravel(), (V * (1 - U)).ravel(), (W * (1 - U) * (1 - V)).ravel()], axis=1)
        wts = (WU * WV * WW * (1 - U) ** 2 * (1 - V)).ravel()
    wts = wts / wts.sum()
    bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
    return bary, wts


def _quad_points(mesh, degree):
    bary, wts = simplex_quadrature(mesh.dim, degree)
    X = mesh.vertices[mesh.cells]  # (nc, k, 3)
    P = np.einsum("qk,ckd->cqd", bary, X)
    return bary, wts, P


def _eval_exact(exact, P):
    nc, q, _ = P.shape
    val = np.asarray(exact(P.reshape(-1, 3)), dtype=float)
    return val.reshape((nc, q) + val.shape[1:])


def l2_error(mesh: Mesh, values, exact, degree: int = 5) -> float:
    """``|| u_h - u ||_{L2}`` with a degree-``degree`` simplex rule (default 5)."""
    u = np.asarray(values, dtype=float)
    if u.ndim == 1 and u.size == 3 * mesh.n_vertices and callable(exact):
        probe = np.asarray(exact(mesh.vertices[:1]))
        if probe.ndim == 2 and probe.shape[1] == 3:
            u = unflatten(u, mesh.n_vertices)
    bary, wts, P = _quad_points(mesh, degree)
    uh = np.einsum("qk,ck...->cq...", bary, u[mesh.cells])
    diff = uh - _eval_exact(exact, P)
    sq = diff ** 2 if diff.ndim == 2 else (diff ** 2).sum(axis=-1)
    return float(math.sqrt(np.sum(sq @ wts * mesh.geometry.volumes)))


def h1_error(mesh: Mesh, values, exact_grad, degree: int = 4) -> float:
    """``|| grad(u_h - u) ||_{L2}``; ``exact_grad`` returns ``(p, 3)`` or ``(p, 3, 3)``."""
    G = cell_gradient(mesh, values)
    _, wts, P = _quad_points(mesh, degree)
    ex = _eval_exact(exact_grad, P)
    diff = G[:, None] - ex
    sq = (diff ** 2).reshape(diff.shape[0], diff.shape[1], -1).sum(axis=-1)
    return float(math.sqrt(np.sum(sq @ wts * mesh.geometry.volumes)))


def integrate(mesh: Mesh, func, degree: int = 5) -> float:
    """Integral of a callable over the mesh."""
    _, wts, P = _quad_points(mesh, degree)
    val = _eval_exact(func, P)
    return float(np.sum((val @ wts) * mesh.geometry.volumes))


def energy(values, A) -> float:
    """``x^T A x / 2`` with vector fields flattened component-major."""
    x = np.asarray(values, dtype=float)
    if x.ndim == 2:
        x = flatten(x)
    return 0.5 * float(x @ (A @ x))


def h1_seminorm(mesh: Mesh, values, K=None) -> float:
    """``|u_h|_{H1}`` through the stiffness quadratic form."""
    x = np.asarray(values, dtype=float)
    if K is None:
        K = assemble_stiffness_scalar(mesh)
    if x.ndim == 2:
        q = sum(float(x[:, c] @ (K @ x[:, c])) for c in range(x.shape[1]))
    else:
        q = float(x @ (K @ x))
    return math.sqrt(max(q, 0.0))
