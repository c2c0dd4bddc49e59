"""Harmonic potentials with piecewise-constant Dirichlet data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import assemble_stiffness_scalar
from .linalg import build_preconditioner, cg_solve, eliminate_dirichlet
from .mesh import Mesh, MeshError, locate_apex


class SingularSystemError(ValueError):
    """No Dirichlet data: the Neumann problem is singular."""


class ContradictoryBCError(ValueError):
    pass


@dataclass(frozen=True)
class ScalarBC:
    """Boundary condition for a scalar potential.

    ``kind`` is ``"dirichlet"`` (value ``g`` on every vertex of ``tag``) or
    ``"neumann-zero"``. ``vertices`` may replace ``tag`` for point constraints.
    """

    tag: str | None
    kind: str = "dirichlet"
    g: float = 0.0
    vertices: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann-zero"):
            raise ValueError(f"scalar boundary condition kind must be dirichlet or neumann-zero, got {self.kind!r}")
        if self.tag is None and self.vertices is None:
            raise ValueError("boundary condition needs a tag or explicit vertices")


def dirichlet(tag, g):
    return ScalarBC(tag, "dirichlet", float(g))


def point_dirichlet(vertex, g, name="point"):
    return ScalarBC(name, "dirichlet", float(g), (int(vertex),))


def _constrained(mesh: Mesh, bcs):
    tags = [bc.tag for bc in bcs if bc.vertices is None]
    if len(set(tags)) != len(tags):
        raise ValueError("at most one boundary condition per tag")
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    vals = np.zeros(mesh.n_vertices)
    owner = {}
    for bc in bcs:
        if bc.kind != "dirichlet":
            if bc.vertices is None:
                mesh.tag_id(bc.tag)  # validates the tag
            continue
        if bc.vertices is not None:
            vs = np.asarray(bc.vertices, dtype=np.int64)
        else:
            vs = mesh.vertices_of(bc.tag)
        for v in vs.tolist():
            if v in owner and vals[v] != bc.g:
                raise ContradictoryBCError(
                    f"vertex {v} gets value {vals[v]} from {owner[v]!r} and {bc.g} from {bc.tag!r}")
            owner[v] = bc.tag
        mask[vs] = True
        vals[vs] = bc.g
    return mask, vals


def solve_potential(mesh: Mesh, bcs, rtol: float = 1e-12, preconditioner="amg", K=None) -> np.ndarray:
    """Discrete harmonic function with the given Dirichlet data.

    Facets without a Dirichlet condition get the natural (zero-flux) condition.
    """
    bcs = list(bcs)
    if not any(bc.kind == "dirichlet" for bc in bcs):
        raise SingularSystemError("potential problem needs at least one Dirichlet boundary condition")
    mask, vals = _constrained(mesh, bcs)
    if not mask.any():
        raise SingularSystemError("Dirichlet tags select no vertices")
    K = assemble_stiffness_scalar(mesh) if K is None else K
    Ae, rhs = eliminate_dirichlet(K, np.zeros(mesh.n_vertices), mask, vals)
    if mask.all():
        return vals.copy()
    P = build_preconditioner(Ae, preconditioner, free=~mask)
    # solve for the free unknowns only; constrained entries stay exact
    x0 = np.where(mask, vals, 0.0)
    res = cg_solve(Ae, rhs, P, rtol=rtol, maxit=5000, x0=x0)
    if not res.converged:
        raise RuntimeError(f"potential solve did not reach rtol={rtol} in {res.iterations} iterations")
    phi = res.x
    phi[mask] = vals[mask]
    return phi


def transmural_potential(mesh: Mesh, **kw) -> np.ndarray:
    """1 on the endocardium, 0 on the epicardium, natural on the base."""
    for t in ("endo", "epi"):
        if not mesh.has_tag(t):
            raise MeshError(f"transmural potential needs tag {t!r}")
    return solve_potential(mesh, [dirichlet("endo", 1.0), dirichlet("epi", 0.0)], **kw)


def apicobasal_potential(mesh: Mesh, apex: int | None = None, **kw) -> np.ndarray:
    """1 at the single apex vertex, 0 on the base, natural elsewhere."""
    if not mesh.has_tag("base"):
        raise MeshError("apicobasal potential needs tag 'base'")
    apex = locate_apex(mesh) if apex is None else int(apex)
    if apex in set(mesh.vertices_of("base").tolist()):
        raise ContradictoryBCError(f"apex vertex {apex} lies on the base, where the potential is 0")
    return solve_potential(mesh, [point_dirichlet(apex, 1.0, "apex"), dirichlet("base", 0.0)], **kw)
