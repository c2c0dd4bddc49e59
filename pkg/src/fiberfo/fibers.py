"""Fiber frames on the left ventricle: potential-based rules and director solves.

Both pipelines produce a :class:`FiberBundle` ``(f, s, n)``: the fiber,
the sheet (transmural) and the cross-fiber direction. The local frame
``B = [d, d_ab, d_trans]`` is built from the transversal ``d = d_trans x d_ab``
and fibers are obtained by rotating ``d`` about ``d_trans`` by an angle that
varies across the wall.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fem import recover_nodal_gradient
from .frankoseen import (FrankOseenSystem, SolverConfig, assemble_system, harmonic_initial_guess,
                         ppgd_solve, residual)
from .mesh import Mesh, MeshError, locate_apex
from .poisson import apicobasal_potential, transmural_potential


class SolverDidNotConverge(RuntimeError):
    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


class ConditioningWarning(UserWarning):
    """The local frame is not orthonormal to the requested tolerance."""


@dataclass(frozen=True)
class RotationParams:
    """Endocardial and epicardial helix angles in radians."""

    alpha_endo: float = math.radians(60.0)
    alpha_epi: float = math.radians(-60.0)

    def __post_init__(self):
        if not (math.isfinite(self.alpha_endo) and math.isfinite(self.alpha_epi)):
            raise ValueError("rotation angles must be finite")

    @classmethod
    def from_degrees(cls, alpha_endo, alpha_epi):
        return cls(math.radians(alpha_endo), math.radians(alpha_epi))

    def angle(self, phi):
        """``phi alpha_endo + (1 - phi) alpha_epi``."""
        phi = np.asarray(phi, dtype=float)
        return phi * self.alpha_endo + (1.0 - phi) * self.alpha_epi


@dataclass
class FiberBundle:
    f: np.ndarray
    s: np.ndarray
    n: np.ndarray
    method: str
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def orthonormality_defect(self, exclude=()):
        """Max over vertices (minus ``exclude``) of ``|F^T F - I|`` with ``F = [f s n]``."""
        F = np.stack([self.f, self.s, self.n], axis=2)  # (nv, 3, 3) columns
        G = np.einsum("nki,nkj->nij", F, F) - np.eye(3)
        err = np.abs(G).max(axis=(1, 2))
        keep = np.ones(len(err), dtype=bool)
        keep[list(exclude)] = False
        return float(err[keep].max()) if keep.any() else 0.0


def _normalize(v, eps=1e-8):
    return kernels.project_rows(np.array(v, dtype=float, order="C"), eps)


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def orthogonalize(v, against, eps=1e-8):
    """Nodewise ``v - <v, u> u`` with ``u`` the unit direction of ``against``, then ``Pi_eps``."""
    u = np.array(against, dtype=float)
    nu = np.linalg.norm(u, axis=1)
    ok = nu > 0
    u[ok] /= nu[ok, None]
    w = v - _dot(v, u)[:, None] * u
    return _normalize(w, eps)


# ---------------------------------------------------------------- frame directions

def transmural_vector_fo(mesh: Mesh, config: SolverConfig | None = None, d0=None, raise_on_failure=True):
    """Director equal to ``-N`` on the endocardium and ``N`` on the epicardium,
    with weak ``d . N = 0`` on the base."""
    config = SolverConfig() if config is None else config
    _require(mesh, ("endo", "epi", "base"))
    system = assemble_system(mesh, {"endo": "-normal", "epi": "normal"}, nitsche_tags=("base",),
                             C=config.nitsche_C)
    d0 = harmonic_initial_guess(system) if d0 is None else system.impose(d0)
    d, log = ppgd_solve(system, d0, config)
    if raise_on_failure and not log.converged:
        raise SolverDidNotConverge(f"transmural solve: {log.message}", log)
    return d, log


def apicobasal_vector_fo(mesh: Mesh, apex: int | None, d_trans, config: SolverConfig | None = None,
                         d0=None, raise_on_failure=True):
    """Director equal to ``N`` on the base and ``0`` at the apex, with weak
    ``d . N = 0`` on endo and epi; then orthogonalized against ``d_trans``."""
    config = SolverConfig() if config is None else config
    _require(mesh, ("endo", "epi", "base"))
    apex = locate_apex(mesh) if apex is None else int(apex)
    system = assemble_system(mesh, {"base": "normal"}, nitsche_tags=("endo", "epi"),
                             C=config.nitsche_C, point_values={apex: np.zeros(3)})
    d0 = harmonic_initial_guess(system) if d0 is None else system.impose(d0)
    d, log = ppgd_solve(system, d0, config)
    if raise_on_failure and not log.converged:
        raise SolverDidNotConverge(f"apicobasal solve: {log.message}", log)
    d_ab = orthogonalize(d, d_trans, config.epsilon)
    d_ab[apex] = 0.0
    return d_ab, log, d


def transversal(d_trans, d_ab, eps=1e-8):
    """``Pi_eps(d_trans x d_ab)`` nodewise."""
    return _normalize(np.cross(d_trans, d_ab), eps)


def rotation_operator(d, d_ab, d_trans, alpha, tol=1e-3):
    """Per-vertex ``Q = B R(alpha) B^T`` with ``B = [d, d_ab, d_trans]``.

    ``R`` rotates in the ``(d, d_ab)`` plane, i.e. about ``d_trans``. Emits a
    :class:`ConditioningWarning` when ``B`` deviates from orthonormal by more
    than ``tol`` at a vertex where all three columns are nonzero.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    B = np.stack([d, np.atleast_2d(d_ab), np.atleast_2d(d_trans)], axis=2)  # columns
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (B.shape[0],))
    c, s = np.cos(alpha), np.sin(alpha)
    R = np.zeros((B.shape[0], 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    R[:, 2, 2] = 1.0
    G = np.einsum("nki,nkj->nij", B, B) - np.eye(3)
    full = np.all(np.linalg.norm(B, axis=1) > 0.5, axis=1)
    dev = np.abs(G).max(axis=(1, 2))
    bad = full & (dev > tol)
    if bad.any():
        warnings.warn(f"local frame not orthonormal at {int(bad.sum())} vertices "
                      f"(max deviation {dev[bad].max():.2e} > {tol:g})", ConditioningWarning, stacklevel=2)
    return np.einsum("nij,njk,nlk->nil", B, R, B)


def rotate_transversal(d, d_ab, d_trans, alpha):
    """``Q(alpha) d`` evaluated without forming ``Q``: ``cos(a) d + sin(a) d_ab``."""
    alpha = np.asarray(alpha, dtype=float)
    return np.cos(alpha)[..., None] * d + np.sin(alpha)[..., None] * d_ab


def rbm_directions(mesh: Mesh, apex: int | None = None, eps=1e-8):
    """Potentials and the normalized-gradient frame used by the rule-based model.

    Returns ``(phi_trans, phi_ab, d_trans, d_ab)`` with ``d_trans`` pointing
    from endocardium to epicardium and ``d_ab`` from apex to base, made
    orthogonal to ``d_trans``.
    """
    apex = locate_apex(mesh) if apex is None else int(apex)
    phi_t = transmural_potential(mesh)
    phi_ab = apicobasal_potential(mesh, apex)
    d_trans = _normalize(-recover_nodal_gradient(mesh, phi_t), eps)
    d_ab = orthogonalize(_normalize(-recover_nodal_gradient(mesh, phi_ab), eps), d_trans, eps)
    return phi_t, phi_ab, d_trans, d_ab


def _cross_fiber(d_ab, f, eps):
    return orthogonalize(d_ab, f, eps)


def fibers_rbm(mesh: Mesh, phi_trans, d_trans, d_ab, params: RotationParams | None = None, eps=1e-8):
    """Rule-based fibers ``f = Q(alpha(phi)) d`` with sheet ``d_trans``."""
    params = RotationParams() if params is None else params
    d = transversal(d_trans, d_ab, eps)
    alpha = params.angle(phi_trans)
    Q = rotation_operator(d, d_ab, d_trans, alpha)
    f = _normalize(np.einsum("nij,nj->ni", Q, d), eps)
    s = np.array(d_trans, dtype=float)
    n = _cross_fiber(d_ab, f, eps)
    return FiberBundle(f, s, n, "rbm",
                       {"alpha_endo": params.alpha_endo, "alpha_epi": params.alpha_epi, "epsilon": eps},
                       {"transversal": d, "alpha": alpha})


def fiber_boundary_values(mesh: Mesh, d_trans, d_ab, params: RotationParams, eps=1e-8):
    """Rotated transversal on endo (``alpha_endo``) and epi (``alpha_epi``) vertices."""
    d = transversal(d_trans, d_ab, eps)
    vals = np.zeros((mesh.n_vertices, 3))
    for tag, a in (("epi", params.alpha_epi), ("endo", params.alpha_endo)):
        v = mesh.vertices_of(tag)
        Q = rotation_operator(d[v], d_ab[v], d_trans[v], a)
        vals[v] = np.einsum("nij,nj->ni", Q, d[v])
    return vals, d


def fibers_fo(mesh: Mesh, d_trans, d_ab, params: RotationParams | None = None,
              config: SolverConfig | None = None, d0=None, raise_on_failure=True):
    """Fibers from a director solve with rotated-transversal Dirichlet data on
    endo and epi and the natural condition on the base.

    The solved field is made orthogonal to the sheet ``d_trans`` before the
    bundle is formed; the raw solution is kept in ``meta["f_raw"]``.
    """
    params = RotationParams() if params is None else params
    config = SolverConfig() if config is None else config
    _require(mesh, ("endo", "epi"))
    vals, d = fiber_boundary_values(mesh, d_trans, d_ab, params, config.epsilon)
    system = assemble_system(mesh, {"endo": vals, "epi": vals})
    f0 = harmonic_initial_guess(system) if d0 is None else system.impose(d0)
    f_raw, log = ppgd_solve(system, f0, config)
    if raise_on_failure and not log.converged:
        raise SolverDidNotConverge(f"fiber solve: {log.message}", log)
    f = orthogonalize(f_raw, d_trans, config.epsilon)
    zero = np.linalg.norm(f_raw, axis=1) == 0
    f[zero] = 0.0
    s = np.array(d_trans, dtype=float)
    n = _cross_fiber(d_ab, f, config.epsilon)
    bundle = FiberBundle(f, s, n, "frank-oseen",
                         {"alpha_endo": params.alpha_endo, "alpha_epi": params.alpha_epi, **config.to_dict()},
                         {"f_raw": f_raw, "log": log, "system": system, "transversal": d})
    return bundle


# ---------------------------------------------------------------- comparison

def angle_error(f1, f2):
    """Nodewise angle in degrees between two fields; NaN where either vanishes."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    n1 = np.linalg.norm(f1, axis=1)
    n2 = np.linalg.norm(f2, axis=1)
    ok = (n1 > 0) & (n2 > 0)
    out = np.full(len(f1), np.nan)
    c = _dot(f1[ok], f2[ok]) / (n1[ok] * n2[ok])
    out[ok] = np.degrees(np.abs(np.arccos(np.clip(c, -1.0, 1.0))))
    return out


def nematic_deviation(f, system: FrankOseenSystem):
    """``r_i . f_i`` with ``r = A f - M(|grad f|^2 f) - M g`` from the recovered gradient."""
    r = residual(np.asarray(f, dtype=float), system, "recovered")
    return _dot(r, f)


def _require(mesh, tags):
    missing = [t for t in tags if not mesh.has_tag(t)]
    if missing:
        raise MeshError(f"mesh lacks required tags {missing}")
