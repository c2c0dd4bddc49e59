"""One-constant Frank-Oseen energy and its preconditioned projected gradient descent.

A director ``d`` is an ``(n_vertices, 3)`` array. The discrete problem is
built by :func:`assemble_system`, which combines the vector stiffness, the
optional weak ``d . N = 0`` terms and full Dirichlet data, and :func:`ppgd_solve`
iterates::

    P delta = -r(d),    d <- Pi_eps(d + delta)

with a fixed symmetric positive definite ``P`` built once from the linear
operator, until the relative residual drops below ``rtol``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .fem import (assemble_nitsche, assemble_stiffness_scalar, flatten, gradient_norm_sq_nodal,
                  lumped_mass, unflatten, vector_operator)
from .linalg import PreconditionerSpec, build_preconditioner, cg_solve, eliminate_dirichlet
from .mesh import Mesh, boundary_normals

RESIDUAL_FORMS = ("tangential", "recovered")


class DivergenceError(RuntimeError):
    """The iteration produced NaN or a residual far above its running minimum."""

    def __init__(self, message, iteration, log=None):
        super().__init__(message)
        self.iteration = iteration
        self.log = log


class BoundaryDataError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the projected gradient iteration.

    ``residual`` selects the first-order condition that is driven to zero:
    ``"tangential"`` removes the nodal component of ``A d - M g`` along
    ``d_i``. ``"recovered"`` subtracts ``|grad d|^2 d`` with the gradient
    recovered by averaging.
    """

    epsilon: float = 1e-8
    nitsche_C: float = 10.0
    rtol: float = 1e-8
    maxit: int = 500
    preconditioner: PreconditionerSpec = field(default_factory=PreconditionerSpec)
    freeze_dirichlet: bool = True
    residual: str = "tangential"
    divergence_factor: float = 1e6

    def __post_init__(self):
        if isinstance(self.preconditioner, str):
            object.__setattr__(self, "preconditioner", PreconditionerSpec.parse(self.preconditioner))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.rtol < 1:
            raise ValueError(f"rtol must lie in (0, 1), got {self.rtol}")
        if int(self.maxit) < 1:
            raise ValueError(f"maxit must be at least 1, got {self.maxit}")
        if not self.nitsche_C > 0:
            raise ValueError(f"nitsche_C must be positive, got {self.nitsche_C}")
        if self.residual not in RESIDUAL_FORMS:
            raise ValueError(f"residual must be one of {RESIDUAL_FORMS}, got {self.residual!r}")

    def to_dict(self):
        out = asdict(self)
        out["preconditioner"] = str(self.preconditioner)
        return out

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class ConvergenceLog:
    """Per-iteration history; entry 0 is the initial guess."""

    residuals: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    max_norm_dev: list = field(default_factory=list)
    status: str = "running"
    pre_projection_norms: np.ndarray | None = None  # |d + delta| at the last update, per vertex
    message: str = ""

    @property
    def iterations(self) -> int:
        return max(len(self.residuals) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual", "energy", "max_norm_dev"])
        for k, (r, e, m) in enumerate(zip(self.residuals, self.energies, self.max_norm_dev)):
            w.writerow([k, repr(r), repr(e), repr(m)])
        return buf.getvalue()


@dataclass(frozen=True)
class LagrangeDiagnostic:
    values: np.ndarray  # nodal -|grad d|^2 / 2


# ---------------------------------------------------------------- projection

def project_sphere(v, epsilon: float = 1e-8):
    """``v / (epsilon + |v|)`` for one vector or row-wise for an ``(n, 3)`` array."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return v / (epsilon + np.linalg.norm(v))
    out = np.array(v, dtype=float, order="C")
    return kernels.project_rows(out, epsilon)


# ---------------------------------------------------------------- system

@dataclass(eq=False)
class FrankOseenSystem:
    """Assembled linear operator plus boundary data for one director problem."""

    mesh: Mesh
    A: object  # stiffness + Nitsche, 3nv x 3nv
    dirichlet_mask: np.ndarray  # (nv,) vertex is fully prescribed
    dirichlet_values: np.ndarray  # (nv, 3)
    mass: np.ndarray  # (nv,) lumped
    load: np.ndarray | None = None
    scalar_block: object = None  # scalar stiffness when A has no Nitsche coupling
    nitsche_notes: object = None
    _precond: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    @property
    def free(self):
        return ~self.dirichlet_mask

    @property
    def n_free_dofs(self):
        return 3 * int(self.free.sum())

    def impose(self, d):
        d = np.array(d, dtype=float)
        d[self.dirichlet_mask] = self.dirichlet_values[self.dirichlet_mask]
        return d

    def preconditioner(self, spec):
        """Cached approximate inverse of the free block of ``A``."""
        spec = PreconditionerSpec.parse(spec) if isinstance(spec, str) else spec
        key = str(spec)
        if key not in self._precond:
            if self.scalar_block is not None:
                self._precond[key] = _BlockPreconditioner(
                    build_preconditioner(self.scalar_block, spec, free=self.free))
            else:
                free3 = np.tile(self.free, 3)
                B = np.zeros((3 * self.n_vertices, 3))
                for c in range(3):
                    B[c * self.n_vertices:(c + 1) * self.n_vertices, c] = 1.0
                self._precond[key] = _FlatPreconditioner(
                    build_preconditioner(self.A, spec, free=free3, near_nullspace=B), self.n_vertices)
        return self._precond[key]


class _BlockPreconditioner:
    """Same scalar approximate inverse on each component."""

    def __init__(self, P):
        self.P = P

    def apply(self, r):
        z = np.zeros_like(r)
        for c in range(r.shape[1]):
            if np.any(r[:, c]):
                z[:, c] = self.P.apply(r[:, c])
        return z


class _FlatPreconditioner:
    def __init__(self, P, nv):
        self.P = P
        self.nv = nv

    def apply(self, r):
        return unflatten(self.P.apply(flatten(r)), self.nv)


def _as_values(mesh, spec, verts, normals):
    """Evaluate one Dirichlet specification on the given vertices."""
    if isinstance(spec, str):
        if spec not in ("normal", "-normal"):
            raise BoundaryDataError(f"unknown Dirichlet keyword {spec!r}; use 'normal' or '-normal'")
        return (1.0 if spec == "normal" else -1.0) * normals[verts]
    if callable(spec):
        return np.asarray(spec(mesh.vertices[verts]), dtype=float).reshape(len(verts), 3)
    a = np.asarray(spec, dtype=float)
    if a.shape == (3,) or a.shape == (2,):
        v = np.zeros(3)
        v[: a.size] = a
        return np.tile(v, (len(verts), 1))
    if a.shape == (mesh.n_vertices, 3):
        return a[verts]
    raise BoundaryDataError(f"cannot interpret Dirichlet data of shape {a.shape}")


def assemble_system(mesh: Mesh, dirichlet=None, nitsche_tags=(), C: float = 10.0,
                    point_values=None, load=None, normals=None) -> FrankOseenSystem:
    """Build the director problem.

    Parameters
    ----------
    dirichlet : dict
        Tag name to boundary data: a constant vector, an ``(nv, 3)`` array,
        a callable of points, or ``"normal"`` / ``"-normal"`` for the vertex
        normal of that tag. Vertices shared by several tags receive the
        normalized sum of the tag values.
    nitsche_tags : sequence of str
        Tags with the weak constraint ``d . N = 0``.
    point_values : dict
        Vertex id to prescribed vector (may be zero, e.g. at the apex).
    load : (nv, 3) array, optional
        Nodal body load ``g``.
    """
    dirichlet = dict(dirichlet or {})
    nitsche_tags = tuple(nitsche_tags)
    overlap = set(dirichlet) & set(nitsche_tags)
    if overlap:
        raise BoundaryDataError(f"tags {sorted(overlap)} have both Dirichlet and Nitsche conditions")
    for t in list(dirichlet) + list(nitsche_tags):
        if not mesh.has_tag(t):
            raise BoundaryDataError(
                f"boundary tag {t!r} not found in mesh; available: {sorted(mesh.tag_names.values())}")
    nv = mesh.n_vertices
    acc = np.zeros((nv, 3))
    count = np.zeros(nv, dtype=int)
    for tag, spec in dirichlet.items():
        verts = mesh.vertices_of(tag)
        if isinstance(spec, str):
            nrm = boundary_normals(mesh, tags=[tag]).vertex
        else:
            nrm = None
        acc[verts] += _as_values(mesh, spec, verts, nrm)
        count[verts] += 1
    mask = count > 0
    vals = acc.copy()
    shared = count > 1
    if shared.any():
        norms = np.linalg.norm(acc[shared], axis=1)
        if np.any(norms < 1e-12):
            v = int(np.flatnonzero(shared)[np.argmin(norms)])
            raise BoundaryDataError(f"vertex {v} is shared by Dirichlet tags with cancelling data")
        vals[shared] = acc[shared] / norms[:, None]
    for v, val in (point_values or {}).items():
        a = np.zeros(3)
        val = np.asarray(val, dtype=float)
        a[: val.size] = val
        mask[int(v)] = True
        vals[int(v)] = a
    K = assemble_stiffness_scalar(mesh)
    A = vector_operator(K)
    notes = None
    scalar_block = K
    if nitsche_tags:
        normals = boundary_normals(mesh) if normals is None else normals
        B, notes = assemble_nitsche(mesh, normals, nitsche_tags, C)
        if B.nnz:
            A = (A + B).tocsr()
            scalar_block = None
    load = None if load is None else np.asarray(load, dtype=float).reshape(nv, 3)
    return FrankOseenSystem(mesh, A, mask, vals, lumped_mass(mesh), load, scalar_block, notes)


# ---------------------------------------------------------------- residual and energy

def _linear_part(system, d):
    q = unflatten(system.A @ flatten(d), system.n_vertices)
    if system.load is not None:
        q -= system.mass[:, None] * system.load
    return q


def residual(d, system: FrankOseenSystem, form: str = "tangential"):
    """Discrete first-order residual, ``(nv, 3)``, zero on Dirichlet vertices.

    ``tangential``: ``r_i = q_i - (q_i . u_i) u_i`` with ``q = A d - M g`` and
    ``u_i = d_i/|d_i|``, i.e. the consistent nodal multiplier.
    ``recovered``: ``r = A d - M(|grad d|^2 d) - M g`` with nodal
    ``|grad d|^2`` taken from the averaged gradient.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (system.n_vertices, 3):
        raise ValueError(f"director has shape {d.shape}, expected ({system.n_vertices}, 3)")
    q = _linear_part(system, d)
    if form == "tangential":
        r = kernels.tangential_part(q, d)
    elif form == "recovered":
        w = gradient_norm_sq_nodal(system.mesh, d)
        r = q - (system.mass * w)[:, None] * d
    else:
        raise ValueError(f"unknown residual form {form!r}")
    r[system.dirichlet_mask] = 0.0
    return r


def l2_norm(r, n_dofs) -> float:
    """``(1/N) sqrt(sum r_i^2)``."""
    return float(np.sqrt(np.sum(np.square(r)))) / max(int(n_dofs), 1)


def energy(d, A) -> float:
    """``d^T A d / 2`` (stiffness plus any Nitsche terms)."""
    x = flatten(d)
    return 0.5 * float(x @ (A @ x))


def lambda_field(mesh: Mesh, d) -> LagrangeDiagnostic:
    return LagrangeDiagnostic(-0.5 * gradient_norm_sq_nodal(mesh, d))


def norm_deviation(d, free):
    n = np.linalg.norm(d[free], axis=1)
    return float(np.max(np.abs(1.0 - n))) if n.size else 0.0


# ---------------------------------------------------------------- initial guesses

def harmonic_initial_guess(system: FrankOseenSystem, fallback=(0.0, 0.0, 1.0), epsilon: float = 1e-8):
    """Project the solution of the linear vector problem onto the sphere.

    Free vertices where the linear solution nearly vanishes get ``fallback``.
    """
    nv = system.n_vertices
    mask3 = np.tile(system.dirichlet_mask, 3)
    rhs = np.zeros(3 * nv)
    if system.load is not None:
        rhs = flatten(system.mass[:, None] * system.load)
    Ae, b = eliminate_dirichlet(system.A, rhs, mask3, flatten(system.dirichlet_values))
    P = system.preconditioner(PreconditionerSpec())
    x0 = np.where(mask3, flatten(system.dirichlet_values), 0.0)

    class _P:
        def apply(self, r):
            return flatten(P.apply(unflatten(r, nv)))

    y = unflatten(cg_solve(Ae, b, _P(), rtol=1e-10, maxit=2000, x0=x0).x, nv)
    n = np.linalg.norm(y, axis=1)
    small = n < 1e-8 * max(n.max(), 1.0)
    y[small] = np.asarray(fallback, dtype=float)
    d = y / np.linalg.norm(y, axis=1)[:, None]
    return system.impose(d)


def constant_initial_guess(system: FrankOseenSystem, v):
    v = np.asarray(v, dtype=float)
    a = np.zeros(3)
    a[: v.size] = v
    a /= np.linalg.norm(a)
    return system.impose(np.tile(a, (system.n_vertices, 1)))


# ---------------------------------------------------------------- solver

def ppgd_solve(system: FrankOseenSystem, d0, config: SolverConfig | None = None, callback=None):
    """Preconditioned projected gradient descent.

    Returns ``(d, log)``; the last iterate is returned whatever the status.
    Dirichlet vertices keep their prescribed values throughout. Raises
    :class:`DivergenceError` on NaN or when the residual exceeds
    ``divergence_factor`` times its running minimum.
    """
    config = SolverConfig() if config is None else config
    free = system.free
    project_mask = free.astype(np.uint8) if config.freeze_dirichlet else np.ones(system.n_vertices, np.uint8)
    d = system.impose(np.asarray(d0, dtype=float).reshape(system.n_vertices, 3))
    P = system.preconditioner(config.preconditioner)
    ndofs = system.n_free_dofs
    log = ConvergenceLog()

    def record(d, r):
        rn = l2_norm(r, ndofs)
        log.residuals.append(rn)
        log.energies.append(energy(d, system.A))
        log.max_norm_dev.append(norm_deviation(d, free))
        return rn

    r = residual(d, system, config.residual)
    r0 = record(d, r)
    if not np.isfinite(r0):
        log.status = "diverged"
        raise DivergenceError("initial residual is not finite", 0, log)
    if r0 == 0.0:
        log.status = "converged"
        return d, log
    target = config.rtol * r0
    best = r0
    for k in range(1, int(config.maxit) + 1):
        delta = -P.apply(r)
        y = d + delta
        if not config.freeze_dirichlet:
            y[system.dirichlet_mask] = system.dirichlet_values[system.dirichlet_mask]
        log.pre_projection_norms = np.linalg.norm(y, axis=1)
        d = kernels.project_rows(y, config.epsilon, project_mask)
        d[system.dirichlet_mask] = system.dirichlet_values[system.dirichlet_mask]
        r = residual(d, system, config.residual)
        rn = record(d, r)
        if callback is not None:
            callback(k, d, rn)
        if not np.isfinite(rn) or not np.all(np.isfinite(d)):
            log.status = "diverged"
            raise DivergenceError(f"NaN detected in iterate at iteration {k}", k, log)
        best = min(best, rn)
        if rn > config.divergence_factor * best:
            log.status = "diverged"
            raise DivergenceError(
                f"residual {rn:.3e} at iteration {k} exceeds {config.divergence_factor:g} x its minimum {best:.3e}",
                k, log)
        if rn <= target:
            log.status = "converged"
            return d, log
    log.status = "maxit"
    log.message = f"residual {log.residuals[-1]:.3e} above target {target:.3e} after {config.maxit} iterations"
    return d, log
