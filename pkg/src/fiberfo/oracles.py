"""Closed-form director fields used as ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class OracleError(ValueError):
    pass


def _unit3(v, name):
    a = np.zeros(3)
    v = np.asarray(v, dtype=float)
    a[: v.size] = v
    n = np.linalg.norm(a)
    if abs(n - 1.0) > 1e-10:
        raise OracleError(f"{name} must be a unit vector, |{name}| = {n:.12g}")
    return a


@dataclass(frozen=True)
class SlerpSpec:
    a: np.ndarray
    b: np.ndarray
    omega: float

    @classmethod
    def from_endpoints(cls, a, b):
        a = _unit3(a, "a")
        b = _unit3(b, "b")
        c = float(np.clip(a @ b, -1.0, 1.0))
        if c <= -1.0 + 1e-14:
            raise OracleError("antipodal endpoints: the geodesic between a and b is not unique")
        return cls(a, b, math.acos(c))


def slerp(a, b, x):
    """Great-circle interpolation ``[sin(w(1-x)) a + sin(w x) b] / sin w``.

    ``x`` may be a scalar or an array; the result has shape ``x.shape + (3,)``.
    """
    s = SlerpSpec.from_endpoints(a, b)
    x = np.asarray(x, dtype=float)
    if s.omega < 1e-12:
        return np.broadcast_to(s.a, x.shape + (3,)).copy()
    w = s.omega
    c0 = np.sin(w * (1.0 - x)) / math.sin(w)
    c1 = np.sin(w * x) / math.sin(w)
    return c0[..., None] * s.a + c1[..., None] * s.b


def slerp_derivative(a, b, x):
    """``d/dx`` of :func:`slerp`; its norm is ``omega`` everywhere."""
    s = SlerpSpec.from_endpoints(a, b)
    x = np.asarray(x, dtype=float)
    w = s.omega
    if w < 1e-12:
        return np.zeros(x.shape + (3,))
    c0 = -w * np.cos(w * (1.0 - x)) / math.sin(w)
    c1 = w * np.cos(w * x) / math.sin(w)
    return c0[..., None] * s.a + c1[..., None] * s.b


def slerp_omega(a, b) -> float:
    return SlerpSpec.from_endpoints(a, b).omega


def hedgehog(x):
    """Radial field ``x / |x|`` for points of shape ``(3,)`` or ``(n, 3)``."""
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise OracleError("hedgehog is singular at the origin")
    return x / n


def hedgehog_rotated(Q, x):
    """``Q x / |x|`` for a constant orthogonal ``Q``."""
    return hedgehog(x) @ np.asarray(Q, dtype=float).T


def hedgehog_gradient(x, dim: int = 3):
    """``grad(x/|x|) = (I - u u^T)/|x|`` restricted to the first ``dim`` axes.

    Returns ``G[..., i, j] = d u_i / d x_j`` with shape ``(..., 3, 3)``.
    """
    x = np.array(x, dtype=float)
    x[..., dim:] = 0.0
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise OracleError("hedgehog is singular at the origin")
    u = x / r[..., None]
    P = np.diag([1.0] * dim + [0.0] * (3 - dim))
    return (P - u[..., :, None] * u[..., None, :]) / r[..., None, None]


def rotation_z(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def hedgehog_energy_2d(rho: float, R: float) -> float:
    """``int |grad(x/|x|)|^2`` over the planar annulus ``rho < |x| < R``."""
    return 2.0 * math.pi * math.log(R / rho)


def ring_angle(r, rho: float, R: float, alpha0: float):
    """Rotation ``alpha0 log(r/R) / log(rho/R)`` of the ring solution."""
    r = np.asarray(r, dtype=float)
    lo, hi = rho * (1 - 1e-12), R * (1 + 1e-12)
    if np.any((r < lo) | (r > hi)):
        raise OracleError(f"radius outside the annulus [{rho}, {R}]")
    return alpha0 * np.log(r / R) / math.log(rho / R)


def ring_solution(r, theta, rho: float, R: float, alpha0: float):
    """Azimuthal field ``(-sin t, cos t)`` rotated in-plane by :func:`ring_angle`."""
    a = ring_angle(r, rho, R, alpha0)
    theta = np.asarray(theta, dtype=float)
    phi = theta + np.pi / 2 + a
    return np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)


def ring_solution_xy(points, rho: float, R: float, alpha0: float):
    p = np.asarray(points, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    r = np.clip(r, rho, R)
    return ring_solution(r, np.arctan2(p[..., 1], p[..., 0]), rho, R, alpha0)


def ring_energy(rho: float, R: float, alpha0: float) -> float:
    """Exact ``int |grad u|^2`` of the ring solution, ``2 pi (L + alpha0^2 / L)`` with ``L = log(R/rho)``."""
    L = math.log(R / rho)
    return 2.0 * math.pi * (L + alpha0 ** 2 / L)
