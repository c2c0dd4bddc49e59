import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fiberfo import fem, oracles
from fiberfo.mesh import generate_annulus

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).map(np.array).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: v / np.linalg.norm(v))


@given(unit, unit, st.floats(0, 1))
def test_slerp_is_unit_geodesic(a, b, x):
    assume(a @ b > -0.99)
    u = oracles.slerp(a, b, x)
    assert math.isclose(np.linalg.norm(u), 1.0, rel_tol=1e-9)
    w = oracles.slerp_omega(a, b)
    # angle from a grows linearly with x
    assert math.isclose(math.acos(np.clip(u @ a, -1, 1)), w * x, abs_tol=1e-6)
    du = oracles.slerp_derivative(a, b, x)
    assert math.isclose(np.linalg.norm(du), w, rel_tol=1e-9, abs_tol=1e-7)
    assert abs(du @ u) < 1e-9


def test_slerp_endpoints_and_omega():
    a, b = (1, 0, 0), (0, 1, 0)
    np.testing.assert_allclose(oracles.slerp(a, b, [0.0, 1.0]), [a, b], atol=1e-15)
    assert oracles.slerp_omega(a, b) == pytest.approx(math.pi / 2)
    np.testing.assert_allclose(oracles.slerp(a, a, np.linspace(0, 1, 3)), [a] * 3)


def test_slerp_solves_the_1d_equation():
    # u'' = -omega^2 u, i.e. u'' + |u'|^2 u = 0
    a, b = np.array([1.0, 0, 0]), np.array([0.6, 0.8, 0])
    x, h = 0.37, 1e-4
    u2 = (oracles.slerp(a, b, x + h) - 2 * oracles.slerp(a, b, x) + oracles.slerp(a, b, x - h)) / h ** 2
    w = oracles.slerp_omega(a, b)
    np.testing.assert_allclose(u2 + w ** 2 * oracles.slerp(a, b, x), 0.0, atol=1e-5)


def test_slerp_rejects_bad_endpoints():
    with pytest.raises(oracles.OracleError, match="antipodal"):
        oracles.slerp((1, 0, 0), (-1, 0, 0), 0.5)
    with pytest.raises(oracles.OracleError, match="unit"):
        oracles.slerp((2, 0, 0), (0, 1, 0), 0.5)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.integers(2, 3))
def test_hedgehog_gradient_matches_finite_differences(x, y, z, dim):
    p = np.array([x, y, z if dim == 3 else 0.0])
    assume(np.linalg.norm(p) > 0.3)
    G = oracles.hedgehog_gradient(p, dim)
    h = 1e-6
    for j in range(dim):
        e = np.zeros(3)
        e[j] = h
        fd = (oracles.hedgehog(p + e) - oracles.hedgehog(p - e)) / (2 * h)
        np.testing.assert_allclose(G[:, j], fd, atol=1e-6)


@given(st.floats(0, 2 * math.pi))
def test_hedgehog_rotated(alpha):
    Q = oracles.rotation_z(alpha)
    p = np.array([[0.3, -0.2, 0.0], [1.0, 1.0, 0.0]])
    np.testing.assert_allclose(oracles.hedgehog_rotated(Q, p), oracles.hedgehog(p) @ Q.T)
    np.testing.assert_allclose(Q @ Q.T, np.eye(3), atol=1e-15)


def test_hedgehog_singular_at_origin():
    with pytest.raises(oracles.OracleError):
        oracles.hedgehog(np.zeros(3))


def test_hedgehog_energy_by_quadrature():
    m = generate_annulus(0.25, 1.0, 128)
    dens = lambda p: np.einsum("pij,pij->p", oracles.hedgehog_gradient(p, 2), oracles.hedgehog_gradient(p, 2))
    # polygonal annulus: agreement to the geometric approximation error
    assert fem.integrate(m, dens) == pytest.approx(oracles.hedgehog_energy_2d(0.25, 1.0), rel=1e-6)
    assert oracles.hedgehog_energy_2d(0.25, 1.0) == pytest.approx(2 * math.pi * math.log(4))


def test_ring_angle_profile():
    rho, R = 0.5, 1.0
    for a0 in (math.pi, 3 * math.pi):
        assert oracles.ring_angle(rho, rho, R, a0) == pytest.approx(a0)
        assert oracles.ring_angle(R, rho, R, a0) == pytest.approx(0.0)
        assert oracles.ring_angle(math.sqrt(rho * R), rho, R, a0) == pytest.approx(a0 / 2)
    with pytest.raises(oracles.OracleError, match="outside"):
        oracles.ring_angle(0.2, rho, R, 1.0)


@pytest.mark.parametrize("a0,expected", [(math.pi, 93.8203754), (3 * math.pi, 809.542001)])
def test_ring_energy_frozen(a0, expected):
    # values confirmed independently by adaptive 2-D quadrature of |grad u|^2
    assert oracles.ring_energy(0.5, 1.0, a0) == pytest.approx(expected, rel=1e-8)


def test_ring_solution_boundary_rotation():
    th = np.linspace(0, 2 * math.pi, 7)
    outer = oracles.ring_solution(np.ones_like(th), th, 0.5, 1.0, math.pi)
    np.testing.assert_allclose(outer[:, :2], np.stack([-np.sin(th), np.cos(th)], 1), atol=1e-14)
    inner = oracles.ring_solution(0.5 * np.ones_like(th), th, 0.5, 1.0, math.pi)
    np.testing.assert_allclose(inner, -outer, atol=1e-14)
