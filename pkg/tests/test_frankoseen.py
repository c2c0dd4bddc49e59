import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from fiberfo import oracles
from fiberfo.frankoseen import (BoundaryDataError, DivergenceError, SolverConfig, assemble_system,
                                constant_initial_guess, energy, harmonic_initial_guess, l2_norm, lambda_field,
                                norm_deviation, ppgd_solve, project_sphere, residual)
from fiberfo.linalg import PreconditionerSpec
from fiberfo.mesh import generate_annulus, generate_interval, generate_unit_square

A_VEC, B_VEC = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def slerp_system():
    m = generate_interval(16)
    return assemble_system(m, {"left": A_VEC, "right": B_VEC})


def test_interval_solution_is_nodally_exact(slerp_system):
    d0 = constant_initial_guess(slerp_system, (1, 1, 0))
    d, log = ppgd_solve(slerp_system, d0)
    assert log.converged and log.iterations <= 15
    exact = oracles.slerp(A_VEC, B_VEC, slerp_system.mesh.vertices[:, 0])
    np.testing.assert_allclose(d, exact, atol=1e-7)


@pytest.mark.parametrize("pc", ["amg", "amg(V)", "direct", "cg-inner(30)"])
def test_preconditioners_agree(slerp_system, pc):
    d0 = constant_initial_guess(slerp_system, (1, 1, 0))
    d, log = ppgd_solve(slerp_system, d0, SolverConfig(preconditioner=pc))
    assert log.converged
    np.testing.assert_allclose(d, oracles.slerp(A_VEC, B_VEC, slerp_system.mesh.vertices[:, 0]), atol=1e-7)


def test_unit_norm_and_dirichlet_preserved(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    d, log = ppgd_solve(s, constant_initial_guess(s, (1, 0)))
    assert log.converged
    assert norm_deviation(d, s.free) <= 2e-8
    np.testing.assert_array_equal(d[s.dirichlet_mask], s.dirichlet_values[s.dirichlet_mask])
    assert len(log.residuals) == len(log.energies) == log.iterations + 1
    assert log.residuals[-1] <= 1e-8 * log.residuals[0]


def test_solve_is_deterministic(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    outs = [ppgd_solve(s, constant_initial_guess(s, (1, 0))) for _ in range(2)]
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    assert outs[0][1].to_csv() == outs[1][1].to_csv()


rotations = st.integers(0, 2**31 - 1).map(lambda s: Rotation.random(random_state=s).as_matrix())


@given(rotations, st.integers(0, 2**31 - 1))
def test_energy_rotation_invariant(Q, seed):
    m = generate_unit_square(5)
    s = assemble_system(m, {"left": (1, 0, 0)})
    d = np.random.default_rng(seed).standard_normal((m.n_vertices, 3))
    e = energy(d, s.A)
    assert abs(energy(d @ Q.T, s.A) - e) <= 1e-12 * max(1.0, e)


@settings(max_examples=8)
@given(rotations)
def test_solver_rotation_equivariant(Q):
    m = generate_unit_square(6)
    bc = {"left": np.array([0.0, -1.0, 0.0]), "right": np.array([0.0, 0.6, 0.8])}
    s = assemble_system(m, bc)
    sq = assemble_system(m, {k: Q @ v for k, v in bc.items()})
    d0 = constant_initial_guess(s, (1, 0, 0))
    d, log = ppgd_solve(s, d0)
    dq, logq = ppgd_solve(sq, d0 @ Q.T)
    assert log.converged and logq.converged
    np.testing.assert_allclose(dq, d @ Q.T, atol=1e-6)


@given(st.integers(0, 2**31 - 1))
def test_tangential_residual_orthogonal_to_director(seed):
    m = generate_unit_square(4)
    s = assemble_system(m, {"left": (1, 0, 0)})
    d = project_sphere(np.random.default_rng(seed).standard_normal((m.n_vertices, 3)))
    r = residual(d, s)
    np.testing.assert_allclose(np.einsum("ij,ij->i", r, d), 0.0, atol=1e-10)
    assert np.all(r[s.dirichlet_mask] == 0)


def test_hedgehog_interpolant_residual_vanishes_under_refinement():
    vals = []
    for n in (32, 64):
        m = generate_annulus(0.25, 1.0, n)
        s = assemble_system(m, {"inner": oracles.hedgehog, "outer": oracles.hedgehog})
        vals.append(l2_norm(residual(oracles.hedgehog(m.vertices), s, "recovered"), s.n_free_dofs))
    assert vals[1] < vals[0] / 4


def test_hedgehog_lagrange_multiplier():
    m = generate_annulus(0.25, 1.0, 64)
    s = assemble_system(m, {"inner": oracles.hedgehog})
    lam = lambda_field(m, oracles.hedgehog(m.vertices)).values
    inner = np.ones(m.n_vertices, dtype=bool)
    inner[m.boundary_vertices()] = False
    r2 = np.sum(m.vertices[inner, :2] ** 2, axis=1)
    # second-order agreement away from the rims, where the recovered gradient is one-sided
    np.testing.assert_allclose(lam[inner], -0.5 / r2, rtol=1e-2)


def test_project_sphere():
    np.testing.assert_allclose(project_sphere(np.array([3.0, 4.0, 0.0]), 0.0), [0.6, 0.8, 0.0])
    np.testing.assert_array_equal(project_sphere(np.zeros((2, 3))), 0.0)


def test_maxit_returns_last_iterate(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    d, log = ppgd_solve(s, constant_initial_guess(s, (1, 0)), SolverConfig(maxit=2))
    assert log.status == "maxit" and log.iterations == 2
    assert "above target" in log.message
    assert np.all(np.isfinite(d))


def test_divergence_on_nan_data(square8):
    s = assemble_system(square8, {"left": (np.nan, 0, 0)})
    with pytest.raises(DivergenceError, match="not finite") as exc:
        ppgd_solve(s, constant_initial_guess(s, (1, 0)))
    assert exc.value.log.status == "diverged"


def test_divergence_guard(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    # a guard factor below one trips as soon as the residual fails to drop
    with pytest.raises(DivergenceError, match="exceeds"):
        ppgd_solve(s, constant_initial_guess(s, (1, 0)), SolverConfig(divergence_factor=1e-3))


def test_log_csv(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    _, log = ppgd_solve(s, constant_initial_guess(s, (1, 0)), SolverConfig(maxit=3))
    lines = log.to_csv().splitlines()
    assert lines[0] == "iteration,residual,energy,max_norm_dev"
    assert len(lines) == 5


def test_callback_sees_every_iteration(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    seen = []
    _, log = ppgd_solve(s, constant_initial_guess(s, (1, 0)), callback=lambda k, d, r: seen.append(k))
    assert seen == list(range(1, log.iterations + 1))


@pytest.mark.parametrize("kw,match", [({"epsilon": 0}, "epsilon"), ({"rtol": 2.0}, "rtol"), ({"maxit": 0}, "maxit"),
                                      ({"nitsche_C": -1}, "nitsche_C"), ({"residual": "exact"}, "residual"),
                                      ({"preconditioner": "ilu"}, "unknown preconditioner")])
def test_config_validation(kw, match):
    with pytest.raises(ValueError, match=match):
        SolverConfig(**kw)


def test_config_defaults():
    c = SolverConfig()
    assert (c.epsilon, c.nitsche_C, c.rtol, c.maxit) == (1e-8, 10.0, 1e-8, 500)
    assert c.preconditioner == PreconditionerSpec("amg", cycle="W")
    assert c.to_dict()["preconditioner"] == "amg(W)"


def test_assembly_errors(square8):
    with pytest.raises(BoundaryDataError, match="'endo' not found"):
        assemble_system(square8, {"endo": (1, 0, 0)})
    with pytest.raises(BoundaryDataError, match="both Dirichlet and Nitsche"):
        assemble_system(square8, {"top": (1, 0, 0)}, nitsche_tags=("top",))
    with pytest.raises(BoundaryDataError, match="cancelling"):
        assemble_system(square8, {"left": (1, 0, 0), "bottom": (-1, 0, 0)})
    with pytest.raises(BoundaryDataError, match="keyword"):
        assemble_system(square8, {"left": "tangent"})


def test_shared_vertex_gets_normalized_sum(square8):
    s = assemble_system(square8, {"left": (1, 0, 0), "bottom": (0, 1, 0)})
    corner = int(np.flatnonzero(np.all(square8.vertices == 0, axis=1))[0])
    np.testing.assert_allclose(s.dirichlet_values[corner], [math.sqrt(0.5), math.sqrt(0.5), 0])


def test_normal_dirichlet_keyword(square8):
    s = assemble_system(square8, {"left": "normal", "right": "-normal"})
    left = square8.vertices_of("left")
    interior_left = left[(square8.vertices[left, 1] > 0) & (square8.vertices[left, 1] < 1)]
    np.testing.assert_allclose(s.dirichlet_values[interior_left], [[-1, 0, 0]] * len(interior_left), atol=1e-14)


def test_nitsche_enforces_tangency_weakly():
    # the left data (0,1,0) contradict d.N = 0 at the top-left corner, so only
    # the middle of the edge is checked
    for n in (8, 16):
        m = generate_unit_square(n)
        s = assemble_system(m, {"left": (0.0, 1.0, 0.0), "right": (1.0, 0.0, 0.0)}, nitsche_tags=("top",))
        d, log = ppgd_solve(s, harmonic_initial_guess(s))
        assert log.converged
        top = m.vertices_of("top")
        mid = top[(m.vertices[top, 0] >= 0.25) & (m.vertices[top, 0] <= 0.75)]
        assert np.abs(d[mid, 1]).max() < 5e-3
        # without the constraint the director leaves the edge plane
        s0 = assemble_system(m, {"left": (0.0, 1.0, 0.0), "right": (1.0, 0.0, 0.0)})
        d_free, _ = ppgd_solve(s0, harmonic_initial_guess(s0))
        assert np.abs(d_free[mid, 1]).max() > 0.1


def test_harmonic_initial_guess(square8):
    s = assemble_system(square8, {"left": (0, -1), "right": (0, 1)})
    d0 = harmonic_initial_guess(s)
    np.testing.assert_allclose(np.linalg.norm(d0, axis=1), 1.0)
    np.testing.assert_array_equal(d0[s.dirichlet_mask], s.dirichlet_values[s.dirichlet_mask])
