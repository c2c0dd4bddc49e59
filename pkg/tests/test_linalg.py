import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from fiberfo import kernels
from fiberfo.fem import assemble_stiffness_scalar
from fiberfo.linalg import (IndefiniteOperatorError, PreconditionerSetupError, PreconditionerSpec,
                            build_preconditioner, cg_solve, eliminate_dirichlet, spmv, symmetry_defect)
from fiberfo.mesh import generate_unit_square

LINEAR_KINDS = ["jacobi", "symmetric-gauss-seidel", "amg", "amg(V)", "direct"]


@pytest.fixture(scope="module")
def spd():
    m = generate_unit_square(12)
    K = assemble_stiffness_scalar(m)
    mask = np.zeros(m.n_vertices, dtype=bool)
    mask[m.vertices_of("left")] = True
    Ae, b = eliminate_dirichlet(K, np.ones(m.n_vertices), mask, np.zeros(m.n_vertices))
    return Ae, b, mask


def test_spmv_dimension_check():
    with pytest.raises(ValueError, match="dimension mismatch"):
        spmv(sp.eye(3, format="csr"), np.ones(4))


def test_eliminate_dirichlet_is_symmetric(spd):
    Ae, b, mask = spd
    assert symmetry_defect(Ae) == 0.0
    np.testing.assert_array_equal(b[mask], 0.0)
    np.testing.assert_array_equal(Ae.diagonal()[mask], 1.0)


@pytest.mark.parametrize("kind", LINEAR_KINDS + ["cg-inner(30)", None])
def test_pcg_matches_direct_solve(spd, kind):
    Ae, b, _ = spd
    M = None if kind is None else build_preconditioner(Ae, kind)
    res = cg_solve(Ae, b, M, rtol=1e-12)
    assert res.converged
    np.testing.assert_allclose(res.x, spla.spsolve(Ae.tocsc(), b), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("kind", LINEAR_KINDS)
def test_linear_preconditioners_are_symmetric(spd, kind, rng):
    Ae, _, _ = spd
    P = build_preconditioner(Ae, kind)
    a, b = rng.standard_normal((2, Ae.shape[0]))
    assert abs(a @ P.apply(b) - b @ P.apply(a)) <= 1e-10 * np.linalg.norm(a) * np.linalg.norm(b)
    assert a @ P.apply(a) > 0


def test_inner_cg_is_nonlinear(spd, rng):
    Ae, _, _ = spd
    P = build_preconditioner(Ae, "cg-inner(5)")
    assert not P.spec.is_linear
    a, b = rng.standard_normal((2, Ae.shape[0]))
    assert not np.allclose(P.apply(a + b), P.apply(a) + P.apply(b))


def test_preconditioner_on_free_subset(spd, rng):
    Ae, _, mask = spd
    P = build_preconditioner(Ae, "direct", free=~mask)
    r = rng.standard_normal(Ae.shape[0])
    z = P.apply(r)
    np.testing.assert_array_equal(z[mask], 0.0)
    Aff = Ae[~mask][:, ~mask]
    np.testing.assert_allclose(Aff @ z[~mask], r[~mask], rtol=1e-10)


def test_indefinite_operator_detected():
    A = sp.diags([1.0, -1.0, 2.0], format="csr")
    with pytest.raises(IndefiniteOperatorError, match="not positive definite"):
        cg_solve(A, np.array([1.0, 1.0, 1.0]))


def test_nonpositive_diagonal_rejected():
    A = sp.diags([1.0, 0.0, 2.0], format="csr")
    with pytest.raises(PreconditionerSetupError, match="row 1"):
        build_preconditioner(A, "jacobi")


def test_cg_reports_maxit(spd):
    Ae, b, _ = spd
    res = cg_solve(Ae, b, rtol=1e-14, maxit=2)
    assert not res.converged and res.iterations == 2


@pytest.mark.parametrize("text,expected", [("amg", "amg(W)"), ("amg(V)", "amg(V)"), ("cg-inner(12)", "cg-inner(12)"),
                                           ("sgs", "symmetric-gauss-seidel"), ("direct", "direct")])
def test_spec_parse_and_str(text, expected):
    assert str(PreconditionerSpec.parse(text)) == expected


@pytest.mark.parametrize("text", ["ilu", "amg(X)", "cg-inner(0)", "jacobi(3)", "amg(("])
def test_spec_parse_rejects(text):
    with pytest.raises(ValueError):
        PreconditionerSpec.parse(text)


@given(st.integers(3, 25), st.integers(0, 2**31 - 1))
def test_cg_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = sp.csr_matrix(B @ B.T + n * np.eye(n))
    b = rng.standard_normal(n)
    xs = [cg_solve(A, b, rtol=1e-12, backend=k).x for k in kernels.backends()]
    for x in xs:
        np.testing.assert_allclose(A @ x, b, rtol=1e-8, atol=1e-8)
