import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import aslinearoperator

from bsbounds.errors import InvalidParameter
from bsbounds.grid import BoxGrid, sample
from bsbounds.lattice_op import DENSE_CAP, hamiltonian, laplacian_eigenvalues, laplacian_matrix
from bsbounds.linalg_eig import (eigs_dense, nearest_eig, op_norm_2, op_norm_2_info,
                                 pq_norm_estimate, pq_norm_estimate_info)
from bsbounds.potentials import make_family


def test_diagonal():
    s = eigs_dense(np.diag([3.0, 1j, -2.0]))
    assert np.allclose(s.eigenvalues, [-2.0, 1j, 3.0])
    assert s.accepted.all()


def test_defective_block_keeps_multiplicity():
    s = eigs_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert len(s) == 2
    assert np.allclose(s.eigenvalues, 0, atol=1e-7)


def test_laplacian_uses_tridiagonal_path():
    g = BoxGrid(1, 1.0, 50)
    s = eigs_dense(laplacian_matrix(g))
    assert s.method == "tridiagonal-ql"
    exact = np.sort(laplacian_eigenvalues(g))
    assert np.allclose(s.eigenvalues.real, exact, rtol=1e-10)


def test_complex_tridiagonal_against_lapack():
    g = BoxGrid(1, 5.0, 300)
    V = make_family("complex_gaussian", {"amplitude": -3 + 2j, "width": 1.0})
    H = hamiltonian(g, sample(V, g))
    ql = eigs_dense(H)
    ref = np.linalg.eigvals(H.toarray())
    ref = ref[np.lexsort((ref.imag, ref.real))]
    assert ql.method == "tridiagonal-ql"
    assert np.max(np.abs(ql.eigenvalues - ref)) <= 1e-8 * np.abs(ref).max()


def test_dense_cap():
    A = sp.random(DENSE_CAP + 1, DENSE_CAP + 1, density=1e-4, format="csr", random_state=0)
    A = A + sp.identity(DENSE_CAP + 1) + sp.eye(DENSE_CAP + 1, k=3)
    with pytest.raises(MemoryError):
        eigs_dense(A)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(3, 30))
def test_residuals_small(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    s = eigs_dense(A)
    assert s.accepted.all()
    assert np.isclose(s.eigenvalues.sum(), np.trace(A), rtol=1e-9, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 25))
def test_op_norm_matches_svd(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    est = op_norm_2_info(A, seed=1, maxiter=100000, tol=1e-12)
    assert est.value == pytest.approx(np.linalg.norm(A, 2), rel=1e-5)


def test_op_norm_of_zero():
    assert op_norm_2(np.zeros((4, 4))) == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_nearest_eig_matches_argmin(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(20, 20)) + 1j * rng.normal(size=(20, 20))
    t = complex(*rng.normal(size=2) * 3)
    lams = np.linalg.eigvals(A)
    expected = lams[np.argmin(np.abs(lams - t))]
    assert abs(nearest_eig(A, t) - expected) <= 1e-9 * max(1, abs(expected))


def test_nearest_eig_tie_prefers_smaller_modulus():
    A = np.diag([1.0, 3.0, 5.0]).astype(complex)
    assert nearest_eig(A, 2.0) == pytest.approx(1.0)


def test_nearest_eig_exact_hit():
    A = np.diag([1.0, 2.0, 5.0]).astype(complex)
    assert nearest_eig(A, 2.0) == pytest.approx(2.0)


def test_nearest_eig_sparse():
    g = BoxGrid(2, 1.0, 20)
    mu = np.sort(laplacian_eigenvalues(g).ravel())
    t = mu[7] + 0.1
    got = nearest_eig(laplacian_matrix(g), t)
    assert got == pytest.approx(mu[np.argmin(np.abs(mu - t))], rel=1e-10)


def test_pq_reduces_to_operator_norm_at_p_equal_q_2():
    rng = np.random.default_rng(3)
    g = BoxGrid(1, 1.0, 40)
    A = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
    est = pq_norm_estimate(A, g, 2.0, 2.0, starts=4)
    assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_pq_monotone_in_starts():
    rng = np.random.default_rng(5)
    g = BoxGrid(1, 1.0, 30)
    A = aslinearoperator(rng.normal(size=(30, 30)) + 0j)
    a = pq_norm_estimate_info(A, g, 1.5, 3.0, starts=2, seed=9)
    b = pq_norm_estimate_info(A, g, 1.5, 3.0, starts=6, seed=9)
    assert b.value >= a.value
    assert b.per_start[:2] == a.per_start


def test_pq_is_a_lower_bound_on_diagonal_operator():
    # for a diagonal map the p->q norm (q >= p) is the largest entry times h^{d/q-d/p}
    g = BoxGrid(1, 1.0, 16)
    D = np.diag(np.linspace(1, 2, 16))
    est = pq_norm_estimate(D, g, 1.5, 3.0, starts=8)
    exact = 2.0 * g.h ** (1 / 3 - 1 / 1.5)
    assert est <= exact * (1 + 1e-9)
    assert est == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("p,q,field", [(1.0, 3.0, "p"), (2.5, 3.0, "p"), (1.5, 1.8, "q")])
def test_pq_range(p, q, field):
    with pytest.raises(InvalidParameter) as exc:
        pq_norm_estimate(np.eye(3), BoxGrid(1, 1.0, 3), p, q)
    assert exc.value.field == field
