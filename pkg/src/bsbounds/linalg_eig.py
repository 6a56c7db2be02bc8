"""Eigenvalues, 2-norms and L_p -> L_q norm estimates for discretised operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator, eigs as arpack_eigs, splu

from ._tridiag import ql_eigenvalues
from .errors import InvalidParameter
from .grid import BoxGrid
from .lattice_op import DENSE_CAP, ComplexOperator

POWER_MAXITER = 10_000
POWER_TOL = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass
class Spectrum:
    """Eigenvalues with residuals ||A v - lam v|| / ||v|| and per-eigenvalue flags.

    ``accepted`` marks residuals within RESIDUAL_TOL * ||A||; ``stable`` is
    filled in by callers that compare against a refined discretisation.
    """

    eigenvalues: np.ndarray
    residuals: np.ndarray
    accepted: np.ndarray
    vectors: Optional[np.ndarray] = field(default=None, repr=False)
    stable: Optional[np.ndarray] = None
    method: str = "lapack"

    def __len__(self):
        return len(self.eigenvalues)


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int
    vector: Optional[np.ndarray] = None


def _as_linop(A):
    if isinstance(A, ComplexOperator):
        return A.linear_operator()
    if isinstance(A, LinearOperator):
        return A
    return aslinearoperator(A)


def _norm1(A):
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max())
    return float(np.abs(A).sum(axis=0).max())


def _tridiagonal_parts(A):
    """(diag, off) when A is complex-symmetric tridiagonal, else None."""
    if not sp.issparse(A):
        return None
    A = A.tocsr()
    d0 = A.diagonal(0)
    d1 = A.diagonal(1)
    if not np.array_equal(d1, A.diagonal(-1)):
        return None
    coo = A.tocoo()
    if coo.nnz and np.max(np.abs(coo.row - coo.col)) > 1:
        return None
    return np.ascontiguousarray(d0, dtype=complex), np.ascontiguousarray(d1, dtype=complex)


def _tridiag_vectors(d0, d1, lams, scale, seed=0):
    """Right eigenvectors by two steps of inverse iteration on the banded system."""
    n = d0.size
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = d1
    ab[2, :-1] = d1
    V = np.empty((n, lams.size), dtype=complex)
    for k, lam in enumerate(lams):
        ab[1] = d0 - (lam + 1e-14 * scale)
        x = b
        for _ in range(2):
            x = sla.solve_banded((1, 1), ab, x, check_finite=False)
            nx = np.linalg.norm(x)
            if not np.isfinite(nx) or nx == 0:
                break
            x = x / nx
        V[:, k] = x
    return V


def _tridiag_apply(d0, d1, V):
    out = d0[:, None] * V
    out[:-1] += d1[:, None] * V[1:]
    out[1:] += d1[:, None] * V[:-1]
    return out


def eigs_dense(A, vectors: bool = True) -> Spectrum:
    """All eigenvalues of A (with multiplicity) and their residuals.

    Complex-symmetric tridiagonal input takes the O(n^2) QL path; everything
    else goes through LAPACK (Hessenberg reduction + shifted QR).
    """
    data = A.data if isinstance(A, ComplexOperator) else A
    if isinstance(data, LinearOperator):
        raise TypeError("eigs_dense needs an explicit matrix")
    n = data.shape[0]
    if n > DENSE_CAP and _tridiagonal_parts(data) is None:
        raise MemoryError(f"order {n} exceeds the dense cap {DENSE_CAP}")
    scale = max(_norm1(data), 1e-300)

    parts = _tridiagonal_parts(data)
    if parts is not None:
        d0, d1 = parts
        lams, ok = ql_eigenvalues(d0, d1)
        if ok:
            V = _tridiag_vectors(d0, d1, lams, scale)
            R = _tridiag_apply(d0, d1, V) - V * lams[None, :]
            res = np.linalg.norm(R, axis=0) / np.linalg.norm(V, axis=0)
            accepted = res <= RESIDUAL_TOL * scale
            if np.all(accepted):
                order = np.lexsort((lams.imag, lams.real))
                return Spectrum(lams[order], res[order], accepted[order],
                                V[:, order] if vectors else None, method="tridiagonal-ql")
        # breakdown or poor residuals: fall through to LAPACK

    M = data.toarray() if sp.issparse(data) else np.asarray(data, dtype=complex)
    lams, V = sla.eig(M)
    R = M @ V - V * lams[None, :]
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(V, axis=0)
    order = np.lexsort((lams.imag, lams.real))
    accepted = res <= RESIDUAL_TOL * scale
    return Spectrum(lams[order], res[order], accepted[order],
                    V[:, order] if vectors else None, method="lapack")


def op_norm_2_info(A, seed: int = 0, maxiter: int = POWER_MAXITER, tol: float = POWER_TOL,
                   start=None, return_vector: bool = False) -> NormEstimate:
    """Largest singular value by power iteration on A^H A.

    Stops when the estimate changes by at most ``tol`` relative between steps.
    """
    op = _as_linop(A)
    n = op.shape[1]
    if start is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        v = np.asarray(start, dtype=complex).copy()
    v /= np.linalg.norm(v)
    sigma = 0.0
    for k in range(1, maxiter + 1):
        w = op.matvec(v)
        s_new = float(np.linalg.norm(w))
        if s_new == 0.0:
            return NormEstimate(0.0, True, k, v if return_vector else None)
        z = op.rmatvec(w)
        nz = np.linalg.norm(z)
        v = z / nz
        if abs(s_new - sigma) <= tol * s_new:
            return NormEstimate(max(s_new, float(np.sqrt(nz))), True, k,
                                v if return_vector else None)
        sigma = s_new
    return NormEstimate(max(sigma, float(np.sqrt(nz))), False, maxiter,
                        v if return_vector else None)


def op_norm_2(A, seed: int = 0) -> float:
    return op_norm_2_info(A, seed=seed).value


def _nearest_from(lams, target):
    d = np.abs(lams - target)
    dmin = d.min()
    ties = np.flatnonzero(d <= dmin * (1 + 1e-12) + 1e-300)
    return complex(lams[ties[np.argmin(np.abs(lams[ties]))]])


def nearest_eig(A, target: complex, maxiter: int = 300) -> complex:
    """Eigenvalue of A closest to ``target``.

    Explicit matrices: shift-invert iteration, falling back to a full dense
    eigensolve when it stalls (for instance on equidistant eigenvalues, where
    the smaller |mu| wins).  Apply-only operators: nearest among the
    largest-magnitude Ritz values from ARPACK.
    """
    target = complex(target)
    data = A.data if isinstance(A, ComplexOperator) else A
    if isinstance(data, LinearOperator):
        n = data.shape[0]
        k = min(6, n - 2)
        lams = arpack_eigs(data, k=k, which="LM", return_eigenvectors=False, tol=1e-10)
        return _nearest_from(np.asarray(lams), target)

    n = data.shape[0]
    scale = max(_norm1(data), 1e-300)
    if n <= 2:
        return _nearest_from(eigs_dense(data, vectors=False).eigenvalues, target)
    shift = target
    try:
        if sp.issparse(data):
            lu = splu((data - shift * sp.identity(n, format="csc")).tocsc())
            solve = lu.solve
        else:
            M = np.asarray(data, dtype=complex)
            with warnings.catch_warnings():
                # an exactly singular shift is detected below by overflow
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(M - shift * np.eye(n), check_finite=False)
            solve = lambda b: sla.lu_solve(lu, b, check_finite=False)
    except (RuntimeError, ValueError, sla.LinAlgError):
        solve = None

    if solve is not None:
        rng = np.random.default_rng(0)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x /= np.linalg.norm(x)
        mu_old = None
        with np.errstate(all="ignore"):
            for _ in range(maxiter):
                y = solve(x)
                ny = np.linalg.norm(y)
                if not np.isfinite(ny):
                    # target is (numerically) an eigenvalue
                    return target
                x = y / ny
                Ax = data @ x
                mu = complex(np.vdot(x, Ax))
                if mu_old is not None and abs(mu - mu_old) <= 1e-14 * scale:
                    if np.linalg.norm(Ax - mu * x) <= RESIDUAL_TOL * scale:
                        return mu
                    break
                mu_old = mu
    return _nearest_from(eigs_dense(data, vectors=False).eigenvalues, target)


def _duality(v, r):
    a = np.abs(v)
    out = np.zeros_like(v)
    nz = a > 0
    out[nz] = a[nz] ** (r - 2) * v[nz]
    return out


class PQEstimate(NamedTuple):
    value: float
    converged: bool
    per_start: tuple


def pq_norm_estimate_info(operator, grid: BoxGrid, p: float, q: float, starts: int = 8,
                          seed: int = 0, maxiter: int = 300, tol: float = 1e-9) -> PQEstimate:
    """Lower bound on the discrete L_p -> L_q norm by Boyd's nonlinear power method.

    Norms carry the volume factor: ||v||_p = (h^d sum |v|^p)^(1/p).  Start
    vectors are complex Gaussians drawn in sequence from one seeded stream,
    so adding starts never lowers the estimate.
    """
    if not (1 < p <= 2):
        raise InvalidParameter("p", f"need 1 < p <= 2, got {p}")
    if not q >= 2:
        raise InvalidParameter("q", f"need q >= 2, got {q}")
    if starts < 1:
        raise InvalidParameter("starts", "need at least one start")
    op = _as_linop(operator)
    n = op.shape[1]
    d = grid.dim
    c = grid.h ** (d / q - d / p)
    p_dual = p / (p - 1)
    rng = np.random.default_rng(seed)
    best, all_conv, vals = 0.0, True, []
    for _ in range(starts):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x /= np.linalg.norm(x, p)
        val, conv = 0.0, False
        for _ in range(maxiter):
            y = c * op.matvec(x)
            z = c * op.rmatvec(_duality(y, q))
            xn = _duality(z, p_dual)
            nx = np.linalg.norm(xn, p)
            if nx == 0:
                conv = True
                break
            x = xn / nx
            new = float(np.linalg.norm(c * op.matvec(x), q))
            if abs(new - val) <= tol * new:
                val, conv = new, True
                break
            val = new
        vals.append(val)
        all_conv &= conv
        best = max(best, val)
    return PQEstimate(best, all_conv, tuple(vals))


def pq_norm_estimate(operator, grid: BoxGrid, p: float, q: float, starts: int = 8,
                     seed: int = 0) -> float:
    return pq_norm_estimate_info(operator, grid, p, q, starts, seed).value
