"""Finite-difference operators on a BoxGrid: -Delta_h, H = -Delta_h + V, resolvents.

Boundary condition is Dirichlet (the ghost nodes just outside the box are
zero), so -Delta_h is diagonalised by the type-I discrete sine transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy import fft
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import DimensionMismatch, SingularShift
from .grid import BoxGrid, RadialGrid, SampledField

DENSE_CAP = 4096
SYMMETRY_FLAGS = (None, "complex-symmetric", "hermitian")


@dataclass(frozen=True)
class ComplexOperator:
    """A discretised operator held as a dense array, sparse matrix or apply-only form."""

    data: Union[np.ndarray, sp.spmatrix, LinearOperator]
    symmetry: Optional[str] = None

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_FLAGS:
            raise ValueError(f"unknown symmetry flag {self.symmetry!r}")
        if self.data.shape[0] != self.data.shape[1]:
            raise DimensionMismatch("operator must be square")
        if self.symmetry and not isinstance(self.data, LinearOperator):
            A = self.data
            B = A.T if self.symmetry == "complex-symmetric" else A.conj().T
            diff = abs(A - B).max()
            scale = max(abs(A).max(), 1.0)
            if diff > 1e-13 * scale:
                raise ValueError(f"symmetry flag {self.symmetry} does not hold (defect {diff:g})")

    @property
    def order(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_explicit(self) -> bool:
        return not isinstance(self.data, LinearOperator)

    def matvec(self, v):
        return self.data @ v if self.is_explicit else self.data.matvec(v)

    def rmatvec(self, v):
        """Apply the conjugate transpose."""
        if self.is_explicit:
            return self.data.conj().T @ v
        return self.data.rmatvec(v)

    def linear_operator(self) -> LinearOperator:
        return aslinearoperator(self.data)

    def toarray(self) -> np.ndarray:
        if isinstance(self.data, np.ndarray):
            return self.data
        if sp.issparse(self.data):
            if self.order > DENSE_CAP:
                raise MemoryError(f"order {self.order} exceeds the dense cap {DENSE_CAP}")
            return self.data.toarray()
        raise TypeError("apply-only operator has no dense form")

    def bandwidth(self) -> Optional[int]:
        if sp.issparse(self.data):
            A = self.data.tocoo()
            return int(np.max(np.abs(A.row - A.col))) if A.nnz else 0
        return None


def _laplacian_1d(n, h):
    main = np.full(n, 2.0 / h ** 2)
    off = np.full(n - 1, -1.0 / h ** 2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian_sparse(grid: BoxGrid) -> sp.csr_matrix:
    T = _laplacian_1d(grid.n, grid.h)
    eye = sp.identity(grid.n, format="csr")
    out = None
    for axis in range(grid.dim):
        term = None
        for k in range(grid.dim):
            f = T if k == axis else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        out = term if out is None else out + term
    return out.astype(complex).tocsr()


def laplacian_matrix(grid: BoxGrid) -> ComplexOperator:
    """-Delta_h: diagonal 2d/h^2, -1/h^2 between axis neighbours."""
    return ComplexOperator(laplacian_sparse(grid), "hermitian")


def laplacian_eigenvalues(grid: BoxGrid) -> np.ndarray:
    """Closed-form spectrum of -Delta_h as an array of shape grid.shape."""
    k = np.arange(1, grid.n + 1)
    mu = (2.0 - 2.0 * np.cos(k * np.pi / (grid.n + 1))) / grid.h ** 2
    mesh = np.meshgrid(*([mu] * grid.dim), indexing="ij")
    return sum(mesh)


def hamiltonian(grid: BoxGrid, field: SampledField) -> ComplexOperator:
    if field.grid != grid:
        raise DimensionMismatch("field was sampled on a different grid")
    H = laplacian_sparse(grid) + sp.diags(field.values, 0, format="csr")
    return ComplexOperator(H.tocsr(), "hermitian" if field.is_real else "complex-symmetric")


def radial_hamiltonian(potential, grid: RadialGrid) -> ComplexOperator:
    """s-wave operator -u'' + V(r) u on (0, R), u(0) = u(R) = 0, for a radial V in d = 3."""
    T = _laplacian_1d(grid.n, grid.h).astype(complex)
    v = potential.radial_profile(grid.r)
    H = (T + sp.diags(v, 0)).tocsr()
    return ComplexOperator(H, "hermitian" if np.all(v.imag == 0) else "complex-symmetric")


class LatticeResolvent:
    """(-Delta_h - lam)^{-1} through the sine transform; factorisation cached per shift."""

    def __init__(self, grid: BoxGrid, lam: complex, tol: float = 1e-8):
        self.grid = grid
        self.lam = complex(lam)
        self.mu = laplacian_eigenvalues(grid)
        gap = np.min(np.abs(self.mu - self.lam))
        if gap < tol:
            raise SingularShift(f"lambda={self.lam} is within {gap:.3g} of the lattice spectrum")
        self._inv = 1.0 / (self.mu - self.lam)
        self._lap = None

    def _transform(self, v, mult):
        a = np.asarray(v, dtype=complex).reshape(self.grid.shape)
        c = fft.dstn(a, type=1, norm="ortho")
        return fft.idstn(c * mult, type=1, norm="ortho").ravel()

    def apply(self, v):
        return self._transform(v, self._inv)

    def apply_adjoint(self, v):
        return self._transform(v, np.conj(self._inv))

    def solve(self, rhs, max_refine: int = 3, rtol: float = 1e-12):
        rhs = np.asarray(rhs, dtype=complex).ravel()
        u = self.apply(rhs)
        nb = np.linalg.norm(rhs)
        if nb == 0:
            return u
        if self._lap is None:
            self._lap = laplacian_sparse(self.grid)
        for _ in range(max_refine):
            r = rhs - (self._lap @ u - self.lam * u)
            if np.linalg.norm(r) <= rtol * nb:
                break
            u = u + self.apply(r)
        return u

    def operator(self) -> ComplexOperator:
        N = self.grid.size
        lo = LinearOperator((N, N), matvec=self.apply, rmatvec=self.apply_adjoint, dtype=complex)
        return ComplexOperator(lo, "complex-symmetric")


def resolvent_solve(grid: BoxGrid, lam: complex, rhs) -> np.ndarray:
    """u with (-Delta_h - lam) u = rhs, residual <= 1e-10 ||rhs||."""
    return LatticeResolvent(grid, lam).solve(rhs)
