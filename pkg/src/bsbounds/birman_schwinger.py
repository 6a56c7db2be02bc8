"""Birman-Schwinger operators K(lam) = V^{1/2} (-Delta - lam)^{-1} |V|^{1/2}.

Two backends:

kernel
    Nystrom discretisation of the free resolvent kernel on the cell-centred
    grid, K_jk = s_j G(x_j - x_k) a_k h^d.  The diagonal uses the cell average
    of the kernel's singular part.  Matrix-vector products go through a
    circulant embedding and FFTs, so large 3d grids stay cheap.
lattice
    diag(s) (-Delta_h - lam)^{-1} diag(a) with the Dirichlet finite-difference
    Laplacian, applied through the discrete sine transform.

Here s = sgn(V)|V|^{1/2} and a = |V|^{1/2}.  Operators act on the support of
V only, so zero rows and columns are dropped.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import fft, special
from scipy.sparse.linalg import LinearOperator, splu

from .errors import BranchCutError, InvalidParameter, SingularShift
from .grid import BoxGrid, RadialGrid, SampledField, sample
from .lattice_op import DENSE_CAP, ComplexOperator, LatticeResolvent, hamiltonian, radial_hamiltonian
from .linalg_eig import Spectrum, eigs_dense, nearest_eig, op_norm_2_info
from .potentials import Potential

BACKENDS = ("kernel", "lattice")
BRANCH_TOL = 1e-12
CLAMP_IM = 1e-6

# int_{[-1/2,1/2]^3} |z|^-1 dz
CELL_CONST_3D = 2.3800773639795536
# int_{[-1/2,1/2]^2} log|z| dz
CELL_LOG_2D = -1.0611754268825244


def cell_constant_3d() -> float:
    """Recompute CELL_CONST_3D by adaptive quadrature.

    The cube is six pyramids with apex at the origin.  Integrating 1/|z| along
    rays first leaves (1/4) / |(1/2, u, v)| over each face.
    """
    from scipy import integrate
    val, _ = integrate.dblquad(lambda v, u: 1.0 / math.sqrt(0.25 + u * u + v * v),
                               -0.5, 0.5, -0.5, 0.5, epsabs=1e-13, epsrel=1e-13)
    return 6 * 0.25 * val


def cell_log_2d() -> float:
    """Recompute CELL_LOG_2D from the four triangles with apex at the origin.

    Integrating r log r along rays leaves a one-dimensional integral over an edge.
    """
    from scipy import integrate
    g, _ = integrate.quad(lambda u: 0.5 * math.log(0.25 + u * u), -0.5, 0.5, epsabs=1e-15)
    return -0.5 + g


def sqrt_signed(v):
    """(sgn(v)|v|^{1/2}, |v|^{1/2}) with sgn(v) = v/|v| and sgn(0) = 0.  Works elementwise."""
    v = np.asarray(v, dtype=complex)
    a = np.sqrt(np.abs(v))
    s = np.zeros_like(v)
    nz = a > 0
    s[nz] = v[nz] / a[nz]
    if s.ndim == 0:
        return complex(s), float(a)
    return s, a


def distance_to_ray(lam: complex) -> float:
    """Distance from lam to [0, inf)."""
    lam = complex(lam)
    return abs(lam.imag) if lam.real >= 0 else abs(lam)


def sqrt_upper(lam: complex) -> complex:
    """Square root with positive imaginary part, defined off [0, inf)."""
    lam = complex(lam)
    if distance_to_ray(lam) <= BRANCH_TOL:
        raise BranchCutError(f"lambda={lam} lies on [0, inf)")
    w = np.sqrt(lam)
    return complex(w if w.imag > 0 else -w)


def resolvent_kernel(d: int, lam: complex, rho):
    """Free resolvent kernel G(rho) of (-Delta - lam)^{-1} in dimension d.

    d=1: i e^{ik rho} / (2k);  d=2: (i/4) H_0^(1)(k rho);  d=3: e^{ik rho} / (4 pi rho),
    where k = sqrt_upper(lam).
    """
    if d not in (1, 2, 3):
        raise InvalidParameter("d", f"kernel available for d in (1, 2, 3), got {d}")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) and d != 1:
        raise InvalidParameter("rho", "distance must be positive")
    if np.any(rho < 0):
        raise InvalidParameter("rho", "distance must be nonnegative")
    k = sqrt_upper(lam)
    if d == 1:
        out = 1j / (2 * k) * np.exp(1j * k * rho)
    elif d == 2:
        out = 0.25j * special.hankel1(0, k * rho)
    else:
        out = np.exp(1j * k * rho) / (4 * np.pi * rho)
    return complex(out) if out.ndim == 0 else out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_X, _GL_W = _GL_X / 2, _GL_W / 2
_FACE_RHO = np.sqrt(0.25 + _GL_X[:, None] ** 2 + _GL_X[None, :] ** 2)
_FACE_W = np.outer(_GL_W, _GL_W)
_EDGE_RHO = np.sqrt(0.25 + _GL_X ** 2)


def _cube_average_3d(kappa: complex) -> complex:
    """int over the unit cube of e^{i kappa |z|} / |z|.

    Six pyramids with apex at the centre; the radial integral of r e^{i kappa r}
    is done in closed form, leaving a smooth integral over one face.
    """
    rho = _FACE_RHO
    if abs(kappa) < 1e-3:
        F = rho ** 2 / 2 + 1j * kappa * rho ** 3 / 3 - kappa ** 2 * rho ** 4 / 8
    else:
        F = np.exp(1j * kappa * rho) * (rho / (1j * kappa) + 1 / kappa ** 2) - 1 / kappa ** 2
    return complex(3 * np.sum(_FACE_W * F / rho ** 3))


def _square_average_2d(kappa: complex) -> complex:
    """int over the unit square of H_0^(1)(kappa |z|), by four triangles."""
    if abs(kappa) < 1e-4:
        return 1 + 2j / np.pi * (np.log(kappa / 2) + np.euler_gamma + CELL_LOG_2D)
    rho = _EDGE_RHO
    F = (rho * special.hankel1(1, kappa * rho) + 2j / (np.pi * kappa)) / kappa
    return complex(2 * np.sum(_GL_W * F / rho ** 2))


def cell_diagonal(d: int, lam: complex, h: float) -> complex:
    """Kernel value assigned to a node's own cell: the average of G over the cell.

    For |k| h -> 0 this tends to C/(4 pi h) + i k/(4 pi) in d = 3 and to
    i/4 - (log(k/2) + euler_gamma + log h + CELL_LOG_2D)/(2 pi) in d = 2.
    In d = 1 the kernel is bounded and its value at 0 is used.
    """
    k = sqrt_upper(lam)
    if d == 1:
        return 1j / (2 * k)
    if d == 2:
        return 0.25j * _square_average_2d(k * h)
    return _cube_average_3d(k * h) / (4 * np.pi * h)


def _offset_table(grid: BoxGrid, lam: complex) -> np.ndarray:
    """h^d G over all index offsets in (-(n-1)..n-1)^d, origin at index n-1."""
    n, h, d = grid.n, grid.h, grid.dim
    o = np.arange(-(n - 1), n) * h
    mesh = np.meshgrid(*([o] * d), indexing="ij")
    R = np.sqrt(sum(m * m for m in mesh))
    centre = (n - 1,) * d
    R[centre] = 1.0
    G = resolvent_kernel(d, lam, R)
    G[centre] = cell_diagonal(d, lam, h)
    return G * h ** d


class KernelResolvent:
    """Kernel-backend resolvent on a BoxGrid: FFT application via circulant embedding."""

    def __init__(self, grid: BoxGrid, lam: complex):
        self.grid = grid
        self.lam = complex(lam)
        self.table = _offset_table(grid, lam)
        n, d = grid.n, grid.dim
        M = 2 * n
        pad = np.zeros((M,) * d, dtype=complex)
        idx = np.arange(-(n - 1), n) % M
        pad[np.ix_(*([idx] * d))] = self.table
        self._hat = fft.fftn(pad)
        self._M = M

    def _conv(self, v, hat):
        n, d, M = self.grid.n, self.grid.dim, self._M
        z = np.zeros((M,) * d, dtype=complex)
        z[(slice(0, n),) * d] = np.asarray(v).reshape(self.grid.shape)
        out = fft.ifftn(fft.fftn(z) * hat)
        return out[(slice(0, n),) * d].ravel()

    def apply(self, v):
        return self._conv(v, self._hat)

    def apply_adjoint(self, v):
        # the kernel is symmetric, so the adjoint convolves with its conjugate
        return self._conv(v, np.conj(self._hat))

    def columns(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Dense block G[rows, cols] by table lookup."""
        n, d = self.grid.n, self.grid.dim
        ri = np.stack(np.unravel_index(rows, self.grid.shape), -1)
        ci = np.stack(np.unravel_index(cols, self.grid.shape), -1)
        diff = ri[:, None, :] - ci[None, :, :] + (n - 1)
        return self.table[tuple(diff[..., k] for k in range(d))]


def _lattice_columns(res: LatticeResolvent, cols: np.ndarray, rows: np.ndarray, chunk: int = 128):
    grid = res.grid
    out = np.empty((rows.size, cols.size), dtype=complex)
    for start in range(0, cols.size, chunk):
        sel = cols[start:start + chunk]
        E = np.zeros((sel.size, grid.size), dtype=complex)
        E[np.arange(sel.size), sel] = 1.0
        E = E.reshape((sel.size,) + grid.shape)
        axes = tuple(range(1, grid.dim + 1))
        C = fft.dstn(E, type=1, norm="ortho", axes=axes)
        C = fft.idstn(C * res._inv, type=1, norm="ortho", axes=axes)
        out[:, start:start + sel.size] = C.reshape(sel.size, grid.size)[:, rows].T
    return out


def weighted_resolvent(grid: BoxGrid, lam: complex, left, right, backend: str = "kernel",
                       support: Optional[np.ndarray] = None, dense: Optional[bool] = None):
    """diag(left) R(lam) diag(right) restricted to ``support`` (all nodes if None).

    Returns (ComplexOperator, resolvent object).  ``dense=None`` picks an
    explicit matrix when the restricted order is at most DENSE_CAP.
    """
    if backend not in BACKENDS:
        raise InvalidParameter("backend", f"expected one of {BACKENDS}, got {backend!r}")
    left = np.asarray(left, dtype=complex).ravel()
    right = np.asarray(right, dtype=complex).ravel()
    if support is None:
        support = np.arange(grid.size)
    m = support.size
    if backend == "kernel":
        res = KernelResolvent(grid, lam)
    else:
        res = LatticeResolvent(grid, lam)
    if dense is None:
        dense = m <= DENSE_CAP
    sl, sr = left[support], right[support]
    if dense:
        if backend == "kernel":
            G = res.columns(support, support)
        else:
            G = _lattice_columns(res, support, support)
        return ComplexOperator(sl[:, None] * G * sr[None, :]), res

    N = grid.size
    full = support.size == N

    def embed(v):
        if full:
            return v
        z = np.zeros(N, dtype=complex)
        z[support] = v
        return z

    def mv(v):
        v = np.asarray(v, dtype=complex).ravel()
        return sl * res.apply(embed(sr * v))[support]

    def rmv(v):
        v = np.asarray(v, dtype=complex).ravel()
        return np.conj(sr) * res.apply_adjoint(embed(np.conj(sl) * v))[support]

    lo = LinearOperator((m, m), matvec=mv, rmatvec=rmv, dtype=complex)
    return ComplexOperator(lo), res


def half_powers(potential, grid: BoxGrid, subcells: int = 1):
    """(sgn(V)|V|^{1/2}, |V|^{1/2}) on the grid.

    With subcells > 1 both factors are averaged over sub-cell midpoints, which
    is the consistent choice for piecewise-constant trial functions when |V|
    is singular inside a cell.
    """
    if isinstance(potential, SampledField):
        if potential.grid != grid:
            raise InvalidParameter("potential", "field was sampled on a different grid")
        return sqrt_signed(potential.values)
    if subcells == 1:
        return sqrt_signed(sample(potential, grid).values)
    nodes = grid.nodes()
    off = ((np.arange(subcells) + 0.5) / subcells - 0.5) * grid.h
    shifts = np.stack([m.ravel() for m in np.meshgrid(*([off] * grid.dim), indexing="ij")], -1)
    s_acc = np.zeros(grid.size, dtype=complex)
    a_acc = np.zeros(grid.size)
    for sh in shifts:
        s, a = sqrt_signed(potential(nodes + sh))
        s_acc += s
        a_acc += a
    return s_acc / len(shifts), a_acc / len(shifts)


@dataclass
class BSOperator:
    """K(lam) on the support of V, with the data needed to interpret it."""

    operator: ComplexOperator
    lam: complex
    backend: str
    grid: BoxGrid
    potential: object = field(repr=False)
    support: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return self.operator.order

    def toarray(self) -> np.ndarray:
        return self.operator.toarray()


def bs_matrix(potential, grid: BoxGrid, lam: complex, backend: str = "kernel",
              dense: Optional[bool] = None, subcells: int = 1) -> BSOperator:
    """Assemble K(lam) for a Potential (sampled on ``grid``) or a SampledField."""
    if backend not in BACKENDS:
        raise InvalidParameter("backend", f"expected one of {BACKENDS}, got {backend!r}")
    if isinstance(potential, Potential) and potential.dim != grid.dim:
        raise InvalidParameter("potential", f"dimension {potential.dim} != grid dimension {grid.dim}")
    lam = complex(lam)
    if backend == "kernel":
        sqrt_upper(lam)
    s, a = half_powers(potential, grid, subcells)
    support = np.flatnonzero(a > 0)
    if support.size == 0:
        op = ComplexOperator(np.zeros((0, 0), dtype=complex))
        return BSOperator(op, lam, backend, grid, potential, support, s, a)
    op, _ = weighted_resolvent(grid, lam, s, a, backend, support, dense)
    # K is complex-symmetric when sgn V is constant on the support
    if op.is_explicit:
        ph = s[support] / a[support]
        if np.allclose(ph, ph[0], rtol=0, atol=1e-14):
            op = ComplexOperator(op.data, "complex-symmetric")
    return BSOperator(op, lam, backend, grid, potential, support, s, a)


def bs_norm_info(K: BSOperator, seed: int = 0, start=None):
    if K.order == 0:
        return 0.0, True, None
    est = op_norm_2_info(K.operator, seed=seed, start=start, return_vector=True)
    return est.value, est.converged, est.vector


def bs_norm(K: BSOperator, seed: int = 0) -> float:
    return bs_norm_info(K, seed)[0]


def bs_distance(K: BSOperator) -> float:
    """|nearest eigenvalue of K to -1, minus (-1)|; 1 for the empty operator."""
    if K.order == 0:
        return 1.0
    if K.order <= 2 and not K.operator.is_explicit:
        raise InvalidParameter("K", "operator too small for the matrix-free path")
    mu = nearest_eig(K.operator, -1.0)
    return abs(mu + 1.0)


def detect_eigenvalue(potential, grid: BoxGrid, lam: complex, backend: str = "lattice",
                      tol: float = 1e-7, **kw):
    """(distance from -1 to spec K(lam), distance < tol)."""
    K = bs_matrix(potential, grid, lam, backend, **kw)
    dist = bs_distance(K)
    return dist, bool(dist < tol)


@dataclass(frozen=True)
class RegionRow:
    re_lambda: float
    im_lambda: float
    bs_norm: float
    dist_to_minus1: float
    flag: str


def _region_point(potential, grid, lam, backend, distances, seed, start, kw):
    flag = ""
    lam = complex(lam)
    if lam.real >= 0 and abs(lam.imag) < CLAMP_IM:
        lam = complex(lam.real, math.copysign(CLAMP_IM, lam.imag) if lam.imag else CLAMP_IM)
        flag = "clamped"
    if lam == 0:
        lam = complex(0.0, CLAMP_IM)
    try:
        K = bs_matrix(potential, grid, lam, backend, **kw)
        nrm, conv, vec = bs_norm_info(K, seed, start)
        if not conv:
            flag = (flag + ";" if flag else "") + "unconverged"
        dist = bs_distance(K) if distances else float("nan")
    except (BranchCutError, SingularShift, ArithmeticError) as exc:
        return RegionRow(lam.real, lam.imag, float("nan"), float("nan"),
                         f"error:{type(exc).__name__}"), None
    return RegionRow(lam.real, lam.imag, nrm, dist, flag), vec


def region_map(potential, grid: BoxGrid, rect: Sequence[float], res: Sequence[int],
               backend: str = "kernel", distances: bool = True, warm_start: bool = False,
               threads: int = 1, seed: int = 0, **kw) -> list:
    """bs_norm and distance to -1 on a res[0] x res[1] lattice over
    rect = (re_min, re_max, im_min, im_max).  Rows are ordered by real part
    then imaginary part regardless of ``threads``."""
    re_min, re_max, im_min, im_max = map(float, rect)
    nre, nim = int(res[0]), int(res[1])
    if nre < 1 or nim < 1:
        raise InvalidParameter("res", "resolution counts must be positive")
    res_ = np.linspace(re_min, re_max, nre) if nre > 1 else np.array([re_min])
    ims = np.linspace(im_min, im_max, nim) if nim > 1 else np.array([im_min])
    pts = [complex(x, y) for x in res_ for y in ims]
    if warm_start or threads <= 1:
        rows, start = [], None
        for lam in pts:
            row, vec = _region_point(potential, grid, lam, backend, distances, seed,
                                     start if warm_start else None, kw)
            rows.append(row)
            if warm_start and vec is not None:
                start = vec
        return rows
    with ThreadPoolExecutor(max_workers=threads) as ex:
        out = list(ex.map(lambda lam: _region_point(potential, grid, lam, backend,
                                                    distances, seed, None, kw)[0], pts))
    return out


def outer_mass(grid: BoxGrid, vectors: np.ndarray, shell: float = 0.75) -> np.ndarray:
    """Fraction of |v|^2 on nodes with max-norm coordinate >= shell * L, per column."""
    outer = np.max(np.abs(grid.nodes()), axis=-1) >= shell * grid.L
    w = np.abs(vectors) ** 2
    return w[outer].sum(axis=0) / w.sum(axis=0)


def _refine_eigenvalue(H2, lam):
    n = H2.shape[0]
    lu = splu((H2 - lam * sp.identity(n, format="csc")).tocsc())
    x = np.ones(n, dtype=complex)
    mu_old = None
    for _ in range(200):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        mu = complex(np.vdot(x, H2 @ x))
        if mu_old is not None and abs(mu - mu_old) <= 1e-13 * max(abs(mu), 1.0):
            break
        mu_old = mu
    return mu


def continuum_eigenvalues(potential, grid: BoxGrid, rel_tol: float = 0.05,
                          ray_factor: float = 10.0, max_outer: float = 0.05,
                          shell: float = 0.75, max_lam_h2: float = 1.0,
                          check_box: bool = True, keep_unstable: bool = False) -> Spectrum:
    """Eigenvalues of the lattice Hamiltonian that pass the pollution filter.

    Accepted: distance to [0, inf) above ray_factor * h^2, relative change
    below rel_tol when the same eigenvalue is tracked on the 2n grid, and at
    most ``max_outer`` of the eigenvector's mass near the box boundary (box
    modes of a complex well otherwise pass the first two gates).  Eigenvalues
    with |lam| h^2 > max_lam_h2 are dropped as well: near the top of the
    lattice band the 2n grid has eigenvalues everywhere, so tracking cannot
    tell them apart.

    With check_box the eigenvalue must also move by less than rel_tol when
    tracked on the box of twice the half-width at the same spacing.  This
    removes weakly bound modes whose decay length exceeds the box: the
    lowest Dirichlet box mode keeps only about 4% of its mass in the outer
    shell, so the shell gate does not catch it.

    With keep_unstable every eigenvalue off the ray gate is returned and
    ``stable`` records whether it passed the remaining gates.
    """
    field = sample(potential, grid)
    H = hamiltonian(grid, field)
    spec = eigs_dense(H, vectors=True)
    lams = spec.eigenvalues
    off_ray = np.flatnonzero([distance_to_ray(z) > ray_factor * grid.h ** 2 for z in lams])
    ok = spec.accepted[off_ray] & (np.abs(lams[off_ray]) * grid.h ** 2 <= max_lam_h2)
    if off_ray.size:
        ok &= outer_mass(grid, spec.vectors[:, off_ray], shell) <= max_outer
    if np.any(ok):
        g2 = grid.refined()
        H2 = hamiltonian(g2, sample(potential, g2)).data
        for j in np.flatnonzero(ok):
            lam = lams[off_ray[j]]
            ok[j] = abs(_refine_eigenvalue(H2, lam) - lam) < rel_tol * abs(lam)
    if check_box and np.any(ok):
        gL = grid.enlarged()
        HL = hamiltonian(gL, sample(potential, gL)).data
        for j in np.flatnonzero(ok):
            lam = lams[off_ray[j]]
            ok[j] = abs(_refine_eigenvalue(HL, lam) - lam) < rel_tol * abs(lam)
    sel = off_ray if keep_unstable else off_ray[ok]
    stable = ok if keep_unstable else np.ones(sel.size, dtype=bool)
    return Spectrum(lams[sel], spec.residuals[sel], spec.accepted[sel],
                    spec.vectors[:, sel], stable, spec.method)


def radial_spectrum(potential, grid: RadialGrid) -> np.ndarray:
    """Eigenvalues of the s-wave operator -u'' + V u on (0, R) for radial V in d = 3."""
    return eigs_dense(radial_hamiltonian(potential, grid), vectors=False).eigenvalues


def radial_lowest(potential, grid: RadialGrid) -> float:
    """Lowest s-wave eigenvalue for a real radial potential (symmetric tridiagonal solver)."""
    if not potential.is_real:
        raise InvalidParameter("potential", "radial_lowest needs a real potential")
    v = potential.radial_profile(grid.r).real
    h = grid.h
    w = sla.eigh_tridiagonal(2 / h ** 2 + v, np.full(grid.n - 1, -1 / h ** 2),
                             select="i", select_range=(0, 0), eigvals_only=True)
    return float(w[0])
