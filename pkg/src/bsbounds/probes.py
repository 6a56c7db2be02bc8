"""Log-log fits of resolvent and Birman-Schwinger norms against |lam| along a ray."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .birman_schwinger import (KernelResolvent, bs_matrix, bs_norm_info, half_powers,
                               weighted_resolvent)
from .errors import InvalidParameter, RangeError
from .grid import BoxGrid
from .lattice_op import LatticeResolvent
from .linalg_eig import op_norm_2_info, pq_norm_estimate_info
from .potentials import Potential, make_family

DEFAULT_RANGE = (1.0, 64.0)
DEFAULT_COUNT = 9


@dataclass(frozen=True)
class ScalingSample:
    lam: complex
    abs_lambda: float
    norm: float
    converged: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def arg_lambda(self) -> float:
        return math.atan2(self.lam.imag, self.lam.real) % (2 * math.pi)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r2: float
    count: int
    theory: Optional[float] = None
    samples: tuple = field(default=(), repr=False, compare=False)
    in_range: bool = True

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.samples)


def exponent_fit(samples: Sequence[ScalingSample], theory: Optional[float] = None,
                 in_range: bool = True) -> ExponentFit:
    """Ordinary least squares of log(norm) on log|lam|."""
    samples = tuple(samples)
    if len(samples) < 4:
        raise InvalidParameter("samples", f"need at least 4 samples, got {len(samples)}")
    t = np.array([s.abs_lambda for s in samples], dtype=float)
    y = np.array([s.norm for s in samples], dtype=float)
    if np.any(y <= 0) or np.any(t <= 0):
        raise InvalidParameter("samples", "norms and |lam| must be positive")
    x = np.log(t)
    if np.ptp(x) == 0:
        raise InvalidParameter("samples", "all |lam| are equal")
    ly = np.log(y)
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), r2, len(samples), theory, samples, in_range)


def ray_points(theta: float, t_range=DEFAULT_RANGE, count: int = DEFAULT_COUNT) -> np.ndarray:
    """count points t e^{i theta}, t geometric over t_range."""
    lo, hi = map(float, t_range)
    if not 0 < lo < hi:
        raise InvalidParameter("t_range", "need 0 < lo < hi")
    return np.geomspace(lo, hi, int(count)) * complex(math.cos(theta), math.sin(theta))


def _check_theta(theta, min_angle=1e-9):
    a = theta % (2 * math.pi)
    if a < min_angle or a > 2 * math.pi - min_angle:
        raise InvalidParameter("theta", "ray must stay off the positive real axis")


def _resolvent(grid, lam, backend):
    if backend == "kernel":
        return KernelResolvent(grid, lam)
    if backend == "lattice":
        return LatticeResolvent(grid, lam)
    raise InvalidParameter("backend", f"expected kernel or lattice, got {backend!r}")


def keruso_theory(d: int, p: float) -> float:
    return -(d + 2) / 2 + d / p


def check_keruso_p(d: int, p: float):
    if d >= 3:
        lo, hi = 2 * d / (d + 2), 2 * (d + 1) / (d + 3)
        if not lo <= p <= hi:
            raise RangeError(f"uniform Sobolev bound needs 2d/(d+2) <= p <= 2(d+1)/(d+3) "
                             f"= [{lo:g}, {hi:g}] for d={d}; got p={p}")
    elif d == 2:
        if not 1 < p <= 1.2:
            raise RangeError(f"uniform Sobolev bound needs 1 < p <= 6/5 for d=2; got p={p}")
    else:
        raise RangeError(f"uniform Sobolev bound is stated for d >= 2; got d={d}")


def keruso_exponent(d: int, p: float, theta: float = math.pi / 2, t_range=DEFAULT_RANGE,
                    grid: Optional[BoxGrid] = None, count: int = DEFAULT_COUNT,
                    backend: str = "kernel", starts: int = 8, seed: int = 0) -> ExponentFit:
    """Slope of the L_p -> L_p' resolvent norm (lower bound by Boyd's method) against |lam|."""
    check_keruso_p(d, p)
    _check_theta(theta)
    grid = grid or BoxGrid(d, 1.0, 16)
    if grid.dim != d:
        raise InvalidParameter("grid", f"grid dimension {grid.dim} != d={d}")
    q = p / (p - 1)
    samples = []
    for lam in ray_points(theta, t_range, count):
        R = _resolvent(grid, lam, backend)
        op = LinearOperator((grid.size, grid.size), matvec=R.apply, rmatvec=R.apply_adjoint,
                            dtype=complex)
        est = pq_norm_estimate_info(op, grid, p, q, starts, seed)
        samples.append(ScalingSample(complex(lam), abs(lam), est.value, est.converged,
                                     {"n": grid.n, "L": grid.L, "starts": starts, "seed": seed,
                                      "backend": backend}))
    return exponent_fit(samples, keruso_theory(d, p))


def bs_theory(d: int, gamma: float) -> float:
    return -2 * gamma / (2 * gamma + d)


def bs_exponent(d: int, gamma: float, potential, theta: float = math.pi / 2,
                t_range=DEFAULT_RANGE, grid: Optional[BoxGrid] = None,
                count: int = DEFAULT_COUNT, backend: str = "lattice", subcells: int = 1,
                seed: int = 0, warm_start: bool = True) -> ExponentFit:
    """Slope of ||K(lam)|| against |lam| for a fixed potential.

    With warm_start each power iteration starts from the previous sample's
    singular vector (same order every run, so results stay deterministic).
    """
    if not 0 < gamma <= 0.5:
        raise RangeError(f"Birman-Schwinger scaling needs 0 < gamma <= 1/2, got {gamma}")
    _check_theta(theta)
    grid = grid or BoxGrid(d, 4.0, 64)
    samples = []
    start = None
    for lam in ray_points(theta, t_range, count):
        K = bs_matrix(potential, grid, lam, backend, dense=False, subcells=subcells)
        nrm, conv, vec = bs_norm_info(K, seed, start)
        if warm_start:
            start = vec
        samples.append(ScalingSample(complex(lam), abs(lam), nrm, conv,
                                     {"n": grid.n, "L": grid.L, "backend": backend}))
    return exponent_fit(samples, bs_theory(d, gamma))


def check_chsa_range(d: int, alpha: float, p: float):
    if d == 2:
        if not 4 / 3 < alpha < 2:
            raise RangeError(f"weighted L2 bound needs 4/3 < alpha < 2 for d=2; got alpha={alpha}")
    elif d >= 3:
        if not 2 * d / (d + 1) < alpha <= 2:
            raise RangeError(f"weighted L2 bound needs 2d/(d+1) < alpha <= 2 for d={d}; got {alpha}")
    else:
        raise RangeError("weighted L2 bound is stated for d >= 2")
    lo, hi = (d - 1) / (2 * (alpha - 1)), d / alpha
    if not lo < p <= hi:
        raise RangeError(f"weighted L2 bound needs (d-1)/(2(alpha-1)) < p <= d/alpha, "
                         f"i.e. {lo:g} < p <= {hi:g}; got p={p}")


def homogeneous_weight(d: int, alpha: float, grid: BoxGrid) -> Potential:
    """|x|^-alpha on the whole box (cap and cutoff placed out of reach)."""
    return make_family("inverse_power_cutoff",
                       {"coupling": 1.0, "exponent": alpha, "cap": 1e300,
                        "radius": 2 * math.sqrt(d) * grid.L}, dim=d)


def weight_theory(kind: str, alpha: float) -> float:
    return -0.5 if kind == "agmon" else -1 + alpha / 2


def weighted_exponent(kind: str, d: int, alpha: float, p: Optional[float] = None,
                      weight: Optional[Potential] = None, theta: Optional[float] = None,
                      t_range=DEFAULT_RANGE, grid: Optional[BoxGrid] = None,
                      count: int = DEFAULT_COUNT, backend: Optional[str] = None,
                      subcells: Optional[int] = None, check_range: bool = True,
                      seed: int = 0) -> ExponentFit:
    """Slope of ||W^{1/2} (-Delta - lam)^{-1} W^{1/2}||_{2->2} against |lam|.

    agmon: W = (1 + |x|^2)^-alpha; chsa: W = omega, by default |x|^-alpha.
    With check_range=False out-of-range parameters are computed anyway and
    the fit is marked ``in_range=False``.
    """
    if kind not in ("agmon", "chsa"):
        raise InvalidParameter("kind", f"expected agmon or chsa, got {kind!r}")
    in_range = True
    try:
        if kind == "agmon":
            if not alpha > 0.5:
                raise RangeError(f"weighted resolvent bound needs alpha > 1/2, got {alpha}")
        else:
            if p is None:
                raise InvalidParameter("p", "chsa needs p")
            check_chsa_range(d, alpha, p)
    except RangeError:
        if check_range:
            raise
        in_range = False
    theta = math.pi if theta is None else theta
    _check_theta(theta)
    grid = grid or BoxGrid(d, 8.0, 128)
    if grid.dim != d:
        raise InvalidParameter("grid", f"grid dimension {grid.dim} != d={d}")
    if backend is None:
        backend = "kernel" if kind == "agmon" else "lattice"
    if kind == "agmon":
        w = (1.0 + grid.radii() ** 2) ** (-alpha / 2)
    else:
        if weight is None:
            weight = homogeneous_weight(d, alpha, grid)
        _, w = half_powers(weight, grid, 8 if subcells is None else subcells)
    samples = []
    start = None
    for lam in ray_points(theta, t_range, count):
        op, _ = weighted_resolvent(grid, lam, w, w, backend, dense=False)
        est = op_norm_2_info(op, seed=seed, start=start, return_vector=True)
        start = est.vector
        samples.append(ScalingSample(complex(lam), abs(lam), est.value, est.converged,
                                     {"n": grid.n, "L": grid.L, "backend": backend}))
    return exponent_fit(samples, weight_theory(kind, alpha), in_range)
