"""Right-hand sides of the eigenvalue inequalities and reports comparing them with spectra."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .birman_schwinger import (KernelResolvent, bs_matrix, bs_norm, continuum_eigenvalues,
                               radial_lowest, sqrt_signed)
from .errors import DimensionMismatch, EmptyEvidence, InvalidParameter, RangeError
from .grid import (BoxGrid, MCParams, RadialGrid, SampledField, default_mc_params,
                   discrete_lp, integrate_power, mc_norm, radial_integrate_power, sample,
                   weighted_integral)
from .lattice_op import laplacian_sparse
from .linalg_eig import Spectrum
from .potentials import Potential, critical_resonance

D03 = 4.0 / (3.0 ** 1.5 * math.pi ** 2)
HLS_CONST = 2.0 ** (4.0 / 3.0) / (3.0 * math.pi ** (4.0 / 3.0))
BOUND_IDS = ("davies1d", "main_gamma", "main0_d3", "morrey", "interpol")


@dataclass(frozen=True)
class BoundSpec:
    """One inequality |lam|^gamma <= C * RHS(V); ``constant`` is a number or "empirical"."""

    bound_id: str
    gamma: float
    d: int
    p: Optional[float] = None
    alpha: Optional[float] = None
    constant: Union[float, str] = "empirical"

    def __post_init__(self):
        b, g, d = self.bound_id, self.gamma, self.d
        if b not in BOUND_IDS:
            raise InvalidParameter("bound_id", f"expected one of {BOUND_IDS}, got {b!r}")
        if b == "davies1d":
            if d != 1 or g != 0.5 or self.constant != 0.5:
                raise InvalidParameter("davies1d", "needs d=1, gamma=1/2, constant 1/2")
        elif b == "main0_d3":
            if d != 3 or g != 0 or self.constant != D03:
                raise InvalidParameter("main0_d3", "needs d=3, gamma=0, constant D03")
        elif b == "main_gamma":
            if not (0 < g <= 0.5) or d < 2:
                raise InvalidParameter("gamma", "main_gamma needs 0 < gamma <= 1/2 and d >= 2")
        elif b == "morrey":
            if not 0 < g < 0.5 or d < 2 or self.p is None:
                raise InvalidParameter("gamma", "morrey needs 0 < gamma < 1/2, d >= 2 and p")
            _check_morrey_p(g, d, self.p)
        elif b == "interpol":
            if self.alpha is None or not g > 0.5 or not self.alpha > g - 0.5 or d < 2:
                raise InvalidParameter("alpha", "interpol needs gamma > 1/2, alpha > gamma - 1/2, d >= 2")
        if b in ("main_gamma", "morrey", "interpol") and self.constant != "empirical":
            raise InvalidParameter("constant", f"{b} has no explicit constant")

    @property
    def explicit(self) -> bool:
        return self.constant != "empirical"

    @classmethod
    def davies1d(cls):
        return cls("davies1d", 0.5, 1, constant=0.5)

    @classmethod
    def main0_d3(cls):
        return cls("main0_d3", 0.0, 3, constant=D03)

    @classmethod
    def main_gamma(cls, gamma, d):
        return cls("main_gamma", gamma, d)

    @classmethod
    def morrey(cls, gamma, d, p):
        return cls("morrey", gamma, d, p=p)

    @classmethod
    def interpol(cls, gamma, d, alpha):
        return cls("interpol", gamma, d, alpha=alpha)


def _check_morrey_p(gamma, d, p):
    lo = (d - 1) * (2 * gamma + d) / (2 * (d - 2 * gamma))
    hi = gamma + d / 2
    if not lo < p <= hi:
        raise RangeError(f"Morrey-Campanato bound needs {lo:g} < p <= {hi:g} "
                         f"(for gamma={gamma}, d={d}); got p={p}")


def rhs_davies(field: SampledField) -> float:
    """(1/2) * integral of |V| (d = 1)."""
    if field.grid.dim != 1:
        raise DimensionMismatch("the 1d bound needs a d=1 field")
    return 0.5 * integrate_power(field, 1)


def rhs_main(field: SampledField, gamma: float, D: float = 1.0) -> float:
    """D * integral of |V|^(gamma + d/2).

    gamma = 0 is accepted in d = 3, where it is the critical case.
    """
    d = field.grid.dim
    if gamma < 0 or (gamma == 0 and d != 3):
        raise InvalidParameter("gamma", f"need gamma > 0 (or gamma = 0 in d = 3), got {gamma}")
    if gamma > 0.5:
        warnings.warn(f"gamma={gamma} is outside 0 < gamma <= 1/2", stacklevel=2)
    return D * integrate_power(field, gamma + d / 2)


def rhs_main_radial(potential: Potential, gamma: float, grid: RadialGrid, D: float = 1.0) -> float:
    """rhs_main for a radial potential using radial quadrature on [0, R]."""
    return D * radial_integrate_power(potential, gamma + potential.dim / 2, grid)


def rhs_morrey(field: SampledField, gamma: float, p: float, mc: Optional[MCParams] = None,
               check_range: bool = True) -> float:
    """sup_{x,r} r^d (r^-d int_{B_r(x)} |V|^p)^((2 gamma + d)/(2p)).

    Equal to the Morrey-Campanato norm with alpha = 2d/(2 gamma + d), raised
    to the power gamma + d/2.
    """
    d = field.grid.dim
    if check_range:
        if not 0 < gamma < 0.5:
            raise RangeError(f"Morrey-Campanato bound needs 0 < gamma < 1/2, got {gamma}")
        _check_morrey_p(gamma, d, p)
    alpha = 2 * d / (2 * gamma + d)
    if mc is None:
        mc = default_mc_params(field.grid, alpha, p)
    elif mc.alpha != alpha or mc.p != p:
        raise InvalidParameter("mc", "MCParams alpha/p do not match gamma/p")
    return mc_norm(field, mc) ** (gamma + d / 2)


def rhs_interpol(field: SampledField, gamma: float, alpha: float, check_range: bool = True) -> float:
    """Integral of |V|^(2 gamma + (d-1)/2) (1 + |x|^2)^alpha (constant left out)."""
    if check_range:
        if not gamma > 0.5:
            raise RangeError(f"weighted bound needs gamma > 1/2, got {gamma}")
        if not alpha > gamma - 0.5:
            raise RangeError(f"weighted bound needs alpha > gamma - 1/2, got alpha={alpha}")
    d = field.grid.dim
    return weighted_integral(field, 2 * gamma + (d - 1) / 2, alpha)


def spec_rhs(spec: BoundSpec, field: SampledField) -> float:
    """RHS including the constant when it is explicit (1 otherwise)."""
    if field.grid.dim != spec.d:
        raise DimensionMismatch(f"{spec.bound_id} is set up for d={spec.d}")
    if spec.bound_id == "davies1d":
        return rhs_davies(field)
    if spec.bound_id == "main0_d3":
        return rhs_main(field, 0.0, D03)
    if spec.bound_id == "main_gamma":
        return rhs_main(field, spec.gamma)
    if spec.bound_id == "morrey":
        return rhs_morrey(field, spec.gamma, spec.p)
    return rhs_interpol(field, spec.gamma, spec.alpha)


@dataclass(frozen=True)
class BoundRow:
    lam: complex
    bound_id: str
    gamma: float
    lhs: float
    rhs: float
    ratio: float
    verdict: Optional[bool]
    n: int
    L: float


@dataclass
class BoundReport:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def violations(self) -> list:
        return [r for r in self.rows if r.verdict is False]

    def max_ratio(self, bound_id: Optional[str] = None) -> float:
        vals = [r.ratio for r in self.rows if bound_id is None or r.bound_id == bound_id]
        return max(vals) if vals else float("nan")


def _eigenvalues(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return np.asarray(spectrum.eigenvalues, dtype=complex)
    return np.asarray(spectrum, dtype=complex).ravel()


def _ratio(lam, gamma, rhs):
    lhs = abs(lam) ** gamma
    if rhs == 0:
        return lhs, float("inf")
    return lhs, lhs / rhs


def bound_report(spectrum, field: SampledField, specs: Sequence[BoundSpec], slack: float = 0.05,
                 refined: Optional[tuple] = None) -> BoundReport:
    """One row per (eigenvalue, spec).

    Verdicts are issued for explicit constants only.  With ``refined`` =
    (spectrum_2n, field_2n), each eigenvalue is matched to the nearest one on
    the refined grid and a verdict is issued only when both grids agree.
    """
    lams = _eigenvalues(spectrum)
    grid = field.grid
    rows = []
    rhs_cache = {}
    rhs2_cache = {}
    lams2 = _eigenvalues(refined[0]) if refined is not None else None
    for spec in specs:
        rhs_cache[spec] = spec_rhs(spec, field)
        if refined is not None:
            rhs2_cache[spec] = spec_rhs(spec, refined[1])
    for lam in lams:
        for spec in specs:
            rhs = rhs_cache[spec]
            lhs, ratio = _ratio(lam, spec.gamma, rhs)
            verdict = None
            if spec.explicit:
                verdict = bool(ratio <= 1 + slack)
                if refined is not None:
                    if lams2.size == 0:
                        verdict = None
                    else:
                        lam2 = lams2[np.argmin(np.abs(lams2 - lam))]
                        _, ratio2 = _ratio(lam2, spec.gamma, rhs2_cache[spec])
                        if bool(ratio2 <= 1 + slack) != verdict:
                            verdict = None
            rows.append(BoundRow(complex(lam), spec.bound_id, spec.gamma, lhs, rhs, ratio,
                                 verdict, grid.n, grid.L))
    return BoundReport(rows)


def hls_chain_check(field: SampledField, phi, psi, lam: complex,
                    resolvent: Optional[KernelResolvent] = None):
    """(lhs, mid, rhs) for the chain |<phi, K psi>| <= C ||phi a||_{6/5} ||psi a||_{6/5}
    <= C ||V||_{3/2} ||phi||_2 ||psi||_2, with C the sharp HLS constant and a = |V|^{1/2}.

    K is the kernel-backend Birman-Schwinger operator; norms carry the h^d
    volume factor.  ``resolvent`` may be passed to reuse an FFT table for the
    same grid and lam.
    """
    grid = field.grid
    if grid.dim != 3:
        raise DimensionMismatch("the HLS chain is a d=3 statement")
    phi = np.asarray(phi, dtype=complex).ravel()
    psi = np.asarray(psi, dtype=complex).ravel()
    if phi.size != grid.size or psi.size != grid.size:
        raise DimensionMismatch("phi and psi must live on the field's grid")
    if resolvent is None:
        resolvent = KernelResolvent(grid, lam)
    elif resolvent.grid != grid or resolvent.lam != complex(lam):
        raise InvalidParameter("resolvent", "resolvent was built for a different grid or lam")
    s, a = sqrt_signed(field.values)
    dv = grid.cell_volume
    Kpsi = s * resolvent.apply(a * psi)
    lhs = abs(dv * np.vdot(phi, Kpsi))
    mid = HLS_CONST * discrete_lp(phi * a, 1.2, dv) * discrete_lp(psi * a, 1.2, dv)
    rhs = (HLS_CONST * discrete_lp(field.values, 1.5, dv)
           * discrete_lp(phi, 2, dv) * discrete_lp(psi, 2, dv))
    return float(lhs), float(mid), float(rhs)


@dataclass
class EmpiricalConstant:
    """Supremum of |lam|^gamma / int |V|^(gamma + d/2) over a sweep, with provenance rows."""

    value: float
    rows: list
    empty: bool

    def require(self) -> float:
        if self.empty:
            raise EmptyEvidence("the sweep produced no accepted eigenvalues")
        return self.value


def empirical_constant(sweep, gamma: float, d: int, backend: str = "lattice",
                       grid: Optional[BoxGrid] = None, **filter_kw) -> EmpiricalConstant:
    """Sweep items are Potentials (solved on ``grid``) or (Potential, BoxGrid) pairs.

    The value is reported, never compared against a threshold.
    """
    if backend != "lattice":
        raise InvalidParameter("backend", "eigenvalues are computed with the lattice backend")
    items = list(sweep)
    if not items:
        raise InvalidParameter("sweep", "sweep is empty")
    bound_id = "davies1d" if d == 1 else "main_gamma"
    rows = []
    for item in items:
        V, g = item if isinstance(item, tuple) else (item, grid)
        if g is None:
            raise InvalidParameter("grid", "no grid given for a sweep member")
        if V.dim != d or g.dim != d:
            raise DimensionMismatch(f"sweep member has dimension {V.dim}, expected {d}")
        spec = continuum_eigenvalues(V, g, **filter_kw)
        rhs = integrate_power(sample(V, g), gamma + d / 2)
        for lam in spec.eigenvalues:
            lhs, ratio = _ratio(lam, gamma, rhs)
            rows.append(BoundRow(complex(lam), bound_id, gamma, lhs, rhs, ratio, None, g.n, g.L))
    if not rows:
        return EmpiricalConstant(float("nan"), [], True)
    return EmpiricalConstant(max(r.ratio for r in rows), rows, False)


@dataclass(frozen=True)
class SharpnessReport:
    c: float
    integral: float          # int |V_c|^{3/2}
    rhs: float               # D03 * integral
    expected: float          # c^{3/2}
    bs_norm: float           # kernel backend at lam -> 0^-
    lam: float
    n: int
    L: float


def sharpness_d3(c: float = 1.0, grid: Optional[BoxGrid] = None,
                 radial: Optional[RadialGrid] = None, lam: float = -1e-6) -> SharpnessReport:
    """Critical coupling check: D03 int |V_c|^{3/2} against c^{3/2}, and ||K(lam)|| near 0."""
    V = critical_resonance(c)
    grid = grid or BoxGrid(3, 8.0, 48)
    radial = radial or RadialGrid(16.0, 16000)
    integral = radial_integrate_power(V, 1.5, radial)
    nrm = bs_norm(bs_matrix(V, grid, lam, "kernel"))
    return SharpnessReport(c, integral, D03 * integral, c ** 1.5, nrm, lam, grid.n, grid.L)


def resonance_residual(grid: BoxGrid, c: float = 1.0) -> float:
    """||(-Delta_h + V) psi_h|| / ||psi_h|| on interior nodes, psi = (1 + |x|^2)^{-1/2}.

    Interior means the outermost layer of nodes is left out, so the Dirichlet
    truncation plays no role and only the stencil's consistency error remains.
    """
    if grid.dim != 3:
        raise DimensionMismatch("the resonance lives in d = 3")
    r2 = grid.radii() ** 2
    psi = (1 + r2) ** -0.5
    V = -3 * c / (1 + r2) ** 2
    res = laplacian_sparse(grid) @ psi + V * psi
    inner = np.ones(grid.shape, dtype=bool)
    for ax in range(3):
        sl = [slice(None)] * 3
        sl[ax] = 0
        inner[tuple(sl)] = False
        sl[ax] = -1
        inner[tuple(sl)] = False
    m = inner.ravel()
    return float(np.linalg.norm(res[m]) / np.linalg.norm(psi[m]))


def supercritical_ground_energy(c: float, grid: Optional[RadialGrid] = None) -> float:
    """Lowest s-wave eigenvalue of -Delta + V_c (negative once c > 1)."""
    grid = grid or RadialGrid(200.0, 20000)
    return radial_lowest(critical_resonance(c), grid)


@dataclass
class HLSTrials:
    lams: np.ndarray
    lhs: np.ndarray
    mid: np.ndarray
    rhs: np.ndarray

    def violations(self, slack: float = 0.02):
        """(count of lhs > mid (1 + slack), count of mid > rhs)."""
        return int(np.sum(self.lhs > self.mid * (1 + slack))), int(np.sum(self.mid > self.rhs))


def hls_random_trials(samples: int = 10_000, grid: Optional[BoxGrid] = None, seed: int = 0,
                      per_lambda: int = 50) -> HLSTrials:
    """Seeded random (phi, psi, V, lam) draws for hls_chain_check.

    V is complex Gaussian noise on a random fraction of nodes; lam has
    log-uniform modulus in [1e-3, 1e2] and uniform argument off the ray.
    Draws cycle through three kinds: independent phi and psi; phi aligned
    with K psi; and the same with psi a single-node spike (near-diagonal
    worst case).  One FFT table is shared by ``per_lambda`` consecutive draws.
    """
    grid = grid or BoxGrid(3, 2.0, 12)
    rng = np.random.default_rng(seed)
    N = grid.size
    out = np.zeros((3, samples))
    lams = np.zeros(samples, dtype=complex)
    res = None
    for k in range(samples):
        if k % per_lambda == 0:
            mod = 10 ** rng.uniform(-3, 2)
            arg = rng.uniform(0.01, 2 * math.pi - 0.01)
            lam = mod * complex(math.cos(arg), math.sin(arg))
            res = KernelResolvent(grid, lam)
        frac = rng.uniform(0.02, 1.0)
        mask = rng.random(N) < frac
        V = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * mask
        phi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        psi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        kind = k % 3
        if kind == 2:
            psi = np.zeros(N, dtype=complex)
            j = rng.integers(N)
            psi[j] = 1.0
            mask[j] = True
            V[j] = rng.standard_normal() + 1j * rng.standard_normal()
        if kind > 0:
            s_, a_ = sqrt_signed(V)
            phi = s_ * res.apply(a_ * psi)
        out[:, k] = hls_chain_check(SampledField(grid, V), phi, psi, lam, res)
        lams[k] = lam
    return HLSTrials(lams, out[0], out[1], out[2])
