"""Uniform grids, midpoint quadrature and Morrey-Campanato norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import signal

from .errors import DimensionMismatch, InvalidParameter
from .potentials import Potential


@dataclass(frozen=True)
class BoxGrid:
    """Cell-centred grid on the cube [-L, L]^d with n points per axis."""

    dim: int
    L: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidParameter("dim", f"must be 1, 2 or 3, got {self.dim}")
        if not (self.n >= 2):
            raise InvalidParameter("n", f"need at least 2 points per axis, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise InvalidParameter("L", f"half-width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n**d, d), row-major axis order."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def radii(self) -> np.ndarray:
        return np.sqrt(np.sum(self.nodes() ** 2, axis=-1))

    def origin_index(self) -> int:
        """Flat index of a node nearest to the origin (lowest index on ties)."""
        i = int(np.argmin(np.abs(self.axis)))
        return int(np.ravel_multi_index((i,) * self.dim, self.shape))

    def refined(self) -> "BoxGrid":
        return BoxGrid(self.dim, self.L, 2 * self.n)

    def enlarged(self) -> "BoxGrid":
        """Box of twice the half-width at the same spacing."""
        return BoxGrid(self.dim, 2 * self.L, 2 * self.n)

    def rescaled(self, s: float) -> "BoxGrid":
        """Grid on [-L/s, L/s]^d with the same n (matches ``scale(V, s)``)."""
        return BoxGrid(self.dim, self.L / s, self.n)


@dataclass(frozen=True)
class RadialGrid:
    """Vertex grid r_i = i h, i = 1..n, on (0, R); Dirichlet at r = 0 and r = R."""

    R: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameter("n", f"need at least 2 points, got {self.n}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise InvalidParameter("R", f"must be positive, got {self.R}")

    @property
    def h(self) -> float:
        return self.R / (self.n + 1)

    @cached_property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)


@dataclass(frozen=True)
class SampledField:
    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.grid.size:
            raise DimensionMismatch(f"{v.size} values for a grid of {self.grid.size} nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))


@dataclass(frozen=True)
class MCParams:
    """Discretisation of the sup over balls in the Morrey-Campanato norm.

    ``centers`` are flat node indices; ``radii`` are sorted ascending.
    """

    alpha: float
    p: float
    centers: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParameter("alpha", "must be positive")
        if not self.p >= 1:
            raise InvalidParameter("p", "must be >= 1")
        c = np.unique(np.asarray(self.centers, dtype=int).ravel())
        r = np.sort(np.asarray(self.radii, dtype=float).ravel())
        if c.size == 0:
            raise InvalidParameter("centers", "center set is empty")
        if r.size == 0:
            raise InvalidParameter("radii", "radius set is empty")
        if np.any(r <= 0):
            raise InvalidParameter("radii", "radii must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)


def default_mc_params(grid: BoxGrid, alpha: float, p: float, stride: int = 4,
                      ratio: float = 2 ** 0.25) -> MCParams:
    """Every ``stride``-th node per axis plus the origin-nearest node; radii
    geometric from 2h to 2L sqrt(d)."""
    idx = np.arange(0, grid.n, stride)
    sub = np.meshgrid(*([idx] * grid.dim), indexing="ij")
    centers = np.ravel_multi_index(tuple(s.ravel() for s in sub), grid.shape)
    centers = np.append(centers, grid.origin_index())
    rmin, rmax = 2 * grid.h, 2 * grid.L * math.sqrt(grid.dim)
    k = int(math.floor(math.log(rmax / rmin) / math.log(ratio) + 1e-9))
    radii = rmin * ratio ** np.arange(k + 1)
    return MCParams(alpha, p, centers, radii)


def sample(potential: Potential, grid: BoxGrid, subcells: int = 1) -> SampledField:
    """Point values at nodes, or cell averages over ``subcells**d`` sub-cell midpoints."""
    if potential.dim != grid.dim:
        raise DimensionMismatch(f"potential has d={potential.dim}, grid has d={grid.dim}")
    nodes = grid.nodes()
    if subcells == 1:
        return SampledField(grid, potential(nodes))
    off = ((np.arange(subcells) + 0.5) / subcells - 0.5) * grid.h
    shifts = np.stack([m.ravel() for m in np.meshgrid(*([off] * grid.dim), indexing="ij")], -1)
    acc = np.zeros(grid.size, dtype=complex)
    for s in shifts:
        acc += potential(nodes + s)
    return SampledField(grid, acc / len(shifts))


def _check_q(q, name="q"):
    if not q >= 1:
        raise InvalidParameter(name, f"exponent must be >= 1, got {q}")


def integrate_power(field: SampledField, q: float) -> float:
    """Midpoint rule for the integral of |V|^q over the box."""
    _check_q(q)
    return float(field.grid.cell_volume * np.sum(np.abs(field.values) ** q))


def weighted_integral(field: SampledField, q: float, alpha: float) -> float:
    """Midpoint rule for the integral of |V|^q (1 + |x|^2)^alpha over the box."""
    _check_q(q)
    w = (1.0 + field.grid.radii() ** 2) ** alpha
    return float(field.grid.cell_volume * np.sum(np.abs(field.values) ** q * w))


def lp_norm(field: SampledField, p: float) -> float:
    _check_q(p, "p")
    return integrate_power(field, p) ** (1.0 / p)


def discrete_lp(values, p: float, cell_volume: float) -> float:
    """(h^d sum |v|^p)^(1/p) for a raw vector."""
    return float((cell_volume * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def _ball_stencil(grid: BoxGrid, r: float) -> np.ndarray:
    m = min(int(math.ceil(r / grid.h)), grid.n - 1)
    o = np.arange(-m, m + 1) * grid.h
    mesh = np.meshgrid(*([o] * grid.dim), indexing="ij")
    d2 = sum(x * x for x in mesh)
    return (d2 < r * r).astype(float)


def ball_sums(field: SampledField, r: float, p: float) -> np.ndarray:
    """h^d * sum of |V|^p over nodes strictly within distance r, for every node as center."""
    f = np.abs(field.as_array()) ** p
    s = signal.fftconvolve(f, _ball_stencil(field.grid, r), mode="same")
    return np.maximum(s, 0.0).ravel() * field.grid.cell_volume


def ball_members(grid: BoxGrid, center: int, r: float) -> np.ndarray:
    x0 = grid.nodes()[center]
    d2 = np.sum((grid.nodes() - x0) ** 2, axis=-1)
    return np.flatnonzero(d2 < r * r)


def ball_average(field: SampledField, center: int, r: float, p: float) -> float:
    """Power mean of |V| over the nodes of the ball (normalised by node count)."""
    idx = ball_members(field.grid, center, r)
    if idx.size == 0:
        return 0.0
    return float(np.mean(np.abs(field.values[idx]) ** p) ** (1.0 / p))


def mc_norm_argmax(field: SampledField, mc: MCParams):
    """Return (value, center index, radius) of the discrete Morrey-Campanato sup."""
    d = field.grid.dim
    best = (0.0, int(mc.centers[0]), float(mc.radii[0]))
    for r in mc.radii:
        s = ball_sums(field, r, mc.p)[mc.centers]
        vals = r ** mc.alpha * (s / r ** d) ** (1.0 / mc.p)
        k = int(np.argmax(vals))
        if vals[k] > best[0]:
            best = (float(vals[k]), int(mc.centers[k]), float(r))
    return best


def mc_norm(field: SampledField, mc: MCParams) -> float:
    """sup over (center, radius) of r^alpha (r^-d int_{B_r} |V|^p)^(1/p)."""
    return mc_norm_argmax(field, mc)[0]


def radial_integrate_power(potential: Potential, q: float, grid: RadialGrid) -> float:
    """Integral of |V|^q over the ball of radius R for a radial potential (trapezoid in r)."""
    _check_q(q)
    if not potential.is_radial:
        raise InvalidParameter("potential", "radial quadrature needs a radial potential")
    d = potential.dim
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    r = grid.r
    f = area * r ** (d - 1) * np.abs(potential.radial_profile(r)) ** q
    # endpoint r = R carries half weight; r = 0 contributes nothing for d > 1
    fR = area * grid.R ** (d - 1) * abs(potential.radial_profile(np.array([grid.R]))[0]) ** q
    total = np.sum(f) + 0.5 * fR
    if d == 1:
        total += 0.5 * area * abs(potential.radial_profile(np.array([0.0]))[0]) ** q
    return float(grid.h * total)
