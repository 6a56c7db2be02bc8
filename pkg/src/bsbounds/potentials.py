"""Complex-valued potential families on R^d.

A :class:`Potential` is a descriptor: family tag, parameters and a vectorised
evaluator.  Sampling onto grids lives in :mod:`bsbounds.grid`, so one
descriptor can be resolved at many resolutions.

Units: hbar = 2m = 1, i.e. the operator is ``-Laplacian + V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import DimensionMismatch, InvalidParameter

FAMILIES = (
    "zero",
    "complex_gaussian",
    "complex_square_well",
    "critical_resonance",
    "inverse_square_cutoff",
    "inverse_power_cutoff",
    "phase_rotated",
)

FAMILY_PARAMS = {
    "zero": (),
    "complex_gaussian": ("amplitude", "width"),
    "complex_square_well": ("amplitude", "half_width"),
    "critical_resonance": ("c",),
    "inverse_square_cutoff": ("coupling", "cap", "radius"),
    "inverse_power_cutoff": ("coupling", "exponent", "cap", "radius"),
    "phase_rotated": ("theta", "base"),
}

# families whose value depends on |x| only
_RADIAL = {"zero", "complex_gaussian", "critical_resonance",
           "inverse_square_cutoff", "inverse_power_cutoff"}


@dataclass(frozen=True)
class Potential:
    dim: int
    family: str
    params: Mapping[str, Any]
    scale_factor: float = 1.0
    _fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False, default=None)

    def __call__(self, x):
        """Evaluate at points ``x`` of shape ``(..., dim)`` (or a scalar when dim == 1)."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"points have dimension {x.shape[-1]}, potential has {self.dim}")
        s = self.scale_factor
        if s == 1.0:
            return self._fn(x)
        return s * s * self._fn(s * x)

    def eval(self, x) -> complex:
        return complex(np.asarray(self(x)).reshape(()))

    @property
    def is_real(self) -> bool:
        return _is_real(self.family, self.params)

    @property
    def is_radial(self) -> bool:
        if self.family == "phase_rotated":
            return self.params["base"].is_radial
        return self.family in _RADIAL

    def radial_profile(self, r):
        """V along the first axis, V(r e_1); meaningful for radial families."""
        r = np.asarray(r, dtype=float)
        pts = np.zeros(r.shape + (self.dim,))
        pts[..., 0] = r
        return self(pts)

    def to_config(self) -> dict:
        out = {"family": self.family}
        for k, v in self.params.items():
            if isinstance(v, Potential):
                out[k] = v.to_config()
            elif isinstance(v, complex):
                out[k] = [v.real, v.imag]
            else:
                out[k] = v
        if self.scale_factor != 1.0:
            out["scale"] = self.scale_factor
        return out


def _is_real(family, params):
    if family in ("zero", "critical_resonance"):
        return True
    if family == "phase_rotated":
        return math.sin(params["theta"]) == 0.0
    for key in ("amplitude", "coupling"):
        if key in params:
            return complex(params[key]).imag == 0.0
    return True


def _positive(params, name):
    v = params.get(name)
    if v is None:
        raise InvalidParameter(name, "missing")
    v = float(v)
    if not (math.isfinite(v) and v > 0):
        raise InvalidParameter(name, f"must be a finite positive number, got {v}")
    return v


def _complex(params, name, default=None):
    v = params.get(name, default)
    if v is None:
        raise InvalidParameter(name, "missing")
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InvalidParameter(name, "complex value given as a list needs [re, im]")
        v = complex(float(v[0]), float(v[1]))
    try:
        v = complex(v)
    except (TypeError, ValueError):
        raise InvalidParameter(name, f"not a complex number: {v!r}") from None
    if not (math.isfinite(v.real) and math.isfinite(v.imag)):
        raise InvalidParameter(name, "must be finite")
    return v


def _r2(x):
    return np.sum(x * x, axis=-1)


def make_family(tag: str, params: Mapping[str, Any] | None = None, dim: int = 1) -> Potential:
    """Build a potential from a family tag and parameter mapping.

    Families and their parameters::

        zero
        complex_gaussian       amplitude A (complex), width w > 0     A exp(-|x|^2/w^2)
        complex_square_well    amplitude A (complex), half_width a > 0  A 1_{[-a,a]^d}
        critical_resonance     c >= 0 (d = 3 only)                   -3c (1+|x|^2)^-2
        inverse_square_cutoff  coupling g, cap M > 0, radius R > 0   g min(|x|^-2, M) 1_{|x|<=R}
        inverse_power_cutoff   coupling g, exponent s > 0, cap, radius
        phase_rotated          theta, base (a real-valued Potential)  e^{i theta} W
    """
    params = dict(params or {})
    if dim not in (1, 2, 3):
        raise InvalidParameter("dim", f"must be 1, 2 or 3, got {dim}")
    if tag not in FAMILIES:
        raise InvalidParameter("family", f"unknown family {tag!r}; expected one of {FAMILIES}")

    unknown = sorted(set(params) - set(FAMILY_PARAMS[tag]))
    if unknown:
        raise InvalidParameter(unknown[0], f"not a parameter of {tag}; expected {FAMILY_PARAMS[tag]}")

    if tag == "zero":
        return Potential(dim, tag, {}, _fn=lambda x: np.zeros(x.shape[:-1], dtype=complex))

    if tag == "complex_gaussian":
        A = _complex(params, "amplitude")
        w = _positive(params, "width")
        return Potential(dim, tag, {"amplitude": A, "width": w},
                         _fn=lambda x: A * np.exp(-_r2(x) / (w * w)))

    if tag == "complex_square_well":
        A = _complex(params, "amplitude")
        a = _positive(params, "half_width")

        def well(x):
            inside = np.all(np.abs(x) <= a, axis=-1)
            return np.where(inside, A, 0j)
        return Potential(dim, tag, {"amplitude": A, "half_width": a}, _fn=well)

    if tag == "critical_resonance":
        if dim != 3:
            raise InvalidParameter("dim", "critical_resonance is defined for d = 3")
        c = float(params.get("c", 1.0))
        if not (math.isfinite(c) and c >= 0):
            raise InvalidParameter("c", f"must be finite and >= 0, got {c}")
        return Potential(dim, tag, {"c": c},
                         _fn=lambda x: (-3.0 * c / (1.0 + _r2(x)) ** 2).astype(complex))

    if tag in ("inverse_square_cutoff", "inverse_power_cutoff"):
        g = _complex(params, "coupling", 1.0)
        M = _positive(params, "cap")
        R = _positive(params, "radius")
        if tag == "inverse_square_cutoff":
            sigma = 2.0
            kept = {"coupling": g, "cap": M, "radius": R}
        else:
            sigma = _positive(params, "exponent")
            kept = {"coupling": g, "exponent": sigma, "cap": M, "radius": R}

        def inv_power(x):
            r2 = _r2(x)
            with np.errstate(divide="ignore"):
                core = np.minimum(r2 ** (-sigma / 2), M)
            return np.where(r2 <= R * R, g * core, 0j)
        return Potential(dim, tag, kept, _fn=inv_power)

    # phase_rotated
    theta = float(params.get("theta", 0.0))
    if not math.isfinite(theta):
        raise InvalidParameter("theta", "must be finite")
    base = params.get("base")
    if isinstance(base, Mapping):
        base = dict(base)
        base_tag = base.pop("family", None)
        if base_tag is None:
            raise InvalidParameter("base", "missing family tag")
        base = make_family(base_tag, base, dim)
    if not isinstance(base, Potential):
        raise InvalidParameter("base", "phase_rotated needs a base potential")
    if base.dim != dim:
        raise InvalidParameter("base", f"base has dimension {base.dim}, expected {dim}")
    if not base.is_real:
        raise InvalidParameter("base", "base potential must be real-valued")
    phase = complex(math.cos(theta), math.sin(theta))
    return Potential(dim, tag, {"theta": theta, "base": base}, _fn=lambda x: phase * base(x))


def scale(potential: Potential, s: float) -> Potential:
    """Return x -> s^2 V(s x), the scaling under which (V, lam) ~ (s^2 V(s.), s^2 lam)."""
    s = float(s)
    if not (math.isfinite(s) and s > 0):
        raise InvalidParameter("s", f"scale factor must be positive, got {s}")
    return Potential(potential.dim, potential.family, potential.params,
                     potential.scale_factor * s, _fn=potential._fn)


def zero(dim: int = 1) -> Potential:
    return make_family("zero", dim=dim)


def critical_resonance(c: float = 1.0) -> Potential:
    return make_family("critical_resonance", {"c": c}, dim=3)


def narrow_well(width: float, mass: float = 1.0) -> Potential:
    """Attractive 1d well of half-width ``width`` with integral of |V| equal to ``mass``."""
    return make_family("complex_square_well",
                       {"amplitude": -mass / (2.0 * width), "half_width": width}, dim=1)
