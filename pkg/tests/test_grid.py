import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bsbounds.errors import DimensionMismatch, InvalidParameter
from bsbounds.grid import (BoxGrid, MCParams, RadialGrid, SampledField, ball_average,
                           ball_members, ball_sums, default_mc_params, integrate_power, lp_norm,
                           mc_norm, mc_norm_argmax, radial_integrate_power, sample,
                           weighted_integral)
from bsbounds.potentials import critical_resonance, make_family, zero


def test_grid_geometry():
    g = BoxGrid(2, 1.0, 4)
    assert g.h == 0.5
    assert np.allclose(g.axis, [-0.75, -0.25, 0.25, 0.75])
    assert g.nodes().shape == (16, 2)
    assert g.refined().n == 8 and g.enlarged().L == 2.0


@pytest.mark.parametrize("kw", [dict(dim=4, L=1.0, n=4), dict(dim=1, L=0.0, n=4),
                                dict(dim=1, L=1.0, n=1)])
def test_grid_validation(kw):
    with pytest.raises(InvalidParameter):
        BoxGrid(**kw)


def test_sampled_field_is_read_only():
    g = BoxGrid(1, 1.0, 8)
    f = sample(zero(1), g)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(DimensionMismatch):
        SampledField(g, np.zeros(7))


def test_gaussian_integral():
    V = make_family("complex_gaussian", {"amplitude": 1.0, "width": 1.0}, dim=1)
    f = sample(V, BoxGrid(1, 8.0, 400))
    assert integrate_power(f, 1) == pytest.approx(math.sqrt(math.pi), rel=1e-6)


def test_weighted_gaussian_moment_2d():
    # int e^{-5|x|^2/2}(1+|x|^2) dx = (2 pi / 5)(1 + 2/5)
    V = make_family("complex_gaussian", {"amplitude": 1.0, "width": 1.0}, dim=2)
    f = sample(V, BoxGrid(2, 6.0, 240))
    assert weighted_integral(f, 2.5, 1.0) == pytest.approx(2 * math.pi * 7 / 25, rel=1e-3)


def test_subcell_average_of_square_well():
    # a well edge cutting through cells: averages get the area right
    V = make_family("complex_square_well", {"amplitude": 1.0, "half_width": 0.3}, dim=1)
    f = sample(V, BoxGrid(1, 1.0, 10), subcells=64)
    assert integrate_power(f, 1) == pytest.approx(0.6, abs=1e-2)


def test_critical_integral_radial():
    # int |V|^{3/2} = 3^{3/2} pi^2 / 4 for c = 1
    val = radial_integrate_power(critical_resonance(1.0), 1.5, RadialGrid(40.0, 40000))
    assert val == pytest.approx(3 ** 1.5 * math.pi ** 2 / 4, rel=1e-4)


def test_radial_quadrature_in_1d_counts_origin():
    V = make_family("complex_gaussian", {"amplitude": 1.0, "width": 1.0}, dim=1)
    val = radial_integrate_power(V, 1, RadialGrid(8.0, 8000))
    assert val == pytest.approx(math.sqrt(math.pi), rel=1e-6)


def test_ball_sums_against_members():
    rng = np.random.default_rng(2)
    g = BoxGrid(2, 1.0, 20)
    f = SampledField(g, rng.normal(size=g.size) + 1j * rng.normal(size=g.size))
    r = 0.37
    s = ball_sums(f, r, 1.5)
    for c in [0, 45, 210, 399]:
        idx = ball_members(g, c, r)
        direct = g.cell_volume * np.sum(np.abs(f.values[idx]) ** 1.5)
        assert s[c] == pytest.approx(direct, rel=1e-9)


def test_mcparams_validation():
    with pytest.raises(InvalidParameter):
        MCParams(1.0, 1.0, [0], [-1.0])
    with pytest.raises(InvalidParameter):
        MCParams(1.0, 1.0, [], [1.0])
    p = MCParams(1.0, 1.0, [3, 1, 3], [2.0, 1.0])
    assert list(p.centers) == [1, 3] and list(p.radii) == [1.0, 2.0]


def test_mc_norm_of_zero():
    g = BoxGrid(3, 1.0, 8)
    assert mc_norm(sample(zero(3), g), default_mc_params(g, 2.0, 1.0)) == 0.0


def test_mc_norm_inverse_square_near_4pi():
    L = 2.0
    g = BoxGrid(3, L, 48)
    V = make_family("inverse_square_cutoff", {"coupling": 1.0, "cap": 1e6, "radius": 8 * L}, dim=3)
    val, c, r = mc_norm_argmax(sample(V, g), default_mc_params(g, 2.0, 1.0))
    assert val == pytest.approx(4 * math.pi, rel=0.05)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 31), p=st.floats(1.0, 4.0), dq=st.floats(0.01, 4.0),
       r=st.floats(0.05, 3.0))
def test_ball_average_monotone_in_p(seed, p, dq, r):
    g = BoxGrid(2, 1.0, 12)
    rng = np.random.default_rng(seed)
    f = SampledField(g, rng.normal(size=g.size) * rng.random(g.size) ** 3)
    c = int(rng.integers(g.size))
    assert ball_average(f, c, r, p) <= ball_average(f, c, r, p + dq) * (1 + 1e-12) + 1e-300


@pytest.mark.parametrize("V", [
    make_family("complex_gaussian", {"amplitude": 1.0, "width": 1.0}, dim=3),
    make_family("complex_gaussian", {"amplitude": 2 - 1j, "width": 0.7}, dim=3),
])
def test_mc_norm_at_lp_endpoint_matches_lp(V):
    g = BoxGrid(3, 4.0, 40)
    f = sample(V, g)
    mc = MCParams(2.0, 1.5, [g.origin_index()], [20.0])
    assert mc_norm(f, mc) <= lp_norm(f, 1.5) * (1 + 1e-9)
    assert mc_norm(f, mc) == pytest.approx(lp_norm(f, 1.5), rel=0.02)


def test_lp_norm_against_quad():
    V = make_family("complex_gaussian", {"amplitude": 3.0, "width": 0.5}, dim=1)
    exact = integrate.quad(lambda x: abs(V.eval(x)) ** 2.5, -10, 10)[0] ** (1 / 2.5)
    assert lp_norm(sample(V, BoxGrid(1, 5.0, 1000)), 2.5) == pytest.approx(exact, rel=1e-6)
