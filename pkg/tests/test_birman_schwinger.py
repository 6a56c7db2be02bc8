import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from bsbounds.birman_schwinger import (CELL_CONST_3D, CELL_LOG_2D, KernelResolvent, bs_distance,
                                       bs_matrix, bs_norm, cell_constant_3d, cell_diagonal,
                                       cell_log_2d, continuum_eigenvalues, detect_eigenvalue,
                                       distance_to_ray, half_powers, radial_lowest,
                                       radial_spectrum, region_map, resolvent_kernel, sqrt_signed,
                                       sqrt_upper, weighted_resolvent)
from bsbounds.errors import BranchCutError, InvalidParameter
from bsbounds.grid import BoxGrid, RadialGrid, sample
from bsbounds.potentials import critical_resonance, make_family, zero

off_ray = st.tuples(st.floats(-30, 30), st.floats(-30, 30)).map(lambda t: complex(*t)).filter(
    lambda z: distance_to_ray(z) > 1e-3)


def test_cell_constants_by_quadrature():
    assert cell_constant_3d() == pytest.approx(CELL_CONST_3D, rel=1e-12)
    assert cell_log_2d() == pytest.approx(CELL_LOG_2D, rel=1e-12)


def test_cell_log_2d_direct_quadrature():
    # independent route: plain 2d quadrature over one quadrant
    val, _ = integrate.dblquad(lambda y, x: 0.5 * math.log(x * x + y * y), 0, 0.5, 0, 0.5,
                               epsabs=1e-12)
    assert 4 * val == pytest.approx(CELL_LOG_2D, rel=1e-8)


@pytest.mark.parametrize("lam", [-0.25, -4 + 1j, 8.75 + 3j])
def test_cube_average_against_cartesian_quadrature(lam):
    # e^{ik rho}/rho minus the static part is bounded, so a plain triple integral works
    h = 1.0
    k = sqrt_upper(lam)

    def smooth(z, y, x):
        r = math.sqrt(x * x + y * y + z * z)
        return (np.exp(1j * k * r) - 1) / r if r > 0 else 1j * k

    re = integrate.tplquad(lambda z, y, x: smooth(z, y, x).real, 0, .5, 0, .5, 0, .5,
                           epsabs=1e-10)[0]
    im = integrate.tplquad(lambda z, y, x: smooth(z, y, x).imag, 0, .5, 0, .5, 0, .5,
                           epsabs=1e-10)[0]
    expected = (CELL_CONST_3D + 8 * (re + 1j * im)) / (4 * math.pi * h)
    assert cell_diagonal(3, lam, h) == pytest.approx(expected, rel=1e-7)


def test_cell_diagonal_small_h_limits():
    lam, h = -1.0, 1e-5
    k = sqrt_upper(lam)
    assert cell_diagonal(3, lam, h) == pytest.approx(
        CELL_CONST_3D / (4 * math.pi * h) + 1j * k / (4 * math.pi), rel=1e-8)
    expected2 = 0.25j - (np.log(k / 2) + np.euler_gamma + math.log(h) + CELL_LOG_2D) / (2 * math.pi)
    assert cell_diagonal(2, lam, h) == pytest.approx(expected2, rel=1e-8)


@settings(max_examples=60)
@given(lam=off_ray)
def test_sqrt_upper_branch(lam):
    k = sqrt_upper(lam)
    assert k.imag > 0
    assert k * k == pytest.approx(lam, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 4.0, 1e-20 + 0j])
def test_branch_cut_rejected(lam):
    with pytest.raises(BranchCutError):
        sqrt_upper(lam)


def test_sqrt_signed():
    s, a = sqrt_signed(np.array([4.0, -9.0, 0.0, 2j]))
    assert np.allclose(a, [2, 3, 0, math.sqrt(2)])
    assert np.allclose(s * a, [4, -9, 0, 2j])
    assert s[2] == 0


@settings(max_examples=30)
@given(lam=off_ray, rho=st.floats(0.05, 5.0))
def test_kernels_solve_radial_helmholtz(lam, rho):
    # (-Delta - lam) G = 0 away from 0, checked by finite differences in rho
    eps = 1e-4 * rho
    for d in (1, 2, 3):
        g = lambda r: resolvent_kernel(d, lam, r)
        g0, gp, gm = g(rho), g(rho + eps), g(rho - eps)
        lap = (gp - 2 * g0 + gm) / eps ** 2 + (d - 1) / rho * (gp - gm) / (2 * eps)
        scale = abs(g0) * max(1.0, abs(lam)) + abs(gp - gm) / eps
        assert abs(-lap - lam * g0) <= 1e-4 * scale


def test_kernel_1d_jump_condition():
    lam = -2.0 + 1.0j
    k = sqrt_upper(lam)
    dG = 1j * k * resolvent_kernel(1, lam, 0.0)
    # G'(0+) - G'(0-) = -1
    assert 2 * dG == pytest.approx(-1.0)


def test_kernel_2d_value():
    assert resolvent_kernel(2, -1.0, 1.0) == pytest.approx(special.k0(1.0) / (2 * math.pi))


def test_kernel_bad_dimension():
    with pytest.raises(InvalidParameter):
        resolvent_kernel(4, -1.0, 1.0)


@pytest.mark.parametrize("dim,n", [(1, 40), (2, 10), (3, 5)])
def test_fft_apply_matches_dense_table(dim, n):
    g = BoxGrid(dim, 1.5, n)
    R = KernelResolvent(g, -1.0 + 2.0j)
    idx = np.arange(g.size)
    G = R.columns(idx, idx)
    rng = np.random.default_rng(0)
    v = rng.normal(size=g.size) + 1j * rng.normal(size=g.size)
    assert np.allclose(R.apply(v), G @ v, rtol=1e-11, atol=1e-13)
    assert np.allclose(R.apply_adjoint(v), G.conj().T @ v, rtol=1e-11, atol=1e-13)
    assert np.allclose(G, G.T)


@pytest.mark.parametrize("backend", ["kernel", "lattice"])
def test_matrix_free_matches_dense(backend):
    g = BoxGrid(2, 3.0, 12)
    V = make_family("complex_gaussian", {"amplitude": 2 - 1j, "width": 1.0}, dim=2)
    Kd = bs_matrix(V, g, -1 + 1j, backend, dense=True)
    Kf = bs_matrix(V, g, -1 + 1j, backend, dense=False)
    M = Kd.toarray()
    v = np.random.default_rng(1).normal(size=Kd.order) + 0j
    assert np.allclose(Kf.operator.matvec(v), M @ v, rtol=1e-10)
    assert np.allclose(Kf.operator.rmatvec(v), M.conj().T @ v, rtol=1e-10)
    assert bs_norm(Kf) == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)


def test_factorisation_for_nonconstant_phase():
    g = BoxGrid(1, 3.0, 60)
    V = make_family("complex_gaussian", {"amplitude": 1.0, "width": 1.0})
    W = lambda x: V(x) * np.exp(1j * np.asarray(x).ravel())
    from bsbounds.grid import SampledField
    f = SampledField(g, W(g.nodes()))
    K = bs_matrix(f, g, -0.5 + 0.3j)
    assert K.operator.symmetry is None
    M = K.toarray()
    phase = K.s[K.support] / K.a[K.support]
    AGA = M / phase[:, None]
    assert np.allclose(AGA, AGA.T, atol=1e-13)


def test_constant_phase_is_flagged_symmetric():
    g = BoxGrid(1, 3.0, 60)
    V = make_family("complex_gaussian", {"amplitude": 1j, "width": 1.0})
    K = bs_matrix(V, g, -1.0)
    assert K.operator.symmetry == "complex-symmetric"


def test_empty_support():
    K = bs_matrix(zero(2), BoxGrid(2, 1.0, 8), -1.0)
    assert K.order == 0 and bs_norm(K) == 0.0 and bs_distance(K) == 1.0


def test_dimension_checks():
    with pytest.raises(InvalidParameter):
        bs_matrix(critical_resonance(), BoxGrid(2, 1.0, 8), -1.0)
    with pytest.raises(InvalidParameter):
        bs_matrix(zero(1), BoxGrid(1, 1.0, 8), -1.0, backend="spectral")
    with pytest.raises(BranchCutError):
        bs_matrix(zero(1), BoxGrid(1, 1.0, 8), 2.0, backend="kernel")


def test_backends_agree_for_smooth_potential():
    g = BoxGrid(1, 10.0, 800)
    V = make_family("complex_gaussian", {"amplitude": -1 + 0.5j, "width": 1.0})
    a = bs_norm(bs_matrix(V, g, -1.0, "kernel"))
    b = bs_norm(bs_matrix(V, g, -1.0, "lattice"))
    assert a == pytest.approx(b, rel=1e-3)


def test_kernel_norm_against_quadrature_oracle():
    # 1d, V = -1 on [-1, 1], lam = -1: K = -(1/2) e^{-|x-y|} on [-1,1]; its top eigenvalue
    # solves mu = (1/(1+kappa^2)) with kappa tan kappa = 1 (even mode)
    kap = optimize.brentq(lambda t: t * math.tan(t) - 1, 0.1, 1.5)
    exact = 1 / (1 + kap ** 2)
    g = BoxGrid(1, 1.0, 400)
    V = make_family("complex_square_well", {"amplitude": -1.0, "half_width": 1.0})
    assert bs_norm(bs_matrix(V, g, -1.0)) == pytest.approx(exact, rel=1e-4)


def square_well_levels(V0, a):
    """Bound state energies of -u'' - V0 1_{|x|<a} by the matching conditions."""
    out = []
    kmax = math.sqrt(V0)
    f_even = lambda k: k * math.tan(k * a) - math.sqrt(V0 - k * k)
    f_odd = lambda k: -k / math.tan(k * a) - math.sqrt(V0 - k * k)
    for f, lo in ((f_even, 0.0), (f_odd, math.pi / (2 * a))):
        start = lo
        while start < kmax:
            end = min(start + math.pi / (2 * a), kmax)
            a_, b_ = start + 1e-9, end - 1e-9
            if a_ < b_ and f(a_) * f(b_) < 0:
                k = optimize.brentq(f, a_, b_)
                if abs(f(k)) < 1e-6:
                    out.append(k * k - V0)
            start += math.pi / a
    return sorted(out)


def test_continuum_eigenvalues_square_well():
    V0, a = 4.0, 1.0
    exact = square_well_levels(V0, a)
    assert len(exact) == 2
    V = make_family("complex_square_well", {"amplitude": -V0, "half_width": a})
    spec = continuum_eigenvalues(V, BoxGrid(1, 8.0, 1600))
    got = np.sort(spec.eigenvalues.real)
    assert len(got) == 2
    assert np.allclose(got, exact, rtol=2e-2)
    assert np.allclose(spec.eigenvalues.imag, 0, atol=1e-10)


def test_birman_schwinger_equivalence_lattice():
    g = BoxGrid(1, 6.0, 300)
    V = make_family("complex_gaussian", {"amplitude": -3 + 2j, "width": 1.0})
    spec = continuum_eigenvalues(V, g)
    assert len(spec) >= 1
    for lam in spec.eigenvalues:
        dist, hit = detect_eigenvalue(V, g, lam, "lattice")
        assert hit, dist
    dist, hit = detect_eigenvalue(V, g, spec.eigenvalues[0] + 0.3, "lattice")
    assert not hit


def test_imaginary_well_eigenvalue_against_matching_condition():
    # V = i 1_{[-1,1]}: even mode cos(k1 x) inside, e^{ik|x|} outside, k1^2 = lam - i
    def mismatch(z):
        lam = complex(*z)
        k1, k = np.sqrt(lam - 1j), sqrt_upper(lam)
        r = -k1 * np.tan(k1) - 1j * k
        return [r.real, r.imag]

    exact = complex(*optimize.fsolve(mismatch, [0.4, 0.4], xtol=1e-13))
    V = make_family("complex_square_well", {"amplitude": 1j, "half_width": 1.0})
    spec = continuum_eigenvalues(V, BoxGrid(1, 20.0, 2000))
    assert len(spec) == 1
    assert abs(spec.eigenvalues[0] - exact) < 1e-3 * abs(exact)


def test_filter_drops_modes_of_a_box_without_eigenvalues():
    # a small repulsive bump has no eigenvalues; the raw lattice spectrum is all box modes
    V = make_family("complex_gaussian", {"amplitude": 0.5 + 0.5j, "width": 1.0})
    spec = continuum_eigenvalues(V, BoxGrid(1, 5.0, 500), keep_unstable=True)
    assert not np.any(spec.stable)


def test_region_map_conjugate_symmetry_for_real_potential():
    V = make_family("complex_gaussian", {"amplitude": -2.0, "width": 1.0})
    g = BoxGrid(1, 4.0, 64)
    rows = region_map(V, g, (-3, 1, -2, 2), (3, 5))
    by = {(r.re_lambda, r.im_lambda): r for r in rows}
    for (x, y), r in by.items():
        if y != 0 and not r.flag:
            assert by[(x, -y)].bs_norm == pytest.approx(r.bs_norm, rel=1e-6)


def test_region_map_flags_and_ordering():
    V = make_family("complex_gaussian", {"amplitude": 1j, "width": 1.0})
    g = BoxGrid(1, 4.0, 48)
    serial = region_map(V, g, (-1, 1, 0, 1), (3, 2))
    threaded = region_map(V, g, (-1, 1, 0, 1), (3, 2), threads=3)
    assert [(r.re_lambda, r.im_lambda) for r in serial] == \
        [(r.re_lambda, r.im_lambda) for r in threaded]
    assert [r.bs_norm for r in serial] == pytest.approx([r.bs_norm for r in threaded], rel=1e-9)
    clamped = [r for r in serial if r.flag == "clamped"]
    assert clamped and all(r.im_lambda == 1e-6 for r in clamped)
    with pytest.raises(InvalidParameter):
        region_map(V, g, (-1, 1, 0, 1), (0, 2))


def test_region_map_warm_start_same_norms():
    V = make_family("complex_gaussian", {"amplitude": -1 + 1j, "width": 1.0})
    g = BoxGrid(1, 4.0, 48)
    a = region_map(V, g, (-2, -1, 0.5, 1.5), (3, 3), distances=False)
    b = region_map(V, g, (-2, -1, 0.5, 1.5), (3, 3), distances=False, warm_start=True)
    assert [r.bs_norm for r in a] == pytest.approx([r.bs_norm for r in b], rel=1e-6)


def test_half_powers_subcells():
    g = BoxGrid(1, 1.0, 4)
    V = make_family("complex_square_well", {"amplitude": 4.0, "half_width": 0.5})
    s, a = half_powers(V, g, subcells=16)
    # cells (-1,-.5),(-.5,0),(0,.5),(.5,1): inner two inside, outer two outside (edges at +-0.5)
    assert np.allclose(a, [0, 2, 2, 0], atol=0.2)


def test_radial_paths_agree():
    V = critical_resonance(1.5)
    rg = RadialGrid(30.0, 3000)
    assert radial_lowest(V, rg) == pytest.approx(radial_spectrum(V, rg)[0].real, rel=1e-9)
    assert radial_lowest(V, rg) < 0
    assert radial_lowest(critical_resonance(0.9), rg) > 0
    with pytest.raises(InvalidParameter):
        radial_lowest(make_family("complex_gaussian", {"amplitude": 1j, "width": 1.0}, dim=3), rg)


def test_weighted_resolvent_rejects_backend():
    with pytest.raises(InvalidParameter):
        weighted_resolvent(BoxGrid(1, 1.0, 8), -1.0, np.ones(8), np.ones(8), backend="x")


def test_box_gate_removes_weakly_bound_mode():
    # decay length of this mode exceeds the box; it vanishes on the 2L box
    V = make_family("complex_gaussian", {"amplitude": 0.5j, "width": 0.5})
    g = BoxGrid(1, 10.0, 1000)
    assert continuum_eigenvalues(V, g, check_box=False).eigenvalues.size == 1
    assert continuum_eigenvalues(V, g).eigenvalues.size == 0
