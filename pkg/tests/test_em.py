import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cloudrt import em
from cloudrt.geometry import EdgeSegment, Hit

F28 = 28e9
LAM = em.C0 / F28

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


# --------------------------------------------------------------------------
# materials


def test_default_materials():
    mats = em.load_materials()
    assert len(mats) == 5
    for m in mats.materials:
        assert m.R ** 2 + m.S ** 2 == pytest.approx(1.0, abs=4 * np.finfo(float).eps)


@pytest.mark.parametrize("kw", [dict(sigma=-1, eps_r=2), dict(sigma=0, eps_r=0.5),
                                dict(sigma=0, eps_r=2, S=1.5)])
def test_invalid_material(kw):
    with pytest.raises(ValueError):
        em.Material(**kw)


def test_materials_round_trip(tmp_path):
    mats = em.load_materials()
    em.save_materials(mats, tmp_path / "m.json")
    back = em.load_materials(tmp_path / "m.json")
    assert [m.name for m in back.materials] == [m.name for m in mats.materials]
    assert np.allclose(back.eps_r, mats.eps_r) and np.allclose(back.S, mats.S)


# --------------------------------------------------------------------------
# polarization bases


def test_basis_anchor():
    b = em.polarization_basis([0, 0, 1.0])
    assert np.allclose(b.e_p, [1, 0, 0]) and np.allclose(b.e_q, [0, 1, 0])


def test_basis_south_pole():
    b = em.polarization_basis([0, 0, -1.0])
    assert b.residuals([0, 0, -1.0]) < 1e-12


@settings(max_examples=200, deadline=None)
@given(unit)
def test_basis_orthonormal(k):
    assert em.polarization_basis(k).residuals(k) < 1e-12


def test_transform_identity_and_swap():
    b = em.polarization_basis(np.array([0.3, -0.2, 0.9]) / np.linalg.norm([0.3, -0.2, 0.9]))
    assert np.allclose(em.basis_transform(b, b), np.eye(2))
    swapped = em.PolBasis(b.e_q, b.e_p)
    assert np.allclose(em.basis_transform(swapped, b), [[0, 1], [1, 0]])


@given(st.floats(-math.pi, math.pi))
def test_transform_rotation(theta):
    out = em.polarization_basis([0, 0, 1.0])
    c, s = math.cos(theta), math.sin(theta)
    rot_in = em.PolBasis(c * out.e_p + s * out.e_q, -s * out.e_p + c * out.e_q)
    assert np.allclose(em.basis_transform(out, rot_in), [[c, s], [-s, c]])


# --------------------------------------------------------------------------
# Fresnel and reflection


def test_fresnel_no_contrast():
    rp, rl = em.fresnel(0.6, em.Material(0.0, 1.0), F28)
    assert abs(rp) < 1e-15 and abs(rl) < 1e-15


def test_fresnel_grazing():
    rp, _ = em.fresnel(1e-9, em.Material(0.01, 4.0), F28)
    assert abs(rp) == pytest.approx(1.0, abs=1e-6)


def test_fresnel_normal_incidence_eps5():
    rp, rl = em.fresnel(1.0, em.Material(0.0, 5.0), F28)
    ref = (1 - math.sqrt(5)) / (1 + math.sqrt(5))
    assert rp == pytest.approx(ref, abs=1e-12) and rl == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(-0.3820, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(1.0, 30.0), st.floats(0.0, 1e3))
def test_fresnel_passive(c, eps, sigma):
    rp, rl = em.fresnel(c, em.Material(sigma, eps), F28)
    assert abs(rp) <= 1 + 1e-12 and abs(rl) <= 1 + 1e-12


def test_reflect_dir_examples():
    assert np.allclose(em.reflect_dir([0, 0, -1.0], [0, 0, 1.0]), [0, 0, 1])
    s = 1 / math.sqrt(2)
    assert np.allclose(em.reflect_dir([s, 0, -s], [0, 0, 1.0]), [s, 0, s])


@settings(max_examples=200, deadline=None)
@given(unit, unit)
def test_reflection_law(k, n):
    if k @ n > -1e-3:
        k = -k if k @ n > 1e-3 else k
    if k @ n > -1e-3:
        return
    r = em.reflect_dir(k, n)
    # equal angles, coplanar with the normal, and unit length
    assert abs((r @ n) + (k @ n)) < 1e-12
    assert abs(np.cross(k, n) @ r) < 1e-12
    assert abs(np.linalg.norm(r) - 1) < 1e-12


def test_fully_diffuse_reflection_is_zero():
    m = em.reflection_local(0.7, 5.0, 0.1, 1.0, F28)
    assert np.allclose(m, 0)


def _hit(n=(0, 0, 1.0)):
    return Hit(0, np.zeros(3), 1.0, np.asarray(n, float))


def test_perfect_conductor_normal_incidence():
    pec = em.Material(1e7, 1.0)
    loc = em.reflection_local(1.0, pec.eps_r, pec.sigma, 0.0, F28)[0]
    assert loc[0, 0] == pytest.approx(-1, abs=1e-3) and loc[1, 1] == pytest.approx(1, abs=1e-3)
    amp = em.reflection_amplitude(_hit(), [0, 0, -1.0], [0, 0, 1.0], pec, 1.0, LAM)
    assert np.allclose(np.linalg.svd(amp.m, compute_uv=False), 1.0, atol=1e-3)


def test_reflection_distance_scaling():
    mat = em.Material(0.1, 4.0)
    k_i = np.array([0.6, 0, -0.8])
    k_r = em.reflect_dir(k_i, [0, 0, 1.0])
    a1 = em.reflection_amplitude(_hit(), k_i, k_r, mat, 1.0, LAM).m
    a2 = em.reflection_amplitude(_hit(), k_i, k_r, mat, 2.0, LAM).m
    i = np.unravel_index(np.argmax(np.abs(a1)), a1.shape)
    assert a2[i] / a1[i] == pytest.approx(0.5 * cmath.exp(-2j * math.pi * 1.0 / LAM), rel=1e-9)


# --------------------------------------------------------------------------
# diffuse scattering


def test_lambertian_lobe():
    assert em.lambertian(1.0) == pytest.approx(1 / math.pi)
    assert em.lambertian(1e-12) < 1e-11


def test_scatter_polarization_split():
    co = em.scatter_local(0.8, 0.9, 0.5, 0.0, 1e-3)[0]
    cx = em.scatter_local(0.8, 0.9, 0.5, 1.0, 1e-3)[0]
    assert co[0, 1] == 0 and co[1, 0] == 0 and abs(co[0, 0]) > 0
    assert abs(cx[0, 0]) < 1e-18 and abs(cx[1, 1]) < 1e-18 and abs(cx[0, 1]) > 0


@given(st.floats(0.0, 1.0))
def test_scatter_power_split_conserves(kx):
    m = em.scatter_local(0.8, 0.9, 0.5, kx, 1e-3)[0]
    col = np.sum(np.abs(m) ** 2, axis=0)
    assert np.allclose(col, col[0]) and abs(m[0, 1]) ** 2 / col[0] == pytest.approx(kx)


# --------------------------------------------------------------------------
# diffraction


def right_wedge():
    # solid in x<0, y<0; face 0 is y=0 (normal +y), face n is x=0 (normal +x)
    return EdgeSegment([0, 0, 0], [0, 0, 2.0], [0, 1.0, 0], [1.0, 0, 0], math.pi / 2)


def test_cone_perpendicular_incidence():
    d = em.keller_cone_dirs(right_wedge(), [1.0, 0, 0], 16)
    assert np.allclose(d[:, 2], 0)


def test_cone_45_degrees():
    k = np.array([1.0, 0, 1.0]) / math.sqrt(2)
    d = em.keller_cone_dirs(right_wedge(), k, 16)
    assert np.allclose(np.abs(d[:, 2]), math.cos(math.pi / 4))


@settings(max_examples=100, deadline=None)
@given(unit)
def test_cone_residual(k):
    edge = right_wedge()
    if abs(k @ edge.direction) > 0.99:
        return
    d = em.keller_cone_dirs(edge, k, 9)
    assert np.max(np.abs(d @ edge.direction - k @ edge.direction)) < 1e-9


def _F_oracle(x):
    """Transition function by quadrature of the finite Fresnel integral."""
    sx = math.sqrt(x)
    re = integrate.quad(lambda t: math.cos(t * t), 0, sx, limit=400)[0]
    im = integrate.quad(lambda t: -math.sin(t * t), 0, sx, limit=400)[0]
    tail = math.sqrt(math.pi) / 2 * cmath.exp(-1j * math.pi / 4) - complex(re, im)
    return 2j * sx * cmath.exp(1j * x) * tail


def _utd_oracle(n, k, L, phi, phip, beta0):
    pref = -cmath.exp(-1j * math.pi / 4) / (2 * n * math.sqrt(2 * math.pi * k) * math.sin(beta0))

    def term(beta, sign):
        # N is the integer that best satisfies 2 pi n N - beta = sign * pi
        N = round((beta + sign * math.pi) / (2 * math.pi * n))
        a = 2 * math.cos((2 * n * math.pi * N - beta) / 2) ** 2
        return 1 / math.tan((math.pi + sign * beta) / (2 * n)) * _F_oracle(k * L * a)

    d1, d2 = pref * term(phi - phip, 1), pref * term(phi - phip, -1)
    d3, d4 = pref * term(phi + phip, 1), pref * term(phi + phip, -1)
    return d1 + d2 - d3 - d4, d1 + d2 + d3 + d4


@pytest.mark.parametrize("phi", [0.3, 2.0, 3.5, 4.5])
def test_utd_matches_direct_formula(phi):
    n, k, L, phip = 1.5, 2 * math.pi / LAM, 0.8, 0.9
    ds, dh = em.utd_coefficients(n, k, L, phi, phip, math.pi / 2)
    rs, rh = _utd_oracle(n, k, L, phi, phip, math.pi / 2)
    assert ds[0] == pytest.approx(rs, rel=1e-6) and dh[0] == pytest.approx(rh, rel=1e-6)


def test_utd_soft_hard_pattern():
    # conducting wedge: the image terms enter soft and hard with opposite signs
    n, k, L = 1.5, 2 * math.pi / LAM, 1.0
    phip = 0.4 * math.pi
    phi = n * math.pi - phip
    ds, dh = em.utd_coefficients(n, k, L, phi, phip, math.pi / 2)
    d_inc, _ = em.utd_coefficients(n, k, L, phi, phip, math.pi / 2, R0=(0, 0), Rn=(0, 0))
    assert (ds[0] + dh[0]) / 2 == pytest.approx(d_inc[0], rel=1e-12)
    assert abs(dh[0] - d_inc[0]) > 0.1 * abs(d_inc[0])
    # on either face the soft coefficient vanishes and the hard one does not
    for face in (1e-9, n * math.pi - 1e-9):
        s_, h_ = em.utd_coefficients(n, k, L, face, phip, math.pi / 2)
        assert abs(s_[0]) < 1e-6 * abs(h_[0])


def test_utd_deep_shadow_decay():
    n, k, L, phip = 1.5, 2 * math.pi / LAM, 1.0, math.pi / 4
    phi = np.linspace(math.pi + phip + 0.15, n * math.pi - 0.02, 40)
    ds, dh = em.utd_coefficients(n, k, L, phi, phip, math.pi / 2)
    assert np.all(np.diff(np.abs(ds)) < 0) and np.all(np.diff(np.abs(dh)) < 0)


def test_diffraction_spreading_plane_wave_limit():
    assert em.diffraction_spreading(4.0, math.inf) == pytest.approx(0.5)
    assert em.diffraction_spreading(4.0, 1e12) == pytest.approx(0.5, rel=1e-9)


def test_diffraction_amplitude_finite():
    edge = right_wedge()
    mats = (em.load_materials()[0],) * 2
    k_i = np.array([1.0, -0.2, 0.1])
    k_i /= np.linalg.norm(k_i)
    k_d = em.keller_cone_dirs(edge, k_i, 5)[2]
    amp = em.diffraction_amplitude(edge, k_i, k_d, mats, 2.0, 3.0, LAM)
    assert np.all(np.isfinite(amp.m)) and np.abs(amp.m).max() > 0


# --------------------------------------------------------------------------
# propagation, chaining and channel functions


def test_spreading_factor():
    assert em.spreading_factor("spherical", 1.0) == 1.0
    assert em.spreading_factor("spherical", 2.0) == 0.5
    with pytest.raises(ValueError):
        em.spreading_factor("spherical", 0.0)


@pytest.mark.parametrize("d", [1.0, 5.0, 20.0])
def test_los_friis(d):
    g = em.los_gain([0, 0, 0], [d, 0, 0], F28)
    assert g.power == pytest.approx((LAM / (4 * math.pi * d)) ** 2, rel=1e-12)


def test_chain_identity_hop():
    g = em.chain([em.PolAmp(np.eye(2), em.C0 * 1e-9)])
    assert np.allclose(g.T, np.eye(2)) and g.tau == pytest.approx(1e-9)


def test_chain_two_hops_and_zero_identity():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    g = em.chain([em.PolAmp(a, 1.0), em.PolAmp(b, 2.0)])
    assert np.allclose(g.T, b @ a)
    g2 = em.chain([em.PolAmp(a, 1.0), em.PolAmp(np.eye(2), 0.0), em.PolAmp(b, 2.0)])
    assert np.allclose(g2.T, g.T) and g2.tau == g.tau


def test_cir_single_and_cancelling():
    taps = em.cir([em.PathGain(np.eye(2), 0.0, 1.0)], F28)
    assert taps == [(0.0, 1.0)]
    pair = [em.PathGain(np.eye(2), 5e-9, 1.0), em.PathGain(np.eye(2), 5e-9, -1.0)]
    taps = em.cir(pair, F28)
    assert len(taps) == 1 and abs(taps[0][1]) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_cfr_direct_sum(seed):
    rng = np.random.default_rng(seed)
    paths = [em.PathGain(np.eye(2), float(t), complex(*rng.normal(size=2)))
             for t in rng.uniform(0, 100e-9, 6)]
    f = np.linspace(27.5e9, 28.5e9, 17)
    ref = [sum(p.a * cmath.exp(-2j * math.pi * fi * p.tau) for p in paths) for fi in f]
    assert np.allclose(em.cfr(paths, f), ref)


def test_cfr_flat_and_rotation():
    B = 100e6
    f = np.linspace(0, B, 11)
    flat = em.cfr([em.PathGain(np.eye(2), 0.0, 0.3 + 0.1j)], f)
    assert np.allclose(flat, 0.3 + 0.1j)
    rot = em.cfr([em.PathGain(np.eye(2), 1 / B, 1.0)], f)
    assert np.allclose(np.unwrap(np.angle(rot))[-1] - np.angle(rot[0]), -2 * math.pi)


def test_cfr_pdp_peaks():
    B, n = 1e9, 512
    f = np.arange(n) * B / n
    taus = [12e-9, 57e-9]
    H = em.cfr([em.PathGain(np.eye(2), t, 1.0) for t in taus], f)
    grid = np.arange(0, 100e-9, 1 / B)
    h = np.abs(np.exp(2j * math.pi * grid[:, None] * f[None, :]) @ H)
    peaks = sorted(grid[np.argsort(h)[-2:]])
    assert np.allclose(peaks, taus, atol=1 / B)
