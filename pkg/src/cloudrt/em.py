"""Polarimetric field mathematics for point-cloud ray paths.

Conventions
-----------
* Phasors follow ``exp(+j w t)``: propagation over ``d`` contributes
  ``exp(-j 2 pi d / lambda)`` and the complex permittivity is
  ``eta = eps_r - j sigma / (w eps0)``.
* Fields travelling along ``k`` are expressed in ``polarization_basis(k)``.
  Every hop matrix maps the field from the canonical basis of its incoming
  direction to the canonical basis of its outgoing direction.
* Interaction physics is evaluated in a *hop frame*: ``e_perp`` is the
  normal of the plane spanned by the incoming and outgoing directions, and
  the second axis is ``k x e_perp`` on each side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from .geometry import EdgeSegment, Hit

C0 = 299_792_458.0
EPS0 = 8.8541878128e-12
POLE_TOL = 1e-9
MERGE_TAU = 1e-12


# --------------------------------------------------------------------------
# materials


@dataclass(frozen=True)
class Material:
    """Surface parameters: conductivity, permittivity, scattering, XPD."""

    sigma: float
    eps_r: float
    S: float = 0.0
    K_x: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.eps_r < 1:
            raise ValueError("eps_r must be >= 1")
        if not 0 <= self.S <= 1 or not 0 <= self.K_x <= 1:
            raise ValueError("S and K_x must lie in [0, 1]")

    @property
    def R(self) -> float:
        """Specular field fraction, sqrt(1 - S^2)."""
        return math.sqrt(1.0 - self.S * self.S)

    def features(self) -> np.ndarray:
        """Normalised inputs for the amplitude network."""
        return np.array([math.log10(self.sigma + 1e-6) / 7.0, (self.eps_r - 1.0) / 10.0,
                         self.S, self.K_x])


class MaterialTable:
    """Immutable id -> Material mapping with array views for vector lookups."""

    def __init__(self, materials: Sequence[Material]):
        self.materials = tuple(materials)
        if not self.materials:
            raise ValueError("material table is empty")
        self.sigma = np.array([m.sigma for m in self.materials])
        self.eps_r = np.array([m.eps_r for m in self.materials])
        self.S = np.array([m.S for m in self.materials])
        self.K_x = np.array([m.K_x for m in self.materials])
        self.feature_table = np.stack([m.features() for m in self.materials])

    def __len__(self):
        return len(self.materials)

    def __getitem__(self, i) -> Material:
        return self.materials[i]

    def check_ids(self, ids: np.ndarray) -> None:
        ids = np.asarray(ids)
        bad = ids[(ids < 0) | (ids >= len(self))]
        if bad.size:
            raise KeyError(f"unknown material id {int(bad[0])}")


def _default_material_file():
    return resources.files("cloudrt").joinpath("data/materials.json")


def load_presets(path=None) -> dict:
    """Named material presets from a material table file."""
    src = _default_material_file() if path is None else Path(path)
    doc = json.loads(src.read_text(encoding="utf-8"))
    return {name: Material(name=name, **vals) for name, vals in doc.get("presets", {}).items()}


def load_materials(path=None) -> MaterialTable:
    """Material table file: ``{"presets": {...}, "materials": {"0": "itu_concrete", ...}}``.

    Each entry of ``materials`` is either a preset name or an explicit
    ``{"sigma", "eps_r", "S", "K_x"}`` record.
    """
    src = _default_material_file() if path is None else Path(path)
    doc = json.loads(src.read_text(encoding="utf-8"))
    presets = {name: Material(name=name, **vals) for name, vals in doc.get("presets", {}).items()}
    entries = doc.get("materials")
    if entries is None:
        return MaterialTable(list(presets.values()))
    out = []
    for i in range(len(entries)):
        if str(i) not in entries:
            raise KeyError(f"material table missing id {i}")
        e = entries[str(i)]
        if isinstance(e, str):
            if e not in presets:
                raise KeyError(f"unknown material preset {e!r}")
            out.append(presets[e])
        else:
            out.append(Material(**e))
    return MaterialTable(out)


def save_materials(table: MaterialTable, path, presets: Optional[dict] = None) -> None:
    presets = presets if presets is not None else load_presets()
    mats = {}
    for i, m in enumerate(table.materials):
        if m.name in presets and presets[m.name] == m:
            mats[str(i)] = m.name
        else:
            mats[str(i)] = {"sigma": m.sigma, "eps_r": m.eps_r, "S": m.S, "K_x": m.K_x,
                            "name": m.name}
    doc = {"presets": {k: {"sigma": v.sigma, "eps_r": v.eps_r, "S": v.S, "K_x": v.K_x}
                       for k, v in presets.items()},
           "materials": mats}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


# --------------------------------------------------------------------------
# polarization bases


@dataclass(frozen=True)
class PolBasis:
    e_p: np.ndarray
    e_q: np.ndarray

    def residuals(self, k) -> float:
        k = np.asarray(k, dtype=np.float64)
        return float(max(abs(self.e_p @ self.e_q), abs(self.e_p @ k), abs(self.e_q @ k),
                         abs(self.e_p @ self.e_p - 1), abs(self.e_q @ self.e_q - 1),
                         np.linalg.norm(np.cross(self.e_p, self.e_q) - k)))


@dataclass
class PolAmp:
    """2x2 complex field transfer over one hop; ``length`` is the segment it covers."""

    m: np.ndarray
    length: float = 0.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.complex128).reshape(2, 2)


def polarization_basis_batch(k: np.ndarray):
    k = np.asarray(k, dtype=np.float64).reshape(-1, 3)
    ep = np.stack([-k[:, 1], k[:, 0], np.zeros(len(k))], axis=1)  # z x k
    nrm = np.linalg.norm(ep, axis=1)
    pole = np.abs(k[:, 2]) > 1.0 - POLE_TOL
    ep[pole] = np.array([1.0, 0.0, 0.0])
    nrm[pole] = 1.0
    ep = ep / nrm[:, None]
    # at the poles x is not exactly transverse unless k is exactly +-z
    ep[pole] = ep[pole] - np.sum(ep[pole] * k[pole], axis=1, keepdims=True) * k[pole]
    ep[pole] /= np.linalg.norm(ep[pole], axis=1, keepdims=True)
    eq = np.cross(k, ep)
    return ep, eq


def polarization_basis(k) -> PolBasis:
    """Deterministic transverse basis: e_p = unit(z x k), x at the poles, e_q = k x e_p."""
    k = np.asarray(k, dtype=np.float64)
    if abs(np.linalg.norm(k) - 1.0) > 1e-9:
        raise ValueError("k must be unit length")
    ep, eq = polarization_basis_batch(k[None])
    return PolBasis(ep[0], eq[0])


def basis_transform(out_basis: PolBasis, in_basis: PolBasis) -> np.ndarray:
    """Change-of-basis matrix from ``out_basis`` coordinates to ``in_basis`` coordinates."""
    return np.array([[in_basis.e_p @ out_basis.e_p, in_basis.e_p @ out_basis.e_q],
                     [in_basis.e_q @ out_basis.e_p, in_basis.e_q @ out_basis.e_q]])


def _transform_batch(src_p, src_q, dst_p, dst_q):
    d = np.empty((len(src_p), 2, 2))
    d[:, 0, 0] = np.sum(dst_p * src_p, axis=1)
    d[:, 0, 1] = np.sum(dst_p * src_q, axis=1)
    d[:, 1, 0] = np.sum(dst_q * src_p, axis=1)
    d[:, 1, 1] = np.sum(dst_q * src_q, axis=1)
    return d


def hop_perp(d_in: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Unit normal of the plane spanned by incoming and outgoing directions."""
    d_in = np.asarray(d_in, dtype=np.float64).reshape(-1, 3)
    d_out = np.asarray(d_out, dtype=np.float64).reshape(-1, 3)
    c = np.cross(d_in, d_out)
    n = np.linalg.norm(c, axis=1)
    bad = n < 1e-9
    if np.any(bad):
        c[bad] = polarization_basis_batch(d_in[bad])[0]
        n[bad] = 1.0
    return c / n[:, None]


def hop_global(d_in, d_out, local: np.ndarray) -> np.ndarray:
    """Embed hop-frame interaction matrices into canonical ray bases.

    Returns ``D(pb(d_out) <- out_frame) @ local @ D(in_frame <- pb(d_in))``.
    """
    d_in = np.asarray(d_in, dtype=np.float64).reshape(-1, 3)
    d_out = np.asarray(d_out, dtype=np.float64).reshape(-1, 3)
    local = np.asarray(local).reshape(-1, 2, 2)
    e = hop_perp(d_in, d_out)
    in_q = np.cross(d_in, e)
    out_q = np.cross(d_out, e)
    pin, qin = polarization_basis_batch(d_in)
    pout, qout = polarization_basis_batch(d_out)
    d_into = _transform_batch(pin, qin, e, in_q)
    d_outof = _transform_batch(e, out_q, pout, qout)
    return d_outof @ local @ d_into


# --------------------------------------------------------------------------
# reflection


def fresnel(cos_theta_i, mat: Material, f: float):
    """Fresnel coefficients ``(r_perp, r_par)`` for complex permittivity.

    ``r_par`` uses the convention in which both coefficients coincide at
    normal incidence, e.g. ``(1 - sqrt(eps))/(1 + sqrt(eps))``.
    """
    if f <= 0:
        raise ValueError("frequency must be positive")
    return fresnel_arrays(cos_theta_i, mat.eps_r, mat.sigma, f)


def fresnel_arrays(cos_theta_i, eps_r, sigma, f):
    c = np.asarray(cos_theta_i, dtype=np.float64)
    if np.any(c <= 0):
        raise ValueError("non-incident geometry")
    c = np.minimum(c, 1.0)
    eta = np.asarray(eps_r) - 1j * np.asarray(sigma) / (2 * math.pi * f * EPS0)
    root = np.sqrt(eta - (1.0 - c * c))
    r_perp = (c - root) / (c + root)
    r_par = (root - eta * c) / (root + eta * c)
    if r_perp.ndim == 0:
        return complex(r_perp), complex(r_par)
    return r_perp, r_par


def reflect_dir(k_i, n) -> np.ndarray:
    k_i = np.asarray(k_i, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    c = float(k_i @ n)
    if c >= 0:
        raise ValueError("ray leaves surface")
    k_r = k_i - 2.0 * c * n
    return k_r / np.linalg.norm(k_r)


def reflection_local(cos_i, eps_r, sigma, S, f) -> np.ndarray:
    """Hop-frame reflection matrices, shape (M, 2, 2).

    The parallel axis of the hop frame flips orientation under a mirror,
    hence the sign on the second diagonal entry.
    """
    rp, rl = fresnel_arrays(np.atleast_1d(cos_i), eps_r, sigma, f)
    R = np.sqrt(1.0 - np.asarray(S, dtype=np.float64) ** 2)
    out = np.zeros((len(rp), 2, 2), dtype=np.complex128)
    out[:, 0, 0] = R * rp
    out[:, 1, 1] = -R * rl
    return out


def spreading_factor(kind: str, d: float, rho: float = 0.0) -> float:
    """Field spreading over a segment of length ``d``.

    ``rho`` is the unfolded distance from the current wave source (Tx,
    image or scatterer) to the segment start; a fresh source gives ``1/d``.
    """
    if d <= 0:
        raise ValueError("segment length must be positive")
    if kind != "spherical":
        raise ValueError(f"unknown wave kind {kind!r}")
    return 1.0 / d if rho <= 0 else rho / (rho + d)


def diffraction_spreading(s: float, s_prime: float) -> float:
    if s <= 0 or s_prime <= 0:
        raise ValueError("distances must be positive")
    if math.isinf(s_prime):
        return 1.0 / math.sqrt(s)
    return math.sqrt(s_prime / (s * (s + s_prime)))


def propagation(d: float, lam: float, rho: float = 0.0) -> PolAmp:
    """Free-space segment: spreading and phase, no polarization change."""
    a = spreading_factor("spherical", d, rho) * np.exp(-2j * math.pi * d / lam)
    return PolAmp(a * np.eye(2), d)


def reflection_amplitude(hit: Hit, k_i, k_r, mat: Material, d: float, lam: float,
                         prev_out_basis: Optional[PolBasis] = None, rho: float = 0.0) -> PolAmp:
    """Specular hop: mirror at ``hit`` then propagation over ``d``.

    ``prev_out_basis`` is the basis the incoming field is expressed in
    (canonical basis of ``k_i`` when omitted).
    """
    k_i = np.asarray(k_i, dtype=np.float64)
    k_r = np.asarray(k_r, dtype=np.float64)
    cos_i = -float(k_i @ hit.normal)
    if cos_i <= 0:
        raise ValueError("ray leaves surface")
    f = C0 / lam
    local = reflection_local(cos_i, mat.eps_r, mat.sigma, mat.S, f)
    m = hop_global(k_i, k_r, local)[0]
    if prev_out_basis is not None:
        m = m @ basis_transform(prev_out_basis, polarization_basis(k_i))
    prop = spreading_factor("spherical", d, rho) * np.exp(-2j * math.pi * d / lam)
    return PolAmp(m * prop, d)


# --------------------------------------------------------------------------
# diffuse scattering


def lambertian(cos_s):
    return np.maximum(np.asarray(cos_s, dtype=np.float64), 0.0) / math.pi


def scatter_local(cos_i, cos_s, S, K_x, patch_area, gamma=1.0) -> np.ndarray:
    """Hop-frame diffuse matrices, shape (M, 2, 2), without spreading.

    Magnitude ``S * gamma * sqrt(f_s cos_i dA)`` with a Lambertian lobe;
    the polarization split is an orthogonal mix that sends a fraction
    ``K_x`` of the power into the cross component (zero random phases).
    """
    cos_i = np.atleast_1d(np.asarray(cos_i, dtype=np.float64))
    mag = (np.asarray(S) * gamma * np.sqrt(lambertian(cos_s) * np.maximum(cos_i, 0.0)
                                           * patch_area))
    co = np.sqrt(1.0 - np.asarray(K_x, dtype=np.float64))
    cx = np.sqrt(np.asarray(K_x, dtype=np.float64))
    out = np.zeros((len(cos_i), 2, 2), dtype=np.complex128)
    out[:, 0, 0] = mag * co
    out[:, 1, 1] = mag * co
    out[:, 0, 1] = -mag * cx
    out[:, 1, 0] = mag * cx
    return out


def scatter_amplitude(hit: Hit, k_i, k_s, mat: Material, d: float, lam: float,
                      patch_area: float, Gamma: float = 1.0,
                      prev_out_basis: Optional[PolBasis] = None) -> PolAmp:
    """Diffuse hop from the patch at ``hit`` toward ``k_s`` over distance ``d``."""
    k_i = np.asarray(k_i, dtype=np.float64)
    k_s = np.asarray(k_s, dtype=np.float64)
    n = hit.normal
    cos_i = -float(k_i @ n)
    cos_s = float(k_s @ n)
    if cos_i <= 0:
        raise ValueError("ray leaves surface")
    if cos_s <= 0:
        raise ValueError("scatter into surface")
    if patch_area <= 0:
        raise ValueError("patch area must be positive")
    local = scatter_local(cos_i, cos_s, mat.S, mat.K_x, patch_area, Gamma)
    m = hop_global(k_i, k_s, local)[0]
    if prev_out_basis is not None:
        m = m @ basis_transform(prev_out_basis, polarization_basis(k_i))
    prop = spreading_factor("spherical", d) * np.exp(-2j * math.pi * d / lam)
    return PolAmp(m * prop, d)


# --------------------------------------------------------------------------
# wedge diffraction


def edge_frame(edge: EdgeSegment):
    """(e, t0, n0): edge axis, face-0 tangent pointing away from the edge, face-0 normal.

    Angles around the edge are measured from ``t0`` toward ``n0``; the
    exterior region spans ``[0, n*pi]``.
    """
    e = edge.direction
    n0 = edge.face0_normal / np.linalg.norm(edge.face0_normal)
    nn = edge.facen_normal / np.linalg.norm(edge.facen_normal)
    base = np.cross(n0, e)
    base /= np.linalg.norm(base)
    wn = edge.wedge_n * math.pi
    best = None
    for s in (1.0, -1.0):
        t0 = s * base
        expect = math.sin(wn) * t0 - math.cos(wn) * n0
        err = np.linalg.norm(expect - nn)
        if best is None or err < best[0]:
            best = (err, t0)
    return e, best[1], n0


def wedge_angle(edge: EdgeSegment, w) -> np.ndarray:
    """Angle of direction(s) ``w`` around the edge, in [0, 2 pi)."""
    e, t0, n0 = edge_frame(edge)
    w = np.asarray(w, dtype=np.float64).reshape(-1, 3)
    ang = np.arctan2(w @ n0, w @ t0)
    return np.mod(ang, 2 * math.pi)


def keller_cone_dirs(edge: EdgeSegment, k_i, n_dirs: int) -> np.ndarray:
    """Directions on the diffraction cone of ``k_i``, spread over the exterior wedge."""
    k_i = np.asarray(k_i, dtype=np.float64)
    e, t0, n0 = edge_frame(edge)
    cb = float(k_i @ e)
    sb = math.sqrt(max(0.0, 1.0 - cb * cb))
    if sb < 1e-9:
        raise ValueError("degenerate cone")
    wn = edge.wedge_n * math.pi
    phi = (np.arange(n_dirs) + 0.5) * wn / n_dirs
    d = cb * e[None, :] + sb * (np.cos(phi)[:, None] * t0[None, :] + np.sin(phi)[:, None] * n0[None, :])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def transition_function(x):
    """Kouyoumjian-Pathak F(x) = 2j sqrt(x) e^{jx} int_{sqrt x}^inf e^{-j t^2} dt, x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    sx = np.sqrt(np.maximum(x, 0.0))
    u = sx * math.sqrt(2.0 / math.pi)
    s_, c_ = special.fresnel(u)
    tail = math.sqrt(math.pi / 2.0) * ((0.5 - c_) - 1j * (0.5 - s_))
    return 2j * sx * np.exp(1j * x) * tail


def _cot_f(beta, sign, n, kL, tol=1e-9):
    # cot((pi + sign*beta)/(2n)) * F(kL a_sign(beta)) with the boundary limit
    N = np.round((beta + sign * math.pi) / (2 * math.pi * n))
    a = 2.0 * np.cos((2 * n * math.pi * N - beta) / 2.0) ** 2
    eps = math.pi + sign * beta - sign * 2 * math.pi * n * N
    out = np.empty(np.shape(beta), dtype=np.complex128)
    near = np.abs(eps) <= tol
    if np.any(near):
        e = eps[near]
        sg = np.where(e >= 0, 1.0, -1.0)
        k = kL[near]
        out[near] = n * (np.sqrt(2 * math.pi * k) * sg - 2 * k * e * np.exp(1j * math.pi / 4)) \
            * np.exp(1j * math.pi / 4)
    far = ~near
    arg = (math.pi + sign * beta[far]) / (2 * n)
    out[far] = (1.0 / np.tan(arg)) * transition_function(kL[far] * a[far])
    return out


def utd_coefficients(n, k, L, phi, phip, beta0, R0=(-1.0, 1.0), Rn=(-1.0, 1.0)):
    """Soft and hard UTD wedge coefficients with face reflection weights.

    ``R0``/``Rn`` are ``(soft, hard)`` reflection coefficients of face 0 and
    face n; ``(-1, 1)`` recovers the perfectly conducting wedge.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    phip = np.broadcast_to(np.asarray(phip, dtype=np.float64), phi.shape)
    kL = np.broadcast_to(np.asarray(k * L, dtype=np.float64), phi.shape).astype(np.float64)
    pref = -np.exp(-1j * math.pi / 4) / (2 * n * math.sqrt(2 * math.pi * k) * np.sin(beta0))
    d1 = pref * _cot_f(phi - phip, +1, n, kL)
    d2 = pref * _cot_f(phi - phip, -1, n, kL)
    d3 = pref * _cot_f(phi + phip, +1, n, kL)
    d4 = pref * _cot_f(phi + phip, -1, n, kL)
    ds = d1 + d2 + Rn[0] * d3 + R0[0] * d4
    dh = d1 + d2 + Rn[1] * d3 + R0[1] * d4
    return ds, dh


def diffraction_local(edge: EdgeSegment, k_i, k_d, mats: Sequence[Material], s: float,
                      s_prime: float, lam: float):
    """Edge-fixed diffraction matrix and its bases.

    Returns ``(T, inc_basis, dif_basis)`` where ``T = -diag(Ds, Dh)`` maps
    ``(beta0', phi')`` incident coordinates to ``(beta0, phi)`` diffracted
    coordinates.
    """
    k_i = np.asarray(k_i, dtype=np.float64)
    k_d = np.asarray(k_d, dtype=np.float64)
    e, t0, n0 = edge_frame(edge)
    n = edge.wedge_n
    cb = float(np.clip(k_i @ e, -1, 1))
    beta0 = math.acos(cb)
    sb = math.sin(beta0)
    if sb < 1e-9:
        raise ValueError("degenerate cone")
    phip = float(wedge_angle(edge, -k_i)[0])
    phi = float(wedge_angle(edge, k_d)[0])
    k = 2 * math.pi / lam
    L = s * s_prime * sb * sb / (s + s_prime) if not math.isinf(s_prime) else s * sb * sb
    f = C0 / lam

    def face_r(mat, graze):
        c = max(sb * abs(math.sin(graze)), 1e-12)
        rp, rl = fresnel(c, mat, f)
        return rp, -rl

    R0 = face_r(mats[0], phip)
    Rn = face_r(mats[1], n * math.pi - phi)
    ds, dh = utd_coefficients(n, k, L, phi, phip, beta0, R0, Rn)
    phi_i = -np.cross(e, k_i)
    phi_i /= np.linalg.norm(phi_i)
    beta_i = np.cross(k_i, phi_i)
    phi_d = np.cross(e, k_d)
    phi_d /= np.linalg.norm(phi_d)
    beta_d = np.cross(k_d, phi_d)
    T = np.diag([-ds[0], -dh[0]])
    return T, PolBasis(beta_i, phi_i), PolBasis(beta_d, phi_d)


def diffraction_amplitude(edge: EdgeSegment, k_i, k_d, mats: Sequence[Material], s: float,
                          s_prime: float, lam: float,
                          prev_out_basis: Optional[PolBasis] = None) -> PolAmp:
    """Diffracted hop: UTD matrix, spreading sqrt(s'/(s(s+s'))) and phase over ``s``."""
    k_i = np.asarray(k_i, dtype=np.float64)
    k_d = np.asarray(k_d, dtype=np.float64)
    T, bi, bd = diffraction_local(edge, k_i, k_d, mats, s, s_prime, lam)
    src = prev_out_basis if prev_out_basis is not None else polarization_basis(k_i)
    m = basis_transform(bd, polarization_basis(k_d)) @ T @ basis_transform(src, bi)
    prop = diffraction_spreading(s, s_prime) * np.exp(-2j * math.pi * s / lam)
    return PolAmp(m * prop, s)


# --------------------------------------------------------------------------
# path assembly


@dataclass
class PathGain:
    """Chained transfer matrix, delay, and complex baseband amplitude.

    ``a`` carries the received amplitude for isotropic antennas averaged
    over the two launch polarizations, so ``|a|^2`` is the path power gain.
    Its phase is the interaction phase with the propagation phase removed.
    """

    T: np.ndarray
    tau: float
    a: complex

    @property
    def power(self) -> float:
        return float(abs(self.a) ** 2)


def amplitude_from_T(T: np.ndarray, tau: float, freq: float) -> complex:
    lam = C0 / freq
    T = np.asarray(T)
    mag = lam / (4 * math.pi) * np.linalg.norm(T) / math.sqrt(2.0)
    flat = T.reshape(-1)
    dom = flat[int(np.argmax(np.abs(flat)))]
    ph = np.angle(dom) + 2 * math.pi * freq * tau if abs(dom) > 0 else 0.0
    return complex(mag * np.exp(1j * ph))


def chain(hops: Sequence[PolAmp], freq: float = 28e9) -> PathGain:
    """Ordered product of hop matrices (last hop leftmost) and total delay."""
    if not hops:
        raise ValueError("empty hop list")
    T = np.eye(2, dtype=np.complex128)
    total = 0.0
    for h in hops:
        T = h.m @ T
        total += h.length
    tau = total / C0
    return PathGain(T, tau, amplitude_from_T(T, tau, freq))


def los_gain(tx, rx, freq: float) -> PathGain:
    d = float(np.linalg.norm(np.asarray(rx, dtype=np.float64) - np.asarray(tx, dtype=np.float64)))
    return chain([propagation(d, C0 / freq)], freq)


def cir(paths: Iterable[PathGain], f: float):
    """Delay taps ``(tau, a e^{-j 2 pi f tau})``; taps within 1 ps are summed."""
    if f <= 0:
        raise ValueError("frequency must be positive")
    items = sorted(((p.tau, p.a * np.exp(-2j * math.pi * f * p.tau)) for p in paths),
                   key=lambda x: x[0])
    taps = []
    for tau, amp in items:
        if taps and tau - taps[-1][0] <= MERGE_TAU:
            taps[-1] = (taps[-1][0], taps[-1][1] + amp)
        else:
            taps.append((tau, amp))
    return taps


def cfr(paths: Iterable[PathGain], freqs) -> np.ndarray:
    """H(f) = sum_l a_l exp(-j 2 pi f tau_l) on the given grid."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    if freqs.size == 0:
        raise ValueError("empty frequency grid")
    paths = list(paths)
    a = np.array([p.a for p in paths], dtype=np.complex128)
    tau = np.array([p.tau for p in paths])
    return np.exp(-2j * math.pi * freqs[:, None] * tau[None, :]) @ a
