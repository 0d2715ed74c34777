"""Shooting-and-bouncing-rays path construction over point-cloud scenes.

Rays leave Tx along Fibonacci directions and bounce specularly off point
discs. At every hit the tracer also

* connects the hit point straight to Rx as a diffuse hop (when the path
  still has diffuse budget and Rx is visible from the front side), and
* spawns ``n_scatter`` Lambertian branch rays that continue specularly.

Reception uses a sphere around Rx whose radius grows with the unfolded
path length. Wedge diffraction is enumerated separately (Tx -> edge -> Rx).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import em
from .geometry import (EPS_SELF, EdgeSegment, PointCloud, SpatialIndex, build_index,
                       facing_normals, fibonacci_directions, load_cloud, save_cloud)

REFLECT, SCATTER, DIFFRACT = 0, 1, 2
KIND_NAMES = ("reflect", "scatter", "diffract")


# --------------------------------------------------------------------------
# scene and configuration


@dataclass
class Scene:
    """Point cloud, wedge edges, materials and one Tx/Rx link."""

    cloud: Optional[PointCloud]
    index: Optional[SpatialIndex]
    edges: List[EdgeSegment]
    materials: em.MaterialTable
    tx: np.ndarray
    rx: np.ndarray
    freq: float = 28e9
    name: str = ""

    def __post_init__(self):
        self.tx = np.asarray(self.tx, dtype=np.float64).reshape(3)
        self.rx = np.asarray(self.rx, dtype=np.float64).reshape(3)
        if np.linalg.norm(self.tx - self.rx) == 0:
            raise ValueError("tx and rx coincide")
        if self.freq <= 0:
            raise ValueError("frequency must be positive")
        if self.cloud is not None and len(self.cloud):
            self.materials.check_ids(self.cloud.material_id)
            if self.cloud.normals is None:
                raise ValueError("scene cloud needs normals")
            if self.index is None:
                self.index = build_index(self.cloud)
        else:
            self.cloud = None
            self.index = None
        for e in self.edges:
            self.materials.check_ids(np.asarray(e.material_ids))

    @property
    def wavelength(self) -> float:
        return em.C0 / self.freq

    def with_link(self, tx, rx) -> "Scene":
        """Same geometry and index, new terminals."""
        return Scene(self.cloud, self.index, self.edges, self.materials, tx, rx, self.freq,
                     self.name)


@dataclass
class TraceConfig:
    """Ray budget, path constraints and reception settings.

    ``rx_kappa`` scales the reception radius
    ``rho = rx_kappa * unfolded_length * sqrt(4 pi / n_rays)``.
    """

    n_rays: int = 100_000
    max_bounces: int = 3
    max_diffuse: int = 1
    diffraction_order: int = 1
    rx_kappa: float = 0.85
    power_floor_db: float = 40.0
    n_scatter: int = 8
    seed: int = 0
    chunk_rays: int = 16384
    merge_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_bounces < 1:
            raise ValueError("max_bounces must be >= 1")
        if self.power_floor_db <= 0:
            raise ValueError("power_floor_db must be positive")
        if self.n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        if self.max_diffuse < 0 or self.n_scatter < 0 or self.diffraction_order not in (0, 1):
            raise ValueError("invalid diffuse/diffraction settings")

    @property
    def angular_spacing(self) -> float:
        return math.sqrt(4 * math.pi / self.n_rays)


def desk_trace_config(**kw) -> TraceConfig:
    """Half the rays and two diffuse branches; measured within 0.3 dB PL of the defaults."""
    base = dict(n_rays=50_000, n_scatter=2)
    base.update(kw)
    return TraceConfig(**base)


@dataclass
class Hop:
    """One interaction plus the segment that leaves it."""

    position: np.ndarray
    d_in: np.ndarray
    d_out: np.ndarray
    kind: str
    amp: em.PolAmp
    length: float
    local: np.ndarray
    point_id: int = -1
    material_id: int = -1
    normal: Optional[np.ndarray] = None
    edge_id: int = -1


@dataclass
class TracedPath:
    """Ordered hops, the Tx segment, and the chained gain."""

    hops: List[Hop]
    gain: em.PathGain
    launch_length: float
    aod: tuple
    aoa: tuple

    @property
    def bounce_count(self) -> int:
        return len(self.hops)

    @property
    def tau(self) -> float:
        return self.gain.tau

    @property
    def power(self) -> float:
        return self.gain.power

    @property
    def kinds(self) -> tuple:
        return tuple(h.kind for h in self.hops)

    @property
    def total_length(self) -> float:
        return self.launch_length + sum(h.length for h in self.hops)


@dataclass
class ChannelRealization:
    los: Optional[TracedPath]
    nlos: List[TracedPath]
    freq: float
    tx: np.ndarray = None
    rx: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def paths(self) -> List[TracedPath]:
        return ([self.los] if self.los is not None else []) + list(self.nlos)


def direction_angles(d) -> tuple:
    """(zenith, azimuth) in radians of a unit vector."""
    d = np.asarray(d, dtype=np.float64)
    return (float(math.acos(np.clip(d[2], -1, 1))), float(math.atan2(d[1], d[0])))


# --------------------------------------------------------------------------
# path batches


@dataclass
class PathBatch:
    """Struct-of-arrays form of P paths with h hops each.

    ``dirs[:, b]`` is the direction of segment b (segment 0 leaves Tx) and
    ``lens[:, b]`` its length; hop b sits between segments b and b+1.
    """

    pid: np.ndarray
    kind: np.ndarray
    pos: np.ndarray
    nrm: np.ndarray
    dirs: np.ndarray
    lens: np.ndarray
    local: Optional[np.ndarray] = None

    @property
    def n_hops(self) -> int:
        return self.pid.shape[1]

    def __len__(self):
        return len(self.pid)

    def take(self, idx) -> "PathBatch":
        return PathBatch(self.pid[idx], self.kind[idx], self.pos[idx], self.nrm[idx],
                         self.dirs[idx], self.lens[idx],
                         None if self.local is None else self.local[idx])

    @staticmethod
    def concat(batches: Sequence["PathBatch"]) -> "PathBatch":
        out = PathBatch(*(np.concatenate([getattr(b, f) for b in batches])
                          for f in ("pid", "kind", "pos", "nrm", "dirs", "lens")))
        if all(b.local is not None for b in batches):
            out.local = np.concatenate([b.local for b in batches])
        return out


def physical_locals(batch: PathBatch, scene: Scene) -> np.ndarray:
    """Hop-frame interaction matrices (P, h, 2, 2) from the em models."""
    P, h = batch.pid.shape
    out = np.zeros((P, h, 2, 2), dtype=np.complex128)
    mats = scene.materials
    area = scene.cloud.patch_area if scene.cloud is not None else 0.0
    for b in range(h):
        mid = scene.cloud.material_id[batch.pid[:, b]]
        d_in = batch.dirs[:, b]
        d_out = batch.dirs[:, b + 1]
        n = batch.nrm[:, b]
        cos_i = np.clip(-np.einsum("ij,ij->i", d_in, n), 1e-12, 1.0)
        refl = batch.kind[:, b] == REFLECT
        if np.any(refl):
            out[refl, b] = em.reflection_local(cos_i[refl], mats.eps_r[mid[refl]],
                                               mats.sigma[mid[refl]], mats.S[mid[refl]],
                                               scene.freq)
        sc = batch.kind[:, b] == SCATTER
        if np.any(sc):
            cos_s = np.einsum("ij,ij->i", d_out[sc], n[sc])
            out[sc, b] = em.scatter_local(cos_i[sc], cos_s, mats.S[mid[sc]],
                                          mats.K_x[mid[sc]], area)
    return out


def segment_factors(batch: PathBatch, freq: float) -> np.ndarray:
    """Spreading times phase for every segment, (P, h+1) complex.

    Specular chains continue the spherical wave from its image source;
    a diffuse hop starts a new spherical wave.
    """
    lam = em.C0 / freq
    P, h = batch.pid.shape
    out = np.empty((P, h + 1), dtype=np.complex128)
    rho = np.zeros(P)
    for b in range(h + 1):
        L = batch.lens[:, b]
        spread = np.where(rho > 0, rho / (rho + L), 1.0 / L)
        out[:, b] = spread * np.exp(-2j * math.pi * L / lam)
        if b < h:
            reset = batch.kind[:, b] == SCATTER
            rho = np.where(reset, 0.0, rho + L)
    return out


def assemble(batch: PathBatch, locals_: np.ndarray, freq: float):
    """Chain hop matrices into ``(T, tau, a, hop_globals, seg)``.

    ``hop_globals[:, b]`` is the canonical-basis interaction matrix of hop
    b without propagation; ``seg`` are the segment factors.
    """
    P, h = batch.pid.shape
    seg = segment_factors(batch, freq)
    glob = np.empty((P, h, 2, 2), dtype=np.complex128)
    T = np.broadcast_to(np.eye(2, dtype=np.complex128), (P, 2, 2)) * seg[:, 0, None, None]
    for b in range(h):
        glob[:, b] = em.hop_global(batch.dirs[:, b], batch.dirs[:, b + 1], locals_[:, b])
        T = (glob[:, b] * seg[:, b + 1, None, None]) @ T
    tau = batch.lens.sum(axis=1) / em.C0
    lam = em.C0 / freq
    mag = lam / (4 * math.pi) * np.linalg.norm(T.reshape(P, 4), axis=1) / math.sqrt(2.0)
    flat = T.reshape(P, 4)
    dom = flat[np.arange(P), np.argmax(np.abs(flat), axis=1)]
    a = mag * np.exp(1j * (np.angle(dom) + 2 * math.pi * freq * tau))
    return T, tau, a, glob, seg


def build_paths(batch: PathBatch, locals_: np.ndarray, scene: Scene) -> List[TracedPath]:
    if len(batch) == 0:
        return []
    T, tau, a, glob, seg = assemble(batch, locals_, scene.freq)
    mids = scene.cloud.material_id
    out = []
    for i in range(len(batch)):
        hops = []
        for b in range(batch.n_hops):
            hops.append(Hop(
                position=batch.pos[i, b].copy(), d_in=batch.dirs[i, b].copy(),
                d_out=batch.dirs[i, b + 1].copy(), kind=KIND_NAMES[batch.kind[i, b]],
                amp=em.PolAmp(glob[i, b] * seg[i, b + 1], float(batch.lens[i, b + 1])),
                length=float(batch.lens[i, b + 1]), local=locals_[i, b].copy(),
                point_id=int(batch.pid[i, b]), material_id=int(mids[batch.pid[i, b]]),
                normal=batch.nrm[i, b].copy()))
        out.append(TracedPath(hops, em.PathGain(T[i], float(tau[i]), complex(a[i])),
                              float(batch.lens[i, 0]), direction_angles(batch.dirs[i, 0]),
                              direction_angles(-batch.dirs[i, -1])))
    return out


# --------------------------------------------------------------------------
# deterministic random numbers keyed by ray lineage


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def keyed_uniform(seed: int, *keys) -> np.ndarray:
    """Uniform [0, 1) numbers that depend only on the seed and integer keys."""
    h = _mix(np.asarray([seed], dtype=np.uint64) * _GOLD + np.uint64(1))
    for k in keys:
        h = _mix(h ^ (np.atleast_1d(np.asarray(k)).astype(np.uint64) * _GOLD + np.uint64(0x632BE59BD9B4E019)))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def tangent_frames(n: np.ndarray):
    """Two unit tangents completing each normal to a right-handed frame."""
    ref = np.where(np.abs(n[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    t1 = np.cross(ref, n)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def lambertian_dirs(n: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Cosine-weighted hemisphere samples about each normal."""
    t1, t2 = tangent_frames(n)
    r = np.sqrt(u1)
    phi = 2 * math.pi * u2
    z = np.sqrt(np.maximum(1.0 - u1, 0.0))
    d = (r * np.cos(phi))[:, None] * t1 + (r * np.sin(phi))[:, None] * t2 + z[:, None] * n
    return d / np.linalg.norm(d, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# reception


@dataclass
class RayState:
    """Current segment of a ray: vertex, direction and unfolded length so far."""

    origin: np.ndarray
    direction: np.ndarray
    unfolded: float = 0.0


def reception_radius(unfolded, cfg: TraceConfig):
    return cfg.rx_kappa * cfg.angular_spacing * np.asarray(unfolded, dtype=np.float64)


def reception_batch(origins, dirs, unfolded, t_hit, rx, cfg: TraceConfig):
    """Vectorised reception test; returns ``(received, t_closest)``."""
    v = rx[None, :] - origins
    t_star = np.einsum("ij,ij->i", v, dirs)
    miss2 = np.maximum(np.einsum("ij,ij->i", v, v) - t_star ** 2, 0.0)
    rho = reception_radius(unfolded + t_star, cfg)
    ok = (t_star > EPS_SELF) & (t_star < t_hit) & (miss2 <= rho ** 2)
    return ok, t_star


def reception_test(path_state: RayState, rx, cfg: TraceConfig,
                   index: Optional[SpatialIndex] = None) -> bool:
    """True if the current segment passes within the reception sphere unoccluded."""
    o = np.asarray(path_state.origin, dtype=np.float64)[None]
    d = np.asarray(path_state.direction, dtype=np.float64)[None]
    if index is not None:
        _, t_hit = index.cast(o, d)
    else:
        t_hit = np.array([np.inf])
    ok, _ = reception_batch(o, d, np.array([path_state.unfolded]), t_hit,
                            np.asarray(rx, dtype=np.float64), cfg)
    return bool(ok[0])


# --------------------------------------------------------------------------
# launching


def _check_terminals(scene: Scene) -> None:
    if scene.cloud is None:
        return
    r = scene.cloud.point_radius
    for name, p in (("tx", scene.tx), ("rx", scene.rx)):
        idx = scene.index.query_ball(p, r)
        if len(idx) == 0:
            continue
        v = p[None, :] - scene.cloud.positions[idx]
        nd = np.abs(np.einsum("ij,ij->i", v, scene.cloud.normals[idx]))
        if np.any(nd < 1e-3):
            raise ValueError(f"terminal embedded in geometry ({name})")


def _empty_batch(h: int) -> PathBatch:
    return PathBatch(np.zeros((0, h), np.int64), np.zeros((0, h), np.int8),
                     np.zeros((0, h, 3)), np.zeros((0, h, 3)), np.zeros((0, h + 1, 3)),
                     np.zeros((0, h + 1)))


def _trace_chunk(scene: Scene, cfg: TraceConfig, dirs0: np.ndarray, ray_ids: np.ndarray):
    """Bounce one chunk of launch rays; returns PathBatches keyed by hop count."""
    index = scene.index
    cloud = scene.cloud
    B = cfg.max_bounces
    rx = scene.rx
    m = len(dirs0)
    o = np.repeat(scene.tx[None], m, axis=0)
    d = dirs0.copy()
    rid = ray_ids.astype(np.int64)
    lineage = np.zeros(m, dtype=np.int64)
    ndiff = np.zeros(m, dtype=np.int64)
    unfolded = np.zeros(m)
    h_pid = np.zeros((m, 0), np.int64)
    h_kind = np.zeros((m, 0), np.int8)
    h_pos = np.zeros((m, 0, 3))
    h_nrm = np.zeros((m, 0, 3))
    h_dir = d[:, None, :].copy()
    h_len = np.zeros((m, 0))
    found = {b: [] for b in range(1, B + 1)}
    diag = {"received": 0, "nee": 0, "rays": m}
    for b in range(B + 1):
        if len(o) == 0:
            break
        pid, t = index.cast(o, d)
        if b > 0:
            ok, t_star = reception_batch(o, d, unfolded, t, rx, cfg)
            if np.any(ok):
                lens = np.concatenate([h_len[ok], t_star[ok, None]], axis=1)
                found[b].append(PathBatch(h_pid[ok], h_kind[ok], h_pos[ok], h_nrm[ok],
                                          h_dir[ok], lens))
                diag["received"] += int(ok.sum())
            keep = ~ok
        else:
            keep = np.ones(len(o), dtype=bool)
        if b == B:
            break
        keep &= pid >= 0
        if not np.any(keep):
            break
        sel = np.nonzero(keep)[0]
        pid, t = pid[sel], t[sel]
        o, d, rid, lineage = o[sel], d[sel], rid[sel], lineage[sel]
        ndiff, unfolded = ndiff[sel], unfolded[sel]
        h_pid, h_kind, h_pos, h_nrm = h_pid[sel], h_kind[sel], h_pos[sel], h_nrm[sel]
        h_dir, h_len = h_dir[sel], h_len[sel]
        p = o + t[:, None] * d
        n = facing_normals(cloud.normals[pid], d)
        cos_i = -np.einsum("ij,ij->i", d, n)
        good = cos_i > 1e-9
        base_pid = np.concatenate([h_pid, pid[:, None]], axis=1)
        base_pos = np.concatenate([h_pos, p[:, None]], axis=1)
        base_nrm = np.concatenate([h_nrm, n[:, None]], axis=1)
        base_len = np.concatenate([h_len, t[:, None]], axis=1)
        new_unf = unfolded + t
        can_diff = good & (ndiff < cfg.max_diffuse)

        # diffuse hop straight to Rx
        if np.any(can_diff):
            ci = np.nonzero(can_diff)[0]
            v = rx[None, :] - p[ci]
            dist = np.linalg.norm(v, axis=1)
            vd = v / dist[:, None]
            front = np.einsum("ij,ij->i", vd, n[ci]) > 1e-9
            ci, vd, dist = ci[front], vd[front], dist[front]
            if len(ci):
                blocked = index.occluded(p[ci], np.repeat(rx[None], len(ci), axis=0))
                ci, vd, dist = ci[~blocked], vd[~blocked], dist[~blocked]
            if len(ci):
                kinds = np.concatenate([h_kind[ci], np.full((len(ci), 1), SCATTER, np.int8)], axis=1)
                found[b + 1].append(PathBatch(
                    base_pid[ci], kinds, base_pos[ci], base_nrm[ci],
                    np.concatenate([h_dir[ci], vd[:, None]], axis=1),
                    np.concatenate([base_len[ci], dist[:, None]], axis=1)))
                diag["nee"] += len(ci)

        # specular continuation
        gi = np.nonzero(good)[0]
        d_ref = d[gi] - 2.0 * np.einsum("ij,ij->i", d[gi], n[gi])[:, None] * n[gi]
        d_ref /= np.linalg.norm(d_ref, axis=1, keepdims=True)
        parts = [(gi, d_ref, np.full(len(gi), REFLECT, np.int8), lineage[gi], ndiff[gi])]

        # Lambertian branches
        if cfg.n_scatter > 0 and np.any(can_diff):
            ci = np.nonzero(can_diff)[0]
            k = cfg.n_scatter
            rows = np.repeat(ci, k)
            br = np.tile(np.arange(k), len(ci))
            u1 = keyed_uniform(cfg.seed, rid[rows], lineage[rows], b, br, 0)
            u2 = keyed_uniform(cfg.seed, rid[rows], lineage[rows], b, br, 1)
            ds = lambertian_dirs(n[rows], u1, u2)
            parts.append((rows, ds, np.full(len(rows), SCATTER, np.int8),
                          lineage[rows] * (k + 1) + br + 1, ndiff[rows] + 1))

        rows = np.concatenate([q[0] for q in parts])
        d = np.concatenate([q[1] for q in parts])
        kind = np.concatenate([q[2] for q in parts])
        lineage = np.concatenate([q[3] for q in parts])
        ndiff = np.concatenate([q[4] for q in parts])
        o = p[rows]
        rid = rid[rows]
        unfolded = new_unf[rows]
        h_pid = base_pid[rows]
        h_pos = base_pos[rows]
        h_nrm = base_nrm[rows]
        h_len = base_len[rows]
        h_kind = np.concatenate([h_kind[rows], kind[:, None]], axis=1)
        h_dir = np.concatenate([h_dir[rows], d[:, None]], axis=1)
        diag["rays"] += len(o)
    return found, diag


# --------------------------------------------------------------------------
# merging


def _dedupe(batch: PathBatch, power: np.ndarray, tol: float) -> np.ndarray:
    """Indices of the strongest member of each duplicate cluster.

    Paths are duplicates when they share the interaction kinds and diffuse
    points, and their specular hop points agree within ``tol`` (single
    linkage).
    """
    P, h = batch.pid.shape
    if P == 0:
        return np.zeros(0, dtype=np.int64)
    big = 1e4 * max(tol, 1e-6) * 1e3
    scat = batch.kind == SCATTER
    feats = [batch.kind.astype(np.float64) * big]
    feats.append(np.where(scat, batch.pid, -1).astype(np.float64) * big)
    feats.append(np.where(scat[:, :, None], 0.0, batch.pos).reshape(P, 3 * h))
    x = np.concatenate(feats, axis=1)
    pairs = cKDTree(x).query_pairs(tol, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(P, P)) \
        if len(pairs) else coo_matrix((P, P))
    _, label = connected_components(g, directed=False)
    order = np.lexsort((np.arange(P), -power, label))
    first = np.ones(P, dtype=bool)
    first[1:] = label[order][1:] != label[order][:-1]
    return np.sort(order[first])


def _canonical_order(paths: List[TracedPath]) -> List[TracedPath]:
    def key(p):
        pos = tuple(np.round(np.concatenate([h.position for h in p.hops]), 9)) if p.hops else ()
        return (round(p.tau, 18), len(p.hops), pos)
    return sorted(paths, key=key)


# --------------------------------------------------------------------------
# diffraction


def fermat_point(edge: EdgeSegment, tx, rx):
    """Point on the (infinite) edge line minimising |tx-q| + |q-rx|; returns (t, q)."""
    e = edge.direction
    a_tx = float((tx - edge.start) @ e)
    a_rx = float((rx - edge.start) @ e)
    r_tx = float(np.linalg.norm(tx - edge.start - a_tx * e))
    r_rx = float(np.linalg.norm(rx - edge.start - a_rx * e))
    if r_tx + r_rx == 0:
        t = 0.5 * (a_tx + a_rx)
    else:
        t = (a_tx * r_rx + a_rx * r_tx) / (r_tx + r_rx)
    return t, edge.start + t * e


def enumerate_diffraction(scene: Scene, cfg: TraceConfig) -> List[TracedPath]:
    """First-order Tx -> edge -> Rx paths over the scene's convex edges."""
    if cfg.diffraction_order < 1 or not scene.edges:
        return []
    out = []
    lam = scene.wavelength
    for ei, edge in enumerate(scene.edges):
        if edge.wedge_n <= 1.0:
            continue
        t, q = fermat_point(edge, scene.tx, scene.rx)
        if not 0.0 < t < edge.length:
            continue
        v_in = q - scene.tx
        v_out = scene.rx - q
        s_prime = float(np.linalg.norm(v_in))
        s = float(np.linalg.norm(v_out))
        if s < 1e-6 or s_prime < 1e-6:
            continue
        k_i = v_in / s_prime
        k_d = v_out / s
        if abs(abs(k_i @ edge.direction) - 1.0) < 1e-9:
            continue
        wn = edge.wedge_n * math.pi
        phip = float(em.wedge_angle(edge, -k_i)[0])
        phi = float(em.wedge_angle(edge, k_d)[0])
        if not (0 < phip < wn and 0 < phi < wn):
            continue
        if scene.index is not None:
            excl = np.zeros(len(scene.cloud), dtype=bool)
            near = scene.index.query_ball(q, 2.5 * scene.cloud.point_radius)
            excl[near] = True
            blocked = scene.index.occluded(np.stack([scene.tx, q]), np.stack([q, scene.rx]),
                                           exclude=excl)
            if np.any(blocked):
                continue
        mats = (scene.materials[edge.material_ids[0]], scene.materials[edge.material_ids[1]])
        T, bi, bd = em.diffraction_local(edge, k_i, k_d, mats, s, s_prime, lam)
        seg0 = em.propagation(s_prime, lam)
        hop_amp = em.diffraction_amplitude(edge, k_i, k_d, mats, s, s_prime, lam)
        gain = em.chain([seg0, hop_amp], scene.freq)
        hop = Hop(position=q, d_in=k_i, d_out=k_d, kind="diffract", amp=hop_amp, length=s,
                  local=T, point_id=-1, material_id=int(edge.material_ids[0]), normal=None,
                  edge_id=ei)
        out.append(TracedPath([hop], gain, s_prime, direction_angles(k_i),
                              direction_angles(-k_d)))
    return out


# --------------------------------------------------------------------------
# public entry points


def los_path(scene: Scene) -> Optional[TracedPath]:
    if scene.index is not None and scene.index.occluded(scene.tx, scene.rx)[0]:
        return None
    v = scene.rx - scene.tx
    d = float(np.linalg.norm(v))
    k = v / d
    return TracedPath([], em.los_gain(scene.tx, scene.rx, scene.freq), d,
                      direction_angles(k), direction_angles(-k))


def power_filter(real: ChannelRealization, floor_db: float) -> ChannelRealization:
    """Keep paths within ``floor_db`` of the strongest one."""
    paths = real.paths
    if not paths:
        raise ValueError("empty path set")
    pmax = max(p.power for p in paths)
    thr = pmax * 10.0 ** (-floor_db / 10.0)
    los = real.los if real.los is not None and real.los.power >= thr else None
    nlos = [p for p in real.nlos if p.power >= thr]
    return ChannelRealization(los, nlos, real.freq, real.tx, real.rx, dict(real.diagnostics))


def collect_records(scene: Scene, cfg: TraceConfig):
    """Raw (undeduplicated) NLOS path records keyed by hop count."""
    dirs = fibonacci_directions(cfg.n_rays)
    by_h = {b: [] for b in range(1, cfg.max_bounces + 1)}
    diag = {"received": 0, "nee": 0, "rays": 0}
    for s in range(0, cfg.n_rays, cfg.chunk_rays):
        ids = np.arange(s, min(s + cfg.chunk_rays, cfg.n_rays))
        found, dg = _trace_chunk(scene, cfg, dirs[ids], ids)
        for b, lst in found.items():
            by_h[b].extend(lst)
        for k in diag:
            diag[k] += dg[k]
    batches = {b: PathBatch.concat(v) for b, v in by_h.items() if v}
    return batches, diag


def merge_tolerance(scene: Scene, cfg: TraceConfig, total_len) -> np.ndarray:
    base = cfg.merge_tol if cfg.merge_tol is not None else scene.cloud.point_radius
    return np.maximum(base, reception_radius(total_len, cfg))


def finalize(scene: Scene, cfg: TraceConfig, batches: dict, locals_fn, extra=(),
             diag=None) -> ChannelRealization:
    """Amplitudes, duplicate merge, power floor and canonical ordering."""
    los = los_path(scene)
    kept = []
    pmax = max([los.power if los is not None else 0.0] + [p.power for p in extra])
    for b, batch in sorted(batches.items()):
        loc = locals_fn(batch)
        T, tau, a, _, _ = assemble(batch, loc, scene.freq)
        power = np.abs(a) ** 2
        tol = float(np.max(merge_tolerance(scene, cfg, batch.lens.sum(axis=1))))
        keep = _dedupe(batch, power, tol)
        kept.append((batch, loc, keep, power[keep]))
        if len(keep):
            pmax = max(pmax, float(power[keep].max()))
    # paths far below the floor never become objects
    thr = pmax * 10.0 ** (-cfg.power_floor_db / 10.0)
    nlos = []
    for batch, loc, keep, pw in kept:
        sel = keep[pw >= thr * (1 - 1e-9)]
        nlos.extend(build_paths(batch.take(sel), loc[sel], scene))
    nlos.extend(extra)
    real = ChannelRealization(los, _canonical_order(nlos), scene.freq, scene.tx.copy(),
                              scene.rx.copy(), dict(diag or {}))
    if not real.paths:
        return real
    out = power_filter(real, cfg.power_floor_db)
    out.diagnostics["n_paths"] = len(out.paths)
    return out


def trace(scene: Scene, cfg: TraceConfig) -> ChannelRealization:
    """Reference SBR channel for one link."""
    _check_terminals(scene)
    batches, diag = ({}, {}) if scene.index is None else collect_records(scene, cfg)
    diff = enumerate_diffraction(scene, cfg) if scene.index is not None else []
    return finalize(scene, cfg, batches, lambda bt: physical_locals(bt, scene), diff, diag)


# --------------------------------------------------------------------------
# files


def _edge_to_json(e: EdgeSegment) -> dict:
    return {"start": e.start.tolist(), "end": e.end.tolist(),
            "face0_normal": e.face0_normal.tolist(), "facen_normal": e.facen_normal.tolist(),
            "interior_angle": e.interior_angle, "material_ids": list(map(int, e.material_ids))}


def _edge_from_json(d: dict) -> EdgeSegment:
    return EdgeSegment(np.array(d["start"]), np.array(d["end"]), np.array(d["face0_normal"]),
                       np.array(d["facen_normal"]), float(d["interior_angle"]),
                       tuple(d.get("material_ids", (0, 0))))


def save_scene(scene: Scene, path, cloud_name: Optional[str] = None,
               materials_name: Optional[str] = None) -> None:
    """Write ``<path>`` (JSON) plus the cloud and material files beside it."""
    path = Path(path)
    stem = path.stem
    cloud_name = cloud_name or f"{stem}.cloud.txt"
    materials_name = materials_name or f"{stem}.materials.json"
    if scene.cloud is not None:
        save_cloud(scene.cloud, path.parent / cloud_name)
    em.save_materials(scene.materials, path.parent / materials_name)
    doc = {"version": 1, "name": scene.name,
           "cloud": cloud_name if scene.cloud is not None else None,
           "materials": materials_name, "edges": [_edge_to_json(e) for e in scene.edges],
           "tx": scene.tx.tolist(), "rx": scene.rx.tolist(), "freq": scene.freq}
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_scene(path) -> Scene:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    for key in ("materials", "tx", "rx"):
        if key not in doc:
            raise ValueError(f"scene file missing {key!r}")
    mats = em.load_materials(path.parent / doc["materials"])
    cloud = load_cloud(path.parent / doc["cloud"]) if doc.get("cloud") else None
    edges = [_edge_from_json(e) for e in doc.get("edges", [])]
    return Scene(cloud, None, edges, mats, doc["tx"], doc["rx"], float(doc.get("freq", 28e9)),
                 doc.get("name", ""))


def path_record(p: TracedPath) -> dict:
    T = p.gain.T
    return {"a_re": p.gain.a.real, "a_im": p.gain.a.imag, "power": p.power, "tau": p.tau,
            "bounces": p.bounce_count, "kinds": list(p.kinds),
            "aod": list(p.aod), "aoa": list(p.aoa),
            "hops": [h.position.tolist() for h in p.hops],
            "dirs": [h.d_out.tolist() for h in p.hops],
            "T": [[T[i, j].real, T[i, j].imag] for i in range(2) for j in range(2)]}


def export_channel(real: ChannelRealization, path) -> None:
    """One JSON document per link with one record per path (LOS first if present)."""
    doc = {"version": 1, "freq": real.freq,
           "tx": None if real.tx is None else real.tx.tolist(),
           "rx": None if real.rx is None else real.rx.tolist(),
           "los": None if real.los is None else path_record(real.los),
           "nlos": [path_record(p) for p in real.nlos]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


@dataclass
class PathSummary:
    """Exported path: enough for metrics without re-tracing."""

    a: complex
    tau: float
    bounces: int
    kinds: tuple
    aod: tuple
    aoa: tuple
    hops: np.ndarray
    dirs: np.ndarray

    @property
    def power(self) -> float:
        return abs(self.a) ** 2


def import_channel(path):
    """Read an exported channel as ``(los, nlos, freq)`` of PathSummary records."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def rec(r):
        return PathSummary(complex(r["a_re"], r["a_im"]), r["tau"], r["bounces"],
                           tuple(r["kinds"]), tuple(r["aod"]), tuple(r["aoa"]),
                           np.array(r["hops"]).reshape(-1, 3), np.array(r["dirs"]).reshape(-1, 3))
    los = rec(doc["los"]) if doc.get("los") else None
    return los, [rec(r) for r in doc["nlos"]], doc["freq"]
