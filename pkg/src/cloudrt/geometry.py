"""Point-cloud geometry: discs, spatial index, ray casting and sampling.

Every point of a cloud is treated as an oriented disc (center, normal,
``point_radius``). Rays hit the nearest disc they pierce. Range queries go
through a k-d tree; ray queries walk a uniform voxel grid with a compiled
kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numba
import numpy as np
from scipy.spatial import cKDTree

EPS_SELF = 1e-4
POINT_RADIUS_FACTOR = 1.1


@dataclass
class PointCloud:
    """Scene samples with optional normals and per-point material labels.

    Parameters
    ----------
    positions : (N, 3) array
        Point coordinates in meters.
    normals : (N, 3) array or None
        Unit normals. Rows flagged invalid in ``normal_valid`` are ignored.
    material_id : (N,) int array
        Index into the scene material table.
    point_radius : float
        Effective disc radius in meters, shared by all points.
    normal_valid : (N,) bool array or None
        False marks points excluded from interactions (degenerate normal).
    """

    positions: np.ndarray
    normals: Optional[np.ndarray] = None
    material_id: Optional[np.ndarray] = None
    point_radius: float = 0.05
    normal_valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point positions must be finite")
        if self.material_id is None:
            self.material_id = np.zeros(n, dtype=np.int64)
        self.material_id = np.asarray(self.material_id, dtype=np.int64).reshape(-1)
        if len(self.material_id) != n:
            raise ValueError("material_id length does not match positions")
        if not self.point_radius > 0:
            raise ValueError("point_radius must be positive")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != n:
                raise ValueError("normals length does not match positions")
            if self.normal_valid is None:
                self.normal_valid = np.ones(n, dtype=bool)
            norms = np.linalg.norm(self.normals[self.normal_valid], axis=1)
            if norms.size and np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError("normals must be unit length")
        if self.normal_valid is not None:
            self.normal_valid = np.asarray(self.normal_valid, dtype=bool).reshape(-1)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def patch_area(self) -> float:
        """Surface area represented by one point (sampling pitch squared)."""
        return (self.point_radius / POINT_RADIUS_FACTOR) ** 2

    def subset(self, idx: np.ndarray) -> "PointCloud":
        idx = np.asarray(idx, dtype=np.int64)
        return PointCloud(
            self.positions[idx],
            None if self.normals is None else self.normals[idx],
            self.material_id[idx],
            self.point_radius,
            None if self.normal_valid is None else self.normal_valid[idx],
        )


@dataclass(frozen=True)
class EdgeSegment:
    """Straight wedge edge given as scene metadata.

    ``wedge_faces`` holds the outward unit normals of face 0 and face n.
    ``interior_angle`` is the angle of the solid wedge, so the exterior
    (free-space) angle is ``2*pi - interior_angle``.
    """

    start: np.ndarray
    end: np.ndarray
    face0_normal: np.ndarray
    facen_normal: np.ndarray
    interior_angle: float
    material_ids: tuple = (0, 0)

    def __post_init__(self):
        for name in ("start", "end", "face0_normal", "facen_normal"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.linalg.norm(self.end - self.start) == 0:
            raise ValueError("edge endpoints must be distinct")
        if not 0 < self.interior_angle < 2 * math.pi:
            raise ValueError("interior angle must lie in (0, 2*pi)")

    @property
    def direction(self) -> np.ndarray:
        v = self.end - self.start
        return v / np.linalg.norm(v)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def wedge_n(self) -> float:
        """Exterior angle in units of pi."""
        return (2 * math.pi - self.interior_angle) / math.pi


@dataclass(frozen=True)
class Hit:
    point_id: int
    position: np.ndarray
    t: float
    normal: np.ndarray


def mean_spacing(positions: np.ndarray, k: int = 4) -> float:
    """Sampling pitch estimate: mean distance to the ``k`` nearest neighbours.

    On a regular surface grid the four nearest neighbours sit exactly one
    pitch away; the plain nearest-neighbour distance under-reads jittered
    grids by about 25 %.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) < 2:
        return 0.0
    k = min(k, len(positions) - 1)
    d, _ = cKDTree(positions).query(positions, k=k + 1)
    return float(np.mean(d[:, 1:]))


def default_point_radius(positions: np.ndarray, factor: float = POINT_RADIUS_FACTOR) -> float:
    s = mean_spacing(positions)
    return factor * s if s > 0 else 0.05


# --------------------------------------------------------------------------
# ray kernel


@numba.njit(cache=True)
def _disc_t(o, d, c, nrm, r2, use_disc):
    # returns ray parameter of the hit or inf
    if use_disc:
        den = d[0] * nrm[0] + d[1] * nrm[1] + d[2] * nrm[2]
        if abs(den) < 1e-12:
            return np.inf
        t = ((c[0] - o[0]) * nrm[0] + (c[1] - o[1]) * nrm[1] + (c[2] - o[2]) * nrm[2]) / den
        qx = o[0] + t * d[0] - c[0]
        qy = o[1] + t * d[1] - c[1]
        qz = o[2] + t * d[2] - c[2]
        if qx * qx + qy * qy + qz * qz <= r2:
            return t
        return np.inf
    # sphere fallback when normals are unavailable: closest approach
    wx = c[0] - o[0]
    wy = c[1] - o[1]
    wz = c[2] - o[2]
    t = wx * d[0] + wy * d[1] + wz * d[2]
    qx = wx - t * d[0]
    qy = wy - t * d[1]
    qz = wz - t * d[2]
    if qx * qx + qy * qy + qz * qz <= r2:
        return t
    return np.inf


@numba.njit(cache=True, inline="always")
def _dda_init(o, d, t0, lo, cell, n):
    p = o + t0 * d
    i = int(math.floor((p - lo) / cell))
    if i < 0:
        i = 0
    if i >= n:
        i = n - 1
    if d > 0:
        return i, 1, (lo + (i + 1) * cell - o) / d, cell / d
    if d < 0:
        return i, -1, (lo + i * cell - o) / d, -cell / d
    return i, 0, np.inf, np.inf


@numba.njit(cache=True)
def _trace_one(o, d, tmax, eps, lo, cell, dims, start, items, centers, normals,
               r2, use_disc, excl):
    # slab entry into the grid box
    t0 = 0.0
    t1 = tmax
    for a in range(3):
        hi = lo[a] + dims[a] * cell
        if abs(d[a]) < 1e-300:
            if o[a] < lo[a] or o[a] > hi:
                return -1, np.inf
        else:
            ta = (lo[a] - o[a]) / d[a]
            tb = (hi - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return -1, np.inf
    ix, sx, nx, dx = _dda_init(o[0], d[0], t0, lo[0], cell, dims[0])
    iy, sy, ny, dy = _dda_init(o[1], d[1], t0, lo[1], cell, dims[1])
    iz, sz, nz, dz = _dda_init(o[2], d[2], t0, lo[2], cell, dims[2])
    best_t = np.inf
    best_id = -1
    while True:
        c = (ix * dims[1] + iy) * dims[2] + iz
        texit = min(nx, ny, nz)
        for k in range(start[c], start[c + 1]):
            pid = items[k]
            if excl[pid]:
                continue
            t = _disc_t(o, d, centers[pid], normals[pid], r2, use_disc)
            if t > eps and t <= tmax and t <= texit + 1e-9:
                if t < best_t or (t == best_t and pid < best_id):
                    best_t = t
                    best_id = pid
        if best_id >= 0 or texit > t1:
            break
        if nx <= ny and nx <= nz:
            ix += sx
            if ix < 0 or ix >= dims[0]:
                break
            nx += dx
        elif ny <= nz:
            iy += sy
            if iy < 0 or iy >= dims[1]:
                break
            ny += dy
        else:
            iz += sz
            if iz < 0 or iz >= dims[2]:
                break
            nz += dz
    return best_id, best_t


@numba.njit(cache=True, parallel=True)
def _trace_many(origins, dirs, tmax, eps, lo, cell, dims, start, items, centers,
                normals, r2, use_disc, excl):
    m = origins.shape[0]
    out_id = np.full(m, -1, np.int64)
    out_t = np.full(m, np.inf)
    for i in numba.prange(m):
        pid, t = _trace_one(origins[i], dirs[i], tmax[i], eps, lo, cell, dims, start,
                            items, centers, normals, r2, use_disc, excl)
        out_id[i] = pid
        out_t[i] = t
    return out_id, out_t


class SpatialIndex:
    """Immutable acceleration structure over the discs of a cloud.

    Holds a k-d tree over disc centers (range and neighbour queries) and a
    voxel grid with per-cell disc lists (ray queries). Points whose normal is
    flagged invalid are skipped by ray queries.
    """

    def __init__(self, cloud: PointCloud, cell_size: Optional[float] = None):
        if len(cloud) == 0:
            raise ValueError("empty scene")
        self.cloud = cloud
        self.tree = cKDTree(cloud.positions)
        r = float(cloud.point_radius)
        pos = cloud.positions
        lo = pos.min(axis=0) - r - 1e-6
        hi = pos.max(axis=0) + r + 1e-6
        extent = float(np.max(hi - lo))
        if cell_size is None:
            cell_size = max(3.0 * r, extent / 256.0)
        dims = np.maximum(np.ceil((hi - lo) / cell_size).astype(np.int64), 1)
        # each disc is listed in every cell its bounding sphere touches
        cmin = np.floor((pos - r - lo) / cell_size).astype(np.int64)
        cmax = np.floor((pos + r - lo) / cell_size).astype(np.int64)
        cmin = np.clip(cmin, 0, dims - 1)
        cmax = np.clip(cmax, 0, dims - 1)
        span = cmax - cmin + 1
        counts = np.prod(span, axis=1)
        owner = np.repeat(np.arange(len(pos)), counts)
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        sx = span[owner, 1] * span[owner, 2]
        ox = local // sx
        rem = local % sx
        oy = rem // span[owner, 2]
        oz = rem % span[owner, 2]
        cells = ((cmin[owner, 0] + ox) * dims[1] + (cmin[owner, 1] + oy)) * dims[2] + (cmin[owner, 2] + oz)
        order = np.lexsort((owner, cells))
        ncell = int(np.prod(dims))
        self._items = np.ascontiguousarray(owner[order], dtype=np.int64)
        self._start = np.zeros(ncell + 1, dtype=np.int64)
        np.cumsum(np.bincount(cells, minlength=ncell), out=self._start[1:])
        self._lo = lo.astype(np.float64)
        self._cell = float(cell_size)
        self._dims = dims
        self._use_disc = cloud.normals is not None
        self._normals = (cloud.normals if cloud.normals is not None
                         else np.zeros_like(pos))
        excl = np.zeros(len(pos), dtype=bool)
        if cloud.normal_valid is not None:
            excl |= ~cloud.normal_valid
        self._excl = excl

    @property
    def point_radius(self) -> float:
        return float(self.cloud.point_radius)

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Indices of points within ``radius`` of ``center``, ascending."""
        idx = self.tree.query_ball_point(np.asarray(center, dtype=np.float64), radius)
        return np.array(sorted(idx), dtype=np.int64)

    def cast(self, origins, dirs, tmax=None, eps: float = EPS_SELF, exclude=None):
        """Nearest disc hit for many rays.

        Returns ``(point_id, t)`` arrays; ``point_id`` is -1 and ``t`` is inf
        where nothing is hit within ``(eps, tmax]``.
        """
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        m = len(origins)
        if tmax is None:
            tmax = np.full(m, np.inf)
        else:
            tmax = np.ascontiguousarray(np.broadcast_to(np.asarray(tmax, dtype=np.float64), (m,)))
        excl = self._excl
        if exclude is not None:
            excl = excl | np.asarray(exclude, dtype=bool)
        if m == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        r2 = self.point_radius ** 2
        return _trace_many(origins, dirs, tmax, float(eps), self._lo, self._cell, self._dims,
                           self._start, self._items, self.cloud.positions, self._normals,
                           r2, self._use_disc, excl)

    def occluded(self, a, b, eps: float = EPS_SELF, exclude=None) -> np.ndarray:
        """True where the open segment a->b pierces any disc."""
        a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
        b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
        v = b - a
        dist = np.linalg.norm(v, axis=1)
        dirs = v / np.where(dist > 0, dist, 1.0)[:, None]
        pid, _ = self.cast(a, dirs, tmax=dist - eps, eps=eps, exclude=exclude)
        return pid >= 0


def build_index(cloud: PointCloud, cell_size: Optional[float] = None) -> SpatialIndex:
    return SpatialIndex(cloud, cell_size)


def intersect(index: SpatialIndex, origin, direction, eps: float = EPS_SELF) -> Optional[Hit]:
    """Nearest disc pierced by the ray, or None.

    The returned normal is flipped to face the incoming ray.
    """
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be unit length")
    origin = np.asarray(origin, dtype=np.float64)
    pid, t = index.cast(origin[None], direction[None], eps=eps)
    if pid[0] < 0:
        return None
    pid, t = int(pid[0]), float(t[0])
    cloud = index.cloud
    if cloud.normals is not None:
        n = cloud.normals[pid].copy()
    else:
        n = origin + t * direction - cloud.positions[pid]
        n = n / max(np.linalg.norm(n), 1e-300)
    if np.dot(n, direction) > 0:
        n = -n
    return Hit(pid, origin + t * direction, t, n)


def facing_normals(normals: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Flip each normal so it opposes the matching ray direction."""
    s = np.sign(np.einsum("ij,ij->i", normals, dirs))
    s[s == 0] = 1.0
    return normals * -s[:, None]


# --------------------------------------------------------------------------
# normals


def estimate_normals(cloud: PointCloud, k: int = 16, toward=None) -> PointCloud:
    """PCA normals from the k nearest neighbours of every point.

    Each normal is the least-variance principal axis, oriented toward
    ``toward`` (defaults to the cloud centroid). Neighbourhoods whose
    covariance has rank < 2 get ``normal_valid = False``.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    n = len(cloud)
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    pos = cloud.positions
    _, nbr = cKDTree(pos).query(pos, k=k)
    nb = pos[nbr]
    nb = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nb, nb) / k
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0].copy()
    scale = np.maximum(w[:, 2], 1e-300)
    valid = (w[:, 1] > 1e-10 * scale) & (w[:, 2] > 0)
    ref = pos.mean(axis=0) if toward is None else np.asarray(toward, dtype=np.float64)
    flip = np.einsum("ij,ij->i", normals, ref - pos) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    normals[~valid] = np.array([0.0, 0.0, 1.0])
    return PointCloud(pos, normals, cloud.material_id, cloud.point_radius, valid)


# --------------------------------------------------------------------------
# sampling and grouping


def crop_indices(index: SpatialIndex, center, radius: float = 1.0, max_points: int = 512,
                 seed: int = 0) -> np.ndarray:
    if not radius > 0:
        raise ValueError("radius must be positive")
    idx = index.query_ball(center, radius)
    if len(idx) == 0:
        raise ValueError("isolated interaction point")
    if len(idx) > max_points:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(idx, size=max_points, replace=False))
    return idx


def crop(cloud_or_index, center, radius: float = 1.0, max_points: int = 512,
         seed: int = 0) -> PointCloud:
    """Local cloud around ``center``, re-centered so ``center`` maps to the origin."""
    index = (cloud_or_index if isinstance(cloud_or_index, SpatialIndex)
             else SpatialIndex(cloud_or_index))
    idx = crop_indices(index, center, radius, max_points, seed)
    sub = index.cloud.subset(idx)
    sub.positions = sub.positions - np.asarray(center, dtype=np.float64)
    return sub


def fps(points, n_prime: int) -> np.ndarray:
    """Greedy farthest point sampling.

    Starts from the point nearest the set centroid; ties resolve to the
    lowest index.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if not 1 <= n_prime <= n:
        raise ValueError(f"n_prime must be in [1, {n}], got {n_prime}")
    out = np.empty(n_prime, dtype=np.int64)
    cur = int(np.argmin(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)))
    mind = np.full(n, np.inf)
    for j in range(n_prime):
        out[j] = cur
        mind = np.minimum(mind, np.sum((pts - pts[cur]) ** 2, axis=1))
        cur = int(np.argmax(mind))
    return out


@numba.njit(cache=True)
def _fps_rows(pts, start, n_prime):
    b, n, _ = pts.shape
    out = np.empty((b, n_prime), dtype=np.int64)
    mind = np.empty(n)
    for i in range(b):
        cur = start[i]
        mind[:] = np.inf
        for j in range(n_prime):
            out[i, j] = cur
            cx, cy, cz = pts[i, cur, 0], pts[i, cur, 1], pts[i, cur, 2]
            best, arg = -1.0, 0
            for q in range(n):
                dx, dy, dz = pts[i, q, 0] - cx, pts[i, q, 1] - cy, pts[i, q, 2] - cz
                d = dx * dx + dy * dy + dz * dz
                if d < mind[q]:
                    mind[q] = d
                # first maximum wins, as np.argmax
                if mind[q] > best:
                    best, arg = mind[q], q
            cur = arg
    return out


def fps_batch(points: np.ndarray, n_prime: int) -> np.ndarray:
    """Row-wise :func:`fps` for a (B, N, 3) batch."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    b, n, _ = pts.shape
    if not 1 <= n_prime <= n:
        raise ValueError(f"n_prime must be in [1, {n}], got {n_prime}")
    start = np.argmin(np.sum((pts - pts.mean(axis=1, keepdims=True)) ** 2, axis=2), axis=1)
    return _fps_rows(pts, start.astype(np.int64), n_prime)


@dataclass
class Groups:
    """Ball-query result: ``indices`` (M, K), ``relative`` (M, K, 3)."""

    indices: np.ndarray
    relative: np.ndarray
    counts: np.ndarray
    empty: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def group(points, centroids, r: float, K: int) -> Groups:
    """Up to K nearest points within ``r`` of each centroid.

    Short groups are padded with their nearest member. A centroid with no
    neighbour is padded with itself (index -1, zero offset) and flagged.
    """
    if not r > 0 or K < 1:
        raise ValueError("need r > 0 and K >= 1")
    pts = points.positions if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    cen = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
    d2 = np.sum((cen[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :K]
    if order.shape[1] < K:
        order = np.concatenate([order, np.repeat(order[:, :1], K - order.shape[1], axis=1)],
                               axis=1)
    within = np.take_along_axis(d2, order, axis=1) <= r * r
    counts = within.sum(axis=1)
    empty = counts == 0
    idx = np.where(within, order, order[:, :1])
    idx[empty] = -1
    rel = np.where(idx[..., None] >= 0, pts[np.maximum(idx, 0)] - cen[:, None, :], 0.0)
    return Groups(idx, rel, counts, empty)


@numba.njit(cache=True)
def _group_rows(pts, centroid_idx, r2, K):
    b, n, _ = pts.shape
    m = centroid_idx.shape[1]
    k = min(K, n)
    out = np.empty((b, m, K), dtype=np.int64)
    bd = np.empty(k)
    bi = np.empty(k, dtype=np.int64)
    for i in range(b):
        for j in range(m):
            c = centroid_idx[i, j]
            cx, cy, cz = pts[i, c, 0], pts[i, c, 1], pts[i, c, 2]
            # insertion top-k ordered by (distance, index)
            cnt = 0
            for q in range(n):
                dx = cx - pts[i, q, 0]
                dy = cy - pts[i, q, 1]
                dz = cz - pts[i, q, 2]
                d = dx * dx + dy * dy + dz * dz
                if cnt == k and not d < bd[k - 1]:
                    continue
                pos = cnt if cnt < k else k - 1
                while pos > 0 and bd[pos - 1] > d:
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                    pos -= 1
                bd[pos] = d
                bi[pos] = q
                if cnt < k:
                    cnt += 1
            for t in range(k):
                out[i, j, t] = bi[t] if bd[t] <= r2 else bi[0]
            for t in range(k, K):
                out[i, j, t] = out[i, j, 0]
    return out


def group_batch(points: np.ndarray, centroid_idx: np.ndarray, r: float, K: int) -> np.ndarray:
    """Batched ball query where centroids are members of the point set.

    Returns (B, M, K) indices into each row of ``points``: the K nearest
    points ordered by distance then index, with those outside ``r``
    replaced by the nearest one.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    cidx = np.ascontiguousarray(centroid_idx, dtype=np.int64)
    return _group_rows(pts, cidx, float(r) * float(r), int(K))


def fibonacci_directions(L: int) -> np.ndarray:
    """L launch directions on the unit sphere from the golden-ratio spiral."""
    if L < 1:
        raise ValueError("L must be >= 1")
    l = np.arange(1, L + 1, dtype=np.float64)
    z = 1.0 - 2.0 * l / L
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    ang = 2.0 * math.pi * l * phi
    d = np.stack([rho * np.cos(ang), rho * np.sin(ang), z], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# file format

_HEADER = "# cloudrt-pointcloud v1"


def save_cloud(cloud: PointCloud, path) -> None:
    """Write the whitespace text format, one record per point."""
    has_n = cloud.normals is not None
    fields = "x,y,z,nx,ny,nz,material_id" if has_n else "x,y,z,material_id"
    lines = [f"{_HEADER} count={len(cloud)} fields={fields} point_radius={cloud.point_radius!r}"]
    if has_n:
        data = np.column_stack([cloud.positions, cloud.normals])
        for row, m in zip(data, cloud.material_id):
            lines.append(" ".join(repr(float(v)) for v in row) + f" {int(m)}")
    else:
        for row, m in zip(cloud.positions, cloud.material_id):
            lines.append(" ".join(repr(float(v)) for v in row) + f" {int(m)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cloud(path) -> PointCloud:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(_HEADER):
        raise ValueError(f"{path}:1: missing point-cloud header")
    meta = dict(tok.split("=", 1) for tok in text[0][len(_HEADER):].split())
    fields = meta["fields"].split(",")
    count = int(meta["count"])
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != len(fields):
            raise ValueError(f"{path}:{lineno}: expected {len(fields)} fields, got {len(parts)}")
        rows.append([float(p) for p in parts])
    if len(rows) != count:
        raise ValueError(f"{path}: header declares {count} points, found {len(rows)}")
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(fields))
    col = {f: i for i, f in enumerate(fields)}
    pos = arr[:, [col["x"], col["y"], col["z"]]]
    normals = arr[:, [col["nx"], col["ny"], col["nz"]]] if "nx" in col else None
    mat = arr[:, col["material_id"]].astype(np.int64)
    return PointCloud(pos, normals, mat, float(meta.get("point_radius", 0.05)))
