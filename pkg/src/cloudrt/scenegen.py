"""Procedural rooms, ray-level datasets and the three-room evaluation suite."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import em
from .geometry import EdgeSegment, PointCloud, build_index, default_point_radius
from .tracer import (KIND_NAMES, REFLECT, Scene, TraceConfig, TracedPath, trace)

DATASET_VERSION = 1


@dataclass
class Column:
    center: Tuple[float, float]
    radius: float
    height: Optional[float] = None
    material: int = 0

    def __post_init__(self):
        self.center = tuple(float(v) for v in self.center)


@dataclass
class Opening:
    """Rectangular hole in wall ``wall`` (0: y=0, 1: x=Lx, 2: y=Ly, 3: x=0).

    ``u`` runs along the wall from its first corner, ``z`` is height.
    """

    wall: int
    u0: float
    u1: float
    z0: float
    z1: float


@dataclass
class Partition:
    """Free-standing axis-aligned block on the floor (convex edges)."""

    lo: Tuple[float, float]
    hi: Tuple[float, float]
    height: float
    material: int = 0

    def __post_init__(self):
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)


@dataclass
class RoomSpec:
    extents: Tuple[float, float, float] = (6.0, 5.0, 3.0)
    floor_material: int = 0
    ceiling_material: int = 3
    wall_materials: Tuple[int, ...] = (0,)
    panel_width: float = 0.0
    columns: List[Column] = field(default_factory=list)
    openings: List[Opening] = field(default_factory=list)
    partitions: List[Partition] = field(default_factory=list)
    sampling_spacing: float = 0.08
    jitter: float = 0.3
    materials_path: Optional[str] = None
    name: str = "room"

    def __post_init__(self):
        self.extents = tuple(float(v) for v in self.extents)
        self.wall_materials = tuple(int(v) for v in self.wall_materials)
        self.columns = [c if isinstance(c, Column) else Column(**c) for c in self.columns]
        self.openings = [o if isinstance(o, Opening) else Opening(**o) for o in self.openings]
        self.partitions = [p if isinstance(p, Partition) else Partition(**p)
                           for p in self.partitions]
        if min(self.extents) <= 0:
            raise ValueError("room extents must be positive")
        if self.sampling_spacing <= 0:
            raise ValueError("sampling spacing must be positive")
        if not self.wall_materials:
            raise ValueError("wall_materials is empty")
        Lx, Ly, _ = self.extents
        for c in self.columns:
            x, y = c.center
            if not (c.radius < x < Lx - c.radius and c.radius < y < Ly - c.radius):
                raise ValueError(f"column at {c.center} is not inside the room")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(doc: dict) -> "RoomSpec":
        return RoomSpec(**doc)


def load_room_spec(path) -> RoomSpec:
    """Read a RoomSpec JSON file; errors carry the line of the offending key."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        return RoomSpec.from_json(doc)
    except TypeError as exc:
        bad = str(exc).split("'")[1] if "'" in str(exc) else ""
        line = next((i + 1 for i, ln in enumerate(text.splitlines()) if f'"{bad}"' in ln), 1)
        raise ValueError(f"{path}:{line}: {exc}") from None


# --------------------------------------------------------------------------
# surface sampling


def _sample_rect(rng, origin, u, v, a, b, spacing, jitter):
    """Jittered grid on the rectangle origin + s u + t v, s in [0,a], t in [0,b].

    Returns points and their (s, t) coordinates.
    """
    nu = max(1, int(round(a / spacing)))
    nv = max(1, int(round(b / spacing)))
    du, dv = a / nu, b / nv
    s = (np.arange(nu) + 0.5) * du
    t = (np.arange(nv) + 0.5) * dv
    S, T = np.meshgrid(s, t, indexing="ij")
    S = S.ravel() + rng.uniform(-jitter, jitter, S.size) * du
    T = T.ravel() + rng.uniform(-jitter, jitter, T.size) * dv
    pts = origin[None, :] + S[:, None] * u[None, :] + T[:, None] * v[None, :]
    return pts, S, T


class _Builder:
    def __init__(self):
        self.pos, self.nrm, self.mat = [], [], []

    def add(self, pts, normal, mat):
        self.pos.append(pts)
        self.nrm.append(np.broadcast_to(normal, pts.shape).copy())
        self.mat.append(np.broadcast_to(np.asarray(mat, dtype=np.int64), (len(pts),)).copy())

    def arrays(self):
        return (np.concatenate(self.pos), np.concatenate(self.nrm), np.concatenate(self.mat))


def _inside_footprints(xy, spec: RoomSpec, margin=0.0):
    mask = np.zeros(len(xy), dtype=bool)
    for c in spec.columns:
        mask |= np.linalg.norm(xy - np.asarray(c.center)[None], axis=1) < c.radius + margin
    for p in spec.partitions:
        mask |= np.all((xy > np.asarray(p.lo) - margin) & (xy < np.asarray(p.hi) + margin), axis=1)
    return mask


def _box_edges(spec: RoomSpec) -> List[EdgeSegment]:
    Lx, Ly, Lz = spec.extents
    wm = spec.wall_materials[0]
    fm, cm = spec.floor_material, spec.ceiling_material
    concave = 1.5 * math.pi  # solid angle of the wedge behind a room corner
    z = np.array([0, 0, 1.0])
    edges = []
    # wall inward normals: y=0 -> +y, x=Lx -> -x, y=Ly -> -y, x=0 -> +x
    corners = [(0, 0), (Lx, 0), (Lx, Ly), (0, Ly)]
    wn = [np.array([0, 1.0, 0]), np.array([-1.0, 0, 0]), np.array([0, -1.0, 0]),
          np.array([1.0, 0, 0])]
    for i in range(4):
        a = np.array([*corners[i], 0.0])
        b = np.array([*corners[(i + 1) % 4], 0.0])
        edges.append(EdgeSegment(a, b, z, wn[i], concave, (fm, wm)))
        edges.append(EdgeSegment(a + [0, 0, Lz], b + [0, 0, Lz], -z, wn[i], concave, (cm, wm)))
        edges.append(EdgeSegment(a, a + [0, 0, Lz], wn[(i - 1) % 4], wn[i], concave, (wm, wm)))
    return edges


def _partition_geometry(rng, spec: RoomSpec, p: Partition, builder: _Builder):
    (x0, y0), (x1, y1) = p.lo, p.hi
    h = p.height
    s, j = spec.sampling_spacing, spec.jitter
    faces = [
        (np.array([x0, y0, 0.0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), x1 - x0, h, np.array([0, -1.0, 0])),
        (np.array([x1, y0, 0.0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), y1 - y0, h, np.array([1.0, 0, 0])),
        (np.array([x0, y1, 0.0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), x1 - x0, h, np.array([0, 1.0, 0])),
        (np.array([x0, y0, 0.0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), y1 - y0, h, np.array([-1.0, 0, 0])),
        (np.array([x0, y0, h]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), x1 - x0, y1 - y0, np.array([0, 0, 1.0])),
    ]
    for o, u, v, a, b, n in faces:
        if a < s or b < s:
            raise ValueError("sampling spacing exceeds partition face size")
        pts, _, _ = _sample_rect(rng, o, u, v, a, b, s, j)
        builder.add(pts, n, p.material)
    convex = 0.5 * math.pi
    m = p.material
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    side_n = [np.array([0, -1.0, 0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
              np.array([-1.0, 0, 0])]
    top = np.array([0, 0, 1.0])
    edges = []
    for i in range(4):
        a = np.array([*corners[i], 0.0])
        b = np.array([*corners[(i + 1) % 4], 0.0])
        # vertical edge at corner i between the previous side and side i
        edges.append(EdgeSegment(a, a + [0, 0, h], side_n[(i - 1) % 4], side_n[i], convex, (m, m)))
        edges.append(EdgeSegment(a + [0, 0, h], b + [0, 0, h], top, side_n[i], convex, (m, m)))
    return edges


def gen_room(spec: RoomSpec, seed: int = 0, materials: Optional[em.MaterialTable] = None) -> Scene:
    """Sample a room into a point cloud with analytic normals and wedge edges.

    Terminals are placeholders near the room centre; use
    ``Scene.with_link`` to set real ones.
    """
    Lx, Ly, Lz = spec.extents
    s, j = spec.sampling_spacing, spec.jitter
    if s > min(spec.extents):
        raise ValueError("sampling spacing exceeds the smallest surface dimension")
    rng = np.random.default_rng(seed)
    mats = materials if materials is not None else em.load_materials(spec.materials_path)
    b = _Builder()
    ex, ey, ez = np.eye(3)
    # floor and ceiling
    for zc, n, m in ((0.0, ez, spec.floor_material), (Lz, -ez, spec.ceiling_material)):
        pts, _, _ = _sample_rect(rng, np.array([0, 0, zc]), ex, ey, Lx, Ly, s, j)
        drop = _inside_footprints(pts[:, :2], spec) if zc == 0.0 else np.zeros(len(pts), bool)
        if zc == Lz:
            full = [c for c in spec.columns if c.height is None or c.height >= Lz]
            if full:
                drop = _inside_footprints(pts[:, :2], RoomSpec(spec.extents, columns=full))
        b.add(pts[~drop], n, m)
    # walls: (origin, along, length, inward normal)
    walls = [(np.zeros(3), ex, Lx, ey), (np.array([Lx, 0, 0]), ey, Ly, -ex),
             (np.array([0, Ly, 0]), ex, Lx, -ey), (np.zeros(3), ey, Ly, ex)]
    for wi, (o, u, a, n) in enumerate(walls):
        pts, S, T = _sample_rect(rng, o, u, ez, a, Lz, s, j)
        if spec.panel_width > 0:
            panel = np.floor(S / spec.panel_width).astype(np.int64)
            mat = np.asarray(spec.wall_materials)[(panel + wi) % len(spec.wall_materials)]
        else:
            mat = np.full(len(pts), spec.wall_materials[0])
        keep = np.ones(len(pts), dtype=bool)
        for op in spec.openings:
            if op.wall == wi:
                keep &= ~((S >= op.u0) & (S <= op.u1) & (T >= op.z0) & (T <= op.z1))
        b.add(pts[keep], n, mat[keep])
    # columns
    for c in spec.columns:
        h = Lz if c.height is None else c.height
        nth = max(8, int(round(2 * math.pi * c.radius / s)))
        nz = max(1, int(round(h / s)))
        th = (np.arange(nth) + 0.5) * 2 * math.pi / nth
        zz = (np.arange(nz) + 0.5) * h / nz
        TH, ZZ = np.meshgrid(th, zz, indexing="ij")
        TH = TH.ravel() + rng.uniform(-j, j, TH.size) * 2 * math.pi / nth
        ZZ = ZZ.ravel() + rng.uniform(-j, j, ZZ.size) * h / nz
        nrm = np.stack([np.cos(TH), np.sin(TH), np.zeros_like(TH)], axis=1)
        pts = np.column_stack([c.center[0] + c.radius * nrm[:, 0],
                               c.center[1] + c.radius * nrm[:, 1], ZZ])
        b.pos.append(pts)
        b.nrm.append(nrm)
        b.mat.append(np.full(len(pts), c.material, dtype=np.int64))
        if c.height is not None and c.height < Lz:
            rr = c.radius
            pts, _, _ = _sample_rect(rng, np.array([c.center[0] - rr, c.center[1] - rr, h]),
                                     ex, ey, 2 * rr, 2 * rr, s, j)
            inside = np.linalg.norm(pts[:, :2] - np.asarray(c.center)[None], axis=1) < c.radius
            b.add(pts[inside], ez, c.material)
    edges = _box_edges(spec)
    for p in spec.partitions:
        edges.extend(_partition_geometry(rng, spec, p, b))
    pos, nrm, mat = b.arrays()
    mats.check_ids(mat)
    for e in edges:
        mats.check_ids(np.asarray(e.material_ids))
    cloud = PointCloud(pos, nrm / np.linalg.norm(nrm, axis=1, keepdims=True), mat,
                       default_point_radius(pos))
    centre = np.array([Lx / 2, Ly / 2, min(1.5, Lz / 2)])
    return Scene(cloud, build_index(cloud), edges, mats, centre - [0.5, 0, 0],
                 centre + [0.5, 0, 0], name=spec.name)


def gen_plane(normal, material: int, size: float = 3.0, spacing: float = 0.08,
              seed: int = 0, materials: Optional[em.MaterialTable] = None,
              name: str = "plane") -> Scene:
    """Single square plate through the origin with unit ``normal``."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    rng = np.random.default_rng(seed)
    mats = materials if materials is not None else em.load_materials()
    mats.check_ids(np.array([material]))
    a = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0, 1.0, 0])
    u = np.cross(n, a)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    origin = -0.5 * size * (u + v)
    pts, _, _ = _sample_rect(rng, origin, u, v, size, size, spacing, 0.3)
    cloud = PointCloud(pts, np.repeat(n[None], len(pts), axis=0),
                       np.full(len(pts), material, dtype=np.int64), default_point_radius(pts))
    return Scene(cloud, build_index(cloud), [], mats, n * 1.0 + u * 0.3, n * 1.0 - u * 0.3,
                 name=name)


def plane_links(scene: Scene, n: int, seed: int, dist=(0.5, 2.0),
                spread: float = 1.0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Terminals in front of a :func:`gen_plane` plate whose mirror point lies on it."""
    rng = np.random.default_rng(seed)
    nrm = scene.cloud.normals[0]
    u = scene.cloud.positions[1] - scene.cloud.positions[0]
    u -= (u @ nrm) * nrm
    u /= np.linalg.norm(u)
    v = np.cross(nrm, u)
    out = []
    while len(out) < n:
        ht = rng.uniform(*dist, 2)
        xy = rng.uniform(-spread, spread, (2, 2))
        tx = xy[0, 0] * u + xy[0, 1] * v + ht[0] * nrm
        rx = xy[1, 0] * u + xy[1, 1] * v + ht[1] * nrm
        # specular point by similar triangles
        q = xy[0] + (xy[1] - xy[0]) * ht[0] / ht.sum()
        if np.max(np.abs(q)) < spread and np.linalg.norm(tx - rx) > 0.3:
            out.append((tx, rx))
    return out


def surface_area(spec: RoomSpec) -> float:
    """Analytic sampled area (box shell minus footprints and openings, plus objects)."""
    Lx, Ly, Lz = spec.extents
    area = 2 * (Lx * Ly + Lx * Lz + Ly * Lz)
    for c in spec.columns:
        h = Lz if c.height is None else c.height
        area += 2 * math.pi * c.radius * h - math.pi * c.radius ** 2 * (2 if h >= Lz else 0)
    for o in spec.openings:
        area -= (o.u1 - o.u0) * (o.z1 - o.z0)
    for p in spec.partitions:
        w, d = p.hi[0] - p.lo[0], p.hi[1] - p.lo[1]
        area += 2 * (w + d) * p.height
    return area


# --------------------------------------------------------------------------
# links


def random_links(scene: Scene, n: int, seed: int, clearance: float = 0.5,
                 heights=(1.0, 2.0), min_sep: float = 1.0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Tx/Rx pairs at least ``clearance`` from every surface point."""
    rng = np.random.default_rng(seed)
    lo = scene.cloud.positions.min(axis=0)
    hi = scene.cloud.positions.max(axis=0)
    tree = scene.index.tree

    def draw():
        for _ in range(10000):
            p = np.array([rng.uniform(lo[0] + clearance, hi[0] - clearance),
                          rng.uniform(lo[1] + clearance, hi[1] - clearance),
                          rng.uniform(*heights)])
            if tree.query(p)[0] >= clearance:
                return p
        raise RuntimeError("no free terminal position found")

    links = []
    while len(links) < n:
        tx, rx = draw(), draw()
        if np.linalg.norm(tx - rx) >= min_sep:
            links.append((tx, rx))
    return links


# --------------------------------------------------------------------------
# ray-level dataset


MECH_DET, MECH_NON = "deterministic", "non_deterministic"


def mechanism_of(kind: str) -> str:
    return MECH_DET if kind == "reflect" else MECH_NON


@dataclass
class DatasetManifest:
    scenes: List[str]
    links: List[dict]
    counts: dict
    split: dict
    seed: int
    config_hash: str
    version: int = DATASET_VERSION

    def to_json(self) -> dict:
        return asdict(self)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def path_samples(path: TracedPath, link_id: int, path_id: int) -> dict:
    """Per-hop sample arrays of one traced path."""
    rows = {k: [] for k in ("p", "d_in", "d_out", "local", "material", "kind", "bounce",
                            "normal", "point_id", "link", "path")}
    for b, h in enumerate(path.hops):
        rows["p"].append(h.position)
        rows["d_in"].append(h.d_in)
        rows["d_out"].append(h.d_out)
        rows["local"].append(h.local)
        rows["material"].append(h.material_id)
        rows["kind"].append(KIND_NAMES.index(h.kind))
        rows["bounce"].append(b)
        rows["normal"].append(h.normal if h.normal is not None else np.zeros(3))
        rows["point_id"].append(h.point_id)
        rows["link"].append(link_id)
        rows["path"].append(path_id)
    return rows


def split_links(n_links: int, seed: int, ratio: int = 5) -> np.ndarray:
    """Boolean test mask with round(n/(ratio+1)) test links chosen at random."""
    rng = np.random.default_rng(seed)
    n_test = int(round(n_links / (ratio + 1)))
    if n_links >= 2:
        n_test = min(max(n_test, 1), n_links - 1)
    mask = np.zeros(n_links, dtype=bool)
    mask[rng.permutation(n_links)[:n_test]] = True
    return mask


@dataclass
class RayDataset:
    """In-memory ray samples (one row per hop) with the owning scenes."""

    arrays: dict
    scenes: List[Scene]
    manifest: DatasetManifest

    def __len__(self):
        return len(self.arrays["kind"])

    def select(self, mask) -> "RayDataset":
        return RayDataset({k: v[mask] for k, v in self.arrays.items()}, self.scenes,
                          self.manifest)

    def mechanism(self, mech: str) -> "RayDataset":
        det = self.arrays["kind"] == REFLECT
        return self.select(det if mech == MECH_DET else ~det)

    def split(self, which: str) -> "RayDataset":
        test_links = {l["id"] for l in self.manifest.links if l["split"] == "test"}
        is_test = np.isin(self.arrays["link"], list(test_links))
        return self.select(is_test if which == "test" else ~is_test)


def gen_dataset(scenes: Sequence[Scene], links: Sequence[Tuple[int, np.ndarray, np.ndarray]],
                cfg: TraceConfig, seed: int = 0, out_dir=None, max_non_det_per_link: int = 0,
                ratio: int = 5, max_det_per_link: int = 0) -> RayDataset:
    """Trace every link and decompose retained NLOS paths into per-hop samples.

    ``links`` holds ``(scene_index, tx, rx)``. The power floor is applied by
    the tracer before decomposition; LOS never yields samples. When
    ``max_non_det_per_link`` is positive, a seeded subset of that many
    diffuse/diffraction samples is kept per link; ``max_det_per_link`` does
    the same for reflections.
    """
    if not links:
        raise ValueError("at least one link is required")
    test = split_links(len(links), seed, ratio)
    rows = {}
    link_meta = []
    counts = {MECH_DET: 0, MECH_NON: 0, "excluded_links": 0}
    for li, (si, tx, rx) in enumerate(links):
        scene = scenes[si].with_link(tx, rx)
        real = trace(scene, cfg)
        meta = {"id": li, "scene": int(si), "tx": np.asarray(tx).tolist(),
                "rx": np.asarray(rx).tolist(), "split": "test" if test[li] else "train",
                "n_paths": len(real.nlos)}
        link_meta.append(meta)
        if not real.nlos:
            meta["excluded"] = True
            counts["excluded_links"] += 1
            continue
        lr = {k: [] for k in ("p", "d_in", "d_out", "local", "material", "kind", "bounce",
                              "normal", "point_id", "link", "path")}
        for pi, p in enumerate(real.nlos):
            for k, v in path_samples(p, li, pi).items():
                lr[k].extend(v)
        la = {k: np.asarray(v) for k, v in lr.items()}
        la["scene"] = np.full(len(la["kind"]), si, dtype=np.int64)
        drop = []
        for tag, cap, pool in ((0, max_det_per_link, la["kind"] == REFLECT),
                               (1, max_non_det_per_link, la["kind"] != REFLECT)):
            pool = np.nonzero(pool)[0]
            if 0 < cap < len(pool):
                rng = np.random.default_rng([seed, li, tag] if tag == 0 else [seed, li])
                drop.append(np.setdiff1d(pool, rng.choice(pool, cap, replace=False)))
        if drop:
            keep = np.setdiff1d(np.arange(len(la["kind"])), np.concatenate(drop))
            la = {k: v[keep] for k, v in la.items()}
        for k, v in la.items():
            rows.setdefault(k, []).append(v)
        nd = int(np.sum(la["kind"] == REFLECT))
        counts[MECH_DET] += nd
        counts[MECH_NON] += len(la["kind"]) - nd
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            np.savez(Path(out_dir) / f"link_{li:04d}.npz", **la)
    arrays = {k: np.concatenate(v) for k, v in rows.items()} if rows else {}
    manifest = DatasetManifest([s.name for s in scenes], link_meta, counts,
                               {"train": int((~test).sum()), "test": int(test.sum())}, seed,
                               config_hash(asdict(cfg)))
    if out_dir is not None:
        (Path(out_dir) / "manifest.json").write_text(
            json.dumps(manifest.to_json(), indent=2, sort_keys=True), encoding="utf-8")
    return RayDataset(arrays, list(scenes), manifest)


def load_dataset(out_dir, scenes: Sequence[Scene]) -> RayDataset:
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    if doc.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {doc.get('version')}")
    man = DatasetManifest(**doc)
    rows = {}
    for l in man.links:
        f = out_dir / f"link_{l['id']:04d}.npz"
        if f.exists():
            with np.load(f) as z:
                for k in z.files:
                    rows.setdefault(k, []).append(z[k])
    arrays = {k: np.concatenate(v) for k, v in rows.items()}
    return RayDataset(arrays, list(scenes), man)


# --------------------------------------------------------------------------
# evaluation suite


PANEL_MATERIALS = (4, 2, 0, 1)  # metal, wood, concrete, glass


def room_specs(seed: int = 0):
    """Specs of Room-A (training), Room-B (moved columns) and Room-C (new layout)."""
    base = dict(floor_material=0, ceiling_material=3, wall_materials=PANEL_MATERIALS,
                panel_width=1.0)
    a = RoomSpec((7.0, 5.0, 3.0), columns=[Column((2.2, 1.8), 0.25), Column((4.8, 3.2), 0.25)],
                 name="room_a", **base)
    b = RoomSpec((7.0, 5.0, 3.0), columns=[Column((3.0, 3.4), 0.25), Column((5.2, 1.5), 0.25)],
                 name="room_b", **base)
    c = RoomSpec((8.0, 4.0, 2.8), columns=[Column((6.5, 2.0), 0.2)],
                 partitions=[Partition((3.0, 1.6), (3.6, 2.4), 1.4, 2)],
                 openings=[Opening(0, 1.0, 2.0, 0.8, 2.0)], name="room_c", **base)
    return a, b, c


def make_eval_suite(seed: int = 0, n_links=(60, 20, 20)):
    """Three scenes with seeded links: ``[(scene, [(tx, rx), ...]), ...]``.

    Room-A and Room-B share the wall sampling (same seed); only the columns move.
    """
    out = []
    for i, (spec, n) in enumerate(zip(room_specs(seed), n_links)):
        scene = gen_room(spec, seed)
        out.append((scene, random_links(scene, n, seed * 1000 + 17 * i + 1)))
    return out
