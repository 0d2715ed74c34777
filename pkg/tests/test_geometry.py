import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudrt.geometry import (PointCloud, build_index, crop, crop_indices, default_point_radius,
                              estimate_normals, fibonacci_directions, fps, fps_batch, group,
                              group_batch, intersect, load_cloud, mean_spacing, save_cloud)


def plane_cloud(z=0.0, half=1.0, spacing=0.05, normal=(0, 0, 1)):
    g = np.arange(-half, half + 1e-9, spacing)
    x, y = np.meshgrid(g, g)
    pos = np.stack([x.ravel(), y.ravel(), np.full(x.size, z)], axis=1)
    nrm = np.tile(np.asarray(normal, float), (len(pos), 1))
    return PointCloud(pos, nrm, np.zeros(len(pos), np.int64), default_point_radius(pos))


def brute_force_hit(cloud, o, d, eps=1e-4):
    """Nearest disc hit by scanning every point."""
    best = (-1, np.inf)
    r2 = cloud.point_radius ** 2
    for i, (c, n) in enumerate(zip(cloud.positions, cloud.normals)):
        den = d @ n
        if abs(den) < 1e-12:
            continue
        t = ((c - o) @ n) / den
        if t <= eps or t >= best[1]:
            continue
        p = o + t * d
        if np.sum((p - c) ** 2) <= r2:
            best = (i, t)
    return best


# --------------------------------------------------------------------------
# index and ray queries


def test_single_point_range_query():
    cloud = PointCloud(np.zeros((1, 3)), np.array([[0, 0, 1.0]]), point_radius=0.1)
    idx = build_index(cloud)
    assert list(idx.query_ball([0.05, 0, 0], 0.2)) == [0]


def test_duplicate_points_both_retrievable():
    pos = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0.0]])
    cloud = PointCloud(pos, np.tile([0, 0, 1.0], (3, 1)), point_radius=0.1)
    assert list(build_index(cloud).query_ball([0, 0, 0], 0.01)) == [0, 1]


def test_empty_cloud_rejected():
    with pytest.raises(ValueError):
        build_index(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))))


def test_ray_onto_plane():
    cloud = plane_cloud(z=-2.0)
    hit = intersect(build_index(cloud), [0, 0, 0], [0, 0, -1])
    assert hit is not None
    assert hit.t == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(hit.position, [0, 0, -2], atol=cloud.point_radius)


def test_ray_parallel_to_discs_misses():
    cloud = plane_cloud(z=-2.0)
    assert intersect(build_index(cloud), [0, 0, 0], [1, 0, 0]) is None


def test_random_rays_match_linear_scan():
    rng = np.random.default_rng(3)
    pos = rng.uniform(-1, 1, (1000, 3))
    nrm = rng.normal(size=(1000, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pos, nrm, point_radius=0.06)
    idx = build_index(cloud)
    for _ in range(50):
        o = rng.uniform(-1.5, 1.5, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        pid, t = idx.cast(o[None], d[None])
        ref_pid, ref_t = brute_force_hit(cloud, o, d)
        assert pid[0] == ref_pid
        if ref_pid >= 0:
            assert t[0] == pytest.approx(ref_t, rel=1e-9)


def test_column_occludes_wall():
    wall = plane_cloud(z=0.0, half=1.5, normal=(0, 0, 1))
    ang = np.linspace(0, 2 * math.pi, 60, endpoint=False)
    zs = np.linspace(0.2, 1.2, 12)
    a, z = np.meshgrid(ang, zs)
    col = np.stack([0.2 * np.cos(a.ravel()), 0.2 * np.sin(a.ravel()), z.ravel()], axis=1)
    col_n = np.stack([np.cos(a.ravel()), np.sin(a.ravel()), np.zeros(a.size)], axis=1)
    pos = np.vstack([wall.positions, col])
    nrm = np.vstack([wall.normals, col_n])
    cloud = PointCloud(pos, nrm, point_radius=wall.point_radius)
    o, d = np.array([2.0, 0.0, 0.7]), np.array([-1.0, 0.0, 0.0])
    hit = intersect(build_index(cloud), o, d)
    ref_pid, ref_t = brute_force_hit(cloud, o, d)
    assert hit.point_id == ref_pid >= len(wall.positions)
    assert hit.t == pytest.approx(ref_t)


# --------------------------------------------------------------------------
# normals


def test_plane_normals():
    cloud = plane_cloud()
    cloud = PointCloud(cloud.positions + [0, 0, 0], None, point_radius=0.05)
    out = estimate_normals(cloud, k=8, toward=[0, 0, 1])
    assert np.allclose(np.abs(out.normals[:, 2]), 1.0)


def test_cylinder_normals_radial():
    ang = np.linspace(0, 2 * math.pi, 180, endpoint=False)
    zs = np.linspace(0, 1, 40)
    a, z = np.meshgrid(ang, zs)
    pos = np.stack([np.cos(a.ravel()), np.sin(a.ravel()), z.ravel()], axis=1)
    out = estimate_normals(PointCloud(pos), k=16)
    radial = pos * [1, 1, 0]
    cos = np.abs(np.sum(out.normals * radial, axis=1))
    assert np.degrees(np.arccos(np.clip(cos, -1, 1))).max() < 5.0


def test_collinear_points_flagged():
    pos = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
    out = estimate_normals(PointCloud(pos), k=3)
    assert not out.normal_valid.any()


# --------------------------------------------------------------------------
# crops


def test_crop_on_wall_recentred():
    cloud = plane_cloud(half=3.0, spacing=0.1)
    c = crop(cloud, [0.5, 0.5, 0.0], radius=1.0, max_points=10_000)
    assert len(c) > 0
    assert np.all(np.linalg.norm(c.positions, axis=1) <= 1.0 + 1e-12)


def test_crop_corner_membership():
    a = plane_cloud(half=2.0, spacing=0.1)
    b = plane_cloud(half=2.0, spacing=0.1)
    b_pos = b.positions[:, [2, 1, 0]] + [2.0, 0, 2.0]
    pos = np.vstack([a.positions, b_pos])
    cloud = PointCloud(pos, np.vstack([a.normals, a.normals[:, [2, 1, 0]]]), point_radius=0.06)
    center = np.array([1.8, 0.0, 0.2])
    idx = crop_indices(build_index(cloud), center, 0.6, 10_000)
    ref = np.nonzero(np.linalg.norm(pos - center, axis=1) <= 0.6)[0]
    assert list(idx) == list(ref)
    assert (idx < len(a.positions)).any() and (idx >= len(a.positions)).any()


def test_crop_subsample_count_and_seed():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(10_000, 3)) * 0.2
    idx = build_index(PointCloud(pos, point_radius=0.01))
    a = crop_indices(idx, [0, 0, 0], 5.0, 512, seed=7)
    b = crop_indices(idx, [0, 0, 0], 5.0, 512, seed=7)
    assert len(a) == 512 and np.array_equal(a, b)


def test_isolated_point_raises():
    idx = build_index(plane_cloud())
    with pytest.raises(ValueError):
        crop_indices(idx, [0, 0, 50.0], 1.0)


# --------------------------------------------------------------------------
# FPS and grouping


def brute_fps(pts, n):
    cur = int(np.argmin(np.sum((pts - pts.mean(0)) ** 2, axis=1)))
    out = [cur]
    while len(out) < n:
        d = np.min([np.sum((pts - pts[j]) ** 2, axis=1) for j in out], axis=0)
        out.append(int(np.argmax(d)))
    return out


def test_fps_line():
    pts = np.stack([np.arange(10.0), np.zeros(10), np.zeros(10)], axis=1)
    got = fps(pts, 2)
    assert list(got) == brute_fps(pts, 2)
    assert got[0] in (4, 5) and got[1] in (0, 9)


def test_fps_all_points():
    pts = np.random.default_rng(1).normal(size=(20, 3))
    assert sorted(fps(pts, 20)) == list(range(20))


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 40), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_fps_matches_brute_force(n, k, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    k = min(k, n)
    assert list(fps(pts, k)) == brute_fps(pts, k)
    assert np.array_equal(fps_batch(pts[None], k)[0], fps(pts, k))


def test_group_large_radius_gives_k_nearest():
    pts = np.random.default_rng(2).normal(size=(30, 3))
    g = group(pts, np.zeros((1, 3)), 100.0, 5)
    ref = np.argsort(np.sum(pts ** 2, axis=1))[:5]
    assert list(g.indices[0]) == list(ref)
    assert np.allclose(g.relative[0], pts[ref])


def test_group_pads_with_single_neighbour():
    pts = np.array([[0, 0, 0], [5, 5, 5.0]])
    g = group(pts, np.array([[0.01, 0, 0]]), 0.1, 8)
    assert list(g.indices[0]) == [0] * 8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.2, 1.5))
def test_group_membership_matches_ball_query(seed, r):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (40, 3))
    cidx = fps_batch(pts[None], 6)
    idx = group_batch(pts[None], cidx, r, 40)[0]
    for m, c in enumerate(cidx[0]):
        ball = set(np.nonzero(np.sum((pts - pts[c]) ** 2, axis=1) <= r * r)[0])
        assert set(idx[m]) == ball


def _fps_batch_ref(pts, n_prime):
    rows = np.arange(len(pts))
    out = np.empty((len(pts), n_prime), dtype=np.int64)
    cur = np.argmin(np.sum((pts - pts.mean(axis=1, keepdims=True)) ** 2, axis=2), axis=1)
    mind = np.full(pts.shape[:2], np.inf)
    for j in range(n_prime):
        out[:, j] = cur
        mind = np.minimum(mind, np.sum((pts - pts[rows, cur][:, None]) ** 2, axis=2))
        cur = np.argmax(mind, axis=1)
    return out


def _group_batch_ref(pts, cidx, r, K):
    cen = np.take_along_axis(pts, cidx[..., None], axis=1)
    d2 = np.sum((cen[:, :, None, :] - pts[:, None, :, :]) ** 2, axis=3)
    k = min(K, pts.shape[1])
    order = np.argsort(d2, axis=2, kind="stable")[:, :, :k]
    pd = np.take_along_axis(d2, order, axis=2)
    idx = np.where(pd <= r * r, order, order[:, :, :1])
    return np.concatenate([idx, np.repeat(idx[:, :, :1], K - k, axis=2)], axis=2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(3, 40), st.booleans())
def test_batched_kernels_match_numpy_reference(seed, n, lattice):
    # lattice points and cyclic repeats produce exact distance ties
    rng = np.random.default_rng(seed)
    if lattice:
        base = rng.integers(-2, 3, (max(1, n // 2), 3)).astype(float) * 0.25
    else:
        base = rng.normal(size=(max(1, n // 2), 3))
    pts = np.stack([base[np.arange(n) % len(base)], rng.normal(size=(n, 3))])
    k = int(rng.integers(1, n + 1))
    cidx = fps_batch(pts, k)
    assert np.array_equal(cidx, _fps_batch_ref(pts, k))
    r, K = float(rng.uniform(0.1, 2.0)), int(rng.integers(1, n + 5))
    assert np.array_equal(group_batch(pts, cidx, r, K), _group_batch_ref(pts, cidx, r, K))


# --------------------------------------------------------------------------
# launch directions


def test_fibonacci_small_cases():
    assert np.allclose(fibonacci_directions(1), [[0, 0, -1]])
    d = fibonacci_directions(2)
    assert d[0, 2] == pytest.approx(0.0) and d[1, 2] == pytest.approx(-1.0)


def _min_angle(d):
    cos = d @ d.T
    np.fill_diagonal(cos, -1)
    return float(np.arccos(np.clip(cos.max(), -1, 1)))


def test_fibonacci_spacing():
    L = 1000
    d = fibonacci_directions(L)
    spacing = math.sqrt(4 * math.pi / L)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    # l = L lands exactly on the south pole, closer to its neighbour than the rest
    assert _min_angle(d[:-1]) >= 0.6 * spacing
    assert _min_angle(d) >= 0.55 * spacing


# --------------------------------------------------------------------------
# helpers and files


def test_mean_spacing_grid():
    # border points read a little high, interior points exactly one pitch
    assert mean_spacing(plane_cloud(spacing=0.1).positions) == pytest.approx(0.1, rel=0.05)


def test_cloud_file_round_trip(tmp_path):
    cloud = plane_cloud(spacing=0.25)
    save_cloud(cloud, tmp_path / "c.txt")
    back = load_cloud(tmp_path / "c.txt")
    assert np.allclose(back.positions, cloud.positions)
    assert np.allclose(back.normals, cloud.normals)
    assert np.array_equal(back.material_id, cloud.material_id)
