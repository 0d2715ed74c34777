"""Positional encoding, local crops and the hierarchical point-set encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .. import nn
from ..geometry import SpatialIndex, crop_indices, fps_batch, group_batch
from ..nn import tensor as T
from .config import SurrogateConfig


def posenc(d, K: int = 4) -> np.ndarray:
    """Sinusoidal encoding of a direction, ``[sin(2^k pi d), cos(2^k pi d)]`` for k=1..K.

    Accepts a 3-vector or an (M, 3) array and returns 6K values per row.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    d = np.asarray(d, dtype=np.float64)
    freqs = np.pi * 2.0 ** np.arange(1, K + 1)
    ang = d[..., None, :] * freqs[:, None]
    out = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    return out.reshape(d.shape[:-1] + (6 * K,))


def direction_features(d, K: int) -> np.ndarray:
    """posenc plus the raw components; the lowest octave alone aliases d and d +- 1."""
    d = np.asarray(d, dtype=np.float64)
    return np.concatenate([posenc(d, K), d], axis=-1)


# --------------------------------------------------------------------------
# crops


@dataclass
class CropSet:
    """A batch of re-centered crops with precomputed sampling and grouping.

    ``levels[l]`` is ``(centroid_idx, group_idx)`` where both index the
    previous level's point set (the raw crop for l=0).
    """

    points: np.ndarray
    levels: List[Tuple[np.ndarray, np.ndarray]]
    short: np.ndarray

    def __len__(self):
        return len(self.points)

    def take(self, idx) -> "CropSet":
        return CropSet(self.points[idx], [(c[idx], g[idx]) for c, g in self.levels],
                       self.short[idx])


def canonical_pad(pts: np.ndarray, n: int) -> np.ndarray:
    """Sort points lexicographically, then cycle them up to ``n`` rows.

    Sorting first makes the padded multiset independent of input order.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("empty crop")
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]
    if len(pts) >= n:
        return pts[:n]
    return pts[np.arange(n) % len(pts)]


def prepare_crops(crops: Sequence[np.ndarray], cfg: SurrogateConfig) -> CropSet:
    """Pad every crop to ``cfg.crop_points`` and run FPS and ball grouping."""
    N = cfg.crop_points
    short = np.array([len(c) < cfg.sa_levels[0][0] for c in crops], dtype=bool)
    pts = np.stack([canonical_pad(c, N) for c in crops]) if len(crops) else np.zeros((0, N, 3))
    levels = []
    prev = pts
    for n, r, k in cfg.sa_levels:
        if len(prev) == 0:
            levels.append((np.zeros((0, n), np.int64), np.zeros((0, n, k), np.int64)))
            continue
        cidx = fps_batch(prev, n)
        gidx = group_batch(prev, cidx, r, k)
        levels.append((cidx, gidx))
        prev = np.take_along_axis(prev, cidx[..., None], axis=1)
    return CropSet(pts, levels, short)


def crop_seed(seed: int, key: int) -> int:
    """Subsampling seed of the crop keyed by ``key`` (a point id, or -1)."""
    return int(np.random.SeedSequence([seed, key & 0xFFFFFFFF]).generate_state(1)[0])


def crop_points(index: SpatialIndex, center, cfg: SurrogateConfig, seed: int = 0) -> np.ndarray:
    """Re-centered positions of the local crop around ``center``."""
    idx = crop_indices(index, center, cfg.crop_radius, cfg.crop_points, seed)
    return index.cloud.positions[idx] - np.asarray(center, dtype=np.float64)


# --------------------------------------------------------------------------
# network


def init_encoder(store: nn.ParamStore, cfg: SurrogateConfig, rng: np.random.Generator) -> None:
    c_in = 3
    for l, w in enumerate(cfg.sa_widths):
        store.add_linear(f"enc.sa{l}.0", c_in, w, rng)
        store.add_linear(f"enc.sa{l}.1", w, w, rng)
        c_in = 3 + w
    store.add_linear("enc.final", c_in, cfg.d_env, rng)


def _mlp2(store, name, x):
    h = T.relu(T.linear(x, store[f"{name}.0.W"], store[f"{name}.0.b"]))
    return T.relu(T.linear(h, store[f"{name}.1.W"], store[f"{name}.1.b"]))


def encode(store: nn.ParamStore, cfg: SurrogateConfig, crops: CropSet) -> T.Tensor:
    """Scene features (C, d_env) for a prepared crop batch."""
    dt = store.dtype
    C = len(crops)
    pos = crops.points
    feats = None
    for l, ((cidx, gidx), (n, r, k)) in enumerate(zip(crops.levels, cfg.sa_levels)):
        cpos = np.take_along_axis(pos, cidx[..., None], axis=1)
        rows = np.arange(C)[:, None, None]
        rel = (pos[rows, gidx] - cpos[:, :, None, :]) / r
        x = T.Tensor(rel.astype(dt))
        if feats is not None:
            n_prev = pos.shape[1]
            flat = T.reshape(feats, (C * n_prev, feats.shape[-1]))
            x = T.concat([x, nn.gather(flat, gidx + rows * n_prev)], axis=-1)
        feats = T.max_pool_set(_mlp2(store, f"enc.sa{l}", x), axis=2)
        pos = cpos
    r_last = cfg.sa_levels[-1][1]
    x = T.concat([T.Tensor((pos / r_last).astype(dt)), feats], axis=-1)
    h = T.relu(T.linear(x, store["enc.final.W"], store["enc.final.b"]))
    return T.max_pool_set(h, axis=1)
