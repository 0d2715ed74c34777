"""Multi-bounce channel synthesis from the trained single-bounce networks."""

from __future__ import annotations

import math
from typing import Dict, List, Optional

import numpy as np

from .. import em
from ..geometry import facing_normals, fibonacci_directions
from ..tracer import (REFLECT, SCATTER, ChannelRealization, Hop, PathBatch, Scene, TraceConfig,
                      TracedPath, _check_terminals, enumerate_diffraction,
                      finalize, keyed_uniform, lambertian_dirs, reception_batch)
from .encoder import crop_points, crop_seed, prepare_crops
from .model import SurrogateModel

_ROLLOUT_SALT = 0x5EED


class FeatureCache:
    """Scene features per cloud point, computed on first use.

    Crops are centred on the point's sample position, so a feature depends
    only on the point id and the model.
    """

    def __init__(self, scene: Scene, model: SurrogateModel, batch: int = 512):
        self.scene = scene
        self.model = model
        self.batch = batch
        self.rows = np.full(len(scene.cloud), -1, dtype=np.int64)
        self.data = np.zeros((0, model.cfg.d_env), dtype=model.store.dtype)

    def get(self, pids) -> np.ndarray:
        pids = np.asarray(pids, dtype=np.int64)
        missing = np.unique(pids[self.rows[pids] < 0])
        if len(missing):
            cfg = self.model.cfg
            pos = self.scene.cloud.positions
            new = []
            for s in range(0, len(missing), self.batch):
                ids = missing[s:s + self.batch]
                crops = [crop_points(self.scene.index, pos[i], cfg, crop_seed(cfg.seed, int(i)))
                         for i in ids]
                new.append(self.model.encode(prepare_crops(crops, cfg)))
            self.rows[missing] = len(self.data) + np.arange(len(missing))
            self.data = np.concatenate([self.data] + new)
        return self.data[self.rows[pids]]


def _features_at(scene: Scene, model: SurrogateModel, center) -> np.ndarray:
    cfg = model.cfg
    crop = crop_points(scene.index, center, cfg, crop_seed(cfg.seed, -1))
    return model.encode(prepare_crops([crop], cfg))[0]


def _rollout_chunk(scene: Scene, cfg: TraceConfig, det: SurrogateModel, non: SurrogateModel,
                   fdet: FeatureCache, fnon: FeatureCache, dirs0: np.ndarray, ray_ids: np.ndarray):
    index = scene.index
    cloud = scene.cloud
    feat_tab = scene.materials.feature_table
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
    h_loc = np.zeros((m, 0, 2, 2), np.complex128)
    found = {b: [] for b in range(1, B + 1)}
    diag = {"received": 0, "nee": 0, "rays": m, "rejected": 0}
    for b in range(B + 1):
        if len(o) == 0:
            break
        pid, t = index.cast(o, d)
        if b > 0:
            ok, t_star = reception_batch(o, d, unfolded, t, rx, cfg)
            if np.any(ok):
                lens = np.concatenate([h_len[ok], t_star[ok, None]], axis=1)
                found[b].append(PathBatch(h_pid[ok], h_kind[ok], h_pos[ok], h_nrm[ok],
                                          h_dir[ok], lens, h_loc[ok]))
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
        h_dir, h_len, h_loc = h_dir[sel], h_len[sel], h_loc[sel]
        p = o + t[:, None] * d
        n = facing_normals(cloud.normals[pid], d)
        good = -np.einsum("ij,ij->i", d, n) > 1e-9
        mf = feat_tab[cloud.material_id[pid]]
        base_pid = np.concatenate([h_pid, pid[:, None]], axis=1)
        base_pos = np.concatenate([h_pos, p[:, None]], axis=1)
        base_nrm = np.concatenate([h_nrm, n[:, None]], axis=1)
        base_len = np.concatenate([h_len, t[:, None]], axis=1)
        new_unf = unfolded + t
        can_diff = good & (ndiff < cfg.max_diffuse)
        parts = []

        # diffuse hop straight to Rx, amplitude from the non-deterministic network
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
                M = non.predict_amplitude(fnon.get(pid[ci]), d[ci], vd, mf[ci], n[ci])
                kinds = np.concatenate([h_kind[ci], np.full((len(ci), 1), SCATTER, np.int8)],
                                       axis=1)
                found[b + 1].append(PathBatch(
                    base_pid[ci], kinds, base_pos[ci], base_nrm[ci],
                    np.concatenate([h_dir[ci], vd[:, None]], axis=1),
                    np.concatenate([base_len[ci], dist[:, None]], axis=1),
                    np.concatenate([h_loc[ci], M[:, None]], axis=1)))
                diag["nee"] += len(ci)

        # deterministic continuation along the predicted direction
        gi = np.nonzero(good)[0]
        if len(gi):
            fd = fdet.get(pid[gi])
            d_new = det.predict_direction(fd, d[gi], b, n[gi])
            ok = np.einsum("ij,ij->i", d_new, n[gi]) > 1e-9
            diag["rejected"] += int((~ok).sum())
            gi, d_new, fd = gi[ok], d_new[ok], fd[ok]
            if len(gi):
                M = det.predict_amplitude(fd, d[gi], d_new, mf[gi], n[gi])
                parts.append((gi, d_new, np.full(len(gi), REFLECT, np.int8), lineage[gi],
                              ndiff[gi], M))

        # diffuse branches perturbed around the predicted lobe axis
        if cfg.n_scatter > 0 and np.any(can_diff):
            ci = np.nonzero(can_diff)[0]
            fn = fnon.get(pid[ci])
            axis = non.predict_direction(fn, d[ci], b, n[ci])
            k = cfg.n_scatter
            rows = np.repeat(np.arange(len(ci)), k)
            br = np.tile(np.arange(k), len(ci))
            src = ci[rows]
            u1 = keyed_uniform(cfg.seed ^ _ROLLOUT_SALT, rid[src], lineage[src], b, br, 0)
            u2 = keyed_uniform(cfg.seed ^ _ROLLOUT_SALT, rid[src], lineage[src], b, br, 1)
            ds = lambertian_dirs(axis[rows], u1, u2)
            ok = np.einsum("ij,ij->i", ds, n[src]) > 1e-9
            diag["rejected"] += int((~ok).sum())
            rows, br, src, ds = rows[ok], br[ok], src[ok], ds[ok]
            if len(src):
                M = non.predict_amplitude(fn[rows], d[src], ds, mf[src], n[src])
                parts.append((src, ds, np.full(len(src), SCATTER, np.int8),
                              lineage[src] * (k + 1) + br + 1, ndiff[src] + 1, M))

        if not parts:
            break
        rows = np.concatenate([q[0] for q in parts])
        d = np.concatenate([q[1] for q in parts])
        kind = np.concatenate([q[2] for q in parts])
        lineage = np.concatenate([q[3] for q in parts])
        ndiff = np.concatenate([q[4] for q in parts])
        loc = np.concatenate([q[5] for q in parts])
        o = p[rows]
        rid = rid[rows]
        unfolded = new_unf[rows]
        h_pid = base_pid[rows]
        h_pos = base_pos[rows]
        h_nrm = base_nrm[rows]
        h_len = base_len[rows]
        h_kind = np.concatenate([h_kind[rows], kind[:, None]], axis=1)
        h_dir = np.concatenate([h_dir[rows], d[:, None]], axis=1)
        h_loc = np.concatenate([h_loc[rows], loc[:, None]], axis=1)
        diag["rays"] += len(o)
    return found, diag


def _diffraction_paths(scene: Scene, cfg: TraceConfig, non: SurrogateModel) -> List[TracedPath]:
    """Geometric edge paths whose edge-fixed matrix comes from the network."""
    out = []
    lam = scene.wavelength
    for ref in enumerate_diffraction(scene, cfg):
        h = ref.hops[0]
        edge = scene.edges[h.edge_id]
        s_prime = ref.launch_length
        s = h.length
        mats = (scene.materials[edge.material_ids[0]], scene.materials[edge.material_ids[1]])
        _, bi, bd = em.diffraction_local(edge, h.d_in, h.d_out, mats, s, s_prime, lam)
        feat = _features_at(scene, non, h.position)
        T_hat = non.predict_amplitude(feat, h.d_in, h.d_out,
                                      scene.materials.feature_table[h.material_id],
                                      np.zeros(3))[0]
        m = (em.basis_transform(bd, em.polarization_basis(h.d_out)) @ T_hat
             @ em.basis_transform(em.polarization_basis(h.d_in), bi))
        prop = em.diffraction_spreading(s, s_prime) * np.exp(-2j * math.pi * s / lam)
        amp = em.PolAmp(m * prop, s)
        gain = em.chain([em.propagation(s_prime, lam), amp], scene.freq)
        hop = Hop(position=h.position, d_in=h.d_in, d_out=h.d_out, kind="diffract", amp=amp,
                  length=s, local=T_hat, point_id=-1, material_id=h.material_id, normal=None,
                  edge_id=h.edge_id)
        out.append(TracedPath([hop], gain, s_prime, ref.aod, ref.aoa))
    return out


def rollout(scene: Scene, model_det: SurrogateModel, model_non: SurrogateModel,
            cfg: TraceConfig, caches: Optional[Dict] = None) -> ChannelRealization:
    """Channel of one link synthesised hop by hop with the surrogate.

    LOS and delays are geometric; directions and interaction matrices come
    from the networks. ``caches`` may be shared across links of one scene
    to reuse per-point features.
    """
    _check_terminals(scene)
    if scene.index is None:
        return finalize(scene, cfg, {}, None, (), {})
    caches = {} if caches is None else caches
    key = id(scene.cloud)
    if caches.get("cloud") != key:
        caches.clear()
        caches["cloud"] = key
        caches["det"] = FeatureCache(scene, model_det)
        caches["non"] = FeatureCache(scene, model_non)
    fdet, fnon = caches["det"], caches["non"]
    fdet.scene = fnon.scene = scene
    dirs = fibonacci_directions(cfg.n_rays)
    by_h = {b: [] for b in range(1, cfg.max_bounces + 1)}
    diag = {"received": 0, "nee": 0, "rays": 0, "rejected": 0}
    for s in range(0, cfg.n_rays, cfg.chunk_rays):
        ids = np.arange(s, min(s + cfg.chunk_rays, cfg.n_rays))
        found, dg = _rollout_chunk(scene, cfg, model_det, model_non, fdet, fnon, dirs[ids], ids)
        for b, lst in found.items():
            by_h[b].extend(lst)
        for k in diag:
            diag[k] += dg[k]
    batches = {b: PathBatch.concat(v) for b, v in by_h.items() if v}
    diff = _diffraction_paths(scene, cfg, model_non)
    return finalize(scene, cfg, batches, lambda bt: bt.local, diff, diag)

