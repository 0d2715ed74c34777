"""Single-bounce training of one mechanism's network."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .. import nn
from ..tracer import REFLECT
from .config import MECH_DET, SurrogateConfig
from .encoder import CropSet, crop_points, crop_seed, prepare_crops
from .losses import loss_att, loss_dir, total_loss
from .model import SurrogateModel, matrix_to_amp


class NumericalError(RuntimeError):
    """Non-finite loss during training; ``epoch`` names where it happened."""

    def __init__(self, epoch: int, msg: str):
        super().__init__(f"epoch {epoch}: {msg}")
        self.epoch = epoch


@dataclass
class TrainingSet:
    """Per-sample arrays plus the unique crops they reference."""

    crops: CropSet
    crop_of: np.ndarray
    d_in: np.ndarray
    d_out: np.ndarray
    target: np.ndarray
    mat: np.ndarray
    normal: np.ndarray
    bounce: np.ndarray
    link: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __len__(self):
        return len(self.d_in)

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx)
        used, inv = np.unique(self.crop_of[idx], return_inverse=True)
        return TrainingSet(self.crops.take(used), inv.reshape(-1), self.d_in[idx],
                           self.d_out[idx], self.target[idx], self.mat[idx], self.normal[idx],
                           self.bounce[idx], self.link[idx] if len(self.link) else self.link)


def crop_center(scene, point_id: int, p) -> np.ndarray:
    """Crops sit on the hit point's sample position so features cache per point."""
    if point_id >= 0:
        return scene.cloud.positions[point_id]
    return np.asarray(p, dtype=np.float64)


def build_training_set(dataset, cfg: SurrogateConfig, mechanism: Optional[str] = None) -> TrainingSet:
    """Crop, pad and group every sample of ``dataset`` (a RayDataset).

    When ``mechanism`` is given, only samples of that mechanism are kept.
    """
    a = dataset.arrays
    if not a or len(a["kind"]) == 0:
        raise ValueError("empty dataset")
    mech = mechanism
    sel = np.arange(len(a["kind"]))
    if mech is not None:
        det = a["kind"] == REFLECT
        sel = sel[det[sel] if mech == MECH_DET else ~det[sel]]
    if len(sel) == 0:
        raise ValueError(f"no samples for mechanism {mech!r}")
    keys = {}
    crops = []
    crop_of = np.empty(len(sel), dtype=np.int64)
    for j, i in enumerate(sel):
        si = int(a["scene"][i])
        pid = int(a["point_id"][i])
        key = (si, pid) if pid >= 0 else (si, tuple(np.round(a["p"][i], 6)))
        if key not in keys:
            scene = dataset.scenes[si]
            c = crop_center(scene, pid, a["p"][i])
            crops.append(crop_points(scene.index, c, cfg, crop_seed(cfg.seed, pid)))
            keys[key] = len(crops) - 1
        crop_of[j] = keys[key]
    mats = np.stack([dataset.scenes[int(a["scene"][i])].materials.feature_table[int(a["material"][i])]
                     for i in sel])
    return TrainingSet(prepare_crops(crops, cfg), crop_of, a["d_in"][sel].astype(np.float64),
                       a["d_out"][sel].astype(np.float64), matrix_to_amp(a["local"][sel]), mats,
                       a["normal"][sel].astype(np.float64), a["bounce"][sel].astype(np.int64),
                       a["link"][sel].astype(np.int64))


# --------------------------------------------------------------------------
# forward and loss


def forward_loss(model: SurrogateModel, ts: TrainingSet, idx):
    """``(dir_loss, att_loss, total)`` Tensors on the samples ``idx``."""
    idx = np.asarray(idx)
    used, inv = np.unique(ts.crop_of[idx], return_inverse=True)
    feat_c = model.encode_t(ts.crops.take(used))
    feat = nn.gather(feat_c, inv.reshape(-1))
    nrm = ts.normal[idx]
    d_hat = model.direction_t(feat, ts.d_in[idx], ts.bounce[idx], nrm)
    d_out = ts.d_out[idx] if model.cfg.teacher_forcing else d_hat
    amp = model.amplitude_t(feat, ts.d_in[idx], d_out, ts.mat[idx], nrm)
    ld = loss_dir(d_hat, ts.d_out[idx])
    la, _ = loss_att(amp, ts.target[idx], model.mechanism)
    return ld, la, total_loss(ld, la, model.mechanism, model.cfg.weights)


def learning_rate(cfg: SurrogateConfig, epoch: int) -> float:
    if cfg.lr_schedule == "step":
        return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)
    return cfg.lr


@dataclass
class TrainResult:
    model: SurrogateModel
    curve: List[tuple]
    best_epoch: Optional[int] = None

    @property
    def final(self) -> tuple:
        return self.curve[-1]


def train(ts: TrainingSet, model: SurrogateModel, epochs: Optional[int] = None,
          log_path=None, on_epoch: Optional[Callable[[int, tuple], None]] = None,
          keep_best: bool = False) -> TrainResult:
    """Shuffled mini-batch Adam over ``ts``; records ``(epoch, dir, att, total)`` means.

    Deterministic for a fixed ``model.cfg.seed``. Raises NumericalError on a
    non-finite loss. With ``keep_best`` the model ends with the parameters
    from the end of the epoch with the lowest mean training loss, so a late
    optimiser spike is not what gets returned.
    """
    if len(ts) == 0:
        raise ValueError("empty training set")
    cfg = model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng([cfg.seed, 1])
    store = model.store
    wd = cfg.weight_decay if cfg.lr_schedule == "decoupled" else 0.0
    curve = []
    best, best_ep, best_params = math.inf, None, None
    for ep in range(epochs):
        lr = learning_rate(cfg, ep)
        perm = rng.permutation(len(ts))
        sums = np.zeros(3)
        for s in range(0, len(ts), cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            store.zero_grad()
            ld, la, tot = forward_loss(model, ts, idx)
            if not math.isfinite(tot.item()):
                raise NumericalError(ep, f"non-finite loss (dir={ld.item()}, att={la.item()})")
            tot.backward()
            nn.adam_step(store, lr, weight_decay=wd)
            sums += len(idx) * np.array([ld.item(), la.item(), tot.item()])
        row = (ep,) + tuple(float(x) for x in sums / len(ts))
        curve.append(row)
        if keep_best and row[3] < best:
            best, best_ep = row[3], ep
            best_params = {n: store[n].data.copy() for n in store.names()}
        if on_epoch is not None:
            on_epoch(ep, row)
    if best_params is not None:
        for n, v in best_params.items():
            store[n].data[...] = v
    if log_path is not None:
        write_log(log_path, curve)
    return TrainResult(model, curve, best_ep)


def write_log(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "dir_loss", "att_loss", "total"])
        for ep, d, a, t in curve:
            w.writerow([ep, repr(d), repr(a), repr(t)])


# --------------------------------------------------------------------------
# evaluation on held-out samples


def evaluate(model: SurrogateModel, ts: TrainingSet, chunk: int = 256) -> dict:
    """Per-sample angular error (deg), power error (dB) and predictions."""
    feats = model.encode(ts.crops)
    f = feats[ts.crop_of]
    d_hat = np.concatenate([model.predict_direction(f[i:i + chunk], ts.d_in[i:i + chunk],
                                                    ts.bounce[i:i + chunk], ts.normal[i:i + chunk])
                            for i in range(0, len(ts), chunk)])
    amp = np.concatenate([model.predict_amplitude(f[i:i + chunk], ts.d_in[i:i + chunk],
                                                  ts.d_out[i:i + chunk], ts.mat[i:i + chunk],
                                                  ts.normal[i:i + chunk])
                          for i in range(0, len(ts), chunk)])
    cosang = np.clip(np.sum(d_hat * ts.d_out, axis=1), -1, 1)
    p_true = np.sum(ts.target ** 2, axis=1)
    p_pred = np.sum(np.abs(amp.reshape(len(ts), 4)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        perr = np.abs(10 * np.log10(np.maximum(p_pred, 1e-30)) - 10 * np.log10(p_true))
    return {"angle_deg": np.degrees(np.arccos(cosang)), "power_err_db": perr,
            "d_hat": d_hat, "amp": amp}
