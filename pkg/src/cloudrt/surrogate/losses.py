"""Training losses: cosine direction loss, amplitude losses and their weighted sum."""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from ..nn import tensor as T
from .config import MECH_DET, MECH_NON, DEFAULT_LOSS_WEIGHTS

_DB = 10.0 / math.log(10.0)
POWER_EPS = 1e-30


def _as_tensor(x, dtype=np.float64) -> T.Tensor:
    return x if isinstance(x, T.Tensor) else T.Tensor(np.asarray(x, dtype=dtype))


def loss_dir(pred, truth) -> T.Tensor:
    """Mean of ``1 - cos`` between predicted and true directions."""
    p = _as_tensor(pred)
    t = np.asarray(truth.data if isinstance(truth, T.Tensor) else truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"loss_dir: shapes {p.shape} and {t.shape} differ")
    tn = np.linalg.norm(t, axis=-1, keepdims=True)
    pn = np.linalg.norm(p.data, axis=-1)
    if np.any(tn == 0) or np.any(pn == 0):
        raise ValueError("loss_dir: zero-length direction")
    cos = T.sum(T.mul(T.normalize(p, axis=-1), T.Tensor((t / tn).astype(p.dtype))), axis=-1)
    return T.mean(T.sub(1.0, cos))


def loss_att(pred, truth, mechanism: str) -> Tuple[T.Tensor, int]:
    """Amplitude loss and the number of excluded samples.

    Deterministic samples use the elementwise MSE over the 8 real
    components. Non-deterministic samples use the squared error between
    ``10 log10`` of the squared Frobenius norms; samples whose true power
    is zero are excluded and counted.
    """
    p = _as_tensor(pred)
    t = np.asarray(truth.data if isinstance(truth, T.Tensor) else truth, dtype=np.float64)
    if p.shape != t.shape or p.shape[-1] != 8:
        raise ValueError(f"loss_att: shapes {p.shape} and {t.shape} must match (M, 8)")
    if mechanism == MECH_DET:
        return T.mean(T.square(T.sub(p, T.Tensor(t.astype(p.dtype))))), 0
    if mechanism != MECH_NON:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    pt = np.sum(t * t, axis=-1)
    ok = pt > 0
    n_bad = int((~ok).sum())
    if not np.any(ok):
        return T.Tensor(np.zeros((), dtype=p.dtype)), n_bad
    if n_bad:
        p = T.getitem(p, np.nonzero(ok)[0])
    pp = T.sum(T.square(p), axis=-1)
    db_p = T.mul(T.log(T.clip_min(pp, POWER_EPS)), _DB)
    db_t = (_DB * np.log(pt[ok])).astype(p.dtype)
    return T.mean(T.square(T.sub(db_p, T.Tensor(db_t)))), n_bad


def total_loss(dir_loss, att_loss, mechanism: str = MECH_DET, weights=None) -> T.Tensor:
    """``l1 * dir_loss + l2 * att_loss``."""
    l1, l2 = weights if weights is not None else DEFAULT_LOSS_WEIGHTS[mechanism]
    return T.add(T.mul(_as_tensor(dir_loss), l1), T.mul(_as_tensor(att_loss), l2))
