"""Condensed channel parameters: PDP, path loss, delay spread, angular error."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np


@dataclass
class Pdp:
    """Power delay profile as ``(delay_s, power)`` bins; empty bins are omitted."""

    bins: List[Tuple[float, float]]
    bin_width: float

    @property
    def delays(self) -> np.ndarray:
        return np.array([b[0] for b in self.bins])

    @property
    def powers(self) -> np.ndarray:
        return np.array([b[1] for b in self.bins])

    @property
    def total(self) -> float:
        return float(sum(b[1] for b in self.bins))


@dataclass
class CondensedParams:
    pl_db: float
    ds_ns: float


def _taps(real) -> Tuple[np.ndarray, np.ndarray]:
    """(tau, power) of every path of a realization or a plain path list."""
    paths = real.paths if hasattr(real, "paths") else list(real)
    tau = np.array([p.tau for p in paths], dtype=np.float64)
    pw = np.array([p.power for p in paths], dtype=np.float64)
    return tau, pw


def pdp(real, bin_width: float = 1e-9) -> Pdp:
    """Bin path powers by delay; bin k covers ``[k w, (k+1) w)`` and is labelled ``k w``."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    tau, pw = _taps(real)
    if len(tau) == 0:
        return Pdp([], bin_width)
    k = np.floor(tau / bin_width + 1e-9).astype(np.int64)
    uniq, inv = np.unique(k, return_inverse=True)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inv, pw)
    return Pdp([(float(u * bin_width), float(a)) for u, a in zip(uniq, acc)], bin_width)


def total_power(real) -> float:
    return float(np.sum(_taps(real)[1]))


def path_loss(real) -> float:
    """Isotropic path loss in dB, from the incoherent power sum."""
    _, pw = _taps(real)
    if len(pw) == 0:
        raise ValueError("path loss needs at least one path")
    tot = float(pw.sum())
    if not tot > 0:
        raise ValueError("zero total power")
    return -10.0 * math.log10(tot)


def rms_ds(real) -> float:
    """Power-weighted standard deviation of the path delays, in seconds."""
    tau, pw = _taps(real)
    if len(pw) == 0:
        raise ValueError("delay spread needs at least one path")
    tot = pw.sum()
    if not tot > 0:
        raise ValueError("zero total power")
    # shift first so large common delays do not cancel catastrophically
    t = tau - tau[np.argmax(pw)]
    m1 = float((pw * t).sum() / tot)
    m2 = float((pw * t * t).sum() / tot)
    return math.sqrt(max(m2 - m1 * m1, 0.0))


def condensed(real) -> CondensedParams:
    return CondensedParams(path_loss(real), rms_ds(real) * 1e9)


def angular_error(pred, truth) -> float:
    """Mean angle in degrees between matching hops' outgoing directions."""
    if pred.bounce_count != truth.bounce_count:
        raise ValueError(f"bounce counts differ: {pred.bounce_count} vs {truth.bounce_count}")
    if pred.bounce_count == 0:
        return 0.0
    a = np.array([h.d_out for h in pred.hops], dtype=np.float64)
    b = np.array([h.d_out for h in truth.hops], dtype=np.float64)
    return float(np.mean(angle_deg(a, b)))


def angle_deg(a, b) -> np.ndarray:
    """Row-wise angle between direction arrays, degrees."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    # atan2 stays accurate for tiny angles, where arccos of a rounded dot product does not
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.degrees(np.arctan2(cross, np.sum(a * b, axis=-1)))


def rmse(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean((a - b) ** 2))) if len(a) else 0.0


def write_link_csv(path, rows: Iterable[dict],
                   fields=("link", "pl_db", "ds_ns", "n_paths")) -> None:
    """Per-link table for external plotting; extra keys in ``rows`` are ignored."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
