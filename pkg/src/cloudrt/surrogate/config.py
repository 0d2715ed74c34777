"""Hyperparameters of the hop-by-hop surrogate."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Optional, Tuple

MECH_DET, MECH_NON = "deterministic", "non_deterministic"

DEFAULT_LOSS_WEIGHTS = {MECH_DET: (1.0, 5.0), MECH_NON: (1.0, 0.001)}


@dataclass(frozen=True)
class SurrogateConfig:
    """Architecture and training settings for one mechanism's network.

    ``sa_levels`` lists ``(n_centroids, radius_m, group_size)`` per set
    abstraction level and ``sa_widths`` the matching shared-MLP widths.
    ``lr_schedule`` is ``"step"`` (multiply the rate by ``lr_decay`` every
    ``decay_every`` epochs) or ``"decoupled"`` (constant rate, decoupled
    weight decay of ``weight_decay`` per step).
    """

    mechanism: str = MECH_DET
    crop_radius: float = 1.0
    crop_points: int = 512
    sa_levels: Tuple[Tuple[int, float, int], ...] = ((256, 0.2, 32), (64, 0.4, 32), (16, 0.8, 32))
    sa_widths: Tuple[int, ...] = (64, 128, 256)
    d_env: int = 256
    posenc_k: int = 4
    width: int = 256
    in_embed: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_bounces: int = 3
    amp_hidden: Tuple[int, ...] = (128, 256, 68)
    mat_embed: int = 16
    use_material: bool = True
    use_normals: bool = False
    teacher_forcing: bool = True
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 800
    lr_schedule: str = "step"
    lr_decay: float = 0.8
    decay_every: int = 100
    weight_decay: float = 0.0
    loss_weights: Optional[Tuple[float, float]] = None
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.mechanism not in (MECH_DET, MECH_NON):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if len(self.sa_levels) != len(self.sa_widths):
            raise ValueError("sa_levels and sa_widths differ in length")
        n_prev = self.crop_points
        for n, r, k in self.sa_levels:
            if not (1 <= n <= n_prev and r > 0 and k >= 1):
                raise ValueError(f"bad set abstraction level {(n, r, k)}")
            n_prev = n
        if self.width % self.n_heads or not 0 < self.in_embed < self.width:
            raise ValueError("width must split into heads and exceed in_embed")
        if self.lr_schedule not in ("step", "decoupled"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    @property
    def weights(self) -> Tuple[float, float]:
        return tuple(self.loss_weights) if self.loss_weights is not None \
            else DEFAULT_LOSS_WEIGHTS[self.mechanism]

    def with_(self, **kw) -> "SurrogateConfig":
        return replace(self, **kw)

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(doc: dict) -> "SurrogateConfig":
        doc = dict(doc)
        doc["sa_levels"] = tuple(tuple(x) for x in doc["sa_levels"])
        for k in ("sa_widths", "amp_hidden"):
            doc[k] = tuple(doc[k])
        if doc.get("loss_weights") is not None:
            doc["loss_weights"] = tuple(doc["loss_weights"])
        return SurrogateConfig(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def desk_config(mechanism: str = MECH_DET, **kw) -> SurrogateConfig:
    """Reduced sizes that train in minutes on a CPU."""
    base = dict(mechanism=mechanism, crop_points=128,
                sa_levels=((64, 0.2, 16), (16, 0.4, 8), (4, 0.8, 4)),
                sa_widths=(32, 64, 128), d_env=128, width=128, in_embed=32,
                lr=1e-3, epochs=200)
    base.update(kw)
    return SurrogateConfig(**base)


def tiny_config(mechanism: str = MECH_DET, **kw) -> SurrogateConfig:
    """Smallest sensible network, for gradient checks and unit tests."""
    base = dict(mechanism=mechanism, crop_points=16,
                sa_levels=((8, 0.3, 4), (4, 0.6, 4), (2, 1.0, 2)),
                sa_widths=(6, 8, 8), d_env=8, posenc_k=2, width=8, in_embed=4,
                n_layers=1, n_heads=2, amp_hidden=(8, 8, 6), mat_embed=4, epochs=10)
    base.update(kw)
    return SurrogateConfig(**base)

