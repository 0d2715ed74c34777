"""Direction and amplitude predictors on top of the scene encoder."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .. import nn
from ..nn import tensor as T
from .config import SurrogateConfig
from .encoder import CropSet, direction_features, encode, init_encoder

N_MAT_FEATURES = 4


def amp_to_matrix(v) -> np.ndarray:
    """8 reals ``(r11, i11, r12, i12, r21, i21, r22, i22)`` -> complex (..., 2, 2)."""
    v = np.asarray(v, dtype=np.float64)
    c = v[..., 0::2] + 1j * v[..., 1::2]
    return c.reshape(v.shape[:-1] + (2, 2))


def matrix_to_amp(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    c = m.reshape(m.shape[:-2] + (4,))
    out = np.empty(c.shape[:-1] + (8,))
    out[..., 0::2] = c.real
    out[..., 1::2] = c.imag
    return out


class SurrogateModel:
    """Encoder, direction predictor and amplitude predictor for one mechanism."""

    def __init__(self, cfg: SurrogateConfig, store: Optional[nn.ParamStore] = None):
        self.cfg = cfg
        if store is None:
            store = nn.ParamStore(np.dtype(cfg.dtype))
            self._init(store, np.random.default_rng(cfg.seed))
        self.store = store

    @property
    def mechanism(self) -> str:
        return self.cfg.mechanism

    def _dir_in(self) -> int:
        return 6 * self.cfg.posenc_k + 3 + (3 if self.cfg.use_normals else 0)

    def _amp_in(self) -> int:
        c = self.cfg
        n = 2 * (6 * c.posenc_k + 3) + c.d_env
        n += c.mat_embed if c.use_material else 0
        n += 3 if c.use_normals else 0
        return n

    def _init(self, store: nn.ParamStore, rng: np.random.Generator) -> None:
        c = self.cfg
        init_encoder(store, c, rng)
        store.add_linear("dir.in", self._dir_in(), c.in_embed, rng)
        store.add_linear("dir.feat", c.d_env, c.width - c.in_embed, rng)
        store.add("dir.e_b", rng.normal(0.0, 0.02, (c.max_bounces, c.width)))
        for i in range(c.n_layers):
            nn.init_attention_block(store, f"dir.layer{i}", c.width, rng)
        store.add("dir.ln.g", np.ones(c.width))
        store.add("dir.ln.b", np.zeros(c.width))
        store.add_linear("dir.head", c.width, 3, rng)
        if c.use_material:
            store.add_linear("amp.mat", N_MAT_FEATURES, c.mat_embed, rng)
        dims = (self._amp_in(),) + tuple(c.amp_hidden) + (8,)
        for i in range(len(dims) - 1):
            store.add_linear(f"amp.fc{i}", dims[i], dims[i + 1], rng)

    def _block(self, i: int) -> dict:
        s = self.store
        p = f"dir.layer{i}"
        out = {}
        for nm in ("q", "k", "v", "o"):
            out[f"W{nm}"], out[f"b{nm}"] = s[f"{p}.{nm}.W"], s[f"{p}.{nm}.b"]
        out["W1"], out["b1"] = s[f"{p}.ffn1.W"], s[f"{p}.ffn1.b"]
        out["W2"], out["b2"] = s[f"{p}.ffn2.W"], s[f"{p}.ffn2.b"]
        for ln in ("ln1", "ln2"):
            out[f"{ln}_g"], out[f"{ln}_b"] = s[f"{p}.{ln}.g"], s[f"{p}.{ln}.b"]
        return out

    def _const(self, x) -> T.Tensor:
        return T.Tensor(np.asarray(x, dtype=self.store.dtype))

    # -- differentiable forward ----------------------------------------

    def encode_t(self, crops: CropSet) -> T.Tensor:
        return encode(self.store, self.cfg, crops)

    def direction_t(self, feat: T.Tensor, d_in, bounce, normal=None) -> T.Tensor:
        """Unit outgoing directions (M, 3)."""
        c, s = self.cfg, self.store
        parts = [direction_features(d_in, c.posenc_k)]
        if c.use_normals:
            parts.append(np.asarray(normal, dtype=np.float64))
        x_in = self._const(np.concatenate(parts, axis=-1))
        e_in = T.linear(x_in, s["dir.in.W"], s["dir.in.b"])
        e_f = T.linear(feat, s["dir.feat.W"], s["dir.feat.b"])
        b = np.clip(np.asarray(bounce, dtype=np.int64), 0, c.max_bounces - 1)
        tok = T.add(T.concat([e_in, e_f], axis=-1), nn.gather(s["dir.e_b"], b))
        M = tok.shape[0]
        x = T.reshape(tok, (M, 1, c.width))
        for i in range(c.n_layers):
            x = nn.multi_head_attention(x, self._block(i), c.n_heads)
        x = T.layer_norm(T.reshape(x, (M, c.width)), s["dir.ln.g"], s["dir.ln.b"])
        return T.normalize(T.linear(x, s["dir.head.W"], s["dir.head.b"]), axis=-1)

    def amplitude_t(self, feat: T.Tensor, d_in, d_out, mat_features=None, normal=None) -> T.Tensor:
        """Eight reals per sample (M, 8); ``d_out`` may be a Tensor."""
        c, s = self.cfg, self.store
        x_in = self._const(direction_features(d_in, c.posenc_k))
        if isinstance(d_out, T.Tensor):
            x_out = _direction_features_t(d_out, c.posenc_k, self.store.dtype)
        else:
            x_out = self._const(direction_features(d_out, c.posenc_k))
        parts = [x_in, x_out, feat]
        if c.use_material:
            mf = self._const(mat_features)
            parts.append(T.relu(T.linear(mf, s["amp.mat.W"], s["amp.mat.b"])))
        if c.use_normals:
            parts.append(self._const(normal))
        h = T.concat(parts, axis=-1)
        n_fc = len(c.amp_hidden) + 1
        for i in range(n_fc):
            h = T.linear(h, s[f"amp.fc{i}.W"], s[f"amp.fc{i}.b"])
            if i < n_fc - 1:
                h = T.relu(h)
        return h

    # -- numpy inference --------------------------------------------------

    def encode(self, crops: CropSet, chunk: int = 512) -> np.ndarray:
        out = [self.encode_t(crops.take(slice(i, i + chunk))).data
               for i in range(0, len(crops), chunk)]
        return np.concatenate(out) if out else np.zeros((0, self.cfg.d_env), self.store.dtype)

    def predict_direction(self, feat, d_in, bounce=0, normal=None) -> np.ndarray:
        feat = np.atleast_2d(feat)
        d_in = np.atleast_2d(d_in)
        bounce = np.broadcast_to(np.asarray(bounce), (len(d_in),))
        out = self.direction_t(self._const(feat), d_in, bounce,
                               None if normal is None else np.atleast_2d(normal)).data
        out = out.astype(np.float64)
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def predict_amplitude(self, feat, d_in, d_out, mat_features=None, normal=None) -> np.ndarray:
        """Complex local matrices (M, 2, 2)."""
        feat = np.atleast_2d(feat)
        mf = None if mat_features is None else np.atleast_2d(mat_features)
        nr = None if normal is None else np.atleast_2d(normal)
        v = self.amplitude_t(self._const(feat), np.atleast_2d(d_in), np.atleast_2d(d_out),
                             mf, nr).data
        return amp_to_matrix(v)

    # -- files ------------------------------------------------------------

    def save(self, path) -> None:
        """Checkpoint plus a JSON sidecar holding the full configuration."""
        path = Path(path)
        nn.save_checkpoint(path, self.store, self.cfg.to_json())
        path.with_suffix(".json").write_text(
            json.dumps(self.cfg.to_json(), indent=2, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path) -> "SurrogateModel":
        store, cfg = nn.load_checkpoint(path)
        model = SurrogateModel(SurrogateConfig.from_json(cfg), store)
        ref = SurrogateModel(model.cfg)
        if set(ref.store.names()) != set(store.names()):
            raise ValueError(f"checkpoint {path} does not match its configuration")
        return model


def _direction_features_t(d: T.Tensor, K: int, dtype) -> T.Tensor:
    """Differentiable twin of :func:`direction_features`."""
    freqs = (np.pi * 2.0 ** np.arange(1, K + 1)).astype(dtype)
    M = d.shape[0]
    ang = T.mul(T.reshape(d, (M, 1, 3)), T.Tensor(freqs[:, None]))
    s = T.sin(ang)
    c = T.cos(ang)
    enc = T.reshape(T.concat([s, c], axis=-1), (M, 6 * K))
    return T.concat([enc, d], axis=-1)

