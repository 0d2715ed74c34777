"""Pre-norm transformer encoder block."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .optim import ParamStore


def init_attention_block(store: ParamStore, prefix: str, dim: int, rng: np.random.Generator,
                         ffn_dim: int = None) -> dict:
    ffn_dim = ffn_dim or 2 * dim
    p = {}
    for nm in ("q", "k", "v", "o"):
        p[f"W{nm}"], p[f"b{nm}"] = store.add_linear(f"{prefix}.{nm}", dim, dim, rng)
    p["W1"], p["b1"] = store.add_linear(f"{prefix}.ffn1", dim, ffn_dim, rng)
    p["W2"], p["b2"] = store.add_linear(f"{prefix}.ffn2", ffn_dim, dim, rng)
    for ln in ("ln1", "ln2"):
        p[f"{ln}_g"] = store.add(f"{prefix}.{ln}.g", np.ones(dim))
        p[f"{ln}_b"] = store.add(f"{prefix}.{ln}.b", np.zeros(dim))
    return p


def multi_head_attention(x: T.Tensor, params: dict, n_heads: int) -> T.Tensor:
    """One pre-norm encoder layer on ``x`` of shape (B, L, D).

    ``h = x + MHA(LN(x))`` followed by ``out = h + FFN(LN(h))``.
    """
    B, L, D = x.shape
    if D % n_heads:
        raise ValueError(f"feature dim {D} not divisible by {n_heads} heads")
    dh = D // n_heads
    z = T.layer_norm(x, params["ln1_g"], params["ln1_b"])

    def heads(W, b):
        y = T.linear(z, params[W], params[b])
        return T.transpose(T.reshape(y, (B, L, n_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads("Wq", "bq"), heads("Wk", "bk"), heads("Wv", "bv")
    att = T.softmax(T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh)), -1)
    ctx = T.reshape(T.transpose(T.matmul(att, v), (0, 2, 1, 3)), (B, L, D))
    h = T.add(x, T.linear(ctx, params["Wo"], params["bo"]))
    z2 = T.layer_norm(h, params["ln2_g"], params["ln2_b"])
    f = T.linear(T.relu(T.linear(z2, params["W1"], params["b1"])), params["W2"], params["b2"])
    return T.add(h, f)
