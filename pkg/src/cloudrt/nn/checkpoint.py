"""Versioned named-tensor checkpoint files (npz container)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .optim import ParamStore

CHECKPOINT_VERSION = 1


def _content_hash(arrays: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k]).tobytes())
    return h.hexdigest()


def save_checkpoint(path, store: ParamStore, config: dict) -> None:
    """Parameters, Adam state, config and a content hash in one file."""
    arrays = {}
    for k, p in store.params.items():
        arrays[f"param/{k}"] = p.data
        arrays[f"m/{k}"] = store.m[k]
        arrays[f"v/{k}"] = store.v[k]
    cfg_json = json.dumps(config, sort_keys=True, default=str)
    header = {"version": CHECKPOINT_VERSION, "step": store.step, "dtype": str(store.dtype),
              "names": list(store.params), "config": cfg_json,
              "config_hash": hashlib.sha256(cfg_json.encode()).hexdigest()[:16],
              "content_hash": _content_hash(arrays)}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path):
    """Return ``(store, config)``; raises ValueError on version or integrity mismatch."""
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            header = json.loads(str(z["__header__"]))
            arrays = {k: z[k] for k in z.files if k != "__header__"}
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    if _content_hash(arrays) != header["content_hash"]:
        raise ValueError(f"checkpoint {path} failed its integrity check")
    store = ParamStore(header["dtype"])
    for k in header["names"]:
        store.add(k, arrays[f"param/{k}"])
        store.m[k] = arrays[f"m/{k}"]
        store.v[k] = arrays[f"v/{k}"]
    store.step = int(header["step"])
    return store, json.loads(header["config"])
