"""Named parameters, Adam moments and the update rule."""

from __future__ import annotations

from typing import Dict, Iterable, Optional

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered named parameters with Adam first/second moment buffers."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: Dict[str, Tensor] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def add_linear(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator,
                   bias: bool = True):
        """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        bound = 1.0 / np.sqrt(fan_in)
        W = self.add(f"{name}.W", rng.uniform(-bound, bound, (fan_in, fan_out)))
        b = self.add(f"{name}.b", rng.uniform(-bound, bound, fan_out)) if bias else None
        return W, b

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> Iterable[str]:
        return self.params.keys()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype) -> "ParamStore":
        """Copy with every parameter and moment cast to ``dtype``."""
        out = ParamStore(dtype)
        for k, p in self.params.items():
            out.add(k, p.data)
            out.m[k] = self.m[k].astype(dtype)
            out.v[k] = self.v[k].astype(dtype)
        out.step = self.step
        return out

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k].data).tobytes())
        return h.hexdigest()

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              weight_decay: float = 0.0, eps: float = 1e-8,
              names: Optional[Iterable[str]] = None) -> ParamStore:
    """Bias-corrected Adam with optional decoupled weight decay.

    Every selected parameter must carry a gradient. ``weight_decay`` shrinks
    parameters by ``lr * weight_decay`` per step, independent of the moments.
    """
    names = list(store.names() if names is None else names)
    missing = [n for n in names if store.params[n].grad is None]
    if missing:
        raise ValueError(f"missing gradients for {missing[:3]}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for n in names:
        p = store.params[n]
        g = p.grad
        m = store.m[n]
        v = store.v[n]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        upd = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        p.data -= upd.astype(p.data.dtype)
    return store
