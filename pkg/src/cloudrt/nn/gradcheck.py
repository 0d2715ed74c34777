"""Central finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradReport:
    max_rel_error: float
    passed: bool
    per_input: List[float] = field(default_factory=list)


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               tol: float = 1e-4, atol: float = 1e-6) -> GradReport:
    """Compare backward gradients of scalar ``fn(*inputs)`` with central differences.

    The error per input is ``|g_bw - g_fd| / max(|g_bw|, |g_fd|, atol)`` with
    Euclidean norms over the whole input; the report keeps the largest one.
    ``atol`` keeps inputs whose true gradient vanishes (e.g. attention key
    biases) from turning rounding noise into a large ratio.
    Inputs should be float64 tensors with ``requires_grad`` set.
    """
    for x in inputs:
        x.grad = None
    out = fn(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued closure")
    out.backward()
    errs = []
    for x in inputs:
        g_bw = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        g_fd = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        gf = g_fd.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = float(fn(*inputs).data)
            flat[i] = old - eps
            fm = float(fn(*inputs).data)
            flat[i] = old
            gf[i] = (fp - fm) / (2 * eps)
        den = max(np.linalg.norm(g_bw), np.linalg.norm(g_fd), atol)
        errs.append(float(np.linalg.norm(g_bw - g_fd) / den))
    worst = max(errs) if errs else 0.0
    return GradReport(worst, worst < tol, errs)
