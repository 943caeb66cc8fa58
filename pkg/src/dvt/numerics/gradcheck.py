"""Central finite-difference verification of hand-written adjoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    failures: list = field(default_factory=list)  # (arg_index, flat_index, analytic, numeric)
    checked: int = 0

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(f, xs, step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f(*xs)`` against central differences.

    Inputs must be float64 tensors; float32 rounding would swamp the
    O(step^2) truncation error this check relies on.
    """
    if isinstance(xs, Tensor):
        xs = [xs]
    xs = list(xs)
    for x in xs:
        if x.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        x.zero_grad()

    out = f(*xs)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar objective; got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]

    report = GradCheckReport(max_rel_err=0.0)
    for i, x in enumerate(xs):
        flat = x.data.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            hi = float(f(*xs).data)
            flat[j] = keep - step
            lo = float(f(*xs).data)
            flat[j] = keep
            numeric = (hi - lo) / (2.0 * step)
            a = float(analytic[i].reshape(-1)[j])
            err = _rel_err(a, numeric)
            report.checked += 1
            if err > report.max_rel_err:
                report.max_rel_err = err
            if err >= tol:
                report.failures.append((i, j, a, numeric))
    return report
