"""Central finite-difference gradient oracle.

Used by the test suite to validate every differentiable op: build a scalar
loss from a set of leaf tensors, compare analytic grads against
(f(x+h) - f(x-h)) / 2h elementwise.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_error(build, leaves: list[Tensor], step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    `build(leaves) -> scalar Tensor` must be a pure function of leaves' data.
    """
    loss = build(leaves)
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in leaves]
    worst = 0.0
    for p, g in zip(leaves, analytic):
        if g is None:
            continue
        fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = build(leaves).item()
            flat[i] = keep - step
            down = build(leaves).item()
            flat[i] = keep
            fd_flat[i] = (up - down) / (2.0 * step)
        scale = max(float(np.abs(fd).max(initial=0.0)), float(np.abs(g).max(initial=0.0)), 1e-8)
        worst = max(worst, float(np.abs(g - fd).max(initial=0.0)) / scale)
    return worst
