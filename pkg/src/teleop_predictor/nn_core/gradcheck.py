from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest relative error between backprop and central differences.

    ``loss_fn`` must be a deterministic, argument-free function returning a
    scalar tensor computed from ``params``. With ``max_coords`` each parameter
    is checked on a random subsample of that many coordinates (at least 64).
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)  # view: writes perturb p in place
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max(64, max_coords):
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max(64, max_coords), replace=False)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn().item()
            flat[j] = orig - eps
            down = loss_fn().item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_error(float(grad.reshape(-1)[j]), numeric))
    for p in params:
        p.grad = None
    return worst
