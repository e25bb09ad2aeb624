"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingGradError
from .tensor import Tensor


@dataclass
class Param:
    tensor: Tensor
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    step: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.tensor.data)
        if self.v is None:
            self.v = np.zeros_like(self.tensor.data)


def adam_step(params: list[Param], lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> list[Param]:
    """One in-place Adam update of every param; returns ``params``."""
    for p in params:
        if p.tensor.grad is None:
            raise MissingGradError(f"no gradient for {p.tensor!r}")
    for p in params:
        g = p.tensor.grad
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.tensor.data = p.tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


class Adam:
    def __init__(self, tensors: list[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [Param(t) for t in tensors]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None
