"""Parameter containers for model code."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import DTYPE, Tensor


def parameter(shape, rng: np.random.Generator | None = None, scale: float | None = None,
              fill: float | None = None) -> Tensor:
    """Trainable leaf tensor.

    With ``fill`` the tensor is constant; otherwise it is drawn uniformly from
    ``[-scale, scale]`` with ``scale`` defaulting to ``1/sqrt(fan_in)`` where
    fan-in is the product of all but the last dimension.
    """
    shape = tuple(int(s) for s in shape)
    if fill is not None:
        return Tensor(np.full(shape, fill, dtype=DTYPE), requires_grad=True)
    if rng is None:
        raise ValueError("random init needs an rng")
    if scale is None:
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
        scale = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


class Module:
    """Walks attributes to find parameters; subclasses just assign them.

    Attributes that are trainable tensors, modules, or lists of modules are
    discovered in attribute insertion order, giving stable dotted names.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=DTYPE)
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))
