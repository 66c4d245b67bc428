"""Named trainable parameters with gradient and momentum buffers."""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ShapeError
from .array import Array


class Param:
    """One named tensor: immutable value plus mutable grad/velocity buffers."""

    __slots__ = ("value", "grad", "velocity", "trainable")

    def __init__(self, value: Array, trainable: bool = True):
        self.value = value
        self.grad = np.zeros(value.shape, dtype=np.float64)
        self.velocity = np.zeros(value.shape, dtype=np.float64)
        self.trainable = bool(trainable)


class ParamStore:
    """Insertion-ordered mapping name -> Param with unique names."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value, trainable: bool = True) -> Param:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        if not isinstance(value, Array):
            value = Array(value)
        p = Param(value, trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def value(self, name: str) -> Array:
        return self._params[name].value

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def replace_value(self, name: str, value) -> None:
        """Swap in a new value Array of the same shape; buffers are kept."""
        p = self._params[name]
        if not isinstance(value, Array):
            value = Array(value)
        if value.shape != p.value.shape:
            raise ShapeError(
                f"parameter {name!r} has shape {p.value.shape}, got {value.shape}"
            )
        p.value = value

    def set_trainable(self, name: str, flag: bool) -> None:
        self._params[name].trainable = bool(flag)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def num_scalars(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def digest(self) -> str:
        """sha256 over names, shapes, and exact value bytes (order-sensitive)."""
        h = hashlib.sha256()
        for name, p in self._params.items():
            h.update(name.encode("utf-8"))
            h.update(repr(p.value.shape).encode("ascii"))
            h.update(np.ascontiguousarray(p.value.data, dtype="<f8").tobytes())
        return h.hexdigest()
