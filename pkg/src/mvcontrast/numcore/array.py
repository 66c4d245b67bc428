"""Immutable dense float64 arrays.

Values are stored row-major (C order) as 64-bit floats. Arrays are value
types: the underlying buffer is marked read-only, so instances can be shared
across threads and captured by tape closures without copies.
"""

from __future__ import annotations

import itertools

import numpy as np

_uid_counter = itertools.count(1)


class Array:
    __slots__ = ("data", "uid")

    def __init__(self, values, shape: tuple[int, ...] | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if shape is not None:
            arr = arr.reshape(shape)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # keeps 0-d scalars 0-d
        if arr.base is not None and arr.flags.writeable:
            arr = arr.copy()  # detach writable views so the base cannot mutate us
        if arr.flags.writeable:
            arr.flags.writeable = False  # takes ownership of a passed ndarray
        self.data = arr
        self.uid = next(_uid_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Array(shape={self.shape}, uid={self.uid})"

    @staticmethod
    def zeros(shape) -> "Array":
        return Array(np.zeros(shape, dtype=np.float64))

    @staticmethod
    def full(shape, value: float) -> "Array":
        return Array(np.full(shape, value, dtype=np.float64))
