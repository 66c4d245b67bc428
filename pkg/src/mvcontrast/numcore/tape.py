"""Reverse-mode differentiation tape.

A Tape records every differentiable op executed while it is active, in
execution order. The backward pass walks the records in exact reverse
order, accumulating output-to-input gradients keyed by Array uid. One tape
belongs to one execution context (enforced per thread); parallel work must
use independent tapes.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from ..errors import ShapeError
from .array import Array

_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


class Tape:
    def __init__(self):
        # each record: (out_uid, tuple of input uids, backward fn)
        # backward fn maps d(loss)/d(out) -> tuple of d(loss)/d(input), aligned
        # with the input tuple; None entries mean "no gradient".
        self.records: list[tuple[int, tuple[int, ...], Callable]] = []

    def record(self, out: Array, inputs: tuple[Array, ...], backward: Callable) -> None:
        self.records.append((out.uid, tuple(a.uid for a in inputs), backward))

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _stack().pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def __len__(self) -> int:
        return len(self.records)


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def record_op(out: Array, inputs: tuple[Array, ...], backward: Callable) -> Array:
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward)
    return out


def backward(tape: Tape, loss: Array, store=None) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns the full gradient map (Array uid -> gradient ndarray). When a
    ParamStore is given, gradients of its trainable parameters are
    accumulated into their grad buffers; non-trainable parameters receive
    nothing (their buffers stay zero unless someone else wrote to them).
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.uid: np.ones(loss.shape, dtype=np.float64)}
    for out_uid, in_uids, back in reversed(tape.records):
        g_out = grads.get(out_uid)
        if g_out is None:
            continue
        g_inputs = back(g_out)
        for uid, g in zip(in_uids, g_inputs):
            if g is None:
                continue
            acc = grads.get(uid)
            grads[uid] = g if acc is None else acc + g
    if store is not None:
        for name in store.names():
            param = store[name]
            if not param.trainable:
                continue
            g = grads.get(param.value.uid)
            if g is not None:
                param.grad += g
    return grads


def grad_for(grads: dict[int, np.ndarray], array: Array) -> np.ndarray:
    """Gradient of the swept loss w.r.t. `array` (zeros if unreachable)."""
    g = grads.get(array.uid)
    return np.zeros(array.shape) if g is None else g
