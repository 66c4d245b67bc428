"""SGD with classical momentum."""

from __future__ import annotations

import numpy as np

from ..errors import DivergenceError
from .array import Array
from .params import ParamStore


def sgd_step(store: ParamStore, lr: float, momentum: float = 0.9) -> ParamStore:
    """One update: v <- momentum*v + grad; param <- param - lr*v; grads zeroed.

    Only trainable parameters move. A non-finite gradient aborts before any
    parameter is touched, naming the offending entry.
    """
    if not lr > 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if not 0 <= momentum < 1:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    for name, p in store.items():
        if p.trainable and not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    for name, p in store.items():
        if not p.trainable:
            continue
        p.velocity *= momentum
        p.velocity += p.grad
        store.replace_value(name, Array(p.value.data - lr * p.velocity))
    store.zero_grads()
    return store
