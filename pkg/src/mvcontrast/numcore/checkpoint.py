"""Binary parameter checkpoints.

Layout: magic b"MVCK1", then for each parameter in store order:

    u32  name length in bytes
    ...  name, utf-8
    u32  rank
    u32  dims[rank]
    f64  values, little-endian, row-major

Entries run to end of file. Grad/velocity buffers and trainable flags are
not persisted; loading restores values into a store built by the same model
constructor.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .array import Array
from .params import ParamStore

MAGIC = b"MVCK1"


def save_params(store: ParamStore, path) -> None:
    chunks = [MAGIC]
    for name, p in store.items():
        nb = name.encode("utf-8")
        shape = p.value.shape
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", len(shape)))
        chunks.append(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
        chunks.append(np.ascontiguousarray(p.value.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def _read(buf: bytes, off: int, n: int, what: str) -> tuple[bytes, int]:
    if off + n > len(buf):
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf[off : off + n], off + n


def load_entries(path) -> dict[str, np.ndarray]:
    """Read a checkpoint into an ordered name -> ndarray mapping."""
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: expected {MAGIC!r}")
    entries: dict[str, np.ndarray] = {}
    off = len(MAGIC)
    while off < len(buf):
        raw, off = _read(buf, off, 4, "name length")
        (name_len,) = struct.unpack("<I", raw)
        raw, off = _read(buf, off, name_len, "name")
        name = raw.decode("utf-8")
        if name in entries:
            raise CheckpointError(f"duplicate parameter {name!r} in {path}")
        raw, off = _read(buf, off, 4, f"rank of {name!r}")
        (rank,) = struct.unpack("<I", raw)
        raw, off = _read(buf, off, 4 * rank, f"dims of {name!r}")
        dims = struct.unpack(f"<{rank}I", raw) if rank else ()
        count = int(np.prod(dims)) if dims else 1
        raw, off = _read(buf, off, 8 * count, f"values of {name!r}")
        entries[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    return entries


def load_params(store: ParamStore, path) -> ParamStore:
    """Restore values into an existing store; names and shapes must match."""
    entries = load_entries(path)
    missing = [n for n in store.names() if n not in entries]
    extra = [n for n in entries if n not in store]
    if missing or extra:
        raise CheckpointError(
            f"parameter names do not match checkpoint {path}: "
            f"missing {missing}, unexpected {extra}"
        )
    for name, arr in entries.items():
        if arr.shape != store[name].value.shape:
            raise CheckpointError(
                f"shape of {name!r} in {path} is {arr.shape}, "
                f"store expects {store[name].value.shape}"
            )
        store.replace_value(name, Array(arr))
    return store
