"""Binary checkpoint format for named parameters.

Layout: magic bytes ``DIVA``, a little-endian uint32 format version,
then one record per parameter until end of file.  Each record is
uint32 name length, UTF-8 name, uint32 rank, uint64 extents, and the
row-major float64 payload, all little-endian.  Records are written in
sorted name order so identical parameters produce identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .tensor import Parameter

MAGIC = b"DIVA"
VERSION = 1


def save_checkpoint(path: str | Path, params: Iterable[Parameter]) -> None:
    records = sorted(params, key=lambda p: p.name)
    names = [p.name for p in records]
    if len(set(names)) != len(names):
        raise DataError("duplicate parameter names in checkpoint")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for p in records:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", p.data.ndim))
            for extent in p.data.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic bytes)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    off = 8
    while off < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, off) if rank else ()
            off += 8 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
            off += 8 * count
        except (struct.error, ValueError) as exc:
            raise DataError(f"{path}: truncated checkpoint record") from exc
        if name in tensors:
            raise DataError(f"{path}: duplicate parameter {name!r}")
        tensors[name] = payload.reshape(shape).astype(np.float64)
    return tensors


def load_into(path: str | Path, params: Iterable[Parameter]) -> None:
    """Load a checkpoint into an existing parameter set, validating shapes."""
    tensors = load_checkpoint(path)
    params = list(params)
    for p in params:
        if p.name not in tensors:
            raise DataError(f"checkpoint is missing tensor {p.name!r}")
        stored = tensors[p.name]
        if stored.shape != p.data.shape:
            raise DataError(
                f"checkpoint tensor {p.name!r} has shape {stored.shape}, "
                f"configured architecture expects {p.data.shape}")
        p.data[...] = stored
    extra = set(tensors) - {p.name for p in params}
    if extra:
        raise DataError(f"checkpoint contains unexpected tensors: {sorted(extra)}")
