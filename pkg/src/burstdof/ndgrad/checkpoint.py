"""Versioned binary checkpoint format for named parameter sets.

Layout: 4-byte magic "NDG1", then per parameter, in write order:
  u32 name length, UTF-8 name bytes, u32 shape rank, u32 dims, f32 values.
All integers and floats are little-endian. The file ends after the last
parameter (no trailer).
"""

from __future__ import annotations

import os
import struct
from collections.abc import Mapping

import numpy as np

from .engine import Tensor

MAGIC = b"NDG1"


def save_checkpoint(params: Mapping[str, "Tensor | np.ndarray"], path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, p in params.items():
            values = p.data if isinstance(p, Tensor) else np.asarray(p)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", values.ndim))
            f.write(struct.pack(f"<{values.ndim}I", *values.shape))
            f.write(values.astype("<f4").tobytes())


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a checkpoint back as {name: float32 array}, in file order."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not an NDG1 checkpoint")
        params: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                return params
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(f.read(count * 4), dtype="<f4")
            if data.size != count:
                raise ValueError(f"{path}: truncated values for parameter {name!r}")
            params[name] = data.reshape(shape).astype(np.float32)
