"""Binary checkpoint format for named float64 parameters.

Layout: the 4-byte magic ``HGT1`` followed by entries until end of file.  Each
entry is ``u32 name_len | utf-8 name | u32 rank | u32 extent * rank | f64 data``
with all integers and floats little-endian and data in row-major order.
"""

from __future__ import annotations

import os
import struct
from typing import Dict, Mapping, Union

import numpy as np

from .exceptions import DataFormatError
from .tensor import Tensor

MAGIC = b"HGT1"


def save_checkpoint(path: Union[str, os.PathLike], params: Mapping[str, Union[Tensor, np.ndarray]]) -> None:
    chunks = [MAGIC]
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path: Union[str, os.PathLike]) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError(f"{path}: missing HGT1 magic header")
    out: Dict[str, np.ndarray] = {}
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataFormatError(f"{path}: truncated entry at byte {pos}")
        piece = blob[pos : pos + n]
        pos += n
        return piece

    while pos < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        out[name] = data.reshape(shape)
    return out
