"""Flat binary parameter checkpoints.

Layout (all integers little-endian):

    magic   5 bytes  b"SEMA1"
    version u32
    then per-tensor records until end of file:
        name_len u32, name UTF-8 bytes
        rank     u32
        dims     rank x u64
        payload  prod(dims) x f64

Tensors are written in the model's canonical parameter order, which makes the
file a byte-deterministic function of the parameter values.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from .errors import DataError

MAGIC = b"SEMA1"
VERSION = 1


def save_arrays(path, named_arrays: "OrderedDict[str, np.ndarray]") -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, arr in named_arrays.items():
            name_b = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def load_arrays(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {blob[:5]!r}")
    (version,) = struct.unpack_from("<I", blob, 5)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    off = 9
    n = len(blob)
    while off < n:
        try:
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, off) if rank else ()
            off += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(dims)
            off += 8 * count
        except (struct.error, ValueError) as e:
            raise DataError(f"{path}: truncated checkpoint record at byte {off}: {e}") from e
        out[name] = np.ascontiguousarray(arr)
    return out
