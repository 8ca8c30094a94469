"""Binary tensor files.

Layout: magic ``b"TNSR"``, u8 dtype code, u8 rank, ``rank`` little-endian u32
dimensions, then the raw little-endian values in row-major order.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"TNSR"

# code 2 (u8) carries vote index matrices in dataset label files
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.uint8): 2}


class TensorFormatError(ValueError):
    pass


def encode(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    try:
        code = _CODE_OF[array.dtype.newbyteorder("=")]
    except KeyError:
        raise TensorFormatError(f"unsupported dtype {array.dtype}") from None
    if array.ndim > 255:
        raise TensorFormatError("rank above 255")
    header = MAGIC + struct.pack("<BB", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()


def decode(blob: bytes) -> np.ndarray:
    if blob[:4] != MAGIC:
        raise TensorFormatError("bad magic")
    code, rank = struct.unpack_from("<BB", blob, 4)
    if code not in DTYPE_CODES:
        raise TensorFormatError(f"unknown dtype code {code}")
    dims = struct.unpack_from(f"<{rank}I", blob, 6)
    offset = 6 + 4 * rank
    dtype = DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) - offset != count * dtype.itemsize:
        raise TensorFormatError(f"payload size {len(blob) - offset} does not match shape {dims}")
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def save(path: str | os.PathLike, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(array))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())
