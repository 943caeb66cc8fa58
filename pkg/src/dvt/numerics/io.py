"""Binary tensor container (.dvt-ten).

Layout, all little-endian:
  magic "DVTT" | u32 version=1 | u8 dtype (0=f32, 1=f64) | u8 ndim |
  ndim x u32 extents | payload, row-major.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"DVTT"
VERSION = 1
_DTYPE_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class FormatError(ValueError):
    """Malformed container, with the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_tensor(fh, array) -> None:
    data = array.data if isinstance(array, Tensor) else np.asarray(array)
    code = _DTYPE_CODE.get(data.dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {data.dtype}; use float32 or float64")
    if data.ndim > 255:
        raise ValueError("too many dimensions")
    fh.write(MAGIC)
    fh.write(struct.pack("<IBB", VERSION, code, data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
    fh.write(np.ascontiguousarray(data, dtype=_CODE_DTYPE[code]).tobytes())


def read_tensor(fh) -> np.ndarray:
    base = fh.tell()
    magic = fh.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", base)
    header = fh.read(6)
    if len(header) != 6:
        raise FormatError("truncated header", base + 4)
    version, code, ndim = struct.unpack("<IBB", header)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", base + 4)
    if code not in _CODE_DTYPE:
        raise FormatError(f"unknown dtype code {code}", base + 8)
    raw_shape = fh.read(4 * ndim)
    if len(raw_shape) != 4 * ndim:
        raise FormatError("truncated shape", base + 10)
    shape = struct.unpack(f"<{ndim}I", raw_shape)
    dtype = _CODE_DTYPE[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    payload = fh.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise FormatError("truncated payload", base + 10 + 4 * ndim)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_tensor(path, array) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
