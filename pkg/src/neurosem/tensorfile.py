"""Binary tensor files.

Layout: magic ``NSEM``, version u32 = 1, dtype u8 (0 = float32,
1 = float64), ndim u8, then ndim dims as u64 and the row-major payload.
All integers and floats are little-endian.
"""

import struct

import numpy as np

from .errors import DataError

MAGIC = b"NSEM"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(fp, arr: np.ndarray) -> None:
    """Write one tensor to an open binary file object."""
    arr = np.asarray(arr)
    if arr.dtype not in _CODE_FOR:
        raise DataError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
    code = _CODE_FOR[arr.dtype]
    fp.write(struct.pack("<4sIBB", MAGIC, VERSION, code, arr.ndim))
    fp.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fp.write(np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes())


def read_tensor(fp) -> np.ndarray:
    """Read one tensor from an open binary file object."""
    head = fp.read(10)
    if len(head) != 10:
        raise DataError("truncated tensor header")
    magic, version, code, ndim = struct.unpack("<4sIBB", head)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}; expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"unsupported tensor file version {version}")
    if code not in _DTYPE_CODES:
        raise DataError(f"unknown dtype code {code}")
    dims = struct.unpack(f"<{ndim}Q", fp.read(8 * ndim))
    count = 1
    for d in dims:
        count *= d
    dtype = _DTYPE_CODES[code]
    payload = fp.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise DataError("truncated tensor payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fp:
        write_tensor(fp, arr)


def load(path) -> np.ndarray:
    with open(path, "rb") as fp:
        return read_tensor(fp)
