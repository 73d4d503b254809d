"""
Portable tensor files.

Layout: 8-byte magic ``KVTENSOR``, one dtype byte (0 = f32, 1 = f64), one rank
byte, ``rank`` little-endian uint64 dims, then the little-endian row-major payload.
"""

import struct
from pathlib import Path

import numpy as np

from src.errors import TensorFileError
from src.tensor.tensor import Tensor

MAGIC = b"KVTENSOR"
SUFFIX = ".kvt"

_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_tensor(tensor: Tensor | np.ndarray) -> bytes:
    array = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    if array.dtype not in _CODES:
        raise TensorFileError(f"cannot encode dtype {array.dtype}")
    if array.ndim > 255:
        raise TensorFileError(f"rank {array.ndim} exceeds 255")
    code = _CODES[array.dtype]
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
    return header + payload


def decode_tensor(buffer: bytes) -> Tensor:
    if len(buffer) < 10 or buffer[:8] != MAGIC:
        raise TensorFileError("missing KVTENSOR magic")
    code, rank = struct.unpack_from("<BB", buffer, 8)
    if code not in _DTYPES:
        raise TensorFileError(f"unknown dtype code {code}")
    offset = 10 + 8 * rank
    if len(buffer) < offset:
        raise TensorFileError("truncated tensor header")
    shape = struct.unpack_from(f"<{rank}Q", buffer, 10)
    dtype = _DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buffer) - offset != expected:
        raise TensorFileError(
            f"payload is {len(buffer) - offset} bytes, expected {expected} for shape {shape}"
        )
    array = np.frombuffer(buffer, dtype=dtype, offset=offset).reshape(shape)
    return Tensor(array.astype(dtype.newbyteorder("="), copy=True))


def save_tensor(tensor: Tensor | np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_tensor(tensor))


def load_tensor(path: str | Path) -> Tensor:
    return decode_tensor(Path(path).read_bytes())
