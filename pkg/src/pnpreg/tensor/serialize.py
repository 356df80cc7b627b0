"""PTNS1 portable tensor files.

Layout (little endian)::

    b"PTNS1" | rank:u32 | extents:u64[rank] | dtype:u8 (1=fp32, 2=fp64) | raw data
"""

import struct

import numpy as np

__all__ = ["FormatError", "encode_ptns", "decode_ptns", "save_ptns", "load_ptns"]

MAGIC = b"PTNS1"
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class FormatError(ValueError):
    """Malformed or truncated file; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode_ptns(array):
    arr = np.asarray(array)
    if arr.dtype not in _CODES:
        raise ValueError(f"PTNS1 stores fp32 or fp64, got {arr.dtype}")
    code = _CODES[arr.dtype]
    head = MAGIC + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) + struct.pack("<B", code)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode_ptns(buf, offset=0):
    """Decode one tensor starting at ``offset``; returns ``(array, next_offset)``."""
    buf = memoryview(buf)
    pos = offset
    if bytes(buf[pos:pos + 5]) != MAGIC:
        if len(buf) - pos < 5:
            raise FormatError("truncated magic", pos)
        raise FormatError("bad magic, expected PTNS1", pos)
    pos += 5
    if len(buf) - pos < 4:
        raise FormatError("truncated rank", pos)
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if rank > 32:
        raise FormatError(f"implausible rank {rank}", pos - 4)
    if len(buf) - pos < 8 * rank + 1:
        raise FormatError("truncated header", pos)
    shape = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    (code,) = struct.unpack_from("<B", buf, pos)
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", pos)
    pos += 1
    dtype = _DTYPES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buf) - pos < nbytes:
        raise FormatError(f"truncated data: need {nbytes} bytes, have {len(buf) - pos}", pos)
    arr = np.frombuffer(buf[pos:pos + nbytes], dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("="), copy=True), pos + nbytes


def save_ptns(path, array):
    with open(path, "wb") as fh:
        fh.write(encode_ptns(array))


def load_ptns(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode_ptns(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor", end)
    return arr
