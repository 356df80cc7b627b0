"""PNPR1 network checkpoints.

Layout (little endian)::

    b"PNPR1" | version:u32 | kind:u8 (1=denoiser, 2=reg)
    | scales:u32 | base_channels:u32 | blocks:u32 | in_channels:u32 | out_channels:u32
    | n_params:u32 | n_params x (name_len:u16 | name:utf8 | PTNS1 block)
    | step:u64
"""

import struct

import numpy as np

from ..tensor.serialize import FormatError, decode_ptns, encode_ptns
from .networks import build_network

__all__ = ["encode_checkpoint", "decode_checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"PNPR1"
VERSION = 1
_KINDS = {"denoiser": 1, "reg": 2}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}


def encode_checkpoint(net):
    arch = net.architecture()
    out = [MAGIC, struct.pack("<IB", VERSION, _KINDS[arch["kind"]])]
    out.append(struct.pack("<5I", arch["scales"], arch["base_channels"], arch["blocks"],
                           arch["in_channels"], arch["out_channels"]))
    state = net.state_dict()
    out.append(struct.pack("<I", len(state)))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(encode_ptns(arr))
    out.append(struct.pack("<Q", int(net.step)))
    return b"".join(out)


def _need(buf, pos, n, what):
    if len(buf) - pos < n:
        raise FormatError(f"truncated {what}", pos)


def decode_checkpoint(buf):
    buf = memoryview(buf)
    _need(buf, 0, 5, "magic")
    if bytes(buf[:5]) != MAGIC:
        raise FormatError("bad magic, expected PNPR1", 0)
    pos = 5
    _need(buf, pos, 5, "version")
    version, kind = struct.unpack_from("<IB", buf, pos)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", pos)
    if kind not in _KIND_NAMES:
        raise FormatError(f"unknown network kind code {kind}", pos + 4)
    pos += 5
    _need(buf, pos, 24, "architecture descriptor")
    scales, base, blocks, cin, cout, n = struct.unpack_from("<6I", buf, pos)
    pos += 24
    state = {}
    dtype = None
    for _ in range(n):
        _need(buf, pos, 2, "parameter name length")
        (ln,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        _need(buf, pos, ln, "parameter name")
        name = bytes(buf[pos:pos + ln]).decode("utf-8")
        pos += ln
        arr, pos = decode_ptns(buf, pos)
        state[name] = arr
        dtype = arr.dtype
    _need(buf, pos, 8, "step counter")
    (step,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    if pos != len(buf):
        raise FormatError("trailing bytes after checkpoint", pos)
    arch = {"kind": _KIND_NAMES[kind], "scales": scales, "base_channels": base,
            "blocks": blocks, "in_channels": cin, "out_channels": cout}
    try:
        net = build_network(arch, dtype=dtype or np.float32)
        net.load_state_dict(state)
    except ValueError as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}", pos) from None
    net.step = step
    return net


def save_checkpoint(path, net):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(net))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
