"""Binary checkpoint format for named parameter tensors.

Layout (all integers little-endian):
    magic "DOAC" | version u32 | entry count u32 | entries...
    entry: name length u32 | name bytes UTF-8 | rank u32 | dims u32 * rank
           | dtype tag u8 (0 = float32, 1 = float64) | payload
Round trips are bit-exact; malformed files raise FormatError with the byte
offset of the problem.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import ContractError, FormatError, ShapeError
from ..models import ConvNetSpec, ModelParams, expected_shapes

MAGIC = b"DOAC"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(params, path):
    """Write a ModelParams (or plain name->array dict) to ``path``."""
    tensors = params.tensors if isinstance(params, ModelParams) else params
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_TAGS:
            raise ContractError(f"{name}: only float32/float64 tensors, got {arr.dtype}")
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(struct.pack("<B", _DTYPE_TAGS[arr.dtype]))
        little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        chunks.append(np.ascontiguousarray(little).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if len(self.data) - self.pos < n:
            raise FormatError(f"{self.path}: truncated while reading {what}",
                              offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def load_checkpoint(path, spec: ConvNetSpec | None = None) -> ModelParams:
    """Read a checkpoint; with ``spec`` given, names and dims are validated
    against the architecture."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic", offset=0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    count = r.u32("entry count")
    tensors = {}
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        name_off = r.pos
        try:
            name = r.take(name_len, f"entry {i} name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: entry {i} name is not UTF-8",
                              offset=name_off) from None
        if name in tensors:
            raise FormatError(f"{path}: duplicate entry name {name!r}", offset=name_off)
        rank = r.u32(f"{name} rank")
        if rank > 8:
            raise FormatError(f"{path}: implausible rank {rank} for {name}",
                              offset=r.pos - 4)
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"{name} dims"))
        tag_off = r.pos
        tag = r.u8(f"{name} dtype tag")
        if tag not in _TAG_DTYPES:
            raise FormatError(f"{path}: unknown dtype tag {tag} for {name}",
                              offset=tag_off)
        dtype = _TAG_DTYPES[tag]
        n_elem = 1
        for d in dims:
            n_elem *= d
        payload = r.take(n_elem * dtype.itemsize, f"{name} payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
        tensors[name] = arr.astype(arr.dtype.newbyteorder("="))
    if r.pos != len(data):
        raise FormatError(f"{path}: {len(data) - r.pos} trailing bytes", offset=r.pos)
    params = ModelParams(spec, tensors)
    if spec is not None:
        expect = expected_shapes(spec)
        if list(tensors) != list(expect):
            raise ShapeError(f"{path}: entries {list(tensors)} do not match "
                             f"the expected architecture {list(expect)}")
        for name, shape in expect.items():
            if tensors[name].shape != shape:
                raise ShapeError(f"{path}: {name} has dims {tensors[name].shape}, "
                                 f"architecture requires {shape}")
    return params
