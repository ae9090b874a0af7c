"""``.b2dw`` little-endian tensor container, used for weights and image datasets.

Layout: magic ``B2DW``, u16 version (1), u32 entry count, then per entry a
u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u8 rank,
rank x u32 dims and the raw row-major data.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"B2DW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
OPTIM_PREFIX = "optim/"


class ContainerError(ValueError):
    pass


def encode_tensors(tensors) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise ContainerError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ContainerError(f"tensor name too long: {name[:40]}...")
        code = _CODES[arr.dtype]
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def decode_tensors(buf: bytes) -> dict:
    view = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise ContainerError(f"truncated container while reading {what}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise ContainerError("bad magic: not a B2DW container")
    version, count = struct.unpack("<HI", take(6, "header"))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    out = {}
    for i in range(count):
        (nlen,) = struct.unpack("<H", take(2, f"entry {i} name length"))
        name = bytes(take(nlen, f"entry {i} name")).decode("utf-8")
        code, rank = struct.unpack("<BB", take(2, f"{name} header"))
        if code not in _DTYPES:
            raise ContainerError(f"{name}: unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        dtype = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        data = np.frombuffer(take(nbytes, f"{name} data"), dtype=dtype).reshape(dims)
        out[name] = data.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise ContainerError(f"{len(view) - pos} trailing bytes after last entry")
    return out


def write_tensors(path, tensors) -> None:
    Path(path).write_bytes(encode_tensors(tensors))


def read_tensors(path) -> dict:
    return decode_tensors(Path(path).read_bytes())


def save_weights(model, path, optimizer=None) -> None:
    tensors = dict(model.state())
    if optimizer is not None:
        tensors.update({OPTIM_PREFIX + k: v for k, v in optimizer.state().items()})
    write_tensors(path, tensors)


def load_weights(model, path, optimizer=None):
    """Fill ``model`` (and optionally ``optimizer``) from ``path``.

    The file is fully decoded and checked against the model before anything
    is assigned, so a failed load leaves the model untouched.
    """
    tensors = read_tensors(path)
    try:
        model.load_state(tensors)
    except (KeyError, ValueError) as exc:
        raise ContainerError(str(exc).strip("'\"")) from None
    if optimizer is not None:
        optimizer.load_state(
            {k[len(OPTIM_PREFIX):]: v for k, v in tensors.items() if k.startswith(OPTIM_PREFIX)}
        )
    return model
