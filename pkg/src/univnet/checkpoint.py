"""UVC1 checkpoint files.

Layout (little-endian)::

    b"UVC1" | u32 version | u64 step | u32 meta_len | meta (UTF-8 JSON)
    | u32 n | n x tensor                       # weights and norm stats
    | u32 n | n x tensor                       # optimizer moments

    tensor := u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data

The metadata block carries configs, parameter counts and Adam step counts.
"""

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from univnet.errors import FormatError

MAGIC = b"UVC1"
VERSION = 1


@dataclass
class Checkpoint:
    step: int
    meta: dict
    tensors: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)

    def group(self, prefix):
        """Tensors whose names start with ``prefix + '.'``, with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def _write_tensors(buf, tensors):
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(value, dtype="<f4", order="C")  # keeps 0-d shape
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated checkpoint")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensors(self):
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            (name_len,) = self.unpack("<H")
            name = self.take(name_len).decode("utf-8")
            (ndim,) = self.unpack("<B")
            dims = self.unpack(f"<{ndim}I") if ndim else ()
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(self.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
            out[name] = data
        return out


def save_checkpoint(path, ckpt):
    buf = io.BytesIO()
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<IQI", VERSION, ckpt.step, len(meta)))
    buf.write(meta)
    _write_tensors(buf, ckpt.tensors)
    _write_tensors(buf, ckpt.optimizer)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Parse a whole UVC1 file; raises :class:`FormatError` before returning any partial state."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a UVC1 checkpoint")
    version, step, meta_len = r.unpack("<IQI")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt metadata") from exc
    tensors = r.tensors()
    optimizer = r.tensors()
    if r.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return Checkpoint(step, meta, tensors, optimizer)
