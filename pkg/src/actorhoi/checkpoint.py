"""Binary checkpoints for model parameters and Adam state.

Layout (all integers and floats little-endian)::

    magic      8 bytes   b"AHOICKPT"
    version    u32
    digest     32 bytes  SHA-256 of the ModelConfig (see ModelConfig.digest)
    n_arrays   u32
    step       u64
    lr, beta1, beta2, eps   4 x f64
    n_arrays x { name_len u16, name utf-8, ndim u8, dims u32 x ndim }
    parameter data, then first moments, then second moments: f64 arrays
        in registration order
    crc32      u32 over every preceding byte
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .config import ModelConfig
from .model import AdamState, Parameters

MAGIC = b"AHOICKPT"
VERSION = 1


class CheckpointError(Exception):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


def save_checkpoint(path, params: Parameters, state: AdamState, config: ModelConfig) -> None:
    names = list(params)
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        config.digest(),
        struct.pack("<I", len(names)),
        struct.pack("<Q4d", state.step, state.lr, state.beta1, state.beta2, state.eps),
    ]
    for name in names:
        raw = name.encode("utf-8")
        shape = params[name].shape
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}I", *shape))
    for group in (params, state.m, state.v):
        for name in names:
            parts.append(np.ascontiguousarray(group[name], dtype="<f8").tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, config: Optional[ModelConfig] = None) -> Tuple[Parameters, AdamState, bytes]:
    """Read a checkpoint; returns ``(params, adam_state, config_digest)``.

    When ``config`` is given its digest must match the stored one.
    """
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise UnsupportedVersionError(f"checkpoint format version {version}, expected {VERSION}")
    digest = r.take(32)
    if len(blob) < 4 or zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise CorruptCheckpointError("checksum mismatch (truncated or damaged file)")
    if config is not None and config.digest() != digest:
        raise ConfigMismatchError("checkpoint was written for a different model config")
    (n,) = r.unpack("<I")
    step, lr, b1, b2, eps = r.unpack("<Q4d")
    specs = []
    for _ in range(n):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        specs.append((name, tuple(shape)))
    groups = []
    for _ in range(3):
        group = {}
        for name, shape in specs:
            count = int(np.prod(shape, dtype=np.int64))
            data = r.take(8 * count)
            group[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
        groups.append(group)
    if r.pos != len(blob) - 4:
        raise CorruptCheckpointError("unexpected trailing bytes")
    params, m, v = groups
    return params, AdamState(m, v, step, lr, b1, b2, eps), digest
