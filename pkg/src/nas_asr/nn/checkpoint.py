"""Binary model checkpoint format.

Layout (little-endian):
    magic   b"NASM"
    version u8
    blob    u32 length + UTF-8 bytes: architecture text, newline, alphabet
    count   u32 number of parameter entries
    entry*  u32 name length, name bytes, u32 ndim, u32*ndim shape,
            float32 data in row-major order

Weights are stored float32; training happens in float64 but reloaded models
only need inference precision.
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"NASM"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed."""


def save_checkpoint(path, arch_text, alphabet, params):
    """Write architecture string, alphabet, and named weights to path."""
    if "\n" in arch_text:
        raise ValueError("architecture text must be a single line")
    blob = (arch_text + "\n" + alphabet).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=np.float32)
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path):
    """Read a checkpoint; returns (arch_text, alphabet, params dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, not a model checkpoint")
        (version,) = struct.unpack("<B", _read_exact(fh, 1, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, "header"))
        blob = _read_exact(fh, blob_len, "architecture blob").decode("utf-8")
        if "\n" not in blob:
            raise CheckpointError("architecture blob missing alphabet line")
        arch_text, alphabet = blob.split("\n", 1)
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "shape"))
            n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = _read_exact(fh, 4 * n_items, f"data for {name}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            params[name] = arr.astype(np.float64)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after last parameter")
    return arch_text, alphabet, params
