"""Binary checkpoint format.

    magic    4 bytes  b"AQAC"
    version  u32 LE
    count    u32 LE
    per entry:
        name length u32 LE, UTF-8 name,
        rank u32 LE, rank x dim u64 LE,
        values f32 LE (row-major)

Values are stored at 32-bit precision, so a save -> load -> save cycle is
byte-identical.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError

MAGIC = b"AQAC"
VERSION = 1


def encode_checkpoint(params: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    pos = 0

    def read(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"{source}: truncated checkpoint (need {n} bytes at offset {pos})")
        out = buf[pos:pos + n]
        pos += n
        return out

    if read(4) != MAGIC:
        raise FormatError(f"{source}: bad magic, not a checkpoint")
    version, count = struct.unpack("<II", read(8))
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", read(4))
        try:
            name = read(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{source}: parameter name is not UTF-8") from e
        if name in params:
            raise FormatError(f"{source}: duplicate parameter {name!r}")
        (rank,) = struct.unpack("<I", read(4))
        dims = struct.unpack(f"<{rank}Q", read(8 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        params[name] = np.frombuffer(read(4 * size), dtype="<f4").reshape(dims).copy()
    if pos != len(buf):
        raise FormatError(f"{source}: {len(buf) - pos} trailing bytes after {count} entries")
    return params


def save_checkpoint(params: dict[str, np.ndarray], path) -> None:
    Path(path).write_bytes(encode_checkpoint(params))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(buf, str(path))


def assign(model_params: dict, loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded values into model tensors; names and shapes must match exactly."""
    unknown = sorted(set(loaded) - set(model_params))
    if unknown:
        raise ContractError(f"checkpoint parameter(s) not in model: {', '.join(unknown)}")
    missing = sorted(set(model_params) - set(loaded))
    if missing:
        raise ContractError(f"model parameter(s) missing from checkpoint: {', '.join(missing)}")
    for name, arr in loaded.items():
        t = model_params[name]
        if t.shape != arr.shape:
            raise ContractError(f"shape mismatch for {name}: checkpoint {arr.shape} vs model {t.shape}")
        t.data[...] = arr.astype(np.float64)
