"""Versioned length-prefixed binary container used by all on-disk artifacts.

Layout: magic | u32 version | u64 header_len | header JSON (sorted keys,
carries a "kind" tag) | u64 n_records | n_records x (u64 len | payload).
All integers little-endian; float payloads are little-endian float64 so
files round-trip bit-exactly across platforms.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EKD1"


class FormatError(ValueError):
    """Raised on bad magic, version/kind mismatch, or a corrupted record."""


def pack_floats(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def unpack_floats(buf: bytes, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.frombuffer(buf, dtype="<f8").astype(np.float64)
    return arr.reshape(shape)


def pack_ints(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<i8").tobytes()


def unpack_ints(buf: bytes) -> np.ndarray:
    return np.frombuffer(buf, dtype="<i8").astype(np.int64)


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write-temp-then-rename so readers never observe partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode()


def write_container(path: str | Path, kind: str, version: int, header: dict,
                    records: list[bytes]) -> None:
    hdr = dict(header)
    hdr["kind"] = kind
    blob = encode_header(hdr)
    parts = [MAGIC, struct.pack("<I", version), struct.pack("<Q", len(blob)), blob,
             struct.pack("<Q", len(records))]
    for rec in records:
        parts.append(struct.pack("<Q", len(rec)))
        parts.append(rec)
    atomic_write_bytes(path, b"".join(parts))


def read_container(path: str | Path, kind: str, version: int) -> tuple[dict, list[bytes]]:
    data = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"{path}: corrupted record ({what} truncated)")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: not an EKD container")
    (got_version,) = struct.unpack("<I", take(4, "version"))
    if got_version != version:
        raise FormatError(f"{path}: version mismatch (file {got_version}, expected {version})")
    (hlen,) = struct.unpack("<Q", take(8, "header length"))
    try:
        header = json.loads(take(hlen, "header"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: corrupted record (bad header)") from e
    if header.get("kind") != kind:
        raise FormatError(f"{path}: kind mismatch (file {header.get('kind')!r}, expected {kind!r})")
    (n,) = struct.unpack("<Q", take(8, "record count"))
    records = []
    for i in range(n):
        (rlen,) = struct.unpack("<Q", take(8, f"record {i} length"))
        records.append(take(rlen, f"record {i}"))
    if off != len(data):
        raise FormatError(f"{path}: corrupted record (trailing bytes)")
    return header, records
