"""Versioned binary container used by the index and collection files.

Layout: 8 magic bytes | u32 version | u32 header length | JSON header |
raw array payloads in header order | sha256 of everything before it.
Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from fusionvec.errors import IndexLoadError

_PREFIX = struct.Struct("<8sII")
_DIGEST = 32


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write(path: str | os.PathLike, magic: bytes, version: int, header: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        specs.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    head = json.dumps({**header, "arrays": specs}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(magic, version, len(head)) + head + b"".join(blobs)
    atomic_write_bytes(path, body + hashlib.sha256(body).digest())


def read(path: str | os.PathLike, magic: bytes, version: int) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IndexLoadError(f"{path}: {exc.strerror or exc}") from None
    if len(raw) < _PREFIX.size + _DIGEST:
        raise IndexLoadError(f"{path}: file too short")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    got_magic, got_version, head_len = _PREFIX.unpack_from(body)
    if got_magic != magic:
        raise IndexLoadError(f"{path}: bad magic bytes")
    if got_version != version:
        raise IndexLoadError(f"{path}: format version {got_version}, expected {version}")
    if hashlib.sha256(body).digest() != digest:
        raise IndexLoadError(f"{path}: checksum mismatch (truncated or corrupt)")
    start = _PREFIX.size
    try:
        header = json.loads(body[start : start + head_len].decode("utf-8"))
    except ValueError:
        raise IndexLoadError(f"{path}: unreadable header") from None
    offset = start + head_len
    arrays: dict[str, np.ndarray] = {}
    for spec in header.pop("arrays"):
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(body):
            raise IndexLoadError(f"{path}: payload shorter than declared")
        arrays[spec["name"]] = np.frombuffer(body, dtype=dtype, count=count, offset=offset).reshape(spec["shape"]).copy()
        offset += nbytes
    if offset != len(body):
        raise IndexLoadError(f"{path}: trailing bytes after payload")
    return header, arrays
