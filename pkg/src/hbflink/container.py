"""Self-describing binary container for named arrays.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"HBFCNT01"
    offset 8   8 bytes   uint64 header length H
    offset 16  H bytes   UTF-8 JSON header (keys sorted)
               ...       array payloads, concatenated in header order
    last 32    bytes     SHA-256 of every preceding byte

The JSON header has two keys: ``meta`` (free-form, JSON-serializable) and
``arrays``, a list of ``{name, dtype, shape, offset, nbytes}`` records where
``offset`` is relative to the start of the payload section and ``dtype`` is a
numpy dtype string such as ``"<f8"`` or ``"<c16"``. Arrays are stored
C-contiguous. Checkpoints and dataset dumps both use this container.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import IntegrityError

MAGIC = b"HBFCNT01"


def dumps(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    records = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder not in ("|", "<") else a.dtype
        a = a.astype(dt, copy=False)
        raw = a.tobytes()
        records.append({"name": name, "dtype": dt.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "arrays": records}, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < len(MAGIC) + 8 + 32:
        raise IntegrityError("container truncated")
    if blob[: len(MAGIC)] != MAGIC:
        raise IntegrityError("bad container magic")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("container checksum mismatch (corrupted or truncated file)")
    (hlen,) = struct.unpack("<Q", body[8:16])
    try:
        header = json.loads(body[16 : 16 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise IntegrityError("unreadable container header") from exc
    payload = body[16 + hlen :]
    arrays = {}
    for rec in header["arrays"]:
        start, n = rec["offset"], rec["nbytes"]
        if start + n > len(payload):
            raise IntegrityError(f"array {rec['name']!r} extends past end of payload")
        a = np.frombuffer(payload[start : start + n], dtype=np.dtype(rec["dtype"]))
        arrays[rec["name"]] = a.reshape(rec["shape"]).copy()
    return arrays, header["meta"]


def save(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
