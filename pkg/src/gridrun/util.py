"""Small shared helpers: canonical JSON, stable hashing, atomic file writes."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path


def canonical_json(obj) -> str:
    """Serialize to JSON with sorted keys and no whitespace.

    The output is byte-stable across processes and machines, which makes it
    suitable as hash input.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_hash(obj, hex_digits: int = 16) -> str:
    """Stable content hash of a JSON-serializable object, rendered as hex.

    16 hex digits = 64 bits, short enough for file names while keeping the
    collision probability negligible for sweep-sized sets.
    """
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:hex_digits]


def stable_seed(*parts) -> int:
    """Derive a u64 seed from arbitrary parts, stable across processes.

    Python's built-in hash() is salted per process, so seeds that must be
    reproducible (run seeds, dataset seeds) go through sha256 instead.
    """
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write a file via a temp sibling and rename, so readers never see
    a partially written file."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = path.with_name(path.name + ".tmp." + str(os.getpid()))
    with open(tmp, mode) as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
