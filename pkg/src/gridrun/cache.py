"""Size-bounded blob cache shared by worker processes.

One root directory holds an index file, a lock file and a blobs/
subdirectory.  Workers from different processes serialize index access
through the lock file; blobs are written atomically.  Eviction is LRU on
a monotonic use counter kept in the index, so behaviour is deterministic
and independent of wall-clock resolution.
"""

from __future__ import annotations

import fcntl
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Callable

from .errors import GridrunError
from .util import atomic_write

log = logging.getLogger(__name__)

INDEX_NAME = "index.json"
LOCK_NAME = "lock"
BLOB_DIR = "blobs"


class CacheError(GridrunError):
    pass


class BlobTooLarge(CacheError):
    pass


class BlobCache:
    def __init__(self, root: str | Path, max_bytes: int):
        if max_bytes < 0:
            raise CacheError("cache size must be >= 0")
        self.root = Path(root)
        self.max_bytes = max_bytes
        self.blob_dir = self.root / BLOB_DIR
        self.root.mkdir(parents=True, exist_ok=True)
        self.blob_dir.mkdir(exist_ok=True)
        # instrumentation: how many times the builder actually ran
        self.build_count = 0

    @contextmanager
    def _locked(self):
        lock_path = self.root / LOCK_NAME
        with open(lock_path, "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def _read_index(self) -> dict:
        path = self.root / INDEX_NAME
        if not path.exists():
            return {"counter": 0, "entries": {}}
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError:
            log.warning("cache index unreadable, resetting: %s", path)
            return {"counter": 0, "entries": {}}

    def _write_index(self, index: dict) -> None:
        atomic_write(self.root / INDEX_NAME, json.dumps(index))

    def _blob_path(self, key: str) -> Path:
        return self.blob_dir / f"{key}.blob"

    def _evict(self, index: dict) -> None:
        entries = index["entries"]
        total = sum(e["size"] for e in entries.values())
        while total > self.max_bytes and entries:
            oldest = min(entries, key=lambda k: entries[k]["last_used"])
            total -= entries[oldest]["size"]
            entries.pop(oldest)
            try:
                self._blob_path(oldest).unlink()
            except FileNotFoundError:
                pass

    def fetch_or_build(self, key: str, builder: Callable[[], bytes]) -> Path:
        """Return the blob path for `key`, building and storing on a miss.

        A blob larger than the whole cache bypasses storage: the bytes are
        still produced and written to a `.bypass` file next to the blobs
        (so the caller gets a path), but the cache index is not charged.
        """
        with self._locked():
            index = self._read_index()
            entry = index["entries"].get(key)
            path = self._blob_path(key)
            if entry is not None and path.exists():
                index["counter"] += 1
                entry["last_used"] = index["counter"]
                self._write_index(index)
                return path

        blob = builder()
        self.build_count += 1
        if len(blob) > self.max_bytes:
            if self.max_bytes > 0:
                log.warning(
                    "blob %s (%d bytes) exceeds cache size %d, bypassing cache",
                    key, len(blob), self.max_bytes,
                )
            bypass = self.blob_dir / f"{key}.bypass"
            atomic_write(bypass, blob)
            return bypass

        with self._locked():
            index = self._read_index()
            atomic_write(path, blob)
            index["counter"] += 1
            index["entries"][key] = {"size": len(blob), "last_used": index["counter"]}
            self._evict(index)
            self._write_index(index)
        return path

    def total_size(self) -> int:
        with self._locked():
            index = self._read_index()
            return sum(e["size"] for e in index["entries"].values())

    def keys(self) -> list[str]:
        with self._locked():
            return sorted(self._read_index()["entries"].keys())
