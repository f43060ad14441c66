"""Append-only persistent embedding cache.

File layout (all integers little-endian):

    header   8 bytes   magic b"TMEMBC1\\n"
    record   repeated:
      key_len   uint32
      key       key_len bytes, UTF-8:       provider_id \\x1f dim \\x1f sha256(text)
      dim       uint32                      vector length
      values    dim float64

Records are only ever appended, so an interrupted run leaves at most one
truncated record at the tail; reopening truncates that tail and resumes.
Duplicate keys keep the first record. Readers share one in-memory index and
writes are serialized with a lock, so a single process may embed from many
threads against one open cache.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from pathlib import Path

import numpy as np

from ..errors import CacheError
from .providers import EmbedderConfig, embed_text

_MAGIC = b"TMEMBC1\n"
_U32 = struct.Struct("<I")


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def cache_key(provider_id: str, dim: int, text: str) -> str:
    """Key for one (provider, dim, text) combination."""
    return f"{provider_id}\x1f{dim}\x1f{content_hash(text)}"


class EmbeddingCache:
    """Dict-like view over the append-only cache file at ``path``.

    The file is created on first open. The whole file is scanned once at
    open; lookups afterwards are in-memory.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, np.ndarray] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            with open(self.path, "wb") as fh:
                fh.write(_MAGIC)
            return
        data = self.path.read_bytes()
        if len(data) < len(_MAGIC) or data[: len(_MAGIC)] != _MAGIC:
            raise CacheError(f"{self.path}: not an embedding cache file (bad magic)")
        pos = len(_MAGIC)
        valid_end = pos
        while pos < len(data):
            record = self._read_record(data, pos)
            if record is None:
                break  # truncated tail from an interrupted write
            key, vec, pos = record
            self._check_stored_dim(key, vec)
            self._index.setdefault(key, vec)
            valid_end = pos
        if valid_end < len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(valid_end)

    def _check_stored_dim(self, key: str, vec: np.ndarray) -> None:
        """Keys carry their dim; a mismatch with the stored values is corruption."""
        parts = key.split("\x1f")
        if len(parts) != 3:
            return
        try:
            key_dim = int(parts[1])
        except ValueError:
            return
        if key_dim != vec.shape[0]:
            raise CacheError(
                f"{self.path}: record for provider {parts[0]!r} stores {vec.shape[0]} "
                f"values but its key says {key_dim}; file is corrupt"
            )

    @staticmethod
    def _read_record(data: bytes, pos: int) -> tuple[str, np.ndarray, int] | None:
        if pos + 4 > len(data):
            return None
        (key_len,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + key_len + 4 > len(data):
            return None
        key = data[pos : pos + key_len].decode("utf-8")
        pos += key_len
        (dim,) = _U32.unpack_from(data, pos)
        pos += 4
        end = pos + dim * 8
        if end > len(data):
            return None
        vec = np.frombuffer(data[pos:end], dtype="<f8").astype(np.float64)
        return key, vec, end

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def get(self, key: str) -> np.ndarray | None:
        vec = self._index.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: str, vec: np.ndarray) -> None:
        """Append one record. A key already present is left untouched."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1:
            raise CacheError("cache values must be 1-dimensional vectors")
        with self._lock:
            if key in self._index:
                return
            key_bytes = key.encode("utf-8")
            payload = (
                _U32.pack(len(key_bytes))
                + key_bytes
                + _U32.pack(vec.shape[0])
                + vec.astype("<f8").tobytes()
            )
            with open(self.path, "ab") as fh:
                fh.write(payload)
            self._index[key] = vec


def cache_get_or_embed(text: str, cfg: EmbedderConfig, cache: EmbeddingCache) -> np.ndarray:
    """Return the cached vector for ``text``, embedding and storing on a miss.

    A hit whose stored length disagrees with ``cfg.dim`` means the file was
    written by a different configuration under the same provider_id and is
    reported as corruption.
    """
    key = cache_key(cfg.provider_id, cfg.dim, text)
    hit = cache.get(key)
    if hit is not None:
        if hit.shape[0] != cfg.dim:
            raise CacheError(
                f"cache entry for provider {cfg.provider_id!r} has dim {hit.shape[0]}, "
                f"config expects {cfg.dim}"
            )
        return hit
    vec = embed_text(text, cfg)
    cache.put(key, vec)
    return vec
