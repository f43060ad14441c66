"""Embedding providers, the persistent cache, and the wire-protocol tooling."""

from .cache import EmbeddingCache, cache_get_or_embed, cache_key, content_hash
from .contract import check_wire_contract
from .providers import (
    HASHING,
    REMOTE,
    EmbedderConfig,
    embed_batch,
    embed_text,
    hashing_embed,
)
from .stub import StubEmbeddingServer

__all__ = [
    "HASHING",
    "REMOTE",
    "EmbedderConfig",
    "EmbeddingCache",
    "StubEmbeddingServer",
    "cache_get_or_embed",
    "cache_key",
    "check_wire_contract",
    "content_hash",
    "embed_batch",
    "embed_text",
    "hashing_embed",
]
