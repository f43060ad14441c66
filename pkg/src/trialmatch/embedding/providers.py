"""Text embedding providers.

Two providers share one interface. The hashing provider is a deterministic
offline stand-in for a learned encoder: it hashes unigram and bigram features
into a fixed number of signed buckets and L2-normalizes the result. The
remote provider calls an HTTP service speaking the embedding wire protocol:

    POST {endpoint}/embed
    request body:  {"model": "<id>", "texts": ["...", ...]}
    response body: {"dim": <int>, "embeddings": [[...], ...]}  (parallel to texts)

Non-2xx responses carry {"error": "<reason>"}.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from ..errors import ConfigError, EmbeddingServiceError

HASHING = "hashing"
REMOTE = "remote"


@dataclass(frozen=True)
class EmbedderConfig:
    """Which provider to use and how its vectors are shaped.

    ``provider_id`` namespaces cache keys and is sent as the model name on
    remote requests, so two differently-configured services never collide in
    one cache file. ``batch_size`` caps texts per remote request.
    """

    provider: str = HASHING
    dim: int = 768
    provider_id: str = "hash-v1"
    endpoint: str | None = None
    batch_size: int = 64
    timeout_s: float = 30.0

    def __post_init__(self) -> None:
        if self.provider not in (HASHING, REMOTE):
            raise ConfigError(f"unknown embedding provider {self.provider!r}")
        if self.dim < 1:
            raise ConfigError("embedding dim must be >= 1")
        if not self.provider_id:
            raise ConfigError("provider_id must be nonempty")
        if self.provider == REMOTE and not self.endpoint:
            raise ConfigError("remote embedding provider requires an endpoint")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def _feature_hash(feature: str) -> int:
    """Fixed 64-bit digest of a feature string (BLAKE2b, 8-byte digest)."""
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def hashing_embed(text: str, dim: int) -> np.ndarray:
    """Embed text by signed feature hashing.

    Tokens are the lowercased whitespace-delimited words. Features are the
    unigrams plus adjacent bigrams (joined by a single space). Each feature's
    64-bit hash selects a bucket (hash mod dim) and a sign (top hash bit);
    occurrence counts accumulate with that sign and the vector is then
    L2-normalized. Text with no tokens embeds to the all-zero vector.
    """
    vec = np.zeros(dim, dtype=np.float64)
    tokens = text.lower().split()
    if not tokens:
        return vec
    features = list(tokens)
    features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for feature in features:
        h = _feature_hash(feature)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def _post_embed_batch(texts: Sequence[str], cfg: EmbedderConfig, offset: int) -> list[np.ndarray]:
    url = f"{cfg.endpoint.rstrip('/')}/embed"
    where = f"texts[{offset}:{offset + len(texts)}]"
    try:
        response = requests.post(
            url,
            json={"model": cfg.provider_id, "texts": list(texts)},
            timeout=cfg.timeout_s,
        )
    except requests.RequestException as exc:
        raise EmbeddingServiceError(f"embedding request for {where} failed: {exc}") from exc
    if not 200 <= response.status_code < 300:
        try:
            reason = response.json().get("error", response.text)
        except ValueError:
            reason = response.text
        raise EmbeddingServiceError(
            f"embedding service returned {response.status_code} for {where}: {reason}"
        )
    try:
        body = response.json()
        dim = body["dim"]
        rows = body["embeddings"]
    except (ValueError, KeyError, TypeError) as exc:
        raise EmbeddingServiceError(f"malformed embedding response for {where}: {exc}") from exc
    if dim != cfg.dim:
        raise EmbeddingServiceError(
            f"embedding service dim {dim} does not match configured dim {cfg.dim} for {where}"
        )
    if len(rows) != len(texts):
        raise EmbeddingServiceError(
            f"embedding service returned {len(rows)} vectors for {len(texts)} texts at {where}"
        )
    out = []
    for i, row in enumerate(rows):
        vec = np.asarray(row, dtype=np.float64)
        if vec.shape != (cfg.dim,):
            raise EmbeddingServiceError(
                f"embedding for text index {offset + i} has length {vec.shape}, expected {cfg.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise EmbeddingServiceError(
                f"embedding for text index {offset + i} contains non-finite values"
            )
        out.append(vec)
    return out


def embed_batch(texts: Sequence[str], cfg: EmbedderConfig) -> list[np.ndarray]:
    """Embed texts in order. Remote providers send one request per
    ``cfg.batch_size`` texts; failures name the offending text range."""
    if cfg.provider == HASHING:
        return [hashing_embed(t, cfg.dim) for t in texts]
    out: list[np.ndarray] = []
    for offset in range(0, len(texts), cfg.batch_size):
        out.extend(_post_embed_batch(texts[offset : offset + cfg.batch_size], cfg, offset))
    return out


def embed_text(text: str, cfg: EmbedderConfig) -> np.ndarray:
    """Embed a single text. Returns a float64 vector of length ``cfg.dim``."""
    return embed_batch([text], cfg)[0]
