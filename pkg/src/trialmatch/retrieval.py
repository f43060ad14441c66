"""Criteria-guided chunk retrieval.

A chunk's relevance to a trial is the sum over the trial's criteria of the
cosine similarity between the chunk vector and each criterion vector. The
top-k chunks by that score provide the patient context for the prompt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chunker import Chunk
from .corpus import CriterionKind

BY_CHUNK_ORDER = "by_chunk_order"


@dataclass(frozen=True)
class RetrievalConfig:
    """k, tie handling, and optional per-kind criterion weights.

    Ties in the summed score keep document order, meaning the order chunks
    were produced in: ascending note sequence, then ascending start offset.
    Inclusion and exclusion criteria count equally at the default weights.
    """

    k: int = 4
    tie_break: str = BY_CHUNK_ORDER
    inclusion_weight: float = 1.0
    exclusion_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tie_break != BY_CHUNK_ORDER:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float
    per_criterion_scores: tuple[float, ...]


@dataclass(frozen=True)
class RetrievalResult:
    """Top chunks in rank order. ``shortfall`` is set when fewer than k
    chunks existed to choose from."""

    selected: tuple[ScoredChunk, ...]
    shortfall: bool


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine requires equal-length vectors, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _criterion_weights(
    kinds: Sequence[CriterionKind] | None, count: int, cfg: RetrievalConfig
) -> list[float]:
    if kinds is None:
        return [1.0] * count
    if len(kinds) != count:
        raise ValueError("criterion kinds and vectors must align")
    return [
        cfg.inclusion_weight if kind is CriterionKind.INCLUSION else cfg.exclusion_weight
        for kind in kinds
    ]


def score_chunk(
    chunk_vec: np.ndarray,
    criteria_vecs: Sequence[np.ndarray],
    cfg: RetrievalConfig | None = None,
    kinds: Sequence[CriterionKind] | None = None,
) -> tuple[float, tuple[float, ...]]:
    """Score one chunk against a trial's criteria.

    Returns the summed score and the per-criterion cosines. With non-default
    weights the sum is weighted while per-criterion values stay raw.
    """
    if not len(criteria_vecs):
        raise ValueError("a trial must have at least one criterion vector")
    cfg = cfg or RetrievalConfig()
    per = tuple(cosine(chunk_vec, cv) for cv in criteria_vecs)
    weights = _criterion_weights(kinds, len(per), cfg)
    return sum(w * s for w, s in zip(weights, per)), per


def top_k(
    chunks_with_vectors: Sequence[tuple[Chunk, np.ndarray]],
    criteria_vecs: Sequence[np.ndarray],
    cfg: RetrievalConfig | None = None,
    kinds: Sequence[CriterionKind] | None = None,
) -> RetrievalResult:
    """Select the k best chunks for a trial.

    Equivalent to scoring every chunk, sorting by score descending with ties
    in input order, and truncating to k. Selection order is deterministic for
    identical inputs. Fewer than k candidates set the shortfall flag.
    """
    cfg = cfg or RetrievalConfig()
    scored = []
    for chunk, vec in chunks_with_vectors:
        score, per = score_chunk(vec, criteria_vecs, cfg, kinds)
        scored.append(ScoredChunk(chunk=chunk, score=score, per_criterion_scores=per))
    order = sorted(range(len(scored)), key=lambda i: (-scored[i].score, i))
    selected = tuple(scored[i] for i in order[: cfg.k])
    return RetrievalResult(selected=selected, shortfall=len(scored) < cfg.k)
