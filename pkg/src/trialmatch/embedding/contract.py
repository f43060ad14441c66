"""Wire-protocol conformance checks for embedding services.

Any service claiming the protocol must pass ``check_wire_contract``. The
checks are transport-agnostic: the caller supplies a function that performs
one POST to /embed and returns the status code with the decoded JSON body,
so the same suite runs against an HTTP server or an in-process test client.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

PostEmbed = Callable[[dict], tuple[int, dict]]

_SAMPLE_TEXTS = [
    "patient denies chest pain or shortness of breath",
    "hemoglobin a1c measured at 8.2 percent last month",
    "no history of substance use disorder documented",
]


def _call(post_embed: PostEmbed, model: str, texts: Sequence[str]) -> tuple[int, dict]:
    status, body = post_embed({"model": model, "texts": list(texts)})
    if not isinstance(body, dict):
        raise AssertionError(f"response body must be a JSON object, got {type(body).__name__}")
    return status, body


def _expect_rows(body: dict, count: int, dim: int) -> list[list[float]]:
    assert body.get("dim") == dim, f"response dim {body.get('dim')!r} != expected {dim}"
    rows = body.get("embeddings")
    assert isinstance(rows, list), "response is missing the embeddings list"
    assert len(rows) == count, f"{len(rows)} embeddings returned for {count} texts"
    for i, row in enumerate(rows):
        assert isinstance(row, list) and len(row) == dim, (
            f"embedding {i} has length {len(row) if isinstance(row, list) else 'n/a'}, expected {dim}"
        )
        assert all(isinstance(v, (int, float)) and math.isfinite(v) for v in row), (
            f"embedding {i} contains non-numeric or non-finite values"
        )
    return rows


def check_wire_contract(
    post_embed: PostEmbed,
    *,
    model: str,
    dim: int,
    max_batch: int,
    norm_tolerance: float | None = None,
) -> None:
    """Assert protocol conformance of an embedding service.

    Checks, in order: empty batch, row count and dim on a small batch,
    determinism for repeated texts, row order matching text order, rejection
    of an oversize batch with the limit named in the error, and (when
    ``norm_tolerance`` is given) unit Euclidean norms.

    Raises AssertionError describing the first violated check.
    """
    # Empty batch is answered, not rejected.
    status, body = _call(post_embed, model, [])
    assert 200 <= status < 300, f"empty batch rejected with status {status}"
    _expect_rows(body, 0, dim)

    # Batch shape, determinism for identical texts.
    texts = [_SAMPLE_TEXTS[0], _SAMPLE_TEXTS[1], _SAMPLE_TEXTS[0]]
    status, body = _call(post_embed, model, texts)
    assert 200 <= status < 300, f"embed call failed with status {status}"
    rows = _expect_rows(body, 3, dim)
    assert rows[0] == rows[2], "identical texts in one batch produced different vectors"
    assert rows[0] != rows[1], "distinct texts produced identical vectors"

    # Order: reversing the texts must reverse the rows.
    status, body = _call(post_embed, model, [_SAMPLE_TEXTS[1], _SAMPLE_TEXTS[0]])
    assert 200 <= status < 300, f"embed call failed with status {status}"
    swapped = _expect_rows(body, 2, dim)
    assert swapped[0] == rows[1] and swapped[1] == rows[0], (
        "embeddings are not parallel to the request texts"
    )

    # Oversize batch: explicit rejection naming the limit.
    oversize = [_SAMPLE_TEXTS[i % len(_SAMPLE_TEXTS)] for i in range(max_batch + 1)]
    status, body = _call(post_embed, model, oversize)
    assert not 200 <= status < 300, (
        f"batch of {max_batch + 1} texts must be rejected (limit {max_batch}), got {status}"
    )
    assert isinstance(body.get("error"), str) and str(max_batch) in body["error"], (
        f"oversize rejection must carry an error naming the limit {max_batch}, got {body!r}"
    )

    if norm_tolerance is not None:
        status, body = _call(post_embed, model, _SAMPLE_TEXTS)
        rows = _expect_rows(body, len(_SAMPLE_TEXTS), dim)
        for i, row in enumerate(rows):
            norm = math.sqrt(sum(v * v for v in row))
            assert abs(norm - 1.0) <= norm_tolerance, (
                f"embedding {i} has norm {norm:.8f}, expected 1 within {norm_tolerance}"
            )
