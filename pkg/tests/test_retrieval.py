"""Tests for cosine scoring and top-k chunk selection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trialmatch.corpus import CriterionKind
from trialmatch.chunker import Chunk
from trialmatch.retrieval import RetrievalConfig, cosine, score_chunk, top_k


def chunk(chunk_id, start_unit=0):
    return Chunk(
        chunk_id=chunk_id,
        patient_id="p1",
        note_id="n1",
        start_unit=start_unit,
        unit_count=1,
        text=chunk_id,
    )


def vec(*values):
    return np.asarray(values, dtype=np.float64)


# --- cosine ---


def test_cosine_hand_computed():
    # dot = 4, |a| = 3, |b| = sqrt(5): 4 / (3 sqrt 5).
    assert cosine(vec(1, 2, 2), vec(2, 0, 1)) == 0.5962847939999439


def test_cosine_identical_is_one():
    assert cosine(vec(3, 4), vec(3, 4)) == 1.0


def test_cosine_orthogonal_is_zero():
    assert cosine(vec(3, 4), vec(4, -3)) == 0.0


def test_cosine_opposite_is_minus_one():
    assert cosine(vec(3, 4), vec(-3, -4)) == -1.0


def test_cosine_zero_vector_is_zero():
    assert cosine(vec(0, 0, 0), vec(1, 2, 3)) == 0.0
    assert cosine(vec(1, 2, 3), vec(0, 0, 0)) == 0.0


def test_cosine_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        cosine(vec(1, 2), vec(1, 2, 3))
    with pytest.raises(ValueError):
        cosine(np.zeros((2, 2)), np.zeros((2, 2)))


@given(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=6),
    st.floats(0.001, 1000.0),
)
def test_cosine_scale_invariant(values, scale):
    a = np.asarray(values)
    b = np.arange(1, len(values) + 1, dtype=np.float64)
    assert abs(cosine(a * scale, b) - cosine(a, b)) <= 1e-9


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=6))
def test_cosine_bounded(values):
    a = np.asarray(values)
    b = np.arange(1, len(values) + 1, dtype=np.float64)
    assert -1.0 - 1e-12 <= cosine(a, b) <= 1.0 + 1e-12


# --- score_chunk ---


def test_score_chunk_sums_per_criterion_cosines():
    # (3,4) against itself, an orthogonal, and its negation: 1 + 0 - 1 = 0.
    total, per = score_chunk(vec(3, 4), [vec(3, 4), vec(4, -3), vec(-3, -4)])
    assert per == (1.0, 0.0, -1.0)
    assert total == 0.0


def test_score_chunk_single_criterion():
    total, per = score_chunk(vec(1, 2, 2), [vec(2, 0, 1)])
    assert per == (0.5962847939999439,)
    assert total == 0.5962847939999439


def test_score_chunk_empty_criteria_rejected():
    with pytest.raises(ValueError):
        score_chunk(vec(1, 0), [])


def test_score_chunk_weights_scale_sum_not_per_criterion():
    cfg = RetrievalConfig(inclusion_weight=1.0, exclusion_weight=0.5)
    kinds = [CriterionKind.INCLUSION, CriterionKind.EXCLUSION]
    total, per = score_chunk(vec(3, 4), [vec(3, 4), vec(-3, -4)], cfg, kinds)
    assert per == (1.0, -1.0)
    assert total == 0.5


def test_score_chunk_kind_count_mismatch_rejected():
    with pytest.raises(ValueError):
        score_chunk(vec(1, 0), [vec(1, 0)], RetrievalConfig(), [])


# --- top_k ---


def test_top_k_orders_by_score_descending():
    # Scores against (1,0): a = 1.0, b = 0.0, c = 1/sqrt(2).
    pool = [(chunk("a"), vec(1, 0)), (chunk("b"), vec(0, 1)), (chunk("c"), vec(1, 1))]
    result = top_k(pool, [vec(1, 0)], RetrievalConfig(k=2))
    assert [s.chunk.chunk_id for s in result.selected] == ["a", "c"]
    assert result.selected[0].score == 1.0
    assert result.selected[1].score == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert not result.shortfall


def test_top_k_sums_over_criteria():
    # Chunk y beats x once both criteria count: 1.0 + 0.0 < 2 / sqrt(2).
    pool = [(chunk("x"), vec(1, 0)), (chunk("y"), vec(1, 1))]
    result = top_k(pool, [vec(1, 0), vec(0, 1)], RetrievalConfig(k=1))
    assert [s.chunk.chunk_id for s in result.selected] == ["y"]
    assert result.selected[0].score == pytest.approx(math.sqrt(2), abs=1e-12)


def test_top_k_shortfall_when_fewer_chunks_than_k():
    pool = [(chunk("a"), vec(1, 0)), (chunk("b"), vec(1, 1)), (chunk("c"), vec(0, 1))]
    result = top_k(pool, [vec(1, 0)], RetrievalConfig(k=5))
    assert result.shortfall
    assert [s.chunk.chunk_id for s in result.selected] == ["a", "b", "c"]


def test_top_k_empty_pool():
    result = top_k([], [vec(1, 0)], RetrievalConfig(k=3))
    assert result.selected == ()
    assert result.shortfall


def test_top_k_ties_keep_input_order():
    same = vec(2, 1)
    pool = [(chunk(c), same) for c in ["d", "b", "a", "c"]]
    result = top_k(pool, [vec(1, 1)], RetrievalConfig(k=3))
    assert [s.chunk.chunk_id for s in result.selected] == ["d", "b", "a"]


def test_top_k_zero_vector_chunk_ranks_between_signs():
    pool = [
        (chunk("neg"), vec(-3, -4)),
        (chunk("zero"), vec(0, 0)),
        (chunk("pos"), vec(3, 4)),
    ]
    result = top_k(pool, [vec(3, 4)], RetrievalConfig(k=3))
    assert [s.chunk.chunk_id for s in result.selected] == ["pos", "zero", "neg"]


def test_retrieval_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig(k=0)
    with pytest.raises(ValueError):
        RetrievalConfig(tie_break="random")


def oracle_rank(vectors, criteria):
    """Exhaustive stable sort on pure-python cosine sums."""

    def cos(a, b):
        dot = sum(x * y for x, y in zip(a, b))
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(y * y for y in b))
        return 0.0 if na == 0.0 or nb == 0.0 else dot / (na * nb)

    scores = [sum(cos(v, c) for c in criteria) for v in vectors]
    return sorted(range(len(vectors)), key=lambda i: (-scores[i], i))


small_vec = st.lists(st.integers(-1, 1), min_size=3, max_size=3)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(small_vec, min_size=1, max_size=12),
    st.lists(small_vec, min_size=1, max_size=4),
    st.integers(1, 6),
)
def test_top_k_matches_exhaustive_sort(chunk_vecs, criteria_vecs, k):
    # Entries in {-1, 0, 1} make exact ties common, so the stable tie rule
    # is exercised, and all float ops stay exact enough to compare ranks.
    pool = [(chunk(f"c{i}"), np.asarray(v, dtype=np.float64)) for i, v in enumerate(chunk_vecs)]
    criteria = [np.asarray(v, dtype=np.float64) for v in criteria_vecs]
    result = top_k(pool, criteria, RetrievalConfig(k=k))
    want = [f"c{i}" for i in oracle_rank(chunk_vecs, criteria_vecs)[:k]]
    assert [s.chunk.chunk_id for s in result.selected] == want
    assert result.shortfall == (len(chunk_vecs) < k)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(small_vec, min_size=1, max_size=8),
    st.lists(small_vec, min_size=1, max_size=3),
    st.floats(0.01, 100.0),
)
def test_top_k_scale_invariant(chunk_vecs, criteria_vecs, scale):
    criteria = [np.asarray(v, dtype=np.float64) for v in criteria_vecs]
    pool = [(chunk(f"c{i}"), np.asarray(v, dtype=np.float64)) for i, v in enumerate(chunk_vecs)]
    scaled = [(c, v * scale) for c, v in pool]
    base = top_k(pool, criteria, RetrievalConfig(k=4))
    same = top_k(scaled, criteria, RetrievalConfig(k=4))
    # Scaling must preserve scores to 1e-9. Order is preserved up to exact
    # ties, where a sub-ulp drift may reorder equals, so each position may
    # hold any base chunk whose score ties with that rank's score.
    assert len(base.selected) == len(same.selected)
    for a, b in zip(base.selected, same.selected):
        assert abs(a.score - b.score) <= 1e-9
        peers = {
            s.chunk.chunk_id for s in base.selected if abs(s.score - a.score) <= 2e-9
        }
        assert b.chunk.chunk_id in peers


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=2), min_size=1, max_size=8),
    st.lists(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=2), min_size=1, max_size=5),
)
def test_top_k_scores_bounded_by_criterion_count(chunk_vecs, criteria_vecs):
    m = len(criteria_vecs)
    pool = [(chunk(f"c{i}"), np.asarray(v)) for i, v in enumerate(chunk_vecs)]
    result = top_k(pool, [np.asarray(v) for v in criteria_vecs])
    for scored in result.selected:
        assert abs(scored.score) <= m + 1e-9
        assert len(scored.per_criterion_scores) == m
        for s in scored.per_criterion_scores:
            assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
