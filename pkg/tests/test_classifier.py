"""Tests for the feature map, logistic head, optimizer, and model artifact."""

import math
import struct

import numpy as np
import pytest

from trialmatch.classifier import (
    AdamState,
    HeadParams,
    TrainConfig,
    adam_step,
    bce_loss,
    config_hash_of,
    data_fingerprint_of,
    featurize,
    forward,
    gradient,
    load_head,
    predict,
    save_head,
    train,
)
from trialmatch.classifier import _forward_batch
from trialmatch.errors import ArtifactError
from trialmatch.metrics import auroc


def vec(*values):
    return np.asarray(values, dtype=np.float64)


# --- featurize ---


def test_featurize_blocks_hand_computed():
    # u = (1,0), w = (0,1): [u, w, u*w, |u-w|] = (1,0, 0,1, 0,0, 1,1).
    features = featurize([vec(1, 0)], [vec(0, 1)])
    assert np.array_equal(features, vec(1, 0, 0, 1, 0, 0, 1, 1))


def test_featurize_means_chunks_and_criteria():
    # u = mean((1,0),(3,4)) = (2,2), w = mean((0,2),(0,0)) = (0,1).
    features = featurize([vec(1, 0), vec(3, 4)], [vec(0, 2), vec(0, 0)])
    assert np.array_equal(features, vec(2, 2, 0, 1, 0, 2, 2, 1))


def test_featurize_identical_means_zero_distance_block():
    features = featurize([vec(2, 3)], [vec(2, 3)])
    assert np.array_equal(features[4:6], vec(4, 9))
    assert np.array_equal(features[6:8], vec(0, 0))


def test_featurize_no_chunks_uses_zero_context():
    features = featurize([], [vec(3, -4)])
    assert np.array_equal(features, vec(0, 0, 3, -4, 0, 0, 3, 4))


def test_featurize_validation():
    with pytest.raises(ValueError):
        featurize([vec(1, 0)], [])
    with pytest.raises(ValueError):
        featurize([vec(1, 0, 0)], [vec(1, 0)])


# --- forward and loss ---


def test_sigmoid_hand_values():
    params = HeadParams(weights=vec(1.0), bias=0.0)
    assert forward(params, vec(math.log(3.0))) == 0.75
    assert forward(params, vec(0.0)) == 0.5


def test_forward_batch_matches_elementwise():
    params = HeadParams(weights=vec(0.5, -1.0), bias=0.25)
    rows = np.array([[1.0, 2.0], [-3.0, 0.5], [0.0, 0.0]])
    batch = _forward_batch(params, rows)
    assert [forward(params, row) for row in rows] == pytest.approx(list(batch), abs=1e-15)


def test_sigmoid_stable_at_extreme_logits():
    params = HeadParams(weights=vec(1.0), bias=0.0)
    assert forward(params, vec(1000.0)) == 1.0
    assert forward(params, vec(-1000.0)) == 0.0


def test_bce_hand_computed():
    # -(ln 0.9 + ln 0.8), summed over the two examples.
    assert bce_loss([0.9, 0.2], [1, 0]) == 0.328504066972036
    assert bce_loss([0.5], [1]) == 0.6931471805599453


def test_bce_perfect_prediction_is_tiny():
    assert bce_loss([1.0], [1]) < 1e-11
    # Clamping keeps a catastrophically wrong prediction finite.
    assert bce_loss([0.0], [1]) == 27.631021115928547


def test_bce_is_summed_not_averaged():
    one = bce_loss([0.9], [1])
    two = bce_loss([0.9, 0.9], [1, 1])
    assert two == pytest.approx(2 * one, abs=1e-15)


def test_bce_permutation_invariant():
    probs = [0.9, 0.2, 0.7, 0.4]
    labels = [1, 0, 1, 0]
    assert bce_loss(probs, labels) == pytest.approx(
        bce_loss(probs[::-1], labels[::-1]), abs=1e-12
    )


def test_bce_validation():
    with pytest.raises(ValueError):
        bce_loss([], [])
    with pytest.raises(ValueError):
        bce_loss([0.5, 0.5], [1])


# --- gradient ---


def test_gradient_hand_computed_single_example():
    # Zero params give p = 0.5; residual -0.5; grads (p-y)x and (p-y).
    params = HeadParams(weights=vec(0, 0), bias=0.0)
    g_w, g_b = gradient(params, np.array([[2.0, 0.0]]), np.array([1.0]))
    assert np.array_equal(g_w, vec(-1.0, -0.0))
    assert g_b == -0.5


def test_gradient_sums_over_batch():
    params = HeadParams(weights=vec(0, 0), bias=0.0)
    rows = np.array([[2.0, 0.0], [0.0, 4.0]])
    labels = np.array([1.0, 0.0])
    g_w, g_b = gradient(params, rows, labels)
    # residuals -0.5 and +0.5: weights (-1, 0) + (0, 2), bias -0.5 + 0.5.
    assert np.array_equal(g_w, vec(-1.0, 2.0))
    assert g_b == 0.0


def test_gradient_shape_validation():
    params = HeadParams(weights=vec(0, 0), bias=0.0)
    with pytest.raises(ValueError):
        gradient(params, np.zeros(2), np.array([1.0]))
    with pytest.raises(ValueError):
        gradient(params, np.zeros((2, 2)), np.array([1.0]))


def test_gradient_matches_central_differences():
    # 120 random instances, h = 1e-6, relative error within 1e-6
    # (floored at 1 for near-zero components).
    rng = np.random.default_rng(42)
    h = 1e-6
    for _ in range(120):
        n = int(rng.integers(1, 8))
        dim = int(rng.integers(1, 6))
        features = rng.normal(size=(n, dim))
        labels = rng.integers(0, 2, size=n).astype(np.float64)
        params = HeadParams(weights=rng.normal(scale=0.5, size=dim), bias=float(rng.normal()))

        def loss_at(w, b):
            return bce_loss(_forward_batch(HeadParams(weights=w, bias=b), features), labels)

        g_w, g_b = gradient(params, features, labels)
        for i in range(dim):
            bump = np.zeros(dim)
            bump[i] = h
            numeric = (loss_at(params.weights + bump, params.bias)
                       - loss_at(params.weights - bump, params.bias)) / (2 * h)
            assert abs(numeric - g_w[i]) <= 1e-6 * max(1.0, abs(g_w[i]))
        numeric_b = (loss_at(params.weights, params.bias + h)
                     - loss_at(params.weights, params.bias - h)) / (2 * h)
        assert abs(numeric_b - g_b) <= 1e-6 * max(1.0, abs(g_b))


# --- adam_step ---


def test_adam_first_step_moves_by_learning_rate():
    # Bias-corrected first step is -lr * g/|g| up to epsilon.
    params = HeadParams(weights=vec(0.0), bias=0.0)
    cfg = TrainConfig(learning_rate=0.01)
    new_params, state = adam_step(params, (vec(0.3), 0.3), AdamState.fresh(1), cfg)
    assert new_params.weights[0] == -0.00999999966666668
    assert new_params.bias == -0.00999999966666668
    assert state.step == 1


def test_adam_zero_gradient_decays_moments():
    params = HeadParams(weights=vec(0.0), bias=0.0)
    cfg = TrainConfig(learning_rate=0.01)
    params, state = adam_step(params, (vec(0.3), 0.0), AdamState.fresh(1), cfg)
    params, state = adam_step(params, (vec(0.0), 0.0), state, cfg)
    assert state.m_weights[0] == 0.026999999999999993
    assert state.v_weights[0] == 8.991000000000008e-05
    # Momentum keeps the parameter moving despite the zero gradient.
    assert params.weights[0] == pytest.approx(
        -0.00999999966666668 + -0.006700582225417875, abs=1e-18
    )


def test_adam_fresh_state_zero_gradient_leaves_params():
    params = HeadParams(weights=vec(1.0, -2.0), bias=0.5)
    new_params, _ = adam_step(params, (vec(0.0, 0.0), 0.0), AdamState.fresh(2), TrainConfig())
    assert np.array_equal(new_params.weights, params.weights)
    assert new_params.bias == params.bias


def test_adam_does_not_mutate_inputs():
    params = HeadParams(weights=vec(1.0), bias=0.5)
    state = AdamState.fresh(1)
    adam_step(params, (vec(0.3), 0.3), state, TrainConfig())
    assert params.weights[0] == 1.0 and params.bias == 0.5
    assert state.step == 0 and state.m_weights[0] == 0.0


def test_plain_sgd_update():
    cfg = TrainConfig(learning_rate=0.1, plain_sgd=True)
    new_params, state = adam_step(
        HeadParams(weights=vec(1.0), bias=1.0), (vec(0.5), 0.5), AdamState.fresh(1), cfg
    )
    assert new_params.weights[0] == 0.95
    assert new_params.bias == 0.95
    assert state.m_weights[0] == 0.0


def test_non_finite_gradient_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        adam_step(
            HeadParams(weights=vec(0.0), bias=0.0),
            (vec(float("nan")), 0.0),
            AdamState.fresh(1),
            TrainConfig(),
        )


def test_train_config_validation():
    for bad in (
        dict(learning_rate=0.0),
        dict(beta1=1.0),
        dict(beta2=-0.1),
        dict(epsilon=0.0),
        dict(epochs=-1),
        dict(batch_size=0),
        dict(init="gaussian"),
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


# --- train ---


def separable_data(n=200, dim=8, seed=5):
    """Linearly separable rows with a margin of at least 0.5."""
    rng = np.random.default_rng(seed)
    true_w = rng.normal(size=dim)
    rows, labels = [], []
    while len(rows) < n:
        x = rng.normal(size=dim)
        z = float(x @ true_w)
        if abs(z) < 0.5:
            continue
        rows.append(x)
        labels.append(int(z > 0))
    return np.asarray(rows), labels


def test_train_separates_separable_data():
    features, labels = separable_data()
    cfg = TrainConfig(learning_rate=0.05, epochs=200, batch_size=32, seed=0)
    params, log = train(features, labels, cfg)
    assert auroc(list(_forward_batch(params, features)), labels) >= 0.99
    assert log.epoch_losses[-1] < log.initial_loss


def test_train_zero_epochs_returns_initial_params():
    features, labels = separable_data(n=4, dim=2)
    params, log = train(features, labels, TrainConfig(epochs=0))
    assert np.array_equal(params.weights, np.zeros(2))
    assert params.bias == 0.0
    assert log.epochs_run == 0 and log.epoch_losses == []
    # Zero-init head predicts 0.5 for everything: loss is n ln 2.
    assert log.initial_loss == 4 * 0.6931471805599453


def test_train_same_seed_is_bit_identical():
    features, labels = separable_data(n=60, dim=4)
    cfg = TrainConfig(learning_rate=0.05, epochs=30, batch_size=16, seed=9)
    params_a, log_a = train(features, labels, cfg)
    params_b, log_b = train(features, labels, cfg)
    assert np.array_equal(params_a.weights, params_b.weights)
    assert params_a.bias == params_b.bias
    assert log_a.epoch_losses == log_b.epoch_losses


def test_train_seed_changes_trajectory():
    features, labels = separable_data(n=60, dim=4)
    base = dict(learning_rate=0.05, epochs=10, batch_size=16)
    _, log_a = train(features, labels, TrainConfig(seed=1, **base))
    _, log_b = train(features, labels, TrainConfig(seed=2, **base))
    assert log_a.epoch_losses != log_b.epoch_losses


def test_train_stops_early_on_plateau():
    features, labels = separable_data(n=20, dim=2)
    cfg = TrainConfig(learning_rate=0.2, epochs=100_000, batch_size=20, seed=0)
    _, log = train(features, labels, cfg)
    assert log.stopped_early
    assert log.epochs_run < 100_000
    assert len(log.epoch_losses) == log.epochs_run


def test_train_full_batch_sgd_descends_monotonically():
    features, labels = separable_data(n=50, dim=4)
    cfg = TrainConfig(learning_rate=0.005, epochs=80, batch_size=50, seed=0, plain_sgd=True)
    _, log = train(features, labels, cfg)
    losses = [log.initial_loss] + log.epoch_losses
    drops = sum(1 for a, b in zip(losses, losses[1:]) if b <= a + 1e-12)
    assert drops >= 0.95 * (len(losses) - 1)


def test_train_single_class_warns(caplog):
    features = np.asarray([[1.0, 0.0], [0.0, 1.0]])
    with caplog.at_level("WARNING"):
        train(features, [1, 1], TrainConfig(epochs=1))
    assert any("single-class" in r.message for r in caplog.records)


def test_train_validation():
    with pytest.raises(ValueError):
        train(np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        train(np.zeros((3, 2)), [1, 0])


# --- predict ---


def test_predict_thresholds_probability():
    zeros = HeadParams(weights=np.zeros(8), bias=0.0)
    chunks = [vec(1, 0)]
    criteria = [vec(0, 1)]
    result = predict(zeros, chunks, criteria, patient_id="p1", trial_or_criterion_id="t1")
    assert result.probability == 0.5
    assert result.decision == 1
    strict = predict(
        zeros, chunks, criteria, patient_id="p1", trial_or_criterion_id="t1", threshold=0.6
    )
    assert strict.decision == 0
    assert strict.patient_id == "p1" and strict.trial_or_criterion_id == "t1"


# --- artifact ---


def test_head_artifact_round_trip(tmp_path):
    path = tmp_path / "model.bin"
    params = HeadParams(weights=vec(1.5, -2.25), bias=0.125)
    cfg_hash = config_hash_of(TrainConfig())
    fingerprint = data_fingerprint_of(np.zeros((1, 2)), [1])
    save_head(path, params, threshold=0.625, config_hash=cfg_hash, data_fingerprint=fingerprint)
    loaded = load_head(path)
    assert np.array_equal(loaded.params.weights, params.weights)
    assert loaded.params.bias == 0.125
    assert loaded.threshold == 0.625
    assert loaded.config_hash == cfg_hash
    assert loaded.data_fingerprint == fingerprint


def test_head_artifact_byte_layout(tmp_path):
    path = tmp_path / "model.bin"
    save_head(
        path,
        HeadParams(weights=vec(1.5, -2.25), bias=0.125),
        threshold=0.625,
        config_hash=b"\x01" * 32,
        data_fingerprint=b"\x02" * 32,
    )
    data = path.read_bytes()
    assert len(data) == 92 + 16
    assert data[:8] == b"TMHEAD1\n"
    assert struct.unpack_from("<I", data, 8) == (2,)
    assert struct.unpack_from("<d", data, 12) == (0.625,)
    assert struct.unpack_from("<d", data, 20) == (0.125,)
    assert data[28:60] == b"\x01" * 32
    assert data[60:92] == b"\x02" * 32
    assert struct.unpack_from("<2d", data, 92) == (1.5, -2.25)


def test_head_artifact_bad_magic_rejected(tmp_path):
    path = tmp_path / "model.bin"
    save_head(
        path,
        HeadParams(weights=vec(1.0), bias=0.0),
        threshold=0.5,
        config_hash=b"\x00" * 32,
        data_fingerprint=b"\x00" * 32,
    )
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ArtifactError, match="bad magic"):
        load_head(path)


def test_head_artifact_truncation_rejected(tmp_path):
    path = tmp_path / "model.bin"
    save_head(
        path,
        HeadParams(weights=vec(1.0, 2.0, 3.0), bias=0.0),
        threshold=0.5,
        config_hash=b"\x00" * 32,
        data_fingerprint=b"\x00" * 32,
    )
    whole = path.read_bytes()
    for cut in (50, 92 + 8):
        path.write_bytes(whole[:cut])
        with pytest.raises(ArtifactError, match="truncated"):
            load_head(path)


def test_config_hash_tracks_config():
    assert config_hash_of(TrainConfig()) == config_hash_of(TrainConfig())
    assert config_hash_of(TrainConfig()) != config_hash_of(TrainConfig(seed=1))


def test_data_fingerprint_tracks_rows_and_labels():
    features = np.asarray([[1.0, 2.0], [3.0, 4.0]])
    base = data_fingerprint_of(features, [1, 0])
    assert data_fingerprint_of(features, [1, 0]) == base
    assert data_fingerprint_of(features, [0, 1]) != base
    assert data_fingerprint_of(features[::-1], [1, 0]) != base
