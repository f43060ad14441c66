"""Trainable eligibility head over pooled embedding features.

The head is a logistic regression on a fixed feature map of the retrieved
patient context and the trial criteria: with u the mean retrieved-chunk
vector and w the mean criterion vector, the features are the concatenation
[u, w, u*w, |u-w|] of length 4*dim. Training minimizes the summed binary
cross entropy, by Adam with bias correction or by the plain learning-rate
update when ``plain_sgd`` is set.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArtifactError

logger = logging.getLogger(__name__)

INIT_ZEROS = "zeros"
INIT_UNIFORM_SCALED = "uniform_scaled"

# Probabilities are clamped into [PROB_FLOOR, 1 - PROB_FLOOR] inside the loss
# so a saturated sigmoid cannot produce log(0).
PROB_FLOOR = 1e-12


@dataclass
class HeadParams:
    weights: np.ndarray
    bias: float

    def copy(self) -> "HeadParams":
        return HeadParams(weights=self.weights.copy(), bias=float(self.bias))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    init: str = INIT_ZEROS
    plain_sgd: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init not in (INIT_ZEROS, INIT_UNIFORM_SCALED):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class AdamState:
    m_weights: np.ndarray
    v_weights: np.ndarray
    m_bias: float = 0.0
    v_bias: float = 0.0
    step: int = 0

    @classmethod
    def fresh(cls, dim: int) -> "AdamState":
        return cls(m_weights=np.zeros(dim), v_weights=np.zeros(dim))


@dataclass(frozen=True)
class Prediction:
    patient_id: str
    trial_or_criterion_id: str
    probability: float
    decision: int


@dataclass
class TrainingLog:
    """Loss trajectory: the pre-training loss, then one entry per epoch."""

    initial_loss: float
    epoch_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False


def featurize(
    chunk_vectors: Sequence[np.ndarray], criteria_vectors: Sequence[np.ndarray]
) -> np.ndarray:
    """Build the 4*dim feature vector for one (patient, trial) pair.

    With no retrieved chunks the context mean is the zero vector, so the
    pair is still classifiable.
    """
    if not len(criteria_vectors):
        raise ValueError("featurize requires at least one criterion vector")
    w = np.mean(np.asarray(criteria_vectors, dtype=np.float64), axis=0)
    if len(chunk_vectors):
        u = np.mean(np.asarray(chunk_vectors, dtype=np.float64), axis=0)
    else:
        u = np.zeros_like(w)
    if u.shape != w.shape:
        raise ValueError(f"chunk dim {u.shape} does not match criteria dim {w.shape}")
    return np.concatenate([u, w, u * w, np.abs(u - w)])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    exp_z = np.exp(z[~pos])
    out[~pos] = exp_z / (1.0 + exp_z)
    return out


def forward(params: HeadParams, features: np.ndarray) -> float:
    """Probability that the pair is eligible."""
    z = float(np.dot(params.weights, features) + params.bias)
    return float(_sigmoid(np.array([z]))[0])


def _forward_batch(params: HeadParams, features: np.ndarray) -> np.ndarray:
    return _sigmoid(features @ params.weights + params.bias)


def bce_loss(probs: Sequence[float], labels: Sequence[int]) -> float:
    """Summed (not averaged) binary cross entropy."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"probs and labels must be equal-length 1-d, got {p.shape} and {y.shape}")
    if p.size == 0:
        raise ValueError("bce_loss requires at least one example")
    p = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def gradient(
    params: HeadParams, features: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, float]:
    """Exact gradient of the summed BCE at ``params``.

    For logistic regression the per-example gradient is (p - y) * x for the
    weights and (p - y) for the bias; the batch gradient is their sum.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or labels.ndim != 1 or features.shape[0] != labels.shape[0]:
        raise ValueError("features must be (n, dim) and labels (n,)")
    residual = _forward_batch(params, features) - labels
    return features.T @ residual, float(np.sum(residual))


def adam_step(
    params: HeadParams,
    grads: tuple[np.ndarray, float],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[HeadParams, AdamState]:
    """One optimizer step. Returns new params and state without mutating
    the inputs. In ``plain_sgd`` mode the update is the bare
    ``theta - learning_rate * gradient`` and the moments stay untouched."""
    g_w, g_b = grads
    g_w = np.asarray(g_w, dtype=np.float64)
    if not np.all(np.isfinite(g_w)) or not math.isfinite(g_b):
        bad = int(np.sum(~np.isfinite(g_w))) + (0 if math.isfinite(g_b) else 1)
        raise ValueError(
            f"non-finite gradient ({bad} entries) at step {state.step + 1}; "
            "lower the learning rate or inspect the features"
        )
    if cfg.plain_sgd:
        new_params = HeadParams(
            weights=params.weights - cfg.learning_rate * g_w,
            bias=params.bias - cfg.learning_rate * g_b,
        )
        new_state = AdamState(
            m_weights=state.m_weights.copy(),
            v_weights=state.v_weights.copy(),
            m_bias=state.m_bias,
            v_bias=state.v_bias,
            step=state.step + 1,
        )
        return new_params, new_state

    t = state.step + 1
    m_w = cfg.beta1 * state.m_weights + (1.0 - cfg.beta1) * g_w
    v_w = cfg.beta2 * state.v_weights + (1.0 - cfg.beta2) * g_w**2
    m_b = cfg.beta1 * state.m_bias + (1.0 - cfg.beta1) * g_b
    v_b = cfg.beta2 * state.v_bias + (1.0 - cfg.beta2) * g_b**2
    m_w_hat = m_w / (1.0 - cfg.beta1**t)
    v_w_hat = v_w / (1.0 - cfg.beta2**t)
    m_b_hat = m_b / (1.0 - cfg.beta1**t)
    v_b_hat = v_b / (1.0 - cfg.beta2**t)
    new_params = HeadParams(
        weights=params.weights - cfg.learning_rate * m_w_hat / (np.sqrt(v_w_hat) + cfg.epsilon),
        bias=params.bias - cfg.learning_rate * m_b_hat / (math.sqrt(v_b_hat) + cfg.epsilon),
    )
    return new_params, AdamState(m_weights=m_w, v_weights=v_w, m_bias=m_b, v_bias=v_b, step=t)


def _initial_params(dim: int, cfg: TrainConfig) -> HeadParams:
    if cfg.init == INIT_ZEROS:
        return HeadParams(weights=np.zeros(dim), bias=0.0)
    rng = np.random.default_rng(cfg.seed)
    scale = 1.0 / math.sqrt(dim)
    return HeadParams(weights=rng.uniform(-scale, scale, size=dim), bias=0.0)


# Early stopping: this many consecutive epochs whose relative loss
# improvement falls below the threshold end training.
CONVERGENCE_REL_IMPROVEMENT = 1e-6
CONVERGENCE_PATIENCE = 3


def train(
    features: np.ndarray, labels: Sequence[int], cfg: TrainConfig | None = None
) -> tuple[HeadParams, TrainingLog]:
    """Fit the head on featurized pairs.

    Each epoch shuffles with the seeded generator, walks minibatches of
    ``batch_size``, and logs the full-dataset summed loss. Training stops
    early once the relative loss improvement stays below 1e-6 for 3
    consecutive epochs. Identical inputs and config reproduce the exact
    same parameters.
    """
    cfg = cfg or TrainConfig()
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, dim) with one label per row")
    n = features.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if len(set(np.asarray(labels).tolist())) == 1:
        logger.warning("training labels are single-class; the head will learn a constant")

    params = _initial_params(features.shape[1], cfg)
    state = AdamState.fresh(features.shape[1])
    rng = np.random.default_rng(cfg.seed)
    log = TrainingLog(initial_loss=bce_loss(_forward_batch(params, features), y))

    previous = log.initial_loss
    flat_epochs = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = gradient(params, features[batch], y[batch])
            params, state = adam_step(params, grads, state, cfg)
        epoch_loss = bce_loss(_forward_batch(params, features), y)
        log.epoch_losses.append(epoch_loss)
        log.epochs_run += 1
        improvement = (previous - epoch_loss) / max(abs(previous), PROB_FLOOR)
        flat_epochs = flat_epochs + 1 if improvement < CONVERGENCE_REL_IMPROVEMENT else 0
        previous = epoch_loss
        if flat_epochs >= CONVERGENCE_PATIENCE:
            log.stopped_early = True
            break
    return params, log


def predict(
    params: HeadParams,
    chunk_vectors: Sequence[np.ndarray],
    criteria_vectors: Sequence[np.ndarray],
    *,
    patient_id: str,
    trial_or_criterion_id: str,
    threshold: float = 0.5,
) -> Prediction:
    """Score one pair and threshold the probability into a decision."""
    probability = forward(params, featurize(chunk_vectors, criteria_vectors))
    return Prediction(
        patient_id=patient_id,
        trial_or_criterion_id=trial_or_criterion_id,
        probability=probability,
        decision=int(probability >= threshold),
    )


# Model artifact, all integers and floats little-endian:
#
#   offset  size  field
#   0       8     magic b"TMHEAD1\n"
#   8       4     uint32 feature_dim
#   12      8     float64 decision threshold
#   20      8     float64 bias
#   28      32    sha256 of the canonical TrainConfig JSON
#   60      32    sha256 fingerprint of the training data
#   92      8*d   float64 weights, d = feature_dim

_HEAD_MAGIC = b"TMHEAD1\n"
_HEAD_FIXED = struct.Struct("<I d d 32s 32s")


@dataclass(frozen=True)
class HeadArtifact:
    params: HeadParams
    threshold: float
    config_hash: bytes
    data_fingerprint: bytes


def config_hash_of(cfg: TrainConfig) -> bytes:
    payload = json.dumps(
        {
            "learning_rate": cfg.learning_rate,
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "epsilon": cfg.epsilon,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "init": cfg.init,
            "plain_sgd": cfg.plain_sgd,
        },
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(payload).digest()


def data_fingerprint_of(features: np.ndarray, labels: Sequence[int]) -> bytes:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(np.asarray(labels, dtype="<f8")).tobytes())
    return h.digest()


def save_head(
    path: str | Path,
    params: HeadParams,
    *,
    threshold: float,
    config_hash: bytes,
    data_fingerprint: bytes,
) -> None:
    weights = np.ascontiguousarray(params.weights, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEAD_MAGIC)
        fh.write(
            _HEAD_FIXED.pack(
                weights.shape[0], threshold, float(params.bias), config_hash, data_fingerprint
            )
        )
        fh.write(weights.tobytes())


def load_head(path: str | Path) -> HeadArtifact:
    data = Path(path).read_bytes()
    if data[: len(_HEAD_MAGIC)] != _HEAD_MAGIC:
        raise ArtifactError(f"{path}: not a head model file (bad magic)")
    try:
        dim, threshold, bias, config_hash, fingerprint = _HEAD_FIXED.unpack_from(
            data, len(_HEAD_MAGIC)
        )
        offset = len(_HEAD_MAGIC) + _HEAD_FIXED.size
        weights = np.frombuffer(data, dtype="<f8", count=dim, offset=offset).astype(np.float64)
        if weights.shape[0] != dim:
            raise ValueError("short read")
    except (struct.error, ValueError) as exc:
        raise ArtifactError(f"{path}: truncated head model file") from exc
    return HeadArtifact(
        params=HeadParams(weights=weights, bias=bias),
        threshold=threshold,
        config_hash=config_hash,
        data_fingerprint=fingerprint,
    )
