"""Run configuration: one JSON file drives every pipeline stage.

Schema (all sections optional except ``corpus``; defaults shown):

    {
      "corpus":    {"path": "corpus.jsonl", "scheme": "n2c2", "strict": true},
      "chunking":  {"max_words": 256, "overlap_words": 32},
      "embedding": {"provider": "hashing", "dim": 768, "provider_id": "hash-v1",
                    "endpoint": null, "batch_size": 64, "timeout_s": 30.0},
      "retrieval": {"k": 4, "inclusion_weight": 1.0, "exclusion_weight": 1.0},
      "prompt":    {"template_path": null, "max_words": 3072},
      "training":  {"learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999,
                    "epsilon": 1e-8, "epochs": 50, "batch_size": 32,
                    "seed": 0, "init": "zeros", "plain_sgd": false},
      "prediction": {"threshold": 0.5},
      "split":     {"mode": "ratio", "train_fraction": 0.8, "seed": 0},
      "out_dir":   "run-output"
    }

An explicit split lists the pairs instead:

    "split": {"mode": "explicit",
              "train": [["p1", "t1"], ...], "test": [["p2", "t1"], ...]}

Pair entries are [patient_id, trial_or_criterion_id] exactly as written in
label records. Unknown sections or keys are rejected so typos cannot
silently fall back to defaults. Command-line flags override file values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from ..chunker import ChunkPolicy
from ..classifier import TrainConfig
from ..corpus import LabelScheme
from ..embedding import EmbedderConfig
from ..errors import ConfigError
from ..retrieval import RetrievalConfig

SPLIT_RATIO = "ratio"
SPLIT_EXPLICIT = "explicit"


@dataclass(frozen=True)
class SplitSpec:
    mode: str = SPLIT_RATIO
    train_fraction: float = 0.8
    seed: int = 0
    train: tuple[tuple[str, str], ...] = ()
    test: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in (SPLIT_RATIO, SPLIT_EXPLICIT):
            raise ConfigError(f"split mode must be ratio or explicit, got {self.mode!r}")
        if self.mode == SPLIT_RATIO:
            if not 0.0 < self.train_fraction < 1.0:
                raise ConfigError("split train_fraction must lie strictly between 0 and 1")
        else:
            if not self.train or not self.test:
                raise ConfigError("explicit split requires nonempty train and test lists")
            overlap = set(self.train) & set(self.test)
            if overlap:
                raise ConfigError(f"split lists overlap on {sorted(overlap)[:3]}")


@dataclass(frozen=True)
class PromptSettings:
    template_path: str | None = None
    max_words: int = 3072

    def __post_init__(self) -> None:
        if self.max_words < 1:
            raise ConfigError("prompt max_words must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    scheme: LabelScheme = LabelScheme.N2C2
    strict: bool = True
    out_dir: str | None = None
    chunking: ChunkPolicy = ChunkPolicy()
    embedding: EmbedderConfig = EmbedderConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    prompt: PromptSettings = PromptSettings()
    training: TrainConfig = TrainConfig()
    threshold: float = 0.5
    split: SplitSpec = SplitSpec()

    def resolved_out_dir(self) -> Path:
        if not self.out_dir:
            raise ConfigError("no output directory: set out_dir in the config or pass --out")
        return Path(self.out_dir)


def _take(section: Mapping[str, Any], name: str, known: dict[str, Any]) -> dict[str, Any]:
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigError(f"config section {name!r} has unknown keys: {sorted(unknown)}")
    merged = dict(known)
    merged.update(section)
    return merged


def _pairs(value: Any, where: str) -> tuple[tuple[str, str], ...]:
    try:
        pairs = tuple((str(a), str(b)) for a, b in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a list of [patient_id, trial_id] pairs") from exc
    return pairs


def config_from_dict(data: Mapping[str, Any], origin: str = "config") -> RunConfig:
    known_sections = {
        "corpus",
        "chunking",
        "embedding",
        "retrieval",
        "prompt",
        "training",
        "prediction",
        "split",
        "out_dir",
    }
    unknown = set(data) - known_sections
    if unknown:
        raise ConfigError(f"{origin}: unknown config sections: {sorted(unknown)}")

    corpus = data.get("corpus")
    if not isinstance(corpus, Mapping) or "path" not in corpus:
        raise ConfigError(f"{origin}: config needs a corpus section with a path")
    corpus = _take(corpus, "corpus", {"path": None, "scheme": "n2c2", "strict": True})
    try:
        scheme = LabelScheme(corpus["scheme"])
    except ValueError as exc:
        raise ConfigError(f"{origin}: unknown corpus scheme {corpus['scheme']!r}") from exc

    chunking = _take(data.get("chunking", {}), "chunking", {"max_words": 256, "overlap_words": 32})
    embedding = _take(
        data.get("embedding", {}),
        "embedding",
        {
            "provider": "hashing",
            "dim": 768,
            "provider_id": "hash-v1",
            "endpoint": None,
            "batch_size": 64,
            "timeout_s": 30.0,
        },
    )
    retrieval = _take(
        data.get("retrieval", {}),
        "retrieval",
        {"k": 4, "inclusion_weight": 1.0, "exclusion_weight": 1.0},
    )
    prompt = _take(data.get("prompt", {}), "prompt", {"template_path": None, "max_words": 3072})
    training = _take(
        data.get("training", {}),
        "training",
        {
            "learning_rate": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1e-8,
            "epochs": 50,
            "batch_size": 32,
            "seed": 0,
            "init": "zeros",
            "plain_sgd": False,
        },
    )
    prediction = _take(data.get("prediction", {}), "prediction", {"threshold": 0.5})
    split_raw = _take(
        data.get("split", {}),
        "split",
        {"mode": SPLIT_RATIO, "train_fraction": 0.8, "seed": 0, "train": (), "test": ()},
    )

    try:
        return RunConfig(
            corpus_path=str(corpus["path"]),
            scheme=scheme,
            strict=bool(corpus["strict"]),
            out_dir=data.get("out_dir"),
            chunking=ChunkPolicy(
                max_units=chunking["max_words"], overlap_units=chunking["overlap_words"]
            ),
            embedding=EmbedderConfig(
                provider=embedding["provider"],
                dim=embedding["dim"],
                provider_id=embedding["provider_id"],
                endpoint=embedding["endpoint"],
                batch_size=embedding["batch_size"],
                timeout_s=embedding["timeout_s"],
            ),
            retrieval=RetrievalConfig(
                k=retrieval["k"],
                inclusion_weight=retrieval["inclusion_weight"],
                exclusion_weight=retrieval["exclusion_weight"],
            ),
            prompt=PromptSettings(
                template_path=prompt["template_path"], max_words=prompt["max_words"]
            ),
            training=TrainConfig(
                learning_rate=training["learning_rate"],
                beta1=training["beta1"],
                beta2=training["beta2"],
                epsilon=training["epsilon"],
                epochs=training["epochs"],
                batch_size=training["batch_size"],
                seed=training["seed"],
                init=training["init"],
                plain_sgd=bool(training["plain_sgd"]),
            ),
            threshold=float(prediction["threshold"]),
            split=SplitSpec(
                mode=split_raw["mode"],
                train_fraction=split_raw["train_fraction"],
                seed=split_raw["seed"],
                train=_pairs(split_raw["train"], "split.train"),
                test=_pairs(split_raw["test"], "split.test"),
            ),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(data, origin=str(path))


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """The canonical plain-dict form, also used for hashing."""
    return {
        "corpus": {"path": cfg.corpus_path, "scheme": cfg.scheme.value, "strict": cfg.strict},
        "chunking": {
            "max_words": cfg.chunking.max_units,
            "overlap_words": cfg.chunking.overlap_units,
        },
        "embedding": {
            "provider": cfg.embedding.provider,
            "dim": cfg.embedding.dim,
            "provider_id": cfg.embedding.provider_id,
            "endpoint": cfg.embedding.endpoint,
            "batch_size": cfg.embedding.batch_size,
            "timeout_s": cfg.embedding.timeout_s,
        },
        "retrieval": {
            "k": cfg.retrieval.k,
            "inclusion_weight": cfg.retrieval.inclusion_weight,
            "exclusion_weight": cfg.retrieval.exclusion_weight,
        },
        "prompt": {
            "template_path": cfg.prompt.template_path,
            "max_words": cfg.prompt.max_words,
        },
        "training": {
            "learning_rate": cfg.training.learning_rate,
            "beta1": cfg.training.beta1,
            "beta2": cfg.training.beta2,
            "epsilon": cfg.training.epsilon,
            "epochs": cfg.training.epochs,
            "batch_size": cfg.training.batch_size,
            "seed": cfg.training.seed,
            "init": cfg.training.init,
            "plain_sgd": cfg.training.plain_sgd,
        },
        "prediction": {"threshold": cfg.threshold},
        "split": {
            "mode": cfg.split.mode,
            "train_fraction": cfg.split.train_fraction,
            "seed": cfg.split.seed,
            "train": [list(p) for p in cfg.split.train],
            "test": [list(p) for p in cfg.split.test],
        },
        "out_dir": cfg.out_dir,
    }


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode("utf-8")
    return "sha256:" + hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class CliOverrides:
    """Values from command-line flags; None means not passed."""

    out_dir: str | None = None
    seed: int | None = None
    chunk_max_words: int | None = None
    chunk_overlap_words: int | None = None
    top_k: int | None = None
    prompt_template: str | None = None
    learning_rate: float | None = None
    epochs: int | None = None
    batch_size: int | None = None
    plain_sgd: bool | None = None


def apply_overrides(cfg: RunConfig, ov: CliOverrides) -> RunConfig:
    """Fold command-line flags over the file config. The global seed flag
    reseeds both training and the ratio split."""
    try:
        if ov.out_dir is not None:
            cfg = replace(cfg, out_dir=ov.out_dir)
        if ov.chunk_max_words is not None or ov.chunk_overlap_words is not None:
            cfg = replace(
                cfg,
                chunking=ChunkPolicy(
                    max_units=ov.chunk_max_words
                    if ov.chunk_max_words is not None
                    else cfg.chunking.max_units,
                    overlap_units=ov.chunk_overlap_words
                    if ov.chunk_overlap_words is not None
                    else cfg.chunking.overlap_units,
                ),
            )
        if ov.top_k is not None:
            cfg = replace(cfg, retrieval=replace(cfg.retrieval, k=ov.top_k))
        if ov.prompt_template is not None:
            cfg = replace(cfg, prompt=replace(cfg.prompt, template_path=ov.prompt_template))
        training = cfg.training
        if ov.learning_rate is not None:
            training = replace(training, learning_rate=ov.learning_rate)
        if ov.epochs is not None:
            training = replace(training, epochs=ov.epochs)
        if ov.batch_size is not None:
            training = replace(training, batch_size=ov.batch_size)
        if ov.plain_sgd is not None:
            training = replace(training, plain_sgd=ov.plain_sgd)
        if ov.seed is not None:
            training = replace(training, seed=ov.seed)
            cfg = replace(cfg, split=replace(cfg.split, seed=ov.seed))
        cfg = replace(cfg, training=training)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
