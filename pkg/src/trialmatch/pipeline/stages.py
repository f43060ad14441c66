"""Pipeline stages. Each consumes persisted artifacts and writes new ones.

Stage order: ingest, embed, retrieve, prompts, train, predict, evaluate,
report. Every stage re-reads its inputs from the output directory rather
than passing objects in memory, so stages can run in separate processes.
All writes go through a temp file and rename; a failed stage leaves no
partial artifact behind.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..chunker import Chunk, chunk_patient
from ..classifier import (
    config_hash_of,
    data_fingerprint_of,
    featurize,
    forward,
    load_head,
    save_head,
    train,
)
from ..corpus import (
    Dataset,
    LabeledPair,
    LabelScheme,
    dataset_stats,
    dump_corpus,
    load_corpus,
    resolve_pairs,
)
from ..embedding import EmbeddingCache, cache_key, embed_batch
from ..errors import ArtifactError, ConfigError
from ..errors import UndefinedMetricError
from ..metrics import EvalReport, evaluate_predictions, n2c2_overall, roc_points
from ..metrics import auroc as auroc_metric
from ..prompt import PromptTemplate, build_prompt, default_template
from ..retrieval import ScoredChunk, top_k
from .config import SPLIT_EXPLICIT, RunConfig, config_hash
from .manifest import atomic_write_text, record_stage

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset.jsonl"
STATS_FILE = "stats.json"
CACHE_FILE = "embeddings.bin"
RETRIEVAL_FILE = "retrieval.jsonl"
RETRIEVAL_TRACE_FILE = "retrieval_trace.jsonl"
PROMPTS_FILE = "prompts.jsonl"
MODEL_FILE = "model.bin"
TRAINLOG_FILE = "training_log.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_JSON_FILE = "report.json"
REPORT_TEXT_FILE = "report.txt"


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path.name}: run the {produced_by} stage first")
    return path


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)
    atomic_write_text(path, text)


def _corpus_fingerprint(path: Path) -> str:
    """Fingerprint a corpus file, or a directory of jsonl files by name and content."""
    if path.is_dir():
        digest = hashlib.sha256()
        for file in sorted(path.glob("*.jsonl")):
            digest.update(file.name.encode("utf-8"))
            digest.update(file.read_bytes())
        return f"sha256:{digest.hexdigest()}"
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return f"sha256:{digest}"


def _load_dataset(cfg: RunConfig, out_dir: Path) -> Dataset:
    path = _require(out_dir / DATASET_FILE, "ingest")
    return load_corpus(path, cfg.scheme, strict=True)


def _finish_stage(
    cfg: RunConfig,
    stage: str,
    started: float,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
) -> None:
    elapsed = time.perf_counter() - started
    record_stage(
        cfg.resolved_out_dir(),
        stage,
        config_hash=config_hash(cfg),
        inputs=inputs,
        outputs=outputs,
        elapsed_s=elapsed,
    )
    logger.info(
        "stage %s finished", stage, extra={"fields": {"stage": stage, "elapsed_s": round(elapsed, 3)}}
    )


def run_ingest(cfg: RunConfig) -> Path:
    """Validate the corpus and persist the canonical copy plus stats."""
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = Path(cfg.corpus_path)
    if not corpus_path.exists():
        raise ConfigError(f"corpus path does not exist: {corpus_path}")
    dataset = load_corpus(corpus_path, cfg.scheme, strict=cfg.strict)
    stats = dataset_stats(dataset)

    dataset_path = out_dir / DATASET_FILE
    tmp = dataset_path.with_name(dataset_path.name + ".tmp")
    dump_corpus(dataset, tmp)
    tmp.replace(dataset_path)
    stats_path = out_dir / STATS_FILE
    atomic_write_text(
        stats_path,
        json.dumps(
            {
                "patients": stats.patients,
                "trials": stats.trials,
                "criteria": stats.criteria,
                "pairs": stats.pairs,
                "class_balance": stats.class_balance,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    _finish_stage(
        cfg,
        "ingest",
        started,
        inputs={"corpus": corpus_path},
        outputs={DATASET_FILE: dataset_path, STATS_FILE: stats_path},
    )
    return dataset_path


def _all_texts(dataset: Dataset, cfg: RunConfig) -> list[str]:
    """Every chunk and criterion text, in deterministic corpus order."""
    texts: list[str] = []
    for patient in dataset.patients:
        texts.extend(c.text for c in chunk_patient(patient, cfg.chunking))
    for trial in dataset.trials:
        texts.extend(c.text for c in trial.criteria)
    return texts


def run_embed(cfg: RunConfig) -> Path:
    """Embed all chunk and criterion texts into the append-only cache.

    Already-cached texts are skipped, so an interrupted run resumes and
    converges to the same cache file.
    """
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    dataset = _load_dataset(cfg, out_dir)
    cache_path = out_dir / CACHE_FILE
    cache = EmbeddingCache(cache_path)

    pending: list[str] = []
    seen: set[str] = set()
    for text in _all_texts(dataset, cfg):
        key = cache_key(cfg.embedding.provider_id, cfg.embedding.dim, text)
        if key not in cache and key not in seen:
            pending.append(text)
            seen.add(key)
    if pending:
        vectors = embed_batch(pending, cfg.embedding)
        for text, vec in zip(pending, vectors):
            cache.put(cache_key(cfg.embedding.provider_id, cfg.embedding.dim, text), vec)
    logger.info(
        "embedded %d new texts", len(pending), extra={"fields": {"stage": "embed", "new": len(pending)}}
    )
    _finish_stage(
        cfg,
        "embed",
        started,
        inputs={DATASET_FILE: out_dir / DATASET_FILE},
        outputs={CACHE_FILE: cache_path},
    )
    return cache_path


def _cached_vector(cache: EmbeddingCache, cfg: RunConfig, text: str, what: str) -> np.ndarray:
    vec = cache.get(cache_key(cfg.embedding.provider_id, cfg.embedding.dim, text))
    if vec is None:
        raise ArtifactError(f"embedding for {what} not in cache: run the embed stage first")
    return vec


def run_retrieve(cfg: RunConfig) -> Path:
    """Rank each labeled pair's chunks and persist the top-k per pair."""
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    dataset = _load_dataset(cfg, out_dir)
    cache = EmbeddingCache(_require(out_dir / CACHE_FILE, "embed"))
    pairs = resolve_pairs(dataset)

    chunk_lists: dict[str, list] = {}
    records: list[dict] = []
    trace_rows: list[dict] = []
    for pair in pairs:
        pid = pair.patient.patient_id
        if pid not in chunk_lists:
            chunk_lists[pid] = chunk_patient(pair.patient, cfg.chunking)
        chunks = chunk_lists[pid]
        with_vectors = [
            (chunk, _cached_vector(cache, cfg, chunk.text, f"chunk {chunk.chunk_id}"))
            for chunk in chunks
        ]
        criteria_vecs = [
            _cached_vector(cache, cfg, c.text, f"criterion {c.criterion_id}")
            for c in pair.trial.criteria
        ]
        kinds = [c.kind for c in pair.trial.criteria]
        result = top_k(with_vectors, criteria_vecs, cfg.retrieval, kinds)
        record = {
            "patient_id": pid,
            "trial_id": pair.trial.trial_id,
            "trial_or_criterion_id": pair.label.trial_or_criterion_id,
            "shortfall": result.shortfall,
            "chunks": [
                {"chunk_id": sc.chunk.chunk_id, "rank": rank, "score": sc.score}
                for rank, sc in enumerate(result.selected, start=1)
            ],
        }
        records.append(record)
        for chunk_row in record["chunks"]:
            trace_rows.append(
                {
                    "patient_id": pid,
                    "trial_id": pair.trial.trial_id,
                    "chunk_id": chunk_row["chunk_id"],
                    "rank": chunk_row["rank"],
                    "score": chunk_row["score"],
                }
            )

    retrieval_path = out_dir / RETRIEVAL_FILE
    _write_jsonl(retrieval_path, records)
    trace_path = out_dir / RETRIEVAL_TRACE_FILE
    _write_jsonl(trace_path, trace_rows)
    _finish_stage(
        cfg,
        "retrieve",
        started,
        inputs={DATASET_FILE: out_dir / DATASET_FILE, CACHE_FILE: out_dir / CACHE_FILE},
        outputs={RETRIEVAL_FILE: retrieval_path, RETRIEVAL_TRACE_FILE: trace_path},
    )
    return retrieval_path


def _template_for(cfg: RunConfig) -> PromptTemplate:
    if cfg.prompt.template_path is None:
        return default_template(max_units=cfg.prompt.max_words)
    template_path = Path(cfg.prompt.template_path)
    if not template_path.exists():
        raise ConfigError(f"prompt template does not exist: {template_path}")
    return PromptTemplate.from_file(template_path, max_units=cfg.prompt.max_words)


def _chunk_index(dataset: Dataset, cfg: RunConfig) -> dict[str, Chunk]:
    index: dict[str, Chunk] = {}
    for patient in dataset.patients:
        for chunk in chunk_patient(patient, cfg.chunking):
            index[chunk.chunk_id] = chunk
    return index


def _retrieved_for(record: dict, chunk_index: dict[str, Chunk]) -> list[ScoredChunk]:
    selected = []
    for row in sorted(record["chunks"], key=lambda r: r["rank"]):
        chunk = chunk_index.get(row["chunk_id"])
        if chunk is None:
            raise ArtifactError(
                f"retrieval references unknown chunk {row['chunk_id']!r}; "
                "re-run retrieve with the current chunking config"
            )
        selected.append(ScoredChunk(chunk=chunk, score=row["score"], per_criterion_scores=()))
    return selected


def run_prompts(cfg: RunConfig) -> Path:
    """Render the prompt for every labeled pair from the retrieval artifact."""
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    dataset = _load_dataset(cfg, out_dir)
    records = _read_jsonl(_require(out_dir / RETRIEVAL_FILE, "retrieve"))
    template = _template_for(cfg)
    chunk_index = _chunk_index(dataset, cfg)
    trials = {t.trial_id: t for t in dataset.trials}

    rows = []
    for record in records:
        trial = trials.get(record["trial_id"])
        if trial is None:
            raise ArtifactError(
                f"retrieval references unknown trial {record['trial_id']!r}; re-run retrieve"
            )
        prompt = build_prompt(trial, _retrieved_for(record, chunk_index), template)
        rows.append(
            {
                "patient_id": record["patient_id"],
                "trial_id": record["trial_id"],
                "text": prompt.text,
                "truncated": prompt.truncated,
                "parts": [
                    {
                        "section": part.section.value,
                        "source_id": part.source_id,
                        "start": part.start,
                        "end": part.end,
                    }
                    for part in prompt.parts
                ],
            }
        )
    prompts_path = out_dir / PROMPTS_FILE
    _write_jsonl(prompts_path, rows)
    _finish_stage(
        cfg,
        "prompts",
        started,
        inputs={
            DATASET_FILE: out_dir / DATASET_FILE,
            RETRIEVAL_FILE: out_dir / RETRIEVAL_FILE,
        },
        outputs={PROMPTS_FILE: prompts_path},
    )
    return prompts_path


def split_pairs(
    pairs: Sequence[LabeledPair], cfg: RunConfig
) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Partition pairs into train and test per the split spec.

    Ratio mode shuffles with the split seed and keeps corpus order inside
    each side. Explicit mode takes the listed pairs and rejects ids that do
    not exist; pairs in neither list are simply unused.
    """
    spec = cfg.split
    if spec.mode == SPLIT_EXPLICIT:
        by_key = {(p.label.patient_id, p.label.trial_or_criterion_id): p for p in pairs}
        missing = [key for key in list(spec.train) + list(spec.test) if key not in by_key]
        if missing:
            raise ConfigError(f"split lists reference unknown pairs: {missing[:3]}")
        return [by_key[k] for k in spec.train], [by_key[k] for k in spec.test]
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(pairs))
    n_train = int(round(spec.train_fraction * len(pairs)))
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return [pairs[i] for i in train_idx], [pairs[i] for i in test_idx]


def _pair_features(
    pairs: Sequence[LabeledPair],
    retrieval_records: dict[tuple[str, str], dict],
    chunk_index: dict[str, Chunk],
    cache: EmbeddingCache,
    cfg: RunConfig,
) -> np.ndarray:
    feature_rows = []
    for pair in pairs:
        key = (pair.label.patient_id, pair.label.trial_or_criterion_id)
        record = retrieval_records.get(key)
        if record is None:
            raise ArtifactError(
                f"no retrieval record for pair {key}; re-run retrieve on this corpus"
            )
        chunk_vecs = [
            _cached_vector(cache, cfg, chunk_index[row["chunk_id"]].text, row["chunk_id"])
            for row in sorted(record["chunks"], key=lambda r: r["rank"])
            if row["chunk_id"] in chunk_index
        ]
        if len(chunk_vecs) != len(record["chunks"]):
            raise ArtifactError(
                f"retrieval for pair {key} references chunks not reproducible from the "
                "current chunking config; re-run retrieve"
            )
        criteria_vecs = [
            _cached_vector(cache, cfg, c.text, f"criterion {c.criterion_id}")
            for c in pair.trial.criteria
        ]
        feature_rows.append(featurize(chunk_vecs, criteria_vecs))
    return np.stack(feature_rows)


def run_train(cfg: RunConfig) -> Path:
    """Fit the eligibility head on the train split and persist the model."""
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    dataset = _load_dataset(cfg, out_dir)
    records = _read_jsonl(_require(out_dir / RETRIEVAL_FILE, "retrieve"))
    cache = EmbeddingCache(_require(out_dir / CACHE_FILE, "embed"))
    retrieval_records = {
        (r["patient_id"], r["trial_or_criterion_id"]): r for r in records
    }
    chunk_index = _chunk_index(dataset, cfg)

    train_pairs, _ = split_pairs(resolve_pairs(dataset), cfg)
    if not train_pairs:
        raise ConfigError("training split is empty")
    features = _pair_features(train_pairs, retrieval_records, chunk_index, cache, cfg)
    labels = np.array([p.label.binary_label for p in train_pairs], dtype=np.float64)

    params, log = train(features, labels, cfg.training)

    model_path = out_dir / MODEL_FILE
    tmp = model_path.with_name(model_path.name + ".tmp")
    save_head(
        tmp,
        params,
        threshold=cfg.threshold,
        config_hash=config_hash_of(cfg.training),
        data_fingerprint=data_fingerprint_of(features, labels),
    )
    tmp.replace(model_path)

    log_rows: list[dict] = [{"event": "initial", "epoch": 0, "loss": log.initial_loss}]
    log_rows.extend(
        {"event": "epoch", "epoch": i + 1, "loss": loss}
        for i, loss in enumerate(log.epoch_losses)
    )
    log_rows.append(
        {
            "event": "summary",
            "epochs_run": log.epochs_run,
            "stopped_early": log.stopped_early,
            "train_pairs": len(train_pairs),
        }
    )
    log_path = out_dir / TRAINLOG_FILE
    _write_jsonl(log_path, log_rows)
    _finish_stage(
        cfg,
        "train",
        started,
        inputs={
            DATASET_FILE: out_dir / DATASET_FILE,
            RETRIEVAL_FILE: out_dir / RETRIEVAL_FILE,
            CACHE_FILE: out_dir / CACHE_FILE,
        },
        outputs={MODEL_FILE: model_path, TRAINLOG_FILE: log_path},
    )
    return model_path


def run_predict(cfg: RunConfig) -> Path:
    """Score the test split with the trained head."""
    started = time.perf_counter()
    out_dir = cfg.resolved_out_dir()
    dataset = _load_dataset(cfg, out_dir)
    records = _read_jsonl(_require(out_dir / RETRIEVAL_FILE, "retrieve"))
    cache = EmbeddingCache(_require(out_dir / CACHE_FILE, "embed"))
    artifact = load_head(_require(out_dir / MODEL_FILE, "train"))

    expected_dim = 4 * cfg.embedding.dim
    model_dim = artifact.params.weights.shape[0]
    if model_dim != expected_dim:
        raise ArtifactError(
            f"model feature dim {model_dim} does not match 4 x embedding dim = {expected_dim}; "
            "re-run train with the current embedding config"
        )

    retrieval_records = {
        (r["patient_id"], r["trial_or_criterion_id"]): r for r in records
    }
    chunk_index = _chunk_index(dataset, cfg)
    _, test_pairs = split_pairs(resolve_pairs(dataset), cfg)

    rows = []
    if test_pairs:
        features = _pair_features(test_pairs, retrieval_records, chunk_index, cache, cfg)
        for pair, feature_row in zip(test_pairs, features):
            probability = forward(artifact.params, feature_row)
            rows.append(
                {
                    "patient_id": pair.label.patient_id,
                    "trial_id": pair.trial.trial_id,
                    "trial_or_criterion_id": pair.label.trial_or_criterion_id,
                    "score": probability,
                    "decision": int(probability >= artifact.threshold),
                    "label": pair.label.binary_label,
                }
            )
    predictions_path = out_dir / PREDICTIONS_FILE
    _write_jsonl(predictions_path, rows)
    _finish_stage(
        cfg,
        "predict",
        started,
        inputs={
            DATASET_FILE: out_dir / DATASET_FILE,
            RETRIEVAL_FILE: out_dir / RETRIEVAL_FILE,
            CACHE_FILE: out_dir / CACHE_FILE,
            MODEL_FILE: out_dir / MODEL_FILE,
        },
        outputs={PREDICTIONS_FILE: predictions_path},
    )
    return predictions_path


def _build_report(cfg: RunConfig, rows: list[dict]) -> EvalReport:
    if not rows:
        raise ConfigError("test split is empty: no predictions to evaluate")
    scores = [r["score"] for r in rows]
    decisions = [r["decision"] for r in rows]
    labels = [r["label"] for r in rows]
    if cfg.scheme is LabelScheme.N2C2:
        groups: dict[str, tuple[list[int], list[int]]] = {}
        for row in rows:
            group = groups.setdefault(row["trial_id"], ([], []))
            group[0].append(row["decision"])
            group[1].append(row["label"])
        report = n2c2_overall(groups)
        try:
            report.auroc = auroc_metric(scores, labels)
        except UndefinedMetricError as exc:
            report.auroc_undefined_reason = str(exc)
        return report
    return evaluate_predictions(scores, decisions, labels)


def _render_report(report: EvalReport) -> str:
    lines = [
        f"pairs evaluated: {report.counts.total}",
        f"confusion (met as positive): tp={report.counts.tp} fp={report.counts.fp} "
        f"fn={report.counts.fn} tn={report.counts.tn}",
        f"met:      precision={report.met.precision:.4f} recall={report.met.recall:.4f} "
        f"f1={report.met.f1:.4f}",
        f"not met:  precision={report.not_met.precision:.4f} recall={report.not_met.recall:.4f} "
        f"f1={report.not_met.f1:.4f}",
        f"macro f1: {report.macro_f1:.4f}",
    ]
    if report.auroc is not None:
        lines.append(f"auroc: {report.auroc:.4f}")
    else:
        lines.append(f"auroc: undefined ({report.auroc_undefined_reason})")
    if report.macro_f1_mean_of_criteria is not None:
        lines.append(f"mean of per-criterion macro f1: {report.macro_f1_mean_of_criteria:.4f}")
    if report.per_criterion:
        lines.append("per-criterion:")
        width = max(len(cid) for cid in report.per_criterion)
        lines.append(f"  {'criterion'.ljust(width)}  pairs  macro_f1  f1_met  f1_not_met")
        for cid in sorted(report.per_criterion):
            r = report.per_criterion[cid]
            lines.append(
                f"  {cid.ljust(width)}  {str(r.counts.total).rjust(5)}  "
                f"{r.macro_f1:.4f}    {r.met.f1:.4f}  {r.not_met.f1:.4f}"
            )
    return "\n".join(lines) + "\n"


def _write_report(cfg: RunConfig, stage: str, started: float) -> tuple[Path, EvalReport]:
    out_dir = cfg.resolved_out_dir()
    predictions_path = _require(out_dir / PREDICTIONS_FILE, "predict")
    rows = _read_jsonl(predictions_path)
    report = _build_report(cfg, rows)
    payload = report.to_dict()
    # ROC curve data rides along for external plotting tools.
    try:
        points = roc_points([r["score"] for r in rows], [r["label"] for r in rows])
        payload["roc_points"] = [[fpr, tpr] for fpr, tpr in points]
    except UndefinedMetricError:
        payload["roc_points"] = None
    report_path = out_dir / REPORT_JSON_FILE
    atomic_write_text(report_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    text_path = out_dir / REPORT_TEXT_FILE
    atomic_write_text(text_path, _render_report(report))
    _finish_stage(
        cfg,
        stage,
        started,
        inputs={PREDICTIONS_FILE: predictions_path},
        outputs={REPORT_JSON_FILE: report_path, REPORT_TEXT_FILE: text_path},
    )
    return report_path, report


def run_evaluate(cfg: RunConfig) -> Path:
    """Compute the evaluation report from persisted predictions."""
    started = time.perf_counter()
    report_path, _ = _write_report(cfg, "evaluate", started)
    return report_path


def run_report(cfg: RunConfig) -> Path:
    """Re-derive the report from predictions and print the readable table.

    Produces byte-identical report files to evaluate over the same
    predictions.
    """
    started = time.perf_counter()
    report_path, report = _write_report(cfg, "report", started)
    print(_render_report(report), end="")
    return report_path
