"""Patient-trial matching: chunked-note retrieval, prompts, and a trainable
eligibility head with a full evaluation harness."""

__version__ = "0.1.0"

from .chunker import Chunk, ChunkPolicy, chunk_note, chunk_patient
from .classifier import (
    HeadParams,
    Prediction,
    TrainConfig,
    bce_loss,
    featurize,
    forward,
    gradient,
    predict,
    train,
)
from .corpus import (
    ClinicalNote,
    Criterion,
    CriterionKind,
    Dataset,
    EligibilityLabel,
    LabelScheme,
    PatientRecord,
    Trial,
    binarize_label,
    dataset_stats,
    dump_corpus,
    load_corpus,
    resolve_pairs,
)
from .embedding import EmbedderConfig, EmbeddingCache, cache_get_or_embed, embed_text
from .metrics import (
    ConfusionCounts,
    EvalReport,
    auroc,
    average_auroc,
    confusion,
    evaluate_predictions,
    macro_f1,
    n2c2_overall,
    precision_recall_f1,
    roc_points,
)
from .prompt import Prompt, PromptTemplate, build_prompt, default_template
from .retrieval import RetrievalConfig, cosine, score_chunk, top_k

__all__ = [
    "Chunk",
    "ChunkPolicy",
    "ClinicalNote",
    "ConfusionCounts",
    "Criterion",
    "CriterionKind",
    "Dataset",
    "EligibilityLabel",
    "EmbedderConfig",
    "EmbeddingCache",
    "EvalReport",
    "HeadParams",
    "LabelScheme",
    "PatientRecord",
    "Prediction",
    "Prompt",
    "PromptTemplate",
    "RetrievalConfig",
    "TrainConfig",
    "Trial",
    "auroc",
    "average_auroc",
    "bce_loss",
    "binarize_label",
    "build_prompt",
    "cache_get_or_embed",
    "chunk_note",
    "chunk_patient",
    "confusion",
    "cosine",
    "dataset_stats",
    "default_template",
    "dump_corpus",
    "embed_text",
    "evaluate_predictions",
    "featurize",
    "forward",
    "gradient",
    "load_corpus",
    "macro_f1",
    "n2c2_overall",
    "precision_recall_f1",
    "roc_points",
    "predict",
    "resolve_pairs",
    "score_chunk",
    "top_k",
    "train",
]
