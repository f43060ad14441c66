"""Batch command-line interface.

    trialmatch <stage> --config run.json [--out DIR] [--seed N] [flags]

Stages: ingest, embed, retrieve, prompts, train, predict, evaluate, report.
Flags override the config file. Logs are JSON lines on stderr. Exit codes
are one per error class:

    0 success
    1 unexpected error
    2 usage or configuration error
    3 malformed corpus record
    4 corpus referential integrity violation
    5 missing or incompatible artifact
    6 embedding service failure
    7 embedding cache corruption
    8 prompt over budget with nothing left to drop
    9 metric undefined for the given predictions
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from typing import Callable, Sequence

from ..errors import (
    ArtifactError,
    CacheError,
    ConfigError,
    CorpusFormatError,
    EmbeddingServiceError,
    IntegrityError,
    PromptBudgetError,
    TrialMatchError,
    UndefinedMetricError,
)
from . import stages
from .config import CliOverrides, RunConfig, apply_overrides, load_config

_EXIT_CODES: list[tuple[type[TrialMatchError], int]] = [
    (ConfigError, 2),
    (CorpusFormatError, 3),
    (IntegrityError, 4),
    (ArtifactError, 5),
    (EmbeddingServiceError, 6),
    (CacheError, 7),
    (PromptBudgetError, 8),
    (UndefinedMetricError, 9),
]

_STAGES: dict[str, tuple[Callable[[RunConfig], object], str]] = {
    "ingest": (stages.run_ingest, "validate the corpus and persist the canonical dataset"),
    "embed": (stages.run_embed, "embed all chunk and criterion texts into the cache"),
    "retrieve": (stages.run_retrieve, "rank and persist the top-k chunks per pair"),
    "prompts": (stages.run_prompts, "render prompts with provenance for every pair"),
    "train": (stages.run_train, "fit the eligibility head on the train split"),
    "predict": (stages.run_predict, "score the test split with the trained head"),
    "evaluate": (stages.run_evaluate, "compute the evaluation report from predictions"),
    "report": (stages.run_report, "re-derive the report and print the readable table"),
}


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, sort_keys=True)


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.INFO)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run config JSON file")
    common.add_argument("--out", help="output directory, overrides config out_dir")
    common.add_argument(
        "--seed", type=int, help="override both the training seed and the split seed"
    )
    common.add_argument("--chunk-max-words", type=int, help="chunk window size in words")
    common.add_argument("--chunk-overlap-words", type=int, help="chunk overlap in words")
    common.add_argument("--top-k", type=int, help="retrieved chunks per pair")
    common.add_argument("--prompt-template", help="path to a prompt template file")
    common.add_argument("--lr", type=float, help="learning rate")
    common.add_argument("--epochs", type=int, help="training epochs")
    common.add_argument("--batch-size", type=int, help="training minibatch size")
    common.add_argument(
        "--plain-sgd",
        action="store_const",
        const=True,
        default=None,
        help="use the plain learning-rate update instead of Adam",
    )

    parser = argparse.ArgumentParser(
        prog="trialmatch",
        description="patient-trial matching pipeline",
    )
    subparsers = parser.add_subparsers(dest="stage", required=True)
    for name, (_, help_text) in _STAGES.items():
        subparsers.add_parser(name, parents=[common], help=help_text)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    overrides = CliOverrides(
        out_dir=args.out,
        seed=args.seed,
        chunk_max_words=args.chunk_max_words,
        chunk_overlap_words=args.chunk_overlap_words,
        top_k=args.top_k,
        prompt_template=args.prompt_template,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        plain_sgd=args.plain_sgd,
    )
    return apply_overrides(cfg, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    logger = logging.getLogger("trialmatch.cli")
    started = time.perf_counter()
    try:
        cfg = _config_from_args(args)
        _STAGES[args.stage][0](cfg)
    except TrialMatchError as exc:
        code = next(
            (code for klass, code in _EXIT_CODES if isinstance(exc, klass)), 1
        )
        logger.error(
            str(exc),
            extra={"fields": {"stage": args.stage, "error_class": type(exc).__name__, "exit_code": code}},
        )
        return code
    except Exception as exc:  # pragma: no cover - defensive
        logger.error(
            f"unexpected error: {exc}",
            extra={"fields": {"stage": args.stage, "error_class": type(exc).__name__, "exit_code": 1}},
        )
        return 1
    logger.info(
        "done",
        extra={
            "fields": {
                "stage": args.stage,
                "elapsed_s": round(time.perf_counter() - started, 3),
                "exit_code": 0,
            }
        },
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
