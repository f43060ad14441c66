"""Batch pipeline: config, stages, manifest, and the CLI."""

from .config import (
    CliOverrides,
    PromptSettings,
    RunConfig,
    SplitSpec,
    apply_overrides,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
)
from .stages import (
    run_embed,
    run_evaluate,
    run_ingest,
    run_predict,
    run_prompts,
    run_report,
    run_retrieve,
    run_train,
    split_pairs,
)

__all__ = [
    "CliOverrides",
    "PromptSettings",
    "RunConfig",
    "SplitSpec",
    "apply_overrides",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "load_config",
    "run_embed",
    "run_evaluate",
    "run_ingest",
    "run_predict",
    "run_prompts",
    "run_report",
    "run_retrieve",
    "run_train",
    "split_pairs",
]
