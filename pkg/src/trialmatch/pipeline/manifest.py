"""Run manifest: per-stage artifact fingerprints and timings.

``manifest.json`` in the output directory records, for every stage that has
run, the config hash it ran under, sha256 fingerprints of the artifacts it
read and wrote, the artifact format versions, and wall-clock seconds. Two
runs of a deterministic stage over the same inputs produce the same
fingerprints; only the timings differ.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Mapping

# Format versions for every artifact the pipeline writes. Bump on any
# incompatible layout change.
ARTIFACT_VERSIONS = {
    "dataset.jsonl": "1",
    "stats.json": "1",
    "embeddings.bin": "1",
    "retrieval.jsonl": "1",
    "retrieval_trace.jsonl": "1",
    "prompts.jsonl": "1",
    "model.bin": "1",
    "training_log.jsonl": "1",
    "predictions.jsonl": "1",
    "report.json": "1",
    "report.txt": "1",
}

MANIFEST_FILE = "manifest.json"


def file_fingerprint(path: str | Path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest}"


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file and rename, so failures leave no partial artifact."""
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST_FILE
    if not path.exists():
        return {"artifact_versions": ARTIFACT_VERSIONS, "stages": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def record_stage(
    out_dir: Path,
    stage: str,
    *,
    config_hash: str,
    inputs: Mapping[str, Path],
    outputs: Mapping[str, Path],
    elapsed_s: float,
) -> None:
    manifest = load_manifest(out_dir)
    manifest["artifact_versions"] = ARTIFACT_VERSIONS
    manifest["stages"][stage] = {
        "config_hash": config_hash,
        "inputs": {name: file_fingerprint(p) for name, p in sorted(inputs.items())},
        "outputs": {name: file_fingerprint(p) for name, p in sorted(outputs.items())},
        "wall_clock_s": round(elapsed_s, 6),
    }
    atomic_write_text(
        out_dir / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
