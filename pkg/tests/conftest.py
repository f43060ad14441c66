"""Shared fixture helpers: tiny corpora written by hand, record builders."""

import json

import pytest


def patient(patient_id, notes=None):
    records = [{"kind": "patient", "patient_id": patient_id}]
    for i, text in enumerate(notes or []):
        records.append(
            {
                "kind": "note",
                "patient_id": patient_id,
                "note_id": f"n{i}",
                "sequence_index": i,
                "text": text,
            }
        )
    return records


def trial(trial_id, criteria):
    """criteria: list of (criterion_id, kind, text)."""
    records = [{"kind": "trial", "trial_id": trial_id}]
    for cid, kind, text in criteria:
        records.append(
            {
                "kind": "criterion",
                "trial_id": trial_id,
                "criterion_id": cid,
                "criterion_kind": kind,
                "text": text,
            }
        )
    return records


def label(patient_id, target_id, raw_label, **extra):
    record = {
        "kind": "label",
        "patient_id": patient_id,
        "trial_or_criterion_id": target_id,
        "raw_label": raw_label,
    }
    record.update(extra)
    return record


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def tiny_corpus(tmp_path):
    """Two patients, one two-criterion trial, two labels."""
    records = (
        patient("p1", ["alpha beta gamma delta", "second note text here"])
        + patient("p2", ["one two three"])
        + trial(
            "t1",
            [
                ("c1", "inclusion", "has alpha condition"),
                ("c2", "exclusion", "taking beta drug"),
            ],
        )
        + [label("p1", "t1", "eligible"), label("p2", "t1", "irrelevant")]
    )
    return write_jsonl(tmp_path / "corpus.jsonl", records)
