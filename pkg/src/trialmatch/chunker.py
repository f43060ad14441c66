"""Sliding-window chunking of clinical notes into word spans."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import ClinicalNote, PatientRecord


@dataclass(frozen=True)
class ChunkPolicy:
    """Window geometry for note chunking.

    Units are whitespace-delimited words. The stride between consecutive
    window starts is ``max_units - overlap_units``.
    """

    max_units: int = 256
    overlap_units: int = 32
    unit: str = "word"

    def __post_init__(self) -> None:
        if self.unit != "word":
            raise ValueError(f"unsupported chunk unit {self.unit!r}")
        if self.max_units <= 0:
            raise ValueError("max_units must be > 0")
        if not 0 <= self.overlap_units < self.max_units:
            raise ValueError("overlap_units must satisfy 0 <= overlap < max_units")

    @property
    def stride(self) -> int:
        return self.max_units - self.overlap_units


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    patient_id: str
    note_id: str
    start_unit: int
    unit_count: int
    text: str


def make_chunk_id(patient_id: str, note_id: str, start_unit: int) -> str:
    return f"{patient_id}/{note_id}@{start_unit}"


def chunk_note(note: ClinicalNote, policy: ChunkPolicy, patient_id: str = "") -> list[Chunk]:
    """Split one note into overlapping word windows.

    A note that fits inside a single window yields exactly one chunk. Longer
    notes yield a chunk at every multiple of the stride below the word count,
    so the final chunk may be shorter than ``max_units``. Every word of the
    note is covered and chunk text is the window's words joined by single
    spaces. An empty or whitespace-only note yields no chunks.
    """
    words = note.text.split()
    n = len(words)
    if n == 0:
        return []
    if n <= policy.max_units:
        starts = [0]
    else:
        starts = list(range(0, n, policy.stride))
    chunks = []
    for start in starts:
        end = min(start + policy.max_units, n)
        chunks.append(
            Chunk(
                chunk_id=make_chunk_id(patient_id, note.note_id, start),
                patient_id=patient_id,
                note_id=note.note_id,
                start_unit=start,
                unit_count=end - start,
                text=" ".join(words[start:end]),
            )
        )
    return chunks


def chunk_patient(patient: PatientRecord, policy: ChunkPolicy) -> list[Chunk]:
    """Chunk every note of a patient, in note sequence order."""
    out: list[Chunk] = []
    for note in patient.notes:
        out.extend(chunk_note(note, policy, patient.patient_id))
    return out
