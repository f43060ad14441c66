"""Data model and interchange format for patients, trials, and eligibility labels.

The interchange format is UTF-8 JSON Lines. Every line is one object with a
``kind`` field naming the record type:

    {"kind": "patient",   "patient_id": "p1"}
    {"kind": "note",      "patient_id": "p1", "note_id": "n1",
     "sequence_index": 0, "text": "..."}
    {"kind": "trial",     "trial_id": "t1"}
    {"kind": "criterion", "trial_id": "t1", "criterion_id": "c1",
     "criterion_kind": "inclusion", "text": "..."}
    {"kind": "label",     "patient_id": "p1", "trial_or_criterion_id": "t1",
     "raw_label": "met"}

The criterion record uses ``criterion_kind`` for inclusion versus exclusion
because ``kind`` is already taken by the record-type discriminator. Label
records may carry an explicit ``binary_label``; when present it must agree
with the scheme mapping. Records may appear in any order within a file.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CorpusFormatError, IntegrityError

logger = logging.getLogger(__name__)


class LabelScheme(str, Enum):
    """Source benchmark family, which fixes how raw labels binarize."""

    N2C2 = "n2c2"
    SIGIR = "sigir"
    TREC = "trec"


class CriterionKind(str, Enum):
    INCLUSION = "inclusion"
    EXCLUSION = "exclusion"


# Raw label vocabularies. Values are the binarized classes: 1 means the
# patient satisfies the criterion or trial, 0 means they do not. The sigir
# mapping folds "potential" into the positive class; the trec mapping folds
# excluded/ineligible into the positive class, because those judgments mark
# topical relevance rather than a failed screen. Callers may override.
DEFAULT_LABEL_MAPPINGS: dict[LabelScheme, dict[str, int]] = {
    LabelScheme.N2C2: {"met": 1, "not met": 0},
    LabelScheme.SIGIR: {"eligible": 1, "potential": 1, "irrelevant": 0},
    LabelScheme.TREC: {
        "eligible": 1,
        "excluded/ineligible": 1,
        "excluded": 1,
        "ineligible": 1,
        "irrelevant": 0,
    },
}


def binarize_label(
    raw_label: str,
    scheme: LabelScheme,
    mapping: Mapping[str, int] | None = None,
) -> int:
    """Map a raw benchmark judgment onto {0, 1}.

    Matching is case-insensitive and ignores surrounding whitespace. A raw
    label outside the scheme vocabulary raises ValueError.
    """
    table = DEFAULT_LABEL_MAPPINGS[LabelScheme(scheme)] if mapping is None else mapping
    key = raw_label.strip().lower()
    if key not in table:
        known = ", ".join(sorted(table))
        raise ValueError(
            f"raw label {raw_label!r} not in the {LabelScheme(scheme).value} vocabulary ({known})"
        )
    return int(table[key])


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    sequence_index: int
    text: str

    def __post_init__(self) -> None:
        if self.sequence_index < 0:
            raise ValueError(f"note {self.note_id!r}: sequence_index must be >= 0")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    notes: tuple[ClinicalNote, ...]


@dataclass(frozen=True)
class Criterion:
    criterion_id: str
    kind: CriterionKind
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"criterion {self.criterion_id!r}: text must be nonempty")


@dataclass(frozen=True)
class Trial:
    trial_id: str
    criteria: tuple[Criterion, ...]

    def __post_init__(self) -> None:
        if not self.criteria:
            raise ValueError(f"trial {self.trial_id!r}: criteria must be nonempty")


@dataclass(frozen=True)
class EligibilityLabel:
    patient_id: str
    trial_or_criterion_id: str
    raw_label: str
    binary_label: int


@dataclass(frozen=True)
class Dataset:
    """Immutable corpus: patients, trials, and one label per judged pair."""

    scheme: LabelScheme
    patients: tuple[PatientRecord, ...]
    trials: tuple[Trial, ...]
    labels: tuple[EligibilityLabel, ...]

    def patient(self, patient_id: str) -> PatientRecord:
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise KeyError(patient_id)

    def trial(self, trial_id: str) -> Trial:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise KeyError(trial_id)


@dataclass(frozen=True)
class LabeledPair:
    """A label joined with the patient and trial it refers to."""

    patient: PatientRecord
    trial: Trial
    label: EligibilityLabel


@dataclass(frozen=True)
class DatasetStats:
    patients: int
    trials: int
    criteria: int
    pairs: int
    class_balance: float | None


# Known fields per record kind: name -> required python type.
_REQUIRED_FIELDS: dict[str, dict[str, type]] = {
    "patient": {"patient_id": str},
    "note": {"patient_id": str, "note_id": str, "sequence_index": int, "text": str},
    "trial": {"trial_id": str},
    "criterion": {"trial_id": str, "criterion_id": str, "criterion_kind": str, "text": str},
    "label": {"patient_id": str, "trial_or_criterion_id": str, "raw_label": str},
}
_OPTIONAL_FIELDS: dict[str, dict[str, type]] = {
    "patient": {},
    "note": {},
    "trial": {},
    "criterion": {},
    "label": {"binary_label": int},
}


def _check_type(value: object, expected: type) -> bool:
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _parse_record(obj: object, *, path: str, line: int, strict: bool) -> dict:
    if not isinstance(obj, dict):
        raise CorpusFormatError("record is not a JSON object", path=path, line=line)
    kind = obj.get("kind")
    if kind not in _REQUIRED_FIELDS:
        known = ", ".join(sorted(_REQUIRED_FIELDS))
        raise CorpusFormatError(
            f"unknown record kind {kind!r} (expected one of: {known})", path=path, line=line
        )
    required = _REQUIRED_FIELDS[kind]
    optional = _OPTIONAL_FIELDS[kind]
    for name, expected in required.items():
        if name not in obj:
            raise CorpusFormatError(f"{kind} record is missing field {name!r}", path=path, line=line)
        if not _check_type(obj[name], expected):
            raise CorpusFormatError(
                f"{kind} record field {name!r} must be {expected.__name__}", path=path, line=line
            )
    for name, expected in optional.items():
        if name in obj and not _check_type(obj[name], expected):
            raise CorpusFormatError(
                f"{kind} record field {name!r} must be {expected.__name__}", path=path, line=line
            )
    unknown = set(obj) - set(required) - set(optional) - {"kind"}
    if unknown:
        names = ", ".join(sorted(unknown))
        if strict:
            raise CorpusFormatError(
                f"{kind} record has unknown fields: {names}", path=path, line=line
            )
        logger.warning("%s:%d: ignoring unknown fields on %s record: %s", path, line, kind, names)
    return obj


def _iter_records(path: Path, strict: bool) -> Iterator[tuple[dict, str, int]]:
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
        if not files:
            raise CorpusFormatError(f"no .jsonl files under {path}")
    else:
        files = [path]
    for file in files:
        with open(file, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    obj = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(
                        f"invalid JSON: {exc.msg}", path=str(file), line=line_no
                    ) from exc
                yield _parse_record(obj, path=str(file), line=line_no, strict=strict), str(file), line_no


def load_corpus(
    path: str | Path,
    scheme: LabelScheme | str,
    *,
    strict: bool = True,
    label_mapping: Mapping[str, int] | None = None,
) -> Dataset:
    """Load and validate a corpus from a JSONL file or a directory of them.

    Args:
        path: one ``.jsonl`` file, or a directory whose ``*.jsonl`` files are
            read in sorted name order.
        scheme: label scheme controlling binarization and scheme-specific
            structure checks.
        strict: reject records with unknown fields instead of warning.
        label_mapping: optional override of the scheme's raw-label vocabulary.

    Raises:
        CorpusFormatError: malformed record, reported with file and line.
        IntegrityError: duplicate ids, dangling references, duplicate pair
            labels, or a broken n2c2 grid.
    """
    scheme = LabelScheme(scheme)
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus path does not exist: {path}")

    patient_order: list[str] = []
    notes_by_patient: dict[str, list[ClinicalNote]] = {}
    trial_order: list[str] = []
    criteria_by_trial: dict[str, list[Criterion]] = {}
    labels: list[EligibilityLabel] = []
    seen_pairs: set[tuple[str, str]] = set()

    for obj, file, line_no in _iter_records(path, strict):
        kind = obj["kind"]
        if kind == "patient":
            pid = obj["patient_id"]
            if pid in patient_order:
                raise IntegrityError(f"duplicate patient id {pid!r}")
            patient_order.append(pid)
        elif kind == "note":
            try:
                note = ClinicalNote(
                    note_id=obj["note_id"],
                    sequence_index=obj["sequence_index"],
                    text=obj["text"],
                )
            except ValueError as exc:
                raise CorpusFormatError(str(exc), path=file, line=line_no) from exc
            notes_by_patient.setdefault(obj["patient_id"], []).append(note)
        elif kind == "trial":
            tid = obj["trial_id"]
            if tid in trial_order:
                raise IntegrityError(f"duplicate trial id {tid!r}")
            trial_order.append(tid)
        elif kind == "criterion":
            try:
                ckind = CriterionKind(obj["criterion_kind"])
            except ValueError as exc:
                raise CorpusFormatError(
                    f"criterion_kind must be 'inclusion' or 'exclusion', got {obj['criterion_kind']!r}",
                    path=file,
                    line=line_no,
                ) from exc
            try:
                criterion = Criterion(criterion_id=obj["criterion_id"], kind=ckind, text=obj["text"])
            except ValueError as exc:
                raise CorpusFormatError(str(exc), path=file, line=line_no) from exc
            criteria_by_trial.setdefault(obj["trial_id"], []).append(criterion)
        else:  # label
            try:
                binary = binarize_label(obj["raw_label"], scheme, label_mapping)
            except ValueError as exc:
                raise CorpusFormatError(str(exc), path=file, line=line_no) from exc
            if "binary_label" in obj and obj["binary_label"] != binary:
                raise CorpusFormatError(
                    f"binary_label {obj['binary_label']} contradicts raw label "
                    f"{obj['raw_label']!r} under scheme {scheme.value}",
                    path=file,
                    line=line_no,
                )
            label = EligibilityLabel(
                patient_id=obj["patient_id"],
                trial_or_criterion_id=obj["trial_or_criterion_id"],
                raw_label=obj["raw_label"],
                binary_label=binary,
            )
            pair = (label.patient_id, label.trial_or_criterion_id)
            if pair in seen_pairs:
                raise IntegrityError(
                    f"duplicate label for pair ({label.patient_id!r}, {label.trial_or_criterion_id!r})"
                )
            seen_pairs.add(pair)
            labels.append(label)

    # Records may arrive in any order, so dangling references surface here.
    for pid in notes_by_patient:
        if pid not in patient_order:
            note_ids = ", ".join(repr(n.note_id) for n in notes_by_patient[pid][:3])
            raise IntegrityError(f"notes ({note_ids}) reference unknown patient {pid!r}")
    for tid in criteria_by_trial:
        if tid not in trial_order:
            crit_ids = ", ".join(repr(c.criterion_id) for c in criteria_by_trial[tid][:3])
            raise IntegrityError(f"criteria ({crit_ids}) reference unknown trial {tid!r}")

    # Assemble patients with notes ordered by sequence_index.
    patients: list[PatientRecord] = []
    for pid in patient_order:
        notes = notes_by_patient.get(pid, [])
        note_ids = [n.note_id for n in notes]
        if len(note_ids) != len(set(note_ids)):
            raise IntegrityError(f"patient {pid!r} has duplicate note ids")
        seq = [n.sequence_index for n in notes]
        if len(seq) != len(set(seq)):
            raise IntegrityError(f"patient {pid!r} has duplicate note sequence_index values")
        patients.append(PatientRecord(pid, tuple(sorted(notes, key=lambda n: n.sequence_index))))

    trials: list[Trial] = []
    for tid in trial_order:
        criteria = criteria_by_trial.get(tid, [])
        crit_ids = [c.criterion_id for c in criteria]
        if len(crit_ids) != len(set(crit_ids)):
            raise IntegrityError(f"trial {tid!r} has duplicate criterion ids")
        if not criteria:
            raise IntegrityError(f"trial {tid!r} has no criteria")
        trials.append(Trial(tid, tuple(criteria)))

    dataset = Dataset(
        scheme=scheme,
        patients=tuple(patients),
        trials=tuple(trials),
        labels=tuple(labels),
    )
    _validate_references(dataset)
    return dataset


def _resolve_trial_index(dataset: Dataset) -> dict[str, Trial]:
    """Map every referencable id (trial or criterion) to its trial.

    A criterion id shared by two different trials stays ambiguous and is
    rejected only if a label actually uses it.
    """
    index: dict[str, Trial] = {t.trial_id: t for t in dataset.trials}
    ambiguous: set[str] = set()
    for trial in dataset.trials:
        for criterion in trial.criteria:
            cid = criterion.criterion_id
            if cid in index and index[cid].trial_id != trial.trial_id:
                ambiguous.add(cid)
            else:
                index.setdefault(cid, trial)
    for cid in ambiguous:
        index.pop(cid, None)
    return index


def _validate_references(dataset: Dataset) -> None:
    patient_ids = {p.patient_id for p in dataset.patients}
    trial_index = _resolve_trial_index(dataset)

    for label in dataset.labels:
        if label.patient_id not in patient_ids:
            raise IntegrityError(f"label references unknown patient {label.patient_id!r}")
        if label.trial_or_criterion_id not in trial_index:
            raise IntegrityError(
                f"label references unknown trial or criterion {label.trial_or_criterion_id!r}"
            )

    labeled_patients = {label.patient_id for label in dataset.labels}
    for patient in dataset.patients:
        if patient.patient_id in labeled_patients and not patient.notes:
            raise IntegrityError(
                f"patient {patient.patient_id!r} is labeled but has no notes"
            )

    if dataset.scheme is LabelScheme.N2C2:
        _validate_n2c2_grid(dataset, trial_index)


def _validate_n2c2_grid(dataset: Dataset, trial_index: dict[str, Trial]) -> None:
    """The n2c2 scheme models each criterion as its own single-criterion trial
    and every patient is judged on every criterion exactly once."""
    for trial in dataset.trials:
        if len(trial.criteria) != 1:
            raise IntegrityError(
                f"n2c2 trial {trial.trial_id!r} must hold exactly one criterion, "
                f"found {len(trial.criteria)}"
            )
    expected = len(dataset.patients) * len(dataset.trials)
    if len(dataset.labels) != expected:
        raise IntegrityError(
            f"n2c2 corpus must label every patient on every criterion: expected "
            f"{len(dataset.patients)} x {len(dataset.trials)} = {expected} labels, "
            f"found {len(dataset.labels)}"
        )
    judged: set[tuple[str, str]] = set()
    for label in dataset.labels:
        trial = trial_index[label.trial_or_criterion_id]
        key = (label.patient_id, trial.trial_id)
        if key in judged:
            raise IntegrityError(
                f"n2c2 pair ({label.patient_id!r}, {trial.trial_id!r}) is labeled twice"
            )
        judged.add(key)


def resolve_pairs(dataset: Dataset) -> list[LabeledPair]:
    """Join each label with its patient and trial, preserving label order."""
    patients = {p.patient_id: p for p in dataset.patients}
    trial_index = _resolve_trial_index(dataset)
    return [
        LabeledPair(
            patient=patients[label.patient_id],
            trial=trial_index[label.trial_or_criterion_id],
            label=label,
        )
        for label in dataset.labels
    ]


def dataset_stats(dataset: Dataset) -> DatasetStats:
    n_criteria = sum(len(t.criteria) for t in dataset.trials)
    if dataset.labels:
        balance = sum(l.binary_label for l in dataset.labels) / len(dataset.labels)
    else:
        balance = None
    return DatasetStats(
        patients=len(dataset.patients),
        trials=len(dataset.trials),
        criteria=n_criteria,
        pairs=len(dataset.labels),
        class_balance=balance,
    )


def corpus_records(dataset: Dataset) -> Iterator[dict]:
    """Yield the dataset as interchange records: patients with their notes,
    then trials with their criteria, then labels."""
    for patient in dataset.patients:
        yield {"kind": "patient", "patient_id": patient.patient_id}
        for note in patient.notes:
            yield {
                "kind": "note",
                "patient_id": patient.patient_id,
                "note_id": note.note_id,
                "sequence_index": note.sequence_index,
                "text": note.text,
            }
    for trial in dataset.trials:
        yield {"kind": "trial", "trial_id": trial.trial_id}
        for criterion in trial.criteria:
            yield {
                "kind": "criterion",
                "trial_id": trial.trial_id,
                "criterion_id": criterion.criterion_id,
                "criterion_kind": criterion.kind.value,
                "text": criterion.text,
            }
    for label in dataset.labels:
        yield {
            "kind": "label",
            "patient_id": label.patient_id,
            "trial_or_criterion_id": label.trial_or_criterion_id,
            "raw_label": label.raw_label,
            "binary_label": label.binary_label,
        }


def dump_corpus(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset in the interchange format. Loading the result yields
    a dataset equal to the input."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in corpus_records(dataset):
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def write_records(records: Iterable[dict], path: str | Path) -> None:
    """Write raw interchange records without validation."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
