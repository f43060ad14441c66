"""Deterministic synthetic corpora shaped like the n2c2 cohort benchmark.

Each of the screening criteria becomes its own single-criterion trial and
every patient is labeled on every criterion. Positive patients get evidence
sentences built from the criterion's keyword vocabulary planted into their
notes, so retrieval plus a trained head can genuinely separate the classes.
Negative pairs get no mention of the criterion's keywords.

Everything is driven by one seeded generator: the same arguments always
produce byte-identical corpora.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Iterator

from .corpus import write_records

# Criterion catalog: id, criterion sentence, evidence keyword pool. The
# keyword pools are pairwise disjoint and each criterion sentence is built
# from its own pool, so evidence for one criterion never fires for another
# and the criterion vector concentrates on the pool's hash buckets.
CRITERIA_CATALOG: list[tuple[str, str, list[str]]] = [
    (
        "recent-mi",
        "Recent myocardial infarction stemi with troponin rise or angioplasty",
        ["myocardial", "infarction", "troponin", "stemi", "angioplasty"],
    ),
    (
        "elevated-a1c",
        "Glycated hemoglobin a1c above target percent threshold",
        ["hemoglobin", "a1c", "glycated", "percent", "threshold"],
    ),
    (
        "renal-impairment",
        "Elevated creatinine with reduced renal clearance per deciliter",
        ["creatinine", "renal", "deciliter", "clearance", "elevated"],
    ),
    (
        "aspirin-use",
        "Takes aspirin 81 mg antiplatelet prophylaxis every day",
        ["aspirin", "antiplatelet", "81", "prophylaxis", "mg"],
    ),
    (
        "alcohol-misuse",
        "Alcohol misuse drinking episodes or withdrawal or intoxication",
        ["alcohol", "misuse", "withdrawal", "drinking", "intoxication"],
    ),
    (
        "drug-screen",
        "Illicit opioid or cocaine use with positive toxicology screen",
        ["toxicology", "opioid", "cocaine", "screen", "illicit"],
    ),
    (
        "advanced-cad",
        "Advanced coronary stenosis with angina and vessel ischemia",
        ["coronary", "ischemia", "angina", "stenosis", "vessel"],
    ),
    (
        "supplement-intake",
        "Takes herbal supplement vitamin or fish oil products",
        ["supplement", "vitamin", "herbal", "fish", "oil"],
    ),
    (
        "abdominal-surgery",
        "Prior abdominal laparotomy bowel resection or hernia repair",
        ["abdominal", "laparotomy", "bowel", "resection", "hernia"],
    ),
    (
        "diabetes-complication",
        "Diabetic retinopathy neuropathy nephropathy or foot ulceration",
        ["retinopathy", "neuropathy", "nephropathy", "ulceration", "foot"],
    ),
    (
        "speaks-english",
        "Fluent english speaker reads and converses without interpreter",
        ["english", "interpreter", "fluent", "reads", "converses"],
    ),
    (
        "decision-capacity",
        "Competent oriented and capable of independent decisions with full capacity",
        ["capacity", "competent", "oriented", "independent", "decisions"],
    ),
    (
        "ketoacidosis-episode",
        "Ketoacidosis with ketones anion gap metabolic acidosis",
        ["ketoacidosis", "ketones", "acidosis", "anion", "gap"],
    ),
]

_FILLER_SENTENCES = [
    "Vital signs stable and patient afebrile this morning.",
    "Patient resting comfortably in no acute distress.",
    "Medication list reviewed and reconciled with pharmacy.",
    "Follow up scheduled with primary care in two weeks.",
    "Lungs clear to auscultation bilaterally on exam.",
    "Heart rate regular without murmurs rubs or gallops.",
    "Abdomen soft nontender with normal bowel sounds.",
    "Skin warm and dry without rashes or lesions.",
    "Patient ambulating in hallway without assistance today.",
    "Diet advanced as tolerated with good appetite.",
    "Sleep reported as adequate overnight per nursing.",
    "Plan discussed with patient who voiced understanding.",
    "Labs pending this afternoon and will be reviewed.",
    "No new complaints voiced during rounds today.",
    "Physical therapy evaluation completed at bedside.",
    "Discharge planning initiated with case management.",
]

# Three pool keywords per sentence keeps evidence chunks close to the
# criterion vector even after hashing dilutes them with filler words.
_EVIDENCE_TEMPLATES = [
    "Note documents {a} {b} and {c} today.",
    "Assessment notable for {a} {b} and {c}.",
    "History significant for {a} {b} and {c}.",
    "Chart confirms {a} with {b} and {c}.",
]


def _evidence_sentence(rng: random.Random, keywords: list[str]) -> str:
    a, b, c = rng.sample(keywords, 3)
    template = rng.choice(_EVIDENCE_TEMPLATES)
    return template.format(a=a, b=b, c=c)


def synthetic_records(
    *,
    patients: int = 202,
    criteria: int = 13,
    seed: int = 0,
    positive_rate: float = 0.4,
    notes_per_patient: tuple[int, int] = (2, 4),
    filler_per_note: tuple[int, int] = (6, 12),
    evidence_per_positive: tuple[int, int] = (3, 5),
) -> Iterator[dict]:
    """Yield interchange records for a synthetic cohort corpus.

    Args:
        patients: cohort size.
        criteria: how many catalog criteria to use (at most the catalog size).
        seed: drives every random choice.
        positive_rate: chance each (patient, criterion) label is met.
        notes_per_patient: inclusive range of notes per patient.
        filler_per_note: inclusive range of filler sentences per note.
        evidence_per_positive: inclusive range of planted evidence sentences
            per met label.
    """
    if not 1 <= criteria <= len(CRITERIA_CATALOG):
        raise ValueError(f"criteria must be in [1, {len(CRITERIA_CATALOG)}]")
    rng = random.Random(seed)
    catalog = CRITERIA_CATALOG[:criteria]

    for criterion_id, text, _ in catalog:
        yield {"kind": "trial", "trial_id": criterion_id}
        yield {
            "kind": "criterion",
            "trial_id": criterion_id,
            "criterion_id": criterion_id,
            "criterion_kind": "inclusion",
            "text": text,
        }

    for p in range(patients):
        patient_id = f"synth-{p:04d}"
        yield {"kind": "patient", "patient_id": patient_id}

        n_notes = rng.randint(*notes_per_patient)
        notes: list[list[str]] = []
        for _ in range(n_notes):
            count = rng.randint(*filler_per_note)
            notes.append([rng.choice(_FILLER_SENTENCES) for _ in range(count)])

        labels: dict[str, int] = {}
        for criterion_id, _, keywords in catalog:
            met = rng.random() < positive_rate
            labels[criterion_id] = int(met)
            if met:
                for _ in range(rng.randint(*evidence_per_positive)):
                    sentence = _evidence_sentence(rng, keywords)
                    note = rng.randrange(n_notes)
                    position = rng.randint(0, len(notes[note]))
                    notes[note].insert(position, sentence)

        for i, sentences in enumerate(notes):
            yield {
                "kind": "note",
                "patient_id": patient_id,
                "note_id": f"note-{i}",
                "sequence_index": i,
                "text": " ".join(sentences),
            }
        for criterion_id, met in labels.items():
            yield {
                "kind": "label",
                "patient_id": patient_id,
                "trial_or_criterion_id": criterion_id,
                "raw_label": "met" if met else "not met",
            }


def generate_corpus(path: str | Path, **kwargs: object) -> Path:
    """Write a synthetic corpus to ``path`` and return it."""
    path = Path(path)
    write_records(synthetic_records(**kwargs), path)  # type: ignore[arg-type]
    return path
