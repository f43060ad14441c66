"""Evaluation metrics and reports.

Conventions: decisions and labels are 0/1 integers with 1 the met (positive)
class. Ratios with a 0/0 form are defined as 0. Macro-F1 is the unweighted
mean of the F1 treating 1 as positive and the F1 treating 0 as positive.
AUROC uses the rank formulation with ties credited one half, which equals
counting concordant score pairs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def flipped(self) -> "ConfusionCounts":
        """Counts with the positive class redefined as 0."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def add(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


def _validate_binary(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d sequence")
    if not np.all(np.isin(arr, (0, 1))):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def confusion(decisions: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    d = _validate_binary(decisions, "decisions")
    y = _validate_binary(labels, "labels")
    if d.shape != y.shape:
        raise ValueError(f"length mismatch: {d.shape[0]} decisions, {y.shape[0]} labels")
    return ConfusionCounts(
        tp=int(np.sum((d == 1) & (y == 1))),
        fp=int(np.sum((d == 1) & (y == 0))),
        fn=int(np.sum((d == 0) & (y == 1))),
        tn=int(np.sum((d == 0) & (y == 0))),
    )


def _ratio(num: int, den: int) -> float:
    return 0.0 if den == 0 else num / den


def precision_recall_f1(counts: ConfusionCounts) -> tuple[float, float, float]:
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def macro_f1(decisions: Sequence[int], labels: Sequence[int]) -> float:
    """Mean of the met-class F1 and the not-met-class F1."""
    counts = confusion(decisions, labels)
    return (precision_recall_f1(counts)[2] + precision_recall_f1(counts.flipped())[2]) / 2.0


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outscores a random negative, ties at 0.5.

    Computed from average ranks after one sort, which is exactly the pairwise
    count U / (n_pos * n_neg). Raises UndefinedMetricError when only one
    class is present, since the pair set is then empty.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _validate_binary(labels, "labels")
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.shape} scores, {y.shape} labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC is undefined for single-class labels ({n_pos} positive, {n_neg} negative)"
        )
    n = s.shape[0]
    order = np.argsort(s, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[order[j + 1]] == s[order[i]]:
            j += 1
        # 1-based average rank over the tie group [i, j].
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = float(np.sum(ranks[y == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float]]:
    """ROC curve as (false positive rate, true positive rate) points.

    One point per distinct score, thresholds descending, bracketed by (0, 0)
    and ending at (1, 1). Tied scores collapse into a single point. This is
    plot data for external tools; nothing here draws.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _validate_binary(labels, "labels")
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError(f"length mismatch: {s.shape} scores, {y.shape} labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC is undefined for single-class labels ({n_pos} positive, {n_neg} negative)"
        )
    n = s.shape[0]
    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[order[j + 1]] == s[order[i]]:
            j += 1
        group = order[i : j + 1]
        tp += int(np.sum(y[group] == 1))
        fp += int(np.sum(y[group] == 0))
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class CriterionReport:
    counts: ConfusionCounts
    met: ClassMetrics
    not_met: ClassMetrics
    macro_f1: float


@dataclass
class EvalReport:
    """Headline numbers plus the optional per-criterion breakdown.

    ``auroc`` is None when undefined (single-class), with the reason spelled
    out. For grouped evaluation the headline per-class numbers come from the
    micro-pooled confusion counts; ``macro_f1_mean_of_criteria`` additionally
    reports the mean of the per-criterion macro-F1 values.
    """

    counts: ConfusionCounts
    met: ClassMetrics
    not_met: ClassMetrics
    macro_f1: float
    auroc: float | None = None
    auroc_undefined_reason: str | None = None
    per_criterion: dict[str, CriterionReport] = field(default_factory=dict)
    macro_f1_mean_of_criteria: float | None = None

    def to_dict(self) -> dict:
        def class_dict(m: ClassMetrics) -> dict:
            return {"precision": m.precision, "recall": m.recall, "f1": m.f1}

        def counts_dict(c: ConfusionCounts) -> dict:
            return {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}

        return {
            "counts": counts_dict(self.counts),
            "met": class_dict(self.met),
            "not_met": class_dict(self.not_met),
            "macro_f1": self.macro_f1,
            "auroc": self.auroc,
            "auroc_undefined_reason": self.auroc_undefined_reason,
            "macro_f1_mean_of_criteria": self.macro_f1_mean_of_criteria,
            "per_criterion": {
                cid: {
                    "counts": counts_dict(r.counts),
                    "met": class_dict(r.met),
                    "not_met": class_dict(r.not_met),
                    "macro_f1": r.macro_f1,
                }
                for cid, r in sorted(self.per_criterion.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        def class_metrics(d: dict) -> ClassMetrics:
            return ClassMetrics(precision=d["precision"], recall=d["recall"], f1=d["f1"])

        def counts(d: dict) -> ConfusionCounts:
            return ConfusionCounts(tp=d["tp"], fp=d["fp"], fn=d["fn"], tn=d["tn"])

        return cls(
            counts=counts(data["counts"]),
            met=class_metrics(data["met"]),
            not_met=class_metrics(data["not_met"]),
            macro_f1=data["macro_f1"],
            auroc=data["auroc"],
            auroc_undefined_reason=data["auroc_undefined_reason"],
            macro_f1_mean_of_criteria=data["macro_f1_mean_of_criteria"],
            per_criterion={
                cid: CriterionReport(
                    counts=counts(r["counts"]),
                    met=class_metrics(r["met"]),
                    not_met=class_metrics(r["not_met"]),
                    macro_f1=r["macro_f1"],
                )
                for cid, r in data["per_criterion"].items()
            },
        )


def _report_from_counts(c: ConfusionCounts) -> tuple[ClassMetrics, ClassMetrics, float]:
    met = ClassMetrics(*precision_recall_f1(c))
    not_met = ClassMetrics(*precision_recall_f1(c.flipped()))
    return met, not_met, (met.f1 + not_met.f1) / 2.0


def evaluate_predictions(
    scores: Sequence[float] | None,
    decisions: Sequence[int],
    labels: Sequence[int],
) -> EvalReport:
    """Build a report from one flat prediction set.

    Without scores, or with single-class labels, the AUROC slot stays None
    and the reason is recorded.
    """
    counts = confusion(decisions, labels)
    met, not_met, macro = _report_from_counts(counts)
    report = EvalReport(counts=counts, met=met, not_met=not_met, macro_f1=macro)
    if scores is None:
        report.auroc_undefined_reason = "no scores provided"
    else:
        try:
            report.auroc = auroc(scores, labels)
        except UndefinedMetricError as exc:
            report.auroc_undefined_reason = str(exc)
    return report


def n2c2_overall(
    groups: Mapping[str, tuple[Sequence[int], Sequence[int]]],
) -> EvalReport:
    """Aggregate per-criterion decisions into the benchmark-style report.

    ``groups`` maps criterion id to (decisions, labels). The headline
    per-class F1 and macro-F1 come from pooling every pair's confusion
    counts; the per-criterion breakdown and the mean of per-criterion
    macro-F1 values ride along. An empty mapping or an empty group is an
    error.
    """
    if not groups:
        raise ValueError("n2c2_overall requires at least one criterion group")
    pooled = ConfusionCounts(0, 0, 0, 0)
    per_criterion: dict[str, CriterionReport] = {}
    for criterion_id, (decisions, labels) in groups.items():
        if len(decisions) == 0 or len(labels) == 0:
            raise ValueError(f"criterion group {criterion_id!r} is empty")
        counts = confusion(decisions, labels)
        met, not_met, macro = _report_from_counts(counts)
        per_criterion[criterion_id] = CriterionReport(
            counts=counts, met=met, not_met=not_met, macro_f1=macro
        )
        pooled = pooled.add(counts)
    met, not_met, macro = _report_from_counts(pooled)
    mean_of_criteria = sum(r.macro_f1 for r in per_criterion.values()) / len(per_criterion)
    return EvalReport(
        counts=pooled,
        met=met,
        not_met=not_met,
        macro_f1=macro,
        per_criterion=per_criterion,
        macro_f1_mean_of_criteria=mean_of_criteria,
    )


def average_auroc(values: Sequence[float]) -> float:
    """Unweighted mean AUROC across dataset reports."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("average_auroc requires at least one defined AUROC value")
    return sum(vals) / len(vals)
