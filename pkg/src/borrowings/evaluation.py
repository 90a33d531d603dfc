"""Strict exact-match span evaluation.

A predicted span counts for a label only when a gold span with the
identical (start, end, label) triple exists in the same headline;
partial overlaps score nothing.  The BORROWING aggregate repeats the
match ignoring the label, so a span with correct boundaries but the
wrong label still counts there.  In without-OTHER mode all OTHER spans
are removed from both sides before counting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import LABELS, Corpus
from .errors import ValidationError
from .rounding import fmt2

BORROWING = "BORROWING"


@dataclass(frozen=True)
class LabelScore:
    """Exact-match counts and derived percentages for one row."""

    label: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        total = self.tp + self.fp
        return 100.0 * self.tp / total if total else 0.0

    @property
    def recall(self) -> float:
        total = self.tp + self.fn
        return 100.0 * self.tp / total if total else 0.0

    @property
    def f1(self) -> float:
        return f1(self.precision, self.recall)


def f1(p: float, r: float) -> float:
    """Harmonic mean of two percentages; 0 when both are 0."""
    return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Per-label scores plus the label-agnostic BORROWING aggregate."""

    ignore_other: bool
    scores: tuple[LabelScore, ...]
    borrowing: LabelScore

    def score(self, label: str) -> LabelScore:
        if label == BORROWING:
            return self.borrowing
        for row in self.scores:
            if row.label == label:
                return row
        raise ValidationError(f"no score for label {label!r}")

    @property
    def mode(self) -> str:
        return "-OTHER" if self.ignore_other else "+OTHER"


def evaluate(gold: Corpus, predictions: Corpus, ignore_other: bool = False) -> EvalReport:
    """Score predictions against gold annotations headline by headline.

    Both corpora must cover exactly the same headline ids; a prediction
    for an unknown id and a gold headline without a prediction are both
    errors.
    """
    gold_by_id = {h.id: h for h in gold}
    pred_ids = set()
    for headline in predictions:
        if headline.id not in gold_by_id:
            raise ValidationError(
                f"prediction for unknown headline id {headline.id!r}"
            )
        pred_ids.add(headline.id)
    missing = [h.id for h in gold if h.id not in pred_ids]
    if missing:
        raise ValidationError(
            f"no prediction for headline id {missing[0]!r} "
            f"({len(missing)} missing in total)"
        )
    labels = ("ENG",) if ignore_other else LABELS
    tp = {label: 0 for label in (*labels, BORROWING)}
    fp = dict(tp)
    fn = dict(tp)
    for headline in predictions:
        gold_spans = {
            (s.start, s.end, s.label) for s in gold_by_id[headline.id].spans
        }
        pred_spans = {(s.start, s.end, s.label) for s in headline.spans}
        if ignore_other:
            gold_spans = {s for s in gold_spans if s[2] != "OTHER"}
            pred_spans = {s for s in pred_spans if s[2] != "OTHER"}
        for label in labels:
            gold_l = {s for s in gold_spans if s[2] == label}
            pred_l = {s for s in pred_spans if s[2] == label}
            tp[label] += len(gold_l & pred_l)
            fp[label] += len(pred_l - gold_l)
            fn[label] += len(gold_l - pred_l)
        gold_b = {(s[0], s[1]) for s in gold_spans}
        pred_b = {(s[0], s[1]) for s in pred_spans}
        tp[BORROWING] += len(gold_b & pred_b)
        fp[BORROWING] += len(pred_b - gold_b)
        fn[BORROWING] += len(gold_b - pred_b)
    scores = tuple(
        LabelScore(label, tp[label], fp[label], fn[label]) for label in labels
    )
    borrowing = LabelScore(BORROWING, tp[BORROWING], fp[BORROWING], fn[BORROWING])
    return EvalReport(ignore_other=ignore_other, scores=scores, borrowing=borrowing)


def _rows(report: EvalReport) -> tuple[LabelScore, ...]:
    if report.ignore_other:
        return report.scores
    return (*report.scores, report.borrowing)


def render_report_text(report: EvalReport, set_name: str) -> str:
    """Aligned table with one row per label, like the results tables."""
    lines = [f"Set: {set_name}  ({report.mode})"]
    header = f"  {'Label':<10}  {'Precision':>9}  {'Recall':>9}  {'F1 score':>9}"
    lines.append(header)
    for row in _rows(report):
        lines.append(
            f"  {row.label:<10}  {fmt2(row.precision):>9}  "
            f"{fmt2(row.recall):>9}  {fmt2(row.f1):>9}"
        )
    return "\n".join(lines) + "\n"


def render_report_tsv(report: EvalReport, set_name: str) -> str:
    """Machine-readable variant carrying the raw counts as well."""
    lines = ["set\tmode\tlabel\ttp\tfp\tfn\tprecision\trecall\tf1"]
    for row in _rows(report):
        lines.append(
            f"{set_name}\t{report.mode}\t{row.label}\t{row.tp}\t{row.fp}\t"
            f"{row.fn}\t{fmt2(row.precision)}\t{fmt2(row.recall)}\t{fmt2(row.f1)}"
        )
    return "\n".join(lines) + "\n"
