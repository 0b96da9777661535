"""Evaluation: per-class precision/recall/F1, token accuracy, span-level
CoNLL-style F1 and confusion matrices.

Span extraction follows the reference conlleval reading: a span opens at
``B-X``, or leniently at ``I-X`` when the previous label does not continue
the same type; a predicted span scores only on exact type and boundary
match.  All 0/0 rates are defined as 0.  Macro averages run over the union
of classes appearing in gold or prediction, so unused labels do not dilute
scores.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import LengthMismatch, UnknownTagFormat

_BIO_RE = re.compile(r"^([BI])-(.+)$")


@dataclass(frozen=True)
class Span:
    """A typed token span, boundaries inclusive."""

    type: str
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad span boundaries ({self.start}, {self.end})")


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ConfusionMatrix:
    """Gold x predicted counts; rows gold, columns predicted."""

    labels: list[str]
    counts: list[list[int]]

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def diagonal(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.labels)))


@dataclass
class MetricReport:
    per_class: dict[str, ClassScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_f1: float
    accuracy: float | None = None
    confusion: ConfusionMatrix | None = None


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def confusion_matrix(gold: list[str], pred: list[str]) -> ConfusionMatrix:
    """Token- or document-level confusion counts over the observed labels."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold labels vs {len(pred)} predictions")
    labels = sorted(set(gold) | set(pred))
    index = {label: i for i, label in enumerate(labels)}
    counts = [[0] * len(labels) for _ in labels]
    for g, p in zip(gold, pred):
        counts[index[g]][index[p]] += 1
    return ConfusionMatrix(labels=labels, counts=counts)


def classification_prf(gold: list[str], pred: list[str]) -> MetricReport:
    """Per-class and macro precision/recall/F1 over parallel label lists."""
    if not gold:
        raise LengthMismatch("empty inputs")
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold labels vs {len(pred)} predictions")
    labels = sorted(set(gold) | set(pred))
    per_class = {}
    for label in labels:
        tp = sum(1 for g, p in zip(gold, pred) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, pred) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, pred) if g == label and p != label)
        precision, recall, f1 = _prf(tp, fp, fn)
        per_class[label] = ClassScores(
            precision=precision,
            recall=recall,
            f1=f1,
            support=sum(1 for g in gold if g == label),
        )
    accuracy = sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)
    return MetricReport(
        per_class=per_class,
        macro_precision=sum(c.precision for c in per_class.values()) / len(labels),
        macro_recall=sum(c.recall for c in per_class.values()) / len(labels),
        macro_f1=sum(c.f1 for c in per_class.values()) / len(labels),
        # single label per item: micro F1 collapses to accuracy
        micro_f1=accuracy,
        accuracy=accuracy,
        confusion=confusion_matrix(gold, pred),
    )


def token_accuracy(gold: list[list[str]], pred: list[list[str]]) -> float:
    """Micro token accuracy pooled over the whole corpus."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    total = 0
    match = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise LengthMismatch(f"sequence {i}: {len(g)} gold vs {len(p)} predicted")
        total += len(g)
        match += sum(1 for a, b in zip(g, p) if a == b)
    return match / total if total else 0.0


def extract_spans(labels: list[str]) -> list[Span]:
    """Segment a BIO label sequence into typed spans, conlleval style.

    A span starts at ``B-X``, or at ``I-X`` when the previous label is not
    ``B-X``/``I-X`` of the same type (lenient start), and extends through
    consecutive ``I-X`` of the same type.
    """
    spans: list[Span] = []
    open_type: str | None = None
    open_start = 0

    def close(position: int):
        nonlocal open_type
        if open_type is not None:
            spans.append(Span(type=open_type, start=open_start, end=position))
            open_type = None

    for i, label in enumerate(labels):
        if label == "O":
            close(i - 1)
            continue
        m = _BIO_RE.match(label)
        if not m:
            raise UnknownTagFormat(i, label)
        prefix, kind = m.group(1), m.group(2)
        if prefix == "B" or open_type != kind:
            close(i - 1)
            open_type = kind
            open_start = i
    close(len(labels) - 1)
    return spans


def label_runs(labels: list[str]) -> list[Span]:
    """Maximal runs of equal labels, for flat (non-BIO) tagging schemes."""
    spans = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            spans.append(Span(type=labels[start], start=start, end=i - 1))
            start = i
    return spans


def conll_f1(gold: list[list[str]], pred: list[list[str]]) -> MetricReport:
    """Span-level micro and per-type P/R/F1 over aligned BIO corpora."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    tp: dict[str, int] = {}
    n_gold: dict[str, int] = {}
    n_pred: dict[str, int] = {}
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise LengthMismatch(f"sequence {i}: {len(g)} gold vs {len(p)} predicted")
        gold_spans = set(extract_spans(g))
        pred_spans = set(extract_spans(p))
        for span in gold_spans:
            n_gold[span.type] = n_gold.get(span.type, 0) + 1
        for span in pred_spans:
            n_pred[span.type] = n_pred.get(span.type, 0) + 1
        for span in gold_spans & pred_spans:
            tp[span.type] = tp.get(span.type, 0) + 1

    types = sorted(set(n_gold) | set(n_pred))
    per_class = {}
    for kind in types:
        hits = tp.get(kind, 0)
        precision, recall, f1 = _prf(
            hits, n_pred.get(kind, 0) - hits, n_gold.get(kind, 0) - hits
        )
        per_class[kind] = ClassScores(
            precision=precision, recall=recall, f1=f1, support=n_gold.get(kind, 0)
        )
    total_tp = sum(tp.values())
    micro_p, micro_r, micro_f1 = _prf(
        total_tp, sum(n_pred.values()) - total_tp, sum(n_gold.values()) - total_tp
    )
    n = len(types) or 1
    return MetricReport(
        per_class=per_class,
        macro_precision=sum(c.precision for c in per_class.values()) / n,
        macro_recall=sum(c.recall for c in per_class.values()) / n,
        macro_f1=sum(c.f1 for c in per_class.values()) / n,
        micro_f1=micro_f1,
    )


# ---------------------------------------------------------------------------
# fixed-width text rendering (CLI surface)


def format_report(report: MetricReport, percent: bool = True) -> str:
    """Fixed-width per-class table plus aggregate rows."""
    scale = 100.0 if percent else 1.0
    fmt = "{:.2f}" if percent else "{:.4f}"
    width = max([len(label) for label in report.per_class] + [len("macro avg")])
    lines = [
        "{:<{w}}  {:>9}  {:>9}  {:>9}  {:>9}".format(
            "class", "precision", "recall", "f1", "support", w=width
        )
    ]
    for label in sorted(report.per_class):
        c = report.per_class[label]
        lines.append(
            "{:<{w}}  {:>9}  {:>9}  {:>9}  {:>9d}".format(
                label,
                fmt.format(c.precision * scale),
                fmt.format(c.recall * scale),
                fmt.format(c.f1 * scale),
                c.support,
                w=width,
            )
        )
    lines.append(
        "{:<{w}}  {:>9}  {:>9}  {:>9}  {:>9}".format(
            "macro avg",
            fmt.format(report.macro_precision * scale),
            fmt.format(report.macro_recall * scale),
            fmt.format(report.macro_f1 * scale),
            "",
            w=width,
        )
    )
    lines.append("micro f1: " + fmt.format(report.micro_f1 * scale))
    if report.accuracy is not None:
        lines.append("accuracy: " + fmt.format(report.accuracy * scale))
    return "\n".join(lines)


def format_confusion(cm: ConfusionMatrix) -> str:
    """Gold-rows by predicted-columns count table."""
    width = max([len(label) for label in cm.labels] + [4])
    header = "{:<{w}}".format("g\\p", w=width) + "".join(
        "  {:>{w}}".format(label, w=width) for label in cm.labels
    )
    lines = [header]
    for label, row in zip(cm.labels, cm.counts):
        lines.append(
            "{:<{w}}".format(label, w=width)
            + "".join("  {:>{w}d}".format(n, w=width) for n in row)
        )
    return "\n".join(lines)
