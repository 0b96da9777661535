"""Evaluation metrics against hand-computed values and a second chunker."""

import pytest

from oracles import conlleval_spans, prf_counts
from seqlab.errors import LengthMismatch, UnknownTagFormat
from seqlab.metrics import (
    Span,
    classification_prf,
    confusion_matrix,
    conll_f1,
    extract_spans,
    format_confusion,
    format_report,
    label_runs,
    token_accuracy,
)
from seqlab.rng import Rng


class TestClassificationPrf:
    def test_worked_example(self):
        report = classification_prf(["a", "a", "b"], ["a", "b", "b"])
        assert report.per_class["a"].f1 == pytest.approx(2 / 3)
        assert report.per_class["b"].f1 == pytest.approx(2 / 3)
        assert report.macro_f1 == pytest.approx(0.6667, abs=5e-5)
        assert report.per_class["a"].precision == pytest.approx(1.0)
        assert report.per_class["a"].recall == pytest.approx(0.5)

    def test_perfect(self):
        report = classification_prf(["x", "y", "z"], ["x", "y", "z"])
        assert report.macro_f1 == 1.0
        assert report.accuracy == 1.0
        for scores in report.per_class.values():
            assert scores.precision == scores.recall == scores.f1 == 1.0

    def test_disjoint_predictions(self):
        report = classification_prf(["a", "a"], ["b", "b"])
        assert report.macro_f1 == 0.0
        assert report.accuracy == 0.0

    def test_against_independent_counts(self):
        rng = Rng(99)
        labels = ["p", "q", "r", "s"]
        gold = [labels[rng.randbelow(4)] for _ in range(200)]
        pred = [labels[rng.randbelow(4)] for _ in range(200)]
        report = classification_prf(gold, pred)
        for label, (precision, recall, f1) in prf_counts(gold, pred).items():
            assert report.per_class[label].precision == pytest.approx(precision)
            assert report.per_class[label].recall == pytest.approx(recall)
            assert report.per_class[label].f1 == pytest.approx(f1)

    def test_permutation_invariance(self):
        gold = ["a", "b", "c", "a", "b", "a"]
        pred = ["a", "c", "c", "b", "b", "a"]
        mapping = {"a": "z1", "b": "z2", "c": "z3"}
        base = classification_prf(gold, pred)
        renamed = classification_prf([mapping[g] for g in gold], [mapping[p] for p in pred])
        assert renamed.macro_f1 == pytest.approx(base.macro_f1)
        assert renamed.macro_precision == pytest.approx(base.macro_precision)

    def test_support_sums_to_total(self):
        gold = ["a", "b", "b", "c"]
        report = classification_prf(gold, ["a", "a", "b", "c"])
        assert sum(c.support for c in report.per_class.values()) == len(gold)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            classification_prf(["a"], ["a", "b"])
        with pytest.raises(LengthMismatch):
            classification_prf([], [])

    def test_rates_in_unit_interval(self):
        rng = Rng(5)
        gold = [str(rng.randbelow(3)) for _ in range(50)]
        pred = [str(rng.randbelow(5)) for _ in range(50)]
        report = classification_prf(gold, pred)
        values = [report.macro_precision, report.macro_recall, report.macro_f1,
                  report.micro_f1, report.accuracy]
        for c in report.per_class.values():
            values += [c.precision, c.recall, c.f1]
        assert all(0.0 <= v <= 1.0 for v in values)


class TestTokenAccuracy:
    def test_half(self):
        assert token_accuracy([["A", "B"]], [["A", "A"]]) == 0.5

    def test_identical(self):
        assert token_accuracy([["A"], ["B", "C"]], [["A"], ["B", "C"]]) == 1.0

    def test_micro_pooling(self):
        # sequence lengths 1 and 3 weigh 1:3
        gold = [["A"], ["B", "B", "B"]]
        pred = [["X"], ["B", "B", "B"]]
        assert token_accuracy(gold, pred) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            token_accuracy([["A", "B"]], [["A"]])


class TestExtractSpans:
    def test_basic(self):
        spans = extract_spans(["B-PER", "I-PER", "O", "B-LOC"])
        assert set(spans) == {Span("PER", 0, 1), Span("LOC", 3, 3)}

    def test_lenient_start(self):
        assert extract_spans(["I-PER"]) == [Span("PER", 0, 0)]

    def test_type_switch_inside(self):
        spans = extract_spans(["B-PER", "I-LOC"])
        assert set(spans) == {Span("PER", 0, 0), Span("LOC", 1, 1)}

    def test_adjacent_b_tags(self):
        spans = extract_spans(["B-PER", "B-PER"])
        assert spans == [Span("PER", 0, 0), Span("PER", 1, 1)]

    def test_unknown_format(self):
        with pytest.raises(UnknownTagFormat) as err:
            extract_spans(["B-PER", "WRONG"])
        assert err.value.index == 1

    def test_spans_disjoint_and_ordered(self):
        spans = extract_spans(
            ["O", "I-A", "I-A", "B-A", "O", "B-B", "I-B", "I-C", "O", "I-C"]
        )
        for a, b in zip(spans, spans[1:]):
            assert a.end < b.start

    def test_matches_conlleval_chunker_on_random_tags(self):
        rng = Rng(2024)
        alphabet = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"]
        for _ in range(300):
            length = 1 + rng.randbelow(12)
            labels = [alphabet[rng.randbelow(len(alphabet))] for _ in range(length)]
            ours = {(s.type, s.start, s.end) for s in extract_spans(labels)}
            assert ours == conlleval_spans(labels), labels


class TestLabelRuns:
    def test_runs(self):
        spans = label_runs(["a", "a", "b", "a"])
        assert spans == [Span("a", 0, 1), Span("b", 2, 2), Span("a", 3, 3)]

    def test_empty(self):
        assert label_runs([]) == []


class TestConllF1:
    def test_worked_example(self):
        gold = [["B-PER", "I-PER", "O", "B-LOC"]]
        pred = [["B-PER", "I-PER", "O", "O"]]
        report = conll_f1(gold, pred)
        assert report.macro_precision == pytest.approx(0.5)  # PER 1.0, LOC 0.0
        assert report.micro_f1 == pytest.approx(2 / 3, abs=1e-9)
        assert report.per_class["PER"].f1 == 1.0
        assert report.per_class["LOC"].f1 == 0.0
        # overall: P=1.0 R=0.5
        tp = 1
        assert report.per_class["PER"].support == 1

    def test_perfect(self):
        seqs = [["B-A", "I-A", "O"], ["I-B"]]
        report = conll_f1(seqs, seqs)
        assert report.micro_f1 == 1.0
        assert report.macro_f1 == 1.0

    def test_all_o_predictions(self):
        report = conll_f1([["B-PER", "I-PER"]], [["O", "O"]])
        assert report.micro_f1 == 0.0
        assert report.macro_precision == 0.0
        assert report.macro_recall == 0.0

    def test_equivalence_with_span_sets(self):
        rng = Rng(31337)
        alphabet = ["O", "B-X", "I-X", "B-Y", "I-Y"]
        for _ in range(100):
            n = 1 + rng.randbelow(4)
            gold = [
                [alphabet[rng.randbelow(5)] for _ in range(1 + rng.randbelow(8))]
                for _ in range(n)
            ]
            pred = [
                [alphabet[rng.randbelow(5)] for _ in range(len(g))] for g in gold
            ]
            report = conll_f1(gold, pred)
            equal = all(
                set(extract_spans(g)) == set(extract_spans(p))
                for g, p in zip(gold, pred)
            )
            assert (report.micro_f1 == 1.0) == equal


class TestConfusionMatrix:
    def test_counts(self):
        cm = confusion_matrix(["A", "B"], ["A", "A"])
        ia, ib = cm.labels.index("A"), cm.labels.index("B")
        assert cm.counts[ia][ia] == 1
        assert cm.counts[ib][ia] == 1
        assert cm.counts[ia][ib] == 0

    def test_diagonal_matches_accuracy(self):
        rng = Rng(17)
        gold = [str(rng.randbelow(3)) for _ in range(60)]
        pred = [str(rng.randbelow(3)) for _ in range(60)]
        cm = confusion_matrix(gold, pred)
        acc = sum(g == p for g, p in zip(gold, pred)) / len(gold)
        assert cm.diagonal() / cm.total() == pytest.approx(acc)

    def test_empty(self):
        cm = confusion_matrix([], [])
        assert cm.labels == []
        assert cm.total() == 0


class TestFormatting:
    def test_report_contains_percentages(self):
        report = classification_prf(["a", "a", "b"], ["a", "b", "b"])
        text = format_report(report, percent=True)
        assert "66.67" in text
        assert "macro avg" in text
        assert "accuracy" in text

    def test_confusion_table_shape(self):
        cm = confusion_matrix(["a", "b", "b"], ["a", "b", "a"])
        text = format_confusion(cm)
        lines = text.splitlines()
        assert len(lines) == 3  # header + 2 label rows
