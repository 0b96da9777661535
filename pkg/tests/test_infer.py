"""Loading checkpoints and running inference/introspection over them."""

import json

import pytest

from conftest import TAGGER_EXPERIMENT, write_tagger_files
from seqlab.corpus import read_conll, read_csv
from seqlab.engine import train_experiment
from seqlab.errors import (
    CorruptCheckpoint,
    EmptyInput,
    KindMismatch,
    ShapeMismatch,
    UnknownLabel,
    UnknownQuery,
)
from seqlab.infer import (
    ClassifiedText,
    LoadedModel,
    TaggedText,
    evaluate_on_dataset,
    format_prediction,
    load_model,
    predict_for_file,
    predict_for_text,
)

FIXTURE_TEXT = "Calzolari, N. (1982). towards a lexical database. Computational Linguistics, 45--97."
FIXTURE_LABELS = ["author", "author", "date", "title", "title", "title", "title",
                  "journal", "journal", "pages"]


@pytest.fixture(scope="module")
def tagger_model(tagger_fixture) -> LoadedModel:
    return load_model(tagger_fixture["checkpoint"])


@pytest.fixture(scope="module")
def classifier_model(classifier_fixture) -> LoadedModel:
    return load_model(classifier_fixture["checkpoint"])


class TestLoadModel:
    def test_kind_and_labels(self, tagger_model):
        assert tagger_model.kind == "tagger"
        assert set(tagger_model.label_set.labels) == {
            "author", "date", "journal", "pages", "title",
        }

    def test_round_trip_predictions_identical(self, tmp_path):
        write_tagger_files(tmp_path)
        config = TAGGER_EXPERIMENT
        for name in ("train", "dev", "test"):
            config = config.replace(f'"{name}.conll"', f'"{tmp_path}/{name}.conll"')
        config = config.replace('checkpoint_dir="ckpt"', f'checkpoint_dir="{tmp_path}/ck"')
        result = train_experiment(config)
        in_memory = LoadedModel.from_checkpoint(result.checkpoint)
        reloaded = load_model(tmp_path / "ck")
        data = read_conll(tmp_path / "dev.conll")
        mem_eval = evaluate_on_dataset(in_memory, data)
        disk_eval = evaluate_on_dataset(reloaded, data)
        assert mem_eval.report == disk_eval.report
        assert mem_eval.pred == disk_eval.pred
        text_pred_a = predict_for_text(in_memory, FIXTURE_TEXT)
        text_pred_b = predict_for_text(reloaded, FIXTURE_TEXT)
        assert text_pred_a == text_pred_b

    def test_missing_labels_file(self, tagger_fixture, tmp_path):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(tagger_fixture["checkpoint"], broken)
        (broken / "labels.json").unlink()
        with pytest.raises(CorruptCheckpoint):
            load_model(broken)

    def test_tampered_weights_shape(self, tagger_fixture, tmp_path):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(tagger_fixture["checkpoint"], broken)
        weights = json.loads((broken / "weights.json").read_text())
        weights["transitions"]["shape"] = [3, 3]
        weights["transitions"]["data"] = [0.0] * 9
        (broken / "weights.json").write_text(json.dumps(weights))
        with pytest.raises(ShapeMismatch):
            load_model(broken)


class TestPredictForText:
    def test_fixture_reference(self, tagger_model):
        result = predict_for_text(tagger_model, FIXTURE_TEXT)
        assert isinstance(result, TaggedText)
        assert result.labels == FIXTURE_LABELS

    def test_span_offsets_slice_back(self, tagger_model):
        result = predict_for_text(tagger_model, FIXTURE_TEXT)
        for span in result.spans:
            sliced = FIXTURE_TEXT[span.char_start:span.char_end]
            joined = " ".join(result.tokens[span.start:span.end + 1])
            assert " ".join(sliced.split()) == joined

    def test_flat_spans_are_label_runs(self, tagger_model):
        result = predict_for_text(tagger_model, FIXTURE_TEXT)
        types = [s.type for s in result.spans]
        assert types == ["author", "date", "title", "journal", "pages"]

    def test_classifier_scores_sum_to_one(self, classifier_model):
        result = predict_for_text(classifier_model, "we compare scores against the benchmark")
        assert isinstance(result, ClassifiedText)
        assert sum(result.scores.values()) == pytest.approx(1.0, abs=1e-9)
        assert result.label in result.scores

    def test_empty_input(self, tagger_model):
        with pytest.raises(EmptyInput):
            predict_for_text(tagger_model, "   ")

    def test_purity(self, tagger_model):
        a = predict_for_text(tagger_model, FIXTURE_TEXT)
        b = predict_for_text(tagger_model, FIXTURE_TEXT)
        assert a == b


class TestPredictForFile:
    def test_blank_lines_preserved(self, tagger_model, tmp_path):
        path = tmp_path / "refs.txt"
        path.write_text(f"{FIXTURE_TEXT}\n\n{FIXTURE_TEXT}\n", encoding="utf-8")
        results = predict_for_file(tagger_model, path)
        assert len(results) == 3
        assert results[1] is None
        assert results[0] is not None and results[2] is not None

    def test_lines_match_predict_for_text(self, tagger_model, tmp_path):
        path = tmp_path / "refs.txt"
        lines = [FIXTURE_TEXT, "Hoffmann, K. (1999). statistical models for tagging. Speech Communication, 101--120."]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        results = predict_for_file(tagger_model, path)
        for line, result in zip(lines, results):
            assert result == predict_for_text(tagger_model, line)

    def test_format_prediction(self, tagger_model):
        result = predict_for_text(tagger_model, "Calzolari, N.")
        line = format_prediction(result)
        assert line.startswith("Calzolari, N.\t")
        assert "Calzolari,|" in line
        assert format_prediction(None) == ""


class TestEvaluateOnDataset:
    def test_memorized_train_split(self, tagger_model, tagger_fixture):
        data = read_conll(tagger_fixture["root"] / "train.conll")
        result = evaluate_on_dataset(tagger_model, data)
        assert result.report.accuracy == 1.0
        assert result.report.macro_f1 == 1.0

    def test_kind_mismatch(self, tagger_model, classifier_model,
                           tagger_fixture, classifier_fixture):
        tagging_data = read_conll(tagger_fixture["root"] / "dev.conll")
        classification_data = read_csv(classifier_fixture["root"] / "dev.csv")
        with pytest.raises(KindMismatch):
            evaluate_on_dataset(tagger_model, classification_data)
        with pytest.raises(KindMismatch):
            evaluate_on_dataset(classifier_model, tagging_data)

    def test_classifier_report(self, classifier_model, classifier_fixture):
        data = read_csv(classifier_fixture["root"] / "dev.csv")
        result = evaluate_on_dataset(classifier_model, data)
        assert result.report.accuracy == 1.0
        assert result.report.confusion is not None


class TestQueryErrors:
    def _result_with_errors(self, tagger_model, tagger_fixture):
        # corrupt gold labels so author tokens are "gold title": forces
        # title->author confusions in the query
        data = read_conll(tagger_fixture["root"] / "dev.conll")
        for seq in data:
            seq.labels = ["title" if l == "author" else l for l in seq.labels]
        return evaluate_on_dataset(tagger_model, data)

    def test_positions_and_order(self, tagger_model, tagger_fixture):
        result = self._result_with_errors(tagger_model, tagger_fixture)
        rows = result.query_errors("title", "author")
        assert rows, "expected confusions in the corrupted fixture"
        keys = [(r.sequence_index, r.position) for r in rows]
        assert keys == sorted(keys)
        for row in rows:
            assert row.gold_label == "title"
            assert row.pred_label == "author"
            assert row.token in row.context

    def test_diagonal_rejected(self, tagger_model, tagger_fixture):
        result = self._result_with_errors(tagger_model, tagger_fixture)
        with pytest.raises(UnknownQuery):
            result.query_errors("title", "title")

    def test_unknown_label(self, tagger_model, tagger_fixture):
        result = self._result_with_errors(tagger_model, tagger_fixture)
        with pytest.raises(UnknownLabel):
            result.query_errors("nosuch", "author")

    def test_counts_match_offdiagonal_confusion(self, tagger_model, tagger_fixture):
        result = self._result_with_errors(tagger_model, tagger_fixture)
        cm = result.token_report.confusion
        off_diagonal = cm.total() - cm.diagonal()
        total = 0
        for g in cm.labels:
            for p in cm.labels:
                if g != p:
                    total += len(result.query_errors(g, p))
        assert total == off_diagonal


class TestBioDecodePath:
    def test_bio_model_uses_constrained_decode(self, tmp_path):
        # tiny BIO corpus: spans of type T over alternating tokens
        train = (
            "alpha B-T\nbeta I-T\nend O\n\n"
            "alpha B-T\nend O\n\n"
            "beta B-T\nalpha I-T\nend O\n\n"
            "end O\nalpha B-T\nbeta I-T\n"
        )
        (tmp_path / "train.conll").write_text(train, encoding="utf-8")
        (tmp_path / "dev.conll").write_text(train, encoding="utf-8")
        config = f"""
[dataset]
class="SeqLabellingDataset"
train="{tmp_path}/train.conll"
dev="{tmp_path}/dev.conll"
format="conll"

[model]
class="FeatureCrfTagger"

[engine]
lr=0.5
epochs=6
batch_size=2
seed=3
metric="span_f1"
"""
        result = train_experiment(config)
        model = LoadedModel.from_checkpoint(result.checkpoint)
        assert model.label_set.is_bio()
        tagged = predict_for_text(model, "alpha beta end")
        for i, label in enumerate(tagged.labels):
            if label.startswith("I-"):
                assert i > 0 and tagged.labels[i - 1] in (
                    f"B-{label[2:]}", f"I-{label[2:]}"
                )
        dev_metrics = [r.metrics for r in result.records if r.split == "dev"]
        assert "span_f1" in dev_metrics[-1]
