"""Optimizers, clipping, scheduling, dropout, checkpoints and the loop."""

import json
import math

import numpy as np
import pytest

from conftest import (
    CLASSIFIER_EXPERIMENT,
    TAGGER_EXPERIMENT,
    write_classifier_files,
    write_tagger_files,
)
from seqlab import corpus
from seqlab.engine import (
    CHECKPOINT_VERSION,
    Checkpoint,
    adagrad_step,
    apply_word_dropout,
    clip_global_norm,
    load_checkpoint,
    plateau_schedule,
    save_checkpoint,
    sgd_step,
    train_experiment,
)
from seqlab.errors import (
    CorruptCheckpoint,
    ParamTypeError,
    ShapeMismatch,
    VersionMismatch,
)
from seqlab.rng import Rng


class TestSgdStep:
    def test_plain_update(self):
        params = {"w": np.array([1.0])}
        sgd_step(params, {"w": np.array([0.5])}, lr=0.1, momentum=0.0)
        assert params["w"][0] == pytest.approx(0.95)

    def test_zero_gradient(self):
        params = {"w": np.array([1.0, -2.0])}
        sgd_step(params, {"w": np.zeros(2)}, lr=0.5)
        assert np.allclose(params["w"], [1.0, -2.0])

    def test_momentum_recurrence(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        state: dict = {}
        sgd_step(params, grads, lr=1.0, momentum=0.9, state=state)
        sgd_step(params, {"w": np.array([1.0])}, lr=1.0, momentum=0.9, state=state)
        assert state["w"][0] == pytest.approx(1.9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, lr=0.1)


class TestAdagradStep:
    def test_first_step(self):
        params = {"w": np.array([1.0])}
        adagrad_step(params, {"w": np.array([1.0])}, lr=0.1, eps=1e-12)
        assert params["w"][0] == pytest.approx(0.9, abs=1e-9)

    def test_frozen_without_gradient(self):
        params = {"w": np.array([3.0])}
        accum: dict = {}
        for _ in range(5):
            adagrad_step(params, {"w": np.zeros(1)}, lr=0.5, accum=accum)
        assert params["w"][0] == 3.0

    def test_accumulator_monotone(self):
        params = {"w": np.zeros(3)}
        accum: dict = {}
        rng = np.random.default_rng(0)
        previous = np.zeros(3)
        for _ in range(10):
            adagrad_step(params, {"w": rng.normal(size=3)}, lr=0.1, accum=accum)
            assert np.all(accum["w"] >= previous)
            previous = accum["w"].copy()


class TestClipGlobalNorm:
    def test_three_four_five(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clip_global_norm(grads, 1.0)
        assert grads["a"][0] == pytest.approx(0.6)
        assert grads["b"][0] == pytest.approx(0.8)

    def test_below_threshold_unchanged(self):
        grads = {"a": np.array([0.3, 0.4])}
        clip_global_norm(grads, 1.0)
        assert np.allclose(grads["a"], [0.3, 0.4])

    def test_never_exceeds_and_never_grows(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            grads = {k: rng.normal(size=4) * 10 for k in "abc"}
            before = {k: np.abs(v).copy() for k, v in grads.items()}
            clip_global_norm(grads, 2.5)
            norm = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
            assert norm <= 2.5 + 1e-12
            for k in grads:
                assert np.all(np.abs(grads[k]) <= before[k] + 1e-15)


class TestPlateauSchedule:
    def test_flat_history_cuts(self):
        lr = plateau_schedule([0.5, 0.5, 0.5], factor=0.5, patience=2, lr=0.1)
        assert lr == pytest.approx(0.05)

    def test_improving_history_keeps(self):
        lr = plateau_schedule([0.1, 0.2, 0.3, 0.4], factor=0.5, patience=2, lr=0.1)
        assert lr == pytest.approx(0.1)

    def test_two_plateaus_compound(self):
        lr = plateau_schedule([0.5] * 5, factor=0.5, patience=2, lr=0.1)
        assert lr == pytest.approx(0.025)

    def test_lower_better_direction(self):
        lr = plateau_schedule([1.0, 0.9, 0.8], factor=0.5, patience=1, lr=0.1,
                              higher_better=False)
        assert lr == pytest.approx(0.1)
        lr = plateau_schedule([1.0, 1.1, 1.2], factor=0.5, patience=1, lr=0.1,
                              higher_better=False)
        assert lr == pytest.approx(0.025)


class TestWordDropout:
    def test_identity_at_zero(self):
        ids = [2, 3, 0, 5]
        assert apply_word_dropout(ids, 0.0, Rng(1)) == ids

    def test_all_unk_at_one(self):
        ids = [2, 3, 0, 5]
        out = apply_word_dropout(ids, 1.0, Rng(1))
        assert out == [corpus.UNK_ID, corpus.UNK_ID, corpus.PAD_ID, corpus.UNK_ID]

    def test_empirical_rate(self):
        rng = Rng(42)
        total = 100_000
        ids = [7] * total
        out = apply_word_dropout(ids, 0.3, rng)
        rate = sum(1 for i in out if i == corpus.UNK_ID) / total
        assert abs(rate - 0.3) < 0.01

    def test_pad_untouched(self):
        out = apply_word_dropout([0] * 50, 0.9, Rng(3))
        assert out == [0] * 50


class TestCheckpointIo:
    def _checkpoint(self) -> Checkpoint:
        return Checkpoint(
            format_version=CHECKPOINT_VERSION,
            config_text="[model]\nclass=\"FeatureCrfTagger\"\n",
            kind="tagger",
            metric_name="token_accuracy",
            best_metric=0.75,
            epoch=3,
            labels=["author", "title"],
            weights={
                "sparse": np.arange(6, dtype=np.float64).reshape(2, 3),
                "transitions": np.array([[0.1, -0.2], [0.3, 0.4]]),
            },
            graph_classes={"model": "FeatureCrfTagger"},
            seed=7,
            vocab=None,
            features={"templates": ["bias"], "char_ngrams": False,
                      "char_ngram_min": 2, "char_ngram_max": 3, "index": {"bias": 0}},
        )

    def test_round_trip_exact(self, tmp_path):
        ckpt = self._checkpoint()
        save_checkpoint(ckpt, tmp_path / "ck")
        loaded = load_checkpoint(tmp_path / "ck")
        assert loaded.kind == ckpt.kind
        assert loaded.labels == ckpt.labels
        assert loaded.epoch == ckpt.epoch
        for name in ckpt.weights:
            assert np.array_equal(loaded.weights[name], ckpt.weights[name])
        assert loaded.config_text == ckpt.config_text

    def test_truncated_weights_rejected(self, tmp_path):
        ckpt = self._checkpoint()
        save_checkpoint(ckpt, tmp_path / "ck")
        weights_file = tmp_path / "ck" / "weights.json"
        data = json.loads(weights_file.read_text())
        data["sparse"]["data"] = data["sparse"]["data"][:-1]
        weights_file.write_text(json.dumps(data))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "ck")

    def test_version_mismatch(self, tmp_path):
        ckpt = self._checkpoint()
        save_checkpoint(ckpt, tmp_path / "ck")
        manifest_file = tmp_path / "ck" / "manifest.json"
        manifest = json.loads(manifest_file.read_text())
        manifest["format_version"] = 99
        manifest_file.write_text(json.dumps(manifest))
        with pytest.raises(VersionMismatch) as err:
            load_checkpoint(tmp_path / "ck")
        assert err.value.found == 99

    def test_missing_labels_rejected(self, tmp_path):
        ckpt = self._checkpoint()
        save_checkpoint(ckpt, tmp_path / "ck")
        (tmp_path / "ck" / "labels.json").unlink()
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "ck")

    def test_overwrite_is_clean(self, tmp_path):
        ckpt = self._checkpoint()
        save_checkpoint(ckpt, tmp_path / "ck")
        ckpt.epoch = 4
        save_checkpoint(ckpt, tmp_path / "ck")
        assert load_checkpoint(tmp_path / "ck").epoch == 4
        assert not (tmp_path / "ck.tmp").exists()


def _absolute_config(text: str, root) -> str:
    for name in ("train", "dev", "test"):
        for ext in ("conll", "csv"):
            text = text.replace(f'"{name}.{ext}"', f'"{root}/{name}.{ext}"')
    return text.replace('checkpoint_dir="ckpt"', f'checkpoint_dir="{root}/ckpt"')


class TestTrainExperiment:
    def test_one_epoch_two_records(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path).replace(
            "epochs=8", "epochs=1"
        )
        result = train_experiment(config)
        assert [r.split for r in result.records] == ["train", "dev"]
        assert result.best_epoch == 1

    def test_tagger_memorizes_fixture(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path)
        result = train_experiment(config)
        dev_metrics = [r.metrics for r in result.records if r.split == "dev"]
        assert dev_metrics[-1]["token_accuracy"] >= 0.97

    def test_same_seed_identical_checkpoints(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path).replace(
            "epochs=8", "epochs=3"
        )
        a = train_experiment(config, checkpoint_dir=tmp_path / "ck_a")
        b = train_experiment(config, checkpoint_dir=tmp_path / "ck_b")
        bytes_a = (tmp_path / "ck_a" / "weights.json").read_bytes()
        bytes_b = (tmp_path / "ck_b" / "weights.json").read_bytes()
        assert bytes_a == bytes_b
        losses_a = [r.loss for r in a.records]
        losses_b = [r.loss for r in b.records]
        assert losses_a == losses_b

    def test_best_checkpoint_invariant(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path)
        result = train_experiment(config)
        dev_values = [
            r.metrics["token_accuracy"] for r in result.records if r.split == "dev"
        ]
        assert result.checkpoint.best_metric == max(dev_values)

    def test_convex_classifier_loss_non_increasing(self, tmp_path):
        write_classifier_files(tmp_path)
        config = _absolute_config(CLASSIFIER_EXPERIMENT, tmp_path)
        config = config.replace("lr=0.5", "lr=0.01")
        config = config.replace("epochs=30", "epochs=10")
        config = config.replace("batch_size=4", "batch_size=12")  # single batch
        config = config.replace("freeze=False", "freeze=True")  # convex
        result = train_experiment(config)
        train_losses = [r.loss for r in result.records if r.split == "train"]
        assert all(b <= a + 1e-12 for a, b in zip(train_losses, train_losses[1:]))

    def test_classifier_learns_fixture(self, tmp_path):
        write_classifier_files(tmp_path)
        config = _absolute_config(CLASSIFIER_EXPERIMENT, tmp_path)
        result = train_experiment(config)
        assert result.checkpoint.best_metric == 1.0

    def test_early_stopping(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path)
        config = config.replace("epochs=8", "epochs=50").replace(
            'seed=7', 'seed=7\npatience=2'
        )
        result = train_experiment(config)
        epochs_run = max(r.epoch for r in result.records)
        assert epochs_run < 50
        assert epochs_run >= result.best_epoch + 2

    def test_unknown_metric_rejected(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path)
        config = config.replace('metric="token_accuracy"', 'metric="bleu"')
        with pytest.raises(ParamTypeError) as err:
            train_experiment(config)
        assert err.value.key == "metric"

    def test_kind_mismatch_model_vs_data(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path)
        config = config.replace(
            '[model]\nclass="FeatureCrfTagger"\nl2=0.0',
            '[model]\nclass="SimpleClassifier"\nencoding_dimension=8\nnum_classes=5\n'
            '[model.encoder]\nclass="BOW_Encoder"\nemb_dim=8\n'
            '[[model.encoder.embedder]]\nclass="VanillaEmbedder"\nemb_dim=8\n',
        )
        with pytest.raises(ParamTypeError):
            train_experiment(config)

    def test_log_written(self, tmp_path):
        write_tagger_files(tmp_path)
        config = _absolute_config(TAGGER_EXPERIMENT, tmp_path).replace(
            "epochs=8", "epochs=2"
        )
        result = train_experiment(config)
        log = (tmp_path / "ckpt" / "log.jsonl").read_text().splitlines()
        assert len(log) == len(result.records)
        for line in log:
            record = json.loads(line)
            assert {"epoch", "split", "loss", "metrics", "lr",
                    "wall_clock_ms", "timestamp"} <= set(record)
