"""Inference over trained checkpoints: predict for text, files and
datasets, plus the introspection queries behind the CLI shell and API.

A loaded model is immutable; predictions are pure functions of the input
text, so instances are safe to share across threads and requests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .components import BuildContext, TaggerPipeline, builtin_registry
from .corpus import TokenSequence, Vocabulary, tokenize_whitespace
from .crf import CrfModel, LabelSet
from .engine import Checkpoint, _state_groups, build_pipeline, load_checkpoint
from .errors import (
    CorruptCheckpoint,
    EmptyInput,
    KindMismatch,
    ShapeMismatch,
    UnknownLabel,
    UnknownQuery,
)
from .features import DenseEmbedding, FeatureTemplateSet
from .graphconfig import Registry, parse_experiment_text
from .rng import Rng

CONTEXT_WINDOW = 3


@dataclass(frozen=True)
class TaggedSpan:
    type: str
    start: int  # token index, inclusive
    end: int
    char_start: int
    char_end: int


@dataclass
class TaggedText:
    text: str
    tokens: list[str]
    labels: list[str]
    spans: list[TaggedSpan]


@dataclass
class ClassifiedText:
    text: str
    label: str
    scores: dict[str, float]


@dataclass(frozen=True)
class ErrorInstance:
    sequence_index: int
    position: int
    token: str
    gold_label: str
    pred_label: str
    context: tuple[str, ...]  # +-CONTEXT_WINDOW tokens around the error


class LoadedModel:
    """A reconstructed pipeline plus the checkpoint it came from."""

    def __init__(self, checkpoint: Checkpoint, pipeline):
        self.checkpoint = checkpoint
        self.pipeline = pipeline
        self.kind = pipeline.kind
        self.label_set: LabelSet = pipeline.label_set

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, registry: Registry | None = None) -> "LoadedModel":
        registry = registry or builtin_registry()
        graph = parse_experiment_text(ckpt.config_text, required_sections=("model",))

        vocab = Vocabulary.from_dict(ckpt.vocab) if ckpt.vocab else None
        label_set = LabelSet(labels=tuple(ckpt.labels))
        word_embeddings = None
        if ckpt.word_embeddings:
            word_embeddings = {
                node_id: DenseEmbedding(
                    dim=int(entry["dim"]),
                    table={t: np.array(v, dtype=np.float64) for t, v in entry["tokens"].items()},
                    unk_vector=np.array(entry["unk"], dtype=np.float64),
                    lowercase=bool(entry["lowercase"]),
                )
                for node_id, entry in ckpt.word_embeddings.items()
            }
        ctx = BuildContext(
            vocab=vocab,
            label_set=label_set,
            rng=Rng(ckpt.seed),
            lowercase=vocab.lowercase if vocab else False,
            word_embeddings=word_embeddings,
        )
        pipeline = build_pipeline(graph, registry, ctx)["model"]
        if pipeline.kind != ckpt.kind:
            raise CorruptCheckpoint(
                f"manifest kind {ckpt.kind!r} but config builds a {pipeline.kind}"
            )

        if isinstance(pipeline, TaggerPipeline):
            if ckpt.features is None:
                raise CorruptCheckpoint("tagger checkpoint lacks features.json")
            pipeline.templates = FeatureTemplateSet.from_dict(ckpt.features)
            pipeline.label_set = label_set
            pipeline.crf = CrfModel.zeros(
                label_set,
                len(pipeline.templates),
                dense_dim=pipeline.dense_dim,
                l2=pipeline.l2,
            )
        else:
            pipeline.label_set = label_set

        live = _state_groups(pipeline)
        for name in sorted(live):
            if name not in ckpt.weights:
                raise CorruptCheckpoint(f"weights.json lacks group {name!r}")
            if tuple(ckpt.weights[name].shape) != tuple(live[name].shape):
                raise ShapeMismatch(
                    name,
                    f"checkpoint {ckpt.weights[name].shape} vs model {live[name].shape}",
                )
            live[name][...] = ckpt.weights[name]
        for name in ckpt.weights:
            if name not in live:
                raise CorruptCheckpoint(f"weights.json has unexpected group {name!r}")
        return cls(ckpt, pipeline)


def load_model(checkpoint_dir: str | Path, registry: Registry | None = None) -> LoadedModel:
    """Rebuild the pipeline from a checkpoint directory and verify shapes."""
    return LoadedModel.from_checkpoint(load_checkpoint(checkpoint_dir), registry)


def _spans_for(seq: TokenSequence, labels: list[str], bio: bool) -> list[TaggedSpan]:
    raw = metrics.extract_spans(labels) if bio else metrics.label_runs(labels)
    return [
        TaggedSpan(
            type=span.type,
            start=span.start,
            end=span.end,
            char_start=seq.tokens[span.start].start,
            char_end=seq.tokens[span.end].end,
        )
        for span in raw
    ]


def predict_for_text(model: LoadedModel, text: str) -> TaggedText | ClassifiedText:
    """Tokenize, featurize and decode one input string."""
    seq = tokenize_whitespace(text)
    if not seq.tokens:
        raise EmptyInput("no tokens in input text")
    if model.kind == "tagger":
        labels = model.pipeline.decode(seq)
        return TaggedText(
            text=text,
            tokens=seq.texts(),
            labels=labels,
            spans=_spans_for(seq, labels, model.label_set.is_bio()),
        )
    scores = model.pipeline.predict_scores(seq)
    by_label = {label: float(scores[i]) for i, label in enumerate(model.label_set.labels)}
    best = model.label_set.labels[int(scores.argmax())]
    return ClassifiedText(text=text, label=best, scores=by_label)


def predict_for_file(
    model: LoadedModel, path: str | Path
) -> list[TaggedText | ClassifiedText | None]:
    """predict_for_text over the file's lines; blank lines stay as None so
    output aligns with input line numbers."""
    results = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        results.append(predict_for_text(model, line) if line.strip() else None)
    return results


def format_prediction(result: TaggedText | ClassifiedText | None) -> str:
    """One output line: input TAB prediction (empty line for null entries)."""
    if result is None:
        return ""
    if isinstance(result, TaggedText):
        pairs = " ".join(f"{t}|{l}" for t, l in zip(result.tokens, result.labels))
        return f"{result.text}\t{pairs}"
    ranked = " ".join(
        f"{label}:{result.scores[label]:.6f}" for label in sorted(result.scores)
    )
    return f"{result.text}\t{result.label}\t{ranked}"


@dataclass
class EvaluationResult:
    report: metrics.MetricReport
    token_report: metrics.MetricReport | None  # token-level view for taggers
    sequences: list[TokenSequence]
    gold: list[list[str]]
    pred: list[list[str]]
    label_set: LabelSet

    def query_errors(self, gold_label: str, pred_label: str) -> list[ErrorInstance]:
        """All confusions of one (gold, predicted) pair with token context."""
        known = set(self.label_set.labels)
        for label in (gold_label, pred_label):
            if label not in known:
                raise UnknownLabel(label)
        if gold_label == pred_label:
            raise UnknownQuery("gold and predicted label must differ")
        found = []
        for si, (seq, gold, pred) in enumerate(zip(self.sequences, self.gold, self.pred)):
            for pos, (g, p) in enumerate(zip(gold, pred)):
                if g == gold_label and p == pred_label:
                    texts = seq.texts()
                    lo = max(0, pos - CONTEXT_WINDOW)
                    hi = min(len(texts), pos + CONTEXT_WINDOW + 1)
                    found.append(
                        ErrorInstance(
                            sequence_index=si,
                            position=pos,
                            token=texts[pos] if pos < len(texts) else "",
                            gold_label=g,
                            pred_label=p,
                            context=tuple(texts[lo:hi]),
                        )
                    )
        return found


def evaluate_on_dataset(model: LoadedModel, data: list[TokenSequence]) -> EvaluationResult:
    """Predict over a labeled dataset and score it with the task metric.

    BIO taggers get span-level CoNLL scoring as the primary report; flat
    taggers and classifiers get precision/recall/F1.  A token-level report
    is always kept for confusion-matrix introspection.
    """
    if not data:
        raise EmptyInput("empty dataset")
    if model.kind == "tagger":
        if any(seq.labels is None for seq in data):
            raise KindMismatch(expected="sequence-labeled data", got="classification data")
        gold = [list(seq.labels) for seq in data]
        pred = [model.pipeline.decode(seq) for seq in data]
        flat_gold = [l for g in gold for l in g]
        flat_pred = [l for p in pred for l in p]
        token_report = metrics.classification_prf(flat_gold, flat_pred)
        report = metrics.conll_f1(gold, pred) if model.label_set.is_bio() else token_report
        return EvaluationResult(
            report=report,
            token_report=token_report,
            sequences=data,
            gold=gold,
            pred=pred,
            label_set=model.label_set,
        )

    if any(seq.doc_class is None for seq in data):
        raise KindMismatch(expected="classification data", got="sequence-labeled data")
    gold_docs = [seq.doc_class for seq in data]
    pred_docs = []
    for seq in data:
        scores = model.pipeline.predict_scores(seq)
        pred_docs.append(model.label_set.labels[int(scores.argmax())])
    report = metrics.classification_prf(gold_docs, pred_docs)
    return EvaluationResult(
        report=report,
        token_report=None,
        sequences=data,
        gold=[[g] for g in gold_docs],
        pred=[[p] for p in pred_docs],
        label_set=model.label_set,
    )
