"""Training loop and experiment management.

The loop is deterministic end to end: a single seeded RNG stream drives
parameter init, epoch shuffles and word dropout; gradient accumulation
runs batch order -> instance order -> sorted group name, so two runs of
the same experiment file produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import corpus, metrics
from .components import (
    BuildContext,
    ClassifierPipeline,
    DatasetSpec,
    TaggerPipeline,
    TrainConfig,
    builtin_registry,
)
from .corpus import TokenSequence, fit_vocabulary
from .crf import LabelSet
from .errors import (
    CorruptCheckpoint,
    NonFiniteLoss,
    ParamTypeError,
    ShapeMismatch,
    UnknownLabel,
    VersionMismatch,
)
from .graphconfig import ComponentGraph, Registry, instantiate, parse_experiment_text, topo_order
from .rng import GENERATOR_NAME, Rng

CHECKPOINT_VERSION = 1
IMPROVE_TOL = 1e-12

LOWER_IS_BETTER = {"loss"}


# ---------------------------------------------------------------------------
# optimizers, clipping, scheduling, dropout


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.0,
    state: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """v <- momentum*v + g; p <- p - lr*v.  Zero momentum is plain SGD."""
    state = state if state is not None else {}
    for name in sorted(params):
        if grads[name].shape != params[name].shape:
            raise ShapeMismatch(name, f"{grads[name].shape} vs {params[name].shape}")
        if momentum > 0:
            v = state.setdefault(name, np.zeros_like(params[name]))
            v *= momentum
            v += grads[name]
            params[name] -= lr * v
        else:
            params[name] -= lr * grads[name]
    return state


def adagrad_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    eps: float = 1e-8,
    accum: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """accum += g^2; p -= lr * g / sqrt(accum + eps)."""
    accum = accum if accum is not None else {}
    for name in sorted(params):
        if grads[name].shape != params[name].shape:
            raise ShapeMismatch(name, f"{grads[name].shape} vs {params[name].shape}")
        a = accum.setdefault(name, np.zeros_like(params[name]))
        a += grads[name] ** 2
        params[name] -= lr * grads[name] / np.sqrt(a + eps)
    return accum


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all groups by max_norm/norm when the global L2 norm exceeds it."""
    total = 0.0
    for name in sorted(grads):
        total += float(np.sum(grads[name] ** 2))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for name in sorted(grads):
            grads[name] *= scale
    return grads


def plateau_schedule(
    history: list[float],
    factor: float,
    patience: int,
    lr: float,
    higher_better: bool = True,
) -> float:
    """Replay the monitored history, cutting lr by ``factor`` whenever the
    best value went unimproved for ``patience`` consecutive epochs."""
    best: float | None = None
    since = 0
    for value in history:
        if best is None or (
            value > best + IMPROVE_TOL if higher_better else value < best - IMPROVE_TOL
        ):
            best = value
            since = 0
        else:
            since += 1
            if since >= patience:
                lr *= factor
                since = 0
    return lr


def apply_word_dropout(ids: list[int], p: float, rng: Rng) -> list[int]:
    """Replace each non-pad id by unk with probability p (training only)."""
    if p <= 0:
        return list(ids)
    return [
        i if i == corpus.PAD_ID or rng.random() >= p else corpus.UNK_ID for i in ids
    ]


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    """Self-contained snapshot: config source, fitted artifacts, parameters."""

    format_version: int
    config_text: str
    kind: str  # tagger | classifier
    metric_name: str
    best_metric: float
    epoch: int
    labels: list[str]
    weights: dict[str, np.ndarray]
    graph_classes: dict[str, str]
    seed: int
    vocab: dict | None = None
    features: dict | None = None
    word_embeddings: dict | None = None  # node id -> serialized table


def _dump_json(path: Path, obj, compact: bool = False) -> None:
    text = json.dumps(
        obj,
        sort_keys=True,
        ensure_ascii=False,
        indent=None if compact else 2,
        separators=(",", ":") if compact else None,
    )
    path.write_text(text + "\n", encoding="utf-8")


def save_checkpoint(ckpt: Checkpoint, directory: str | Path) -> None:
    """Write the checkpoint directory atomically (temp dir, then rename)."""
    final = Path(directory)
    tmp = final.with_name(final.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    manifest = {
        "format_version": ckpt.format_version,
        "kind": ckpt.kind,
        "metric": ckpt.metric_name,
        "best_metric": ckpt.best_metric,
        "epoch": ckpt.epoch,
        "graph": ckpt.graph_classes,
        "rng": GENERATOR_NAME,
        "seed": ckpt.seed,
        "has_vocab": ckpt.vocab is not None,
        "has_features": ckpt.features is not None,
        "has_word_embeddings": ckpt.word_embeddings is not None,
    }
    _dump_json(tmp / "manifest.json", manifest)
    (tmp / "config.orig").write_text(ckpt.config_text, encoding="utf-8")
    _dump_json(tmp / "labels.json", {"labels": ckpt.labels})
    if ckpt.vocab is not None:
        _dump_json(tmp / "vocab.json", ckpt.vocab)
    if ckpt.features is not None:
        _dump_json(tmp / "features.json", ckpt.features)
    if ckpt.word_embeddings is not None:
        _dump_json(tmp / "embeddings.json", ckpt.word_embeddings, compact=True)
    weights = {
        name: {"shape": list(array.shape), "data": [float(x) for x in array.ravel()]}
        for name, array in ckpt.weights.items()
    }
    _dump_json(tmp / "weights.json", weights, compact=True)

    # keep old log.jsonl out of the replacement: logs belong to the run dir
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)


def _load_json(directory: Path, name: str):
    path = directory / name
    if not path.exists():
        raise CorruptCheckpoint(f"missing {name}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"{name}: {exc}") from exc


def load_checkpoint(directory: str | Path) -> Checkpoint:
    """Read and structurally validate a checkpoint directory."""
    directory = Path(directory)
    manifest = _load_json(directory, "manifest.json")
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(found=version, supported=CHECKPOINT_VERSION)
    config_path = directory / "config.orig"
    if not config_path.exists():
        raise CorruptCheckpoint("missing config.orig")
    labels = _load_json(directory, "labels.json").get("labels")
    if not isinstance(labels, list) or not labels:
        raise CorruptCheckpoint("labels.json: empty or malformed label list")

    raw_weights = _load_json(directory, "weights.json")
    weights = {}
    for name, entry in raw_weights.items():
        shape = tuple(entry.get("shape", []))
        data = entry.get("data", [])
        expect = int(np.prod(shape)) if shape else 0
        if len(data) != expect:
            raise CorruptCheckpoint(
                f"weights.json: group {name!r} has {len(data)} values for shape {list(shape)}"
            )
        weights[name] = np.array(data, dtype=np.float64).reshape(shape)

    vocab = _load_json(directory, "vocab.json") if manifest.get("has_vocab") else None
    features = _load_json(directory, "features.json") if manifest.get("has_features") else None
    word_emb = (
        _load_json(directory, "embeddings.json")
        if manifest.get("has_word_embeddings")
        else None
    )
    return Checkpoint(
        format_version=version,
        config_text=config_path.read_text(encoding="utf-8"),
        kind=manifest.get("kind", ""),
        metric_name=manifest.get("metric", ""),
        best_metric=float(manifest.get("best_metric", 0.0)),
        epoch=int(manifest.get("epoch", 0)),
        labels=[str(l) for l in labels],
        weights=weights,
        graph_classes=dict(manifest.get("graph", {})),
        seed=int(manifest.get("seed", 0)),
        vocab=vocab,
        features=features,
        word_embeddings=word_emb,
    )


# ---------------------------------------------------------------------------
# experiment training


@dataclass
class EpochLogRecord:
    epoch: int
    split: str  # train | dev
    loss: float
    metrics: dict[str, float]
    lr: float
    wall_clock_ms: int
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "split": self.split,
                "loss": self.loss,
                "metrics": self.metrics,
                "lr": self.lr,
                "wall_clock_ms": self.wall_clock_ms,
                "timestamp": self.timestamp,
            },
            sort_keys=True,
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    records: list[EpochLogRecord]
    checkpoint_dir: Path | None
    best_epoch: int


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _serialize_word_embeddings(pipeline) -> dict | None:
    """Token->vector tables of file-backed embedders, kept so a checkpoint
    predicts identically without the original vector files."""
    from .components import ConcatEmbedders, WordEmbedder

    tables = {}

    def walk(embedder):
        if isinstance(embedder, WordEmbedder):
            emb = embedder.embedding
            tables[embedder.node_id] = {
                "dim": emb.dim,
                "lowercase": emb.lowercase,
                "unk": [float(x) for x in emb.unk_vector],
                "tokens": {t: [float(x) for x in v] for t, v in sorted(emb.table.items())},
            }
        elif isinstance(embedder, ConcatEmbedders):
            for child in embedder.children:
                walk(child)

    embedders = (
        pipeline.encoder.embedders
        if isinstance(pipeline, ClassifierPipeline)
        else pipeline.embedders
    )
    for e in embedders:
        walk(e)
    return tables or None


def _state_groups(pipeline) -> dict[str, np.ndarray]:
    """Everything persisted: trainable groups plus frozen vanilla tables."""
    from .components import ConcatEmbedders, VanillaEmbedder

    groups = dict(pipeline.parameter_groups())

    def walk(embedder):
        if isinstance(embedder, VanillaEmbedder):
            groups[embedder.group_name] = embedder.table
        elif isinstance(embedder, ConcatEmbedders):
            for child in embedder.children:
                walk(child)

    embedders = (
        pipeline.encoder.embedders
        if isinstance(pipeline, ClassifierPipeline)
        else pipeline.embedders
    )
    for e in embedders:
        walk(e)
    return groups


def evaluate_split(pipeline, data: list[TokenSequence]) -> tuple[float, dict[str, float]]:
    """Mean loss and task metrics of a pipeline over one labeled split."""
    losses = []
    known = pipeline.label_set.index_of
    if isinstance(pipeline, TaggerPipeline):
        gold = [seq.labels for seq in data]
        pred = []
        for seq in data:
            for l in seq.labels:
                if l not in known:
                    raise UnknownLabel(l)
            gold_idx = [known[l] for l in seq.labels]
            fseq = pipeline.featurize(seq)
            emissions = pipeline.crf.emissions(fseq)
            losses.append(pipeline.crf.nll(emissions, gold_idx))
            if pipeline.label_set.is_bio():
                path, _ = pipeline.crf.constrained_viterbi(emissions)
            else:
                path, _ = pipeline.crf.viterbi(emissions)
            pred.append([pipeline.label_set.labels[y] for y in path])
        flat_gold = [l for seq in gold for l in seq]
        flat_pred = [l for seq in pred for l in seq]
        report = metrics.classification_prf(flat_gold, flat_pred)
        values = {
            "token_accuracy": metrics.token_accuracy(gold, pred),
            "macro_f1": report.macro_f1,
        }
        if pipeline.label_set.is_bio():
            values["span_f1"] = metrics.conll_f1(gold, pred).micro_f1
    else:
        gold_labels = [seq.doc_class for seq in data]
        pred_labels = []
        for seq in data:
            if seq.doc_class not in known:
                raise UnknownLabel(seq.doc_class)
            gold_idx = known[seq.doc_class]
            scores = pipeline.predict_scores(seq)
            losses.append(-math.log(max(float(scores[gold_idx]), 1e-300)))
            pred_labels.append(pipeline.label_set.labels[int(scores.argmax())])
        report = metrics.classification_prf(gold_labels, pred_labels)
        values = {"accuracy": report.accuracy, "macro_f1": report.macro_f1}
    values["loss"] = sum(losses) / len(losses) if losses else 0.0
    return values["loss"], values


def build_pipeline(
    graph: ComponentGraph,
    registry: Registry,
    ctx: BuildContext,
) -> dict[str, object]:
    """Instantiate the model section of a validated graph."""
    plan = topo_order(graph)
    model_ids = [nid for nid in plan.order if nid == "model" or nid.startswith("model.")]
    sub = ComponentGraph(
        nodes={nid: graph.nodes[nid] for nid in model_ids},
        edges=[(u, v) for u, v in graph.edges if u in model_ids and v in model_ids],
        sections={"model": "model"},
    )
    plan_model = topo_order(sub)
    return instantiate(plan_model, sub, registry, ctx)


def train_experiment(
    config_text: str,
    registry: Registry | None = None,
    checkpoint_dir: str | Path | None = None,
    progress=None,
) -> TrainResult:
    """Run one experiment end to end and return the best checkpoint.

    ``config_text`` is the verbatim experiment file (stored in the
    checkpoint for exact reconstruction).  ``checkpoint_dir`` overrides the
    engine's ``checkpoint_dir`` key; ``progress`` is an optional callable
    fed one line per epoch.
    """
    registry = registry or builtin_registry()
    graph = parse_experiment_text(
        config_text, required_sections=("dataset", "model", "engine")
    )
    plan = topo_order(graph)

    # dataset and engine sections carry no model state; build them first so
    # the fitted vocabulary and label set exist before model construction
    aux_ids = [
        nid for nid in plan.order if nid.split(".")[0].split("[")[0] in ("dataset", "engine")
    ]
    aux_graph = ComponentGraph(
        nodes={nid: graph.nodes[nid] for nid in aux_ids},
        edges=[(u, v) for u, v in graph.edges if u in aux_ids and v in aux_ids],
    )
    aux = instantiate(topo_order(aux_graph), aux_graph, registry, BuildContext())
    dataset: DatasetSpec = aux["dataset"]
    cfg: TrainConfig = aux["engine"]
    if checkpoint_dir is not None:
        cfg.checkpoint_dir = str(checkpoint_dir)

    train_data = dataset.load("train")
    dev_data = dataset.load("dev")
    if not train_data or not dev_data:
        raise ValueError("train and dev splits must be non-empty")

    if dataset.task == "sequence":
        observed = {l for seq in train_data for l in (seq.labels or [])}
    else:
        observed = {seq.doc_class for seq in train_data}
    label_set = dataset.load_label_inventory()
    if label_set is None:
        label_set = LabelSet(labels=tuple(sorted(observed)))
    else:
        missing = observed - set(label_set.labels)
        if missing:
            raise UnknownLabel(sorted(missing)[0])

    rng = Rng(cfg.seed)
    vocab = fit_vocabulary(train_data, min_freq=dataset.min_freq, lowercase=dataset.lowercase)
    ctx = BuildContext(vocab=vocab, label_set=label_set, rng=rng, lowercase=dataset.lowercase)
    instances = build_pipeline(graph, registry, ctx)
    pipeline = instances["model"]

    if dataset.task == "sequence" and pipeline.kind != "tagger":
        raise ParamTypeError("model", "class", "a sequence-labeling model for conll data")
    if dataset.task == "classification" and pipeline.kind != "classifier":
        raise ParamTypeError("model", "class", "a classification model for csv data")

    if isinstance(pipeline, TaggerPipeline):
        pipeline.fit(train_data, label_set)

    monitor = cfg.metric or "macro_f1"
    higher_better = monitor not in LOWER_IS_BETTER
    word_dropout = cfg.word_dropout if cfg.word_dropout > 0 else pipeline.word_dropout_default

    params = pipeline.parameter_groups()
    opt_state: dict[str, np.ndarray] = {}
    records: list[EpochLogRecord] = []
    dev_history: list[float] = []
    lr = cfg.lr
    best_value: float | None = None
    best_epoch = 0
    best_weights: dict[str, np.ndarray] | None = None
    since_improve = 0
    graph_classes = {nid: decl.class_name for nid, decl in sorted(graph.nodes.items())}

    def snapshot() -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in _state_groups(pipeline).items()}

    def make_checkpoint(weights, value, epoch) -> Checkpoint:
        return Checkpoint(
            format_version=CHECKPOINT_VERSION,
            config_text=config_text,
            kind=pipeline.kind,
            metric_name=monitor,
            best_metric=value,
            epoch=epoch,
            labels=list(label_set.labels),
            weights=weights,
            graph_classes=graph_classes,
            seed=cfg.seed,
            vocab=vocab.to_dict(),
            features=pipeline.templates.to_dict()
            if isinstance(pipeline, TaggerPipeline)
            else None,
            word_embeddings=_serialize_word_embeddings(pipeline),
        )

    for epoch in range(1, cfg.epochs + 1):
        epoch_start = time.monotonic()
        order = list(range(len(train_data)))
        rng.shuffle(order)
        epoch_loss = 0.0
        for batch_no in range(0, len(order), cfg.batch_size):
            batch = [train_data[i] for i in order[batch_no : batch_no + cfg.batch_size]]
            total: dict[str, np.ndarray] | None = None
            for seq in batch:
                if isinstance(pipeline, TaggerPipeline):
                    loss, grads = pipeline.loss_and_grads(seq)
                else:
                    ids = corpus.numericalize(seq, vocab)
                    ids = apply_word_dropout(ids, word_dropout, rng)
                    gold = label_set.index_of[seq.doc_class]
                    loss, grads = pipeline.loss_and_grads(seq, gold, ids=ids)
                if not math.isfinite(loss):
                    raise NonFiniteLoss(epoch, batch_no // cfg.batch_size)
                epoch_loss += loss
                if total is None:
                    total = {name: grads[name] for name in sorted(grads)}
                else:
                    for name in sorted(grads):
                        total[name] += grads[name]
            for name in sorted(total):
                total[name] /= len(batch)
            if cfg.clip_norm is not None:
                clip_global_norm(total, cfg.clip_norm)
            if cfg.optimizer == "sgd":
                sgd_step(params, total, lr, cfg.momentum, opt_state)
            else:
                adagrad_step(params, total, lr, accum=opt_state)

        train_ms = int((time.monotonic() - epoch_start) * 1000)
        records.append(
            EpochLogRecord(
                epoch=epoch,
                split="train",
                loss=epoch_loss / len(train_data),
                metrics={},
                lr=lr,
                wall_clock_ms=train_ms,
                timestamp=_now_iso(),
            )
        )

        dev_start = time.monotonic()
        dev_loss, dev_metrics = evaluate_split(pipeline, dev_data)
        if monitor not in dev_metrics:
            raise ParamTypeError(
                "engine", "metric", f"one of {', '.join(sorted(dev_metrics))}"
            )
        records.append(
            EpochLogRecord(
                epoch=epoch,
                split="dev",
                loss=dev_loss,
                metrics=dev_metrics,
                lr=lr,
                wall_clock_ms=int((time.monotonic() - dev_start) * 1000),
                timestamp=_now_iso(),
            )
        )
        if progress is not None:
            shown = " ".join(f"{k}={v:.4f}" for k, v in sorted(dev_metrics.items()))
            progress(f"epoch {epoch}: train_loss={epoch_loss / len(train_data):.4f} {shown}")

        value = dev_metrics[monitor]
        improved = best_value is None or (
            value > best_value + IMPROVE_TOL
            if higher_better
            else value < best_value - IMPROVE_TOL
        )
        if improved:
            best_value = value
            best_epoch = epoch
            best_weights = snapshot()
            since_improve = 0
            if cfg.checkpoint_dir:
                save_checkpoint(
                    make_checkpoint(best_weights, best_value, best_epoch),
                    cfg.checkpoint_dir,
                )
        else:
            since_improve += 1
            if cfg.early_stop_patience is not None and since_improve >= cfg.early_stop_patience:
                break

        dev_history.append(value)
        lr = plateau_schedule(
            dev_history, cfg.plateau_factor, cfg.plateau_patience, cfg.lr, higher_better
        )

    checkpoint = make_checkpoint(best_weights, best_value, best_epoch)
    ckpt_dir = None
    if cfg.checkpoint_dir:
        ckpt_dir = Path(cfg.checkpoint_dir)
        log_path = ckpt_dir / "log.jsonl"
        with open(log_path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(record.to_json() + "\n")

    # restore the best parameters so the in-memory pipeline matches the
    # checkpoint exactly
    live = _state_groups(pipeline)
    for name, array in best_weights.items():
        live[name][...] = array
    return TrainResult(
        checkpoint=checkpoint,
        records=records,
        checkpoint_dir=ckpt_dir,
        best_epoch=best_epoch,
    )
