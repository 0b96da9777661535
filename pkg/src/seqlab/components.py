"""Built-in component classes and the registry that maps experiment-file
class names onto them.

Model components follow two shapes.  Embedders produce one dense vector
per token and may be trainable (their parameters then join the optimizer's
groups).  The two model roots are ``FeatureCrfTagger`` (sparse-feature
linear-chain CRF, optional frozen dense embedders) and ``SimpleClassifier``
(softmax over a bag-of-embeddings encoder).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus
from .corpus import TokenSequence, Vocabulary
from .crf import CrfModel, FeaturizedSequence, LabelSet, SoftmaxClassifier
from .errors import (
    DimMismatch,
    MissingContext,
    ParamTypeError,
)
from .features import (
    DenseEmbedding,
    FeatureTemplateSet,
    hashed_char_ngram_vector,
    load_word_vectors,
)
from .graphconfig import ComponentSchema, DepSpec, ParamSpec, Registry
from .rng import Rng


@dataclass
class BuildContext:
    """Fitted artifacts components may bind to at construction time."""

    vocab: Vocabulary | None = None
    label_set: LabelSet | None = None
    rng: Rng | None = None
    lowercase: bool = False
    # checkpoint-supplied word-vector tables, keyed by node id; set when
    # reloading so WordEmbedder never re-reads external files
    word_embeddings: dict | None = None


# ---------------------------------------------------------------------------
# embedders


class Embedder:
    """Per-token dense vector producer."""

    dim: int
    trainable: bool
    node_id: str

    def vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        raise NotImplementedError

    def parameter_groups(self) -> dict[str, np.ndarray]:
        return {}

    def accumulate_input_grads(
        self,
        grads: dict[str, np.ndarray],
        tokens: list[str],
        ids: list[int],
        g_inputs: np.ndarray,
    ) -> None:
        """Fold d(loss)/d(token vectors) back onto trainable parameters."""


class VanillaEmbedder(Embedder):
    """Vocabulary-indexed embedding matrix, randomly initialized.

    Rows are drawn uniformly from [-0.1, 0.1] in vocabulary order from the
    experiment RNG, so runs with the same seed start identically.
    """

    def __init__(self, vocab: Vocabulary, dim: int, trainable: bool, rng: Rng, node_id: str):
        self.vocab = vocab
        self.dim = dim
        self.trainable = trainable
        self.node_id = node_id
        table = np.empty((len(vocab), dim))
        for row in range(table.shape[0]):
            for col in range(dim):
                table[row, col] = rng.uniform(-0.1, 0.1)
        table[corpus.PAD_ID] = 0.0
        self.table = table

    @property
    def group_name(self) -> str:
        return f"emb:{self.node_id}"

    def vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        return self.table[ids]

    def parameter_groups(self) -> dict[str, np.ndarray]:
        return {self.group_name: self.table} if self.trainable else {}

    def accumulate_input_grads(self, grads, tokens, ids, g_inputs) -> None:
        if not self.trainable:
            return
        buf = grads[self.group_name]
        for row, token_id in enumerate(ids):
            buf[token_id] += g_inputs[row]


class WordEmbedder(Embedder):
    """Static word vectors loaded from a GloVe-style text file; frozen."""

    def __init__(self, embedding: DenseEmbedding, node_id: str):
        self.embedding = embedding
        self.dim = embedding.dim
        self.trainable = False
        self.node_id = node_id

    def vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.embedding.vector(t) for t in tokens])


class CharNGramFeaturizer(Embedder):
    """Hashed character n-gram count vectors; a frozen dense char signal."""

    def __init__(self, dim: int, n_min: int, n_max: int, node_id: str):
        self.dim = dim
        self.n_min = n_min
        self.n_max = n_max
        self.trainable = False
        self.node_id = node_id

    def vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack(
            [hashed_char_ngram_vector(t, self.dim, self.n_min, self.n_max) for t in tokens]
        )


class ConcatEmbedders(Embedder):
    """Concatenates child embedder outputs in declared order."""

    def __init__(self, children: list[Embedder], node_id: str):
        if not children:
            raise MissingContext(node_id, "at least one child embedder")
        self.children = children
        self.dim = sum(c.dim for c in children)
        self.trainable = any(c.trainable for c in children)
        self.node_id = node_id

    def vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        return np.concatenate([c.vectors(tokens, ids) for c in self.children], axis=1)

    def parameter_groups(self) -> dict[str, np.ndarray]:
        groups: dict[str, np.ndarray] = {}
        for child in self.children:
            groups.update(child.parameter_groups())
        return groups

    def accumulate_input_grads(self, grads, tokens, ids, g_inputs) -> None:
        offset = 0
        for child in self.children:
            child.accumulate_input_grads(
                grads, tokens, ids, g_inputs[:, offset : offset + child.dim]
            )
            offset += child.dim


# ---------------------------------------------------------------------------
# model roots


class BowEncoder:
    """Bag-of-embeddings encoder: concatenated embedders, sum or average."""

    def __init__(self, embedders: list[Embedder], emb_dim: int, aggregation: str,
                 dropout_value: float, node_id: str):
        total = sum(e.dim for e in embedders)
        if total != emb_dim:
            raise DimMismatch(
                f"{node_id}: emb_dim={emb_dim} but embedders provide {total}"
            )
        self.embedders = embedders
        self.dim = emb_dim
        self.aggregation = aggregation
        self.dropout_value = dropout_value
        self.node_id = node_id

    def token_vectors(self, tokens: list[str], ids: list[int]) -> np.ndarray:
        return np.concatenate([e.vectors(tokens, ids) for e in self.embedders], axis=1)

    def parameter_groups(self) -> dict[str, np.ndarray]:
        groups: dict[str, np.ndarray] = {}
        for e in self.embedders:
            groups.update(e.parameter_groups())
        return groups

    @property
    def trainable(self) -> bool:
        return any(e.trainable for e in self.embedders)


class ClassifierPipeline:
    """SimpleClassifier: linear softmax head over a BOW encoder."""

    kind = "classifier"

    def __init__(self, encoder: BowEncoder, num_classes: int, use_bias: bool,
                 vocab: Vocabulary | None, label_set: LabelSet | None, node_id: str):
        self.encoder = encoder
        self.vocab = vocab
        self.label_set = label_set
        self.node_id = node_id
        self.head = SoftmaxClassifier(
            weights=np.zeros((num_classes, encoder.dim)),
            bias=np.zeros(num_classes),
            aggregation=encoder.aggregation,
            use_bias=use_bias,
        )

    @property
    def word_dropout_default(self) -> float:
        return self.encoder.dropout_value

    def _inputs(self, seq: TokenSequence, ids: list[int] | None = None):
        tokens = seq.texts()
        if ids is None:
            ids = corpus.numericalize(seq, self.vocab) if self.vocab else [0] * len(tokens)
        return tokens, ids

    def predict_scores(self, seq: TokenSequence) -> np.ndarray:
        tokens, ids = self._inputs(seq)
        return self.head.scores(self.encoder.token_vectors(tokens, ids))

    def loss_and_grads(
        self, seq: TokenSequence, gold_class: int, ids: list[int] | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        tokens, ids = self._inputs(seq, ids)
        vectors = self.encoder.token_vectors(tokens, ids)
        loss, head_grads = self.head.nll_gradient(vectors, gold_class)
        grads = {"weights": head_grads["weights"]}
        if self.head.use_bias:
            grads["bias"] = head_grads["bias"]
        if self.encoder.trainable:
            for name, group in self.encoder.parameter_groups().items():
                grads[name] = np.zeros_like(group)
            offset = 0
            for e in self.encoder.embedders:
                e.accumulate_input_grads(
                    grads, tokens, ids, head_grads["inputs"][:, offset : offset + e.dim]
                )
                offset += e.dim
        return loss, grads

    def parameter_groups(self) -> dict[str, np.ndarray]:
        groups = {"weights": self.head.weights}
        if self.head.use_bias:
            groups["bias"] = self.head.bias
        groups.update(self.encoder.parameter_groups())
        return groups


class TaggerPipeline:
    """FeatureCrfTagger: sparse templates (plus optional frozen dense
    embedders) feeding a linear-chain CRF."""

    kind = "tagger"

    def __init__(self, templates: FeatureTemplateSet, embedders: list[Embedder],
                 l2: float, vocab: Vocabulary | None, label_set: LabelSet | None,
                 node_id: str):
        for e in embedders:
            if e.trainable:
                raise ParamTypeError(e.node_id, "freeze", "true under FeatureCrfTagger")
        self.templates = templates
        self.embedders = embedders
        self.l2 = l2
        self.vocab = vocab
        self.label_set = label_set
        self.node_id = node_id
        self.crf: CrfModel | None = None

    @property
    def word_dropout_default(self) -> float:
        return 0.0

    @property
    def dense_dim(self) -> int:
        return sum(e.dim for e in self.embedders)

    def featurize(self, seq: TokenSequence) -> FeaturizedSequence:
        sparse = [self.templates.extract(seq, t) for t in range(len(seq))]
        dense = None
        if self.embedders:
            tokens = seq.texts()
            ids = corpus.numericalize(seq, self.vocab) if self.vocab else [0] * len(tokens)
            dense = np.concatenate(
                [e.vectors(tokens, ids) for e in self.embedders], axis=1
            )
        return FeaturizedSequence(sparse=sparse, dense=dense)

    def fit(self, train: list[TokenSequence], label_set: LabelSet | None = None) -> None:
        """Grow the feature index over the training split, then freeze and
        allocate the CRF parameters."""
        if label_set is not None:
            self.label_set = label_set
        if self.label_set is None:
            self.label_set = LabelSet.from_data([s.labels or [] for s in train])
        for seq in train:
            for t in range(len(seq)):
                self.templates.extract(seq, t)
        self.templates.freeze()
        self.crf = CrfModel.zeros(
            self.label_set, len(self.templates), dense_dim=self.dense_dim, l2=self.l2
        )

    def decode(self, seq: TokenSequence) -> list[str]:
        fseq = self.featurize(seq)
        emissions = self.crf.emissions(fseq)
        if self.label_set.is_bio():
            path, _ = self.crf.constrained_viterbi(emissions)
        else:
            path, _ = self.crf.viterbi(emissions)
        return [self.label_set.labels[y] for y in path]

    def loss_and_grads(self, seq: TokenSequence) -> tuple[float, dict[str, np.ndarray]]:
        gold = [self.label_set.index_of[l] for l in seq.labels]
        return self.crf.nll_gradient(self.featurize(seq), gold)

    def parameter_groups(self) -> dict[str, np.ndarray]:
        return self.crf.parameter_groups()


# ---------------------------------------------------------------------------
# datasets and engine config


@dataclass
class DatasetSpec:
    """Declared dataset: file paths plus reading and fitting policy."""

    task: str  # sequence | classification
    train: str
    dev: str
    test: str
    format: str
    lowercase: bool
    min_freq: int
    has_header: bool
    labels: str = ""  # optional label inventory file, one label per line

    def load(self, split: str) -> list[TokenSequence]:
        path = getattr(self, split)
        if not path:
            raise FileNotFoundError(f"dataset declares no {split!r} split")
        if self.format == "conll":
            return corpus.read_conll(path)
        return corpus.read_csv(path, has_header=self.has_header)

    def load_label_inventory(self) -> LabelSet | None:
        """Fixed label set from the declared inventory file, in file order.

        ``default`` selects the bundled 13-field reference-string scheme.
        """
        if not self.labels:
            return None
        path = (
            Path(__file__).parent / "data" / "reference_labels.txt"
            if self.labels == "default"
            else Path(self.labels)
        )
        lines = [l.strip() for l in path.read_text(encoding="utf-8").splitlines()]
        return LabelSet(labels=tuple(l for l in lines if l))


@dataclass
class TrainConfig:
    """Validated engine hyperparameters."""

    optimizer: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.0
    epochs: int = 1
    batch_size: int = 8
    clip_norm: float | None = None
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    early_stop_patience: int | None = None
    seed: int = 1
    metric: str = ""
    checkpoint_dir: str = ""
    word_dropout: float = 0.0

    def __post_init__(self):
        checks = [
            (self.lr > 0, "lr", "a float > 0"),
            (0 <= self.momentum < 1, "momentum", "a float in [0, 1)"),
            (self.epochs >= 1, "epochs", "an integer >= 1"),
            (self.batch_size >= 1, "batch_size", "an integer >= 1"),
            (self.clip_norm is None or self.clip_norm > 0, "clip_norm", "a float > 0"),
            (0 < self.plateau_factor < 1, "plateau_factor", "a float in (0, 1)"),
            (self.plateau_patience >= 1, "plateau_patience", "an integer >= 1"),
            (
                self.early_stop_patience is None or self.early_stop_patience >= 1,
                "patience",
                "an integer >= 1",
            ),
            (0 <= self.word_dropout < 1, "word_dropout", "a float in [0, 1)"),
            (self.seed >= 0, "seed", "a non-negative integer"),
        ]
        for ok, key, expected in checks:
            if not ok:
                raise ParamTypeError("engine", key, expected)


# ---------------------------------------------------------------------------
# registry


def _need(ctx: BuildContext | None, attr: str, node_id: str):
    value = getattr(ctx, attr, None) if ctx is not None else None
    if value is None:
        raise MissingContext(node_id, attr)
    return value


def _build_vanilla_embedder(params, deps, ctx, node_id):
    vocab = _need(ctx, "vocab", node_id)
    rng = _need(ctx, "rng", node_id)
    return VanillaEmbedder(
        vocab=vocab,
        dim=params["emb_dim"],
        trainable=not params["freeze"],
        rng=rng,
        node_id=node_id,
    )


def _build_word_embedder(params, deps, ctx, node_id):
    if not params["freeze"]:
        raise ParamTypeError(node_id, "freeze", "true (file vectors stay frozen)")
    preloaded = getattr(ctx, "word_embeddings", None) or {}
    if node_id in preloaded:
        embedding = preloaded[node_id]
    else:
        embedding = load_word_vectors(params["path"])
        embedding.lowercase = bool(ctx.lowercase) if ctx is not None else False
    return WordEmbedder(embedding, node_id)


def _build_char_ngram(params, deps, ctx, node_id):
    if not 2 <= params["n_min"] <= params["n_max"] <= 4:
        raise ParamTypeError(node_id, "n_min/n_max", "a subrange of [2, 4]")
    return CharNGramFeaturizer(params["dim"], params["n_min"], params["n_max"], node_id)


def _build_concat(params, deps, ctx, node_id):
    return ConcatEmbedders(deps["embedder"], node_id)


def _build_bow_encoder(params, deps, ctx, node_id):
    return BowEncoder(
        embedders=deps["embedder"],
        emb_dim=params["emb_dim"],
        aggregation=params["aggregation_type"],
        dropout_value=params["dropout_value"],
        node_id=node_id,
    )


def _build_simple_classifier(params, deps, ctx, node_id):
    encoder: BowEncoder = deps["encoder"]
    if params["encoding_dimension"] != encoder.dim:
        raise DimMismatch(
            f"{node_id}: encoding_dimension={params['encoding_dimension']} but the "
            f"encoder produces {encoder.dim} dimensions"
        )
    label_set = ctx.label_set if ctx is not None else None
    if label_set is not None and params["num_classes"] != len(label_set):
        raise ParamTypeError(
            node_id, "num_classes", f"{len(label_set)} (the dataset label count)"
        )
    return ClassifierPipeline(
        encoder=encoder,
        num_classes=params["num_classes"],
        use_bias=params["classification_layer_bias"],
        vocab=ctx.vocab if ctx is not None else None,
        label_set=label_set,
        node_id=node_id,
    )


def _build_feature_crf_tagger(params, deps, ctx, node_id):
    templates = FeatureTemplateSet(
        char_ngrams=params["char_ngrams"],
        char_ngram_min=params["char_ngram_min"],
        char_ngram_max=params["char_ngram_max"],
    )
    return TaggerPipeline(
        templates=templates,
        embedders=deps["embedder"],
        l2=params["l2"],
        vocab=ctx.vocab if ctx is not None else None,
        label_set=ctx.label_set if ctx is not None else None,
        node_id=node_id,
    )


def _build_dataset(task: str):
    def build(params, deps, ctx, node_id):
        fmt = params["format"]
        if fmt == "auto":
            fmt = "conll" if task == "sequence" else "csv"
        return DatasetSpec(
            task=task,
            train=params["train"],
            dev=params["dev"],
            test=params["test"],
            format=fmt,
            lowercase=params["lowercase"],
            min_freq=params["min_freq"],
            has_header=params["has_header"],
            labels=params["labels"],
        )

    return build


def _build_engine(params, deps, ctx, node_id):
    return TrainConfig(
        optimizer=params["optimizer"],
        lr=params["lr"],
        momentum=params["momentum"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        clip_norm=params["clip_norm"] if params["clip_norm"] > 0 else None,
        plateau_factor=params["plateau_factor"],
        plateau_patience=params["plateau_patience"],
        early_stop_patience=params["patience"] if params["patience"] > 0 else None,
        seed=params["seed"],
        metric=params["metric"],
        checkpoint_dir=params["checkpoint_dir"],
        word_dropout=params["word_dropout"],
    )


_DATASET_PARAMS = {
    "train": ParamSpec(str),
    "dev": ParamSpec(str),
    "test": ParamSpec(str, required=False, default=""),
    "format": ParamSpec(str, required=False, default="auto",
                        choices=("auto", "conll", "csv")),
    "lowercase": ParamSpec(bool, required=False, default=False),
    "min_freq": ParamSpec(int, required=False, default=1),
    "has_header": ParamSpec(bool, required=False, default=False),
    "labels": ParamSpec(str, required=False, default=""),
}


def builtin_registry() -> Registry:
    registry = Registry()
    registry.specs = {
        "VanillaEmbedder": ComponentSchema(
            params={
                "embed": ParamSpec(str, required=False, default="word_vocab",
                                   choices=("word_vocab",)),
                "emb_dim": ParamSpec(int, required=False, default=300),
                "freeze": ParamSpec(bool, required=False, default=True),
            },
            deps={},
            build=_build_vanilla_embedder,
        ),
        "WordEmbedder": ComponentSchema(
            params={
                "path": ParamSpec(str),
                "freeze": ParamSpec(bool, required=False, default=True),
            },
            deps={},
            build=_build_word_embedder,
        ),
        "CharNGramFeaturizer": ComponentSchema(
            params={
                "dim": ParamSpec(int, required=False, default=64),
                "n_min": ParamSpec(int, required=False, default=2),
                "n_max": ParamSpec(int, required=False, default=3),
            },
            deps={},
            build=_build_char_ngram,
        ),
        "ConcatEmbedders": ComponentSchema(
            params={},
            deps={"embedder": DepSpec(required=True, many=True)},
            build=_build_concat,
        ),
        "BOW_Encoder": ComponentSchema(
            params={
                "emb_dim": ParamSpec(int),
                "aggregation_type": ParamSpec(str, required=False, default="sum",
                                              choices=("sum", "average")),
                "dropout_value": ParamSpec(float, required=False, default=0.0),
            },
            deps={"embedder": DepSpec(required=True, many=True)},
            build=_build_bow_encoder,
        ),
        "SimpleClassifier": ComponentSchema(
            params={
                "encoding_dimension": ParamSpec(int),
                "num_classes": ParamSpec(int),
                "classification_layer_bias": ParamSpec(bool, required=False, default=True),
            },
            deps={"encoder": DepSpec(required=True)},
            build=_build_simple_classifier,
        ),
        "FeatureCrfTagger": ComponentSchema(
            params={
                "l2": ParamSpec(float, required=False, default=0.0),
                "char_ngrams": ParamSpec(bool, required=False, default=False),
                "char_ngram_min": ParamSpec(int, required=False, default=2),
                "char_ngram_max": ParamSpec(int, required=False, default=3),
            },
            deps={"embedder": DepSpec(required=False, many=True)},
            build=_build_feature_crf_tagger,
        ),
        "SeqLabellingDataset": ComponentSchema(
            params=dict(_DATASET_PARAMS),
            deps={},
            build=_build_dataset("sequence"),
        ),
        "TextClassificationDataset": ComponentSchema(
            params=dict(_DATASET_PARAMS),
            deps={},
            build=_build_dataset("classification"),
        ),
        "Engine": ComponentSchema(
            params={
                "optimizer": ParamSpec(str, required=False, default="sgd",
                                       choices=("sgd", "adagrad")),
                "lr": ParamSpec(float),
                "momentum": ParamSpec(float, required=False, default=0.0),
                "epochs": ParamSpec(int),
                "batch_size": ParamSpec(int),
                "clip_norm": ParamSpec(float, required=False, default=0.0),
                "plateau_factor": ParamSpec(float, required=False, default=0.5),
                "plateau_patience": ParamSpec(int, required=False, default=2),
                "patience": ParamSpec(int, required=False, default=0),
                "seed": ParamSpec(int, required=False, default=1),
                "metric": ParamSpec(str, required=False, default=""),
                "checkpoint_dir": ParamSpec(str, required=False, default=""),
                "word_dropout": ParamSpec(float, required=False, default=0.0),
            },
            deps={},
            build=_build_engine,
        ),
    }
    # Neural classes from the wider ecosystem are recognized so the error
    # explains the situation instead of a generic unknown-class message.
    neural = "requires a neural encoder stack, which this toolkit does not ship"
    registry.unsupported = {
        "LSTM2SeqEncoder": neural,
        "RnnSeqCrfTagger": neural,
        "SimpleTagger": neural,
        "CharEmbedder": neural,
        "ElmoEmbedder": neural,
        "BertEmbedder": neural,
        "ScibertEmbedder": neural,
    }
    return registry
