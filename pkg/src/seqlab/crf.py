"""Linear-chain CRF and linear softmax classifier.

All sequence computations run in log space; minus infinity is the finite
sentinel ``NEG_INF`` so arithmetic stays total.  Emission scores are linear
in sparse handcrafted features plus optional dense token vectors:

    score(t, y) = theta[y] . phi_sparse(t) + Theta[y] . e_dense(t)

A path score adds start, per-position emission, adjacent-label transition
and end terms; the partition function, marginals and Viterbi follow the
standard recursions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    EmptyDocument,
    EmptySequence,
    LengthMismatch,
    NotBioLabelSet,
    ShapeMismatch,
)
from .features import SparseFeatureVector

NEG_INF = -1e30

_BIO_RE = re.compile(r"^[BI]-(.+)$")


def logsumexp(values: np.ndarray) -> float:
    """log sum exp with max subtraction; all-sentinel input stays NEG_INF."""
    m = float(np.max(values))
    if m <= NEG_INF / 2:
        return NEG_INF
    return m + float(np.log(np.sum(np.exp(values - m))))


@dataclass(frozen=True)
class LabelSet:
    """Ordered unique labels with dense indices."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def index_of(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def is_bio(self) -> bool:
        """True when every label is O or B-/I- prefixed and some span label exists."""
        tagged = [l for l in self.labels if l != "O"]
        return bool(tagged) and all(_BIO_RE.match(l) for l in tagged)

    @classmethod
    def from_data(cls, label_lists) -> "LabelSet":
        seen = set()
        for labels in label_lists:
            seen.update(labels)
        return cls(labels=tuple(sorted(seen)))


@dataclass
class FeaturizedSequence:
    """Model inputs for one sequence: per-position sparse vectors and an
    optional L x D dense matrix."""

    sparse: list[SparseFeatureVector]
    dense: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.sparse)


@dataclass
class CrfModel:
    """Parameters of the linear-chain CRF over K labels and F sparse features."""

    label_set: LabelSet
    sparse_weights: np.ndarray  # K x F
    dense_weights: np.ndarray  # K x D, D may be 0
    transitions: np.ndarray  # K x K, T[prev, next]
    start_scores: np.ndarray  # K
    end_scores: np.ndarray  # K
    l2: float = 0.0

    @classmethod
    def zeros(cls, label_set: LabelSet, num_features: int, dense_dim: int = 0,
              l2: float = 0.0) -> "CrfModel":
        k = len(label_set)
        return cls(
            label_set=label_set,
            sparse_weights=np.zeros((k, num_features)),
            dense_weights=np.zeros((k, dense_dim)),
            transitions=np.zeros((k, k)),
            start_scores=np.zeros(k),
            end_scores=np.zeros(k),
            l2=l2,
        )

    @property
    def num_labels(self) -> int:
        return len(self.label_set)

    def parameter_groups(self) -> dict[str, np.ndarray]:
        """Named parameter arrays, the unit of optimization and checkpointing."""
        return {
            "dense": self.dense_weights,
            "end": self.end_scores,
            "sparse": self.sparse_weights,
            "start": self.start_scores,
            "transitions": self.transitions,
        }

    # -- emissions ---------------------------------------------------------

    def emissions(self, fseq: FeaturizedSequence) -> np.ndarray:
        """L x K emission table for a featurized sequence."""
        length = len(fseq)
        table = np.zeros((length, self.num_labels))
        for t, sv in enumerate(fseq.sparse):
            if sv.indices:
                table[t] = self.sparse_weights[:, sv.indices] @ np.asarray(sv.values)
        if fseq.dense is not None and fseq.dense.size:
            if fseq.dense.shape[1] != self.dense_weights.shape[1]:
                raise DimMismatch(
                    f"dense input dim {fseq.dense.shape[1]} != "
                    f"model dim {self.dense_weights.shape[1]}"
                )
            table += fseq.dense @ self.dense_weights.T
        return table

    # -- inference ---------------------------------------------------------

    def path_score(self, emissions: np.ndarray, path: list[int]) -> float:
        length = emissions.shape[0]
        if length < 1:
            raise EmptySequence("cannot score an empty sequence")
        if len(path) != length:
            raise LengthMismatch(f"path length {len(path)} != sequence length {length}")
        score = self.start_scores[path[0]] + self.end_scores[path[-1]]
        for t, y in enumerate(path):
            score += emissions[t, y]
        for t in range(length - 1):
            score += self.transitions[path[t], path[t + 1]]
        return float(score)

    def _forward(self, emissions: np.ndarray) -> np.ndarray:
        length, k = emissions.shape
        alpha = np.empty((length, k))
        alpha[0] = self.start_scores + emissions[0]
        for t in range(1, length):
            # alpha[t, y] = lse_yp(alpha[t-1, yp] + T[yp, y]) + em[t, y]
            scores = alpha[t - 1][:, None] + self.transitions
            m = scores.max(axis=0)
            safe = np.where(m <= NEG_INF / 2, 0.0, m)
            alpha[t] = np.where(
                m <= NEG_INF / 2,
                NEG_INF,
                safe + np.log(np.exp(scores - safe).sum(axis=0)),
            ) + emissions[t]
        return alpha

    def _backward(self, emissions: np.ndarray) -> np.ndarray:
        length, k = emissions.shape
        beta = np.empty((length, k))
        beta[length - 1] = self.end_scores
        for t in range(length - 2, -1, -1):
            scores = self.transitions + (emissions[t + 1] + beta[t + 1])[None, :]
            m = scores.max(axis=1)
            safe = np.where(m <= NEG_INF / 2, 0.0, m)
            beta[t] = np.where(
                m <= NEG_INF / 2,
                NEG_INF,
                safe + np.log(np.exp(scores - safe[:, None]).sum(axis=1)),
            )
        return beta

    def log_partition(self, emissions: np.ndarray) -> float:
        if emissions.shape[0] < 1:
            raise EmptySequence("cannot normalize an empty sequence")
        alpha = self._forward(emissions)
        return logsumexp(alpha[-1] + self.end_scores)

    def marginals(self, emissions: np.ndarray) -> np.ndarray:
        """L x K matrix of P(y_t = k | sequence)."""
        if emissions.shape[0] < 1:
            raise EmptySequence("cannot compute marginals of an empty sequence")
        alpha = self._forward(emissions)
        beta = self._backward(emissions)
        log_z = logsumexp(alpha[-1] + self.end_scores)
        return np.exp(alpha + beta - log_z)

    def edge_marginals(self, emissions: np.ndarray) -> np.ndarray:
        """(L-1) x K x K matrix of P(y_t = i, y_{t+1} = j | sequence)."""
        length, k = emissions.shape
        if length < 1:
            raise EmptySequence("cannot compute marginals of an empty sequence")
        alpha = self._forward(emissions)
        beta = self._backward(emissions)
        log_z = logsumexp(alpha[-1] + self.end_scores)
        edges = np.empty((length - 1, k, k))
        for t in range(length - 1):
            edges[t] = np.exp(
                alpha[t][:, None]
                + self.transitions
                + (emissions[t + 1] + beta[t + 1])[None, :]
                - log_z
            )
        return edges

    def viterbi(self, emissions: np.ndarray) -> tuple[list[int], float]:
        """Best path and its score; ties break toward the lower label index."""
        return self._viterbi(emissions, self.start_scores, self.transitions)

    def _viterbi(
        self, emissions: np.ndarray, start: np.ndarray, transitions: np.ndarray
    ) -> tuple[list[int], float]:
        length, k = emissions.shape
        if length < 1:
            raise EmptySequence("cannot decode an empty sequence")
        delta = start + emissions[0]
        backptr = np.zeros((length, k), dtype=np.int64)
        for t in range(1, length):
            scores = delta[:, None] + transitions
            # argmax returns the first (lowest) index on ties
            backptr[t] = scores.argmax(axis=0)
            delta = scores[backptr[t], np.arange(k)] + emissions[t]
        delta = delta + self.end_scores
        last = int(delta.argmax())
        path = [last]
        for t in range(length - 1, 0, -1):
            last = int(backptr[t, last])
            path.append(last)
        path.reverse()
        return path, float(delta[path[-1]])

    def bio_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Start vector and transition matrix with BIO-invalid moves at NEG_INF.

        ``I-X`` may only follow ``B-X`` or ``I-X``; no sequence starts with
        ``I-X``.
        """
        labels = self.label_set.labels
        kinds = []
        for label in labels:
            if label == "O":
                kinds.append(("O", None))
                continue
            m = _BIO_RE.match(label)
            if not m:
                raise NotBioLabelSet(label)
            kinds.append((label[0], m.group(1)))
        start = self.start_scores.copy()
        trans = self.transitions.copy()
        for j, (prefix, kind) in enumerate(kinds):
            if prefix != "I":
                continue
            start[j] = NEG_INF
            for i, (p_prev, k_prev) in enumerate(kinds):
                if p_prev not in ("B", "I") or k_prev != kind:
                    trans[i, j] = NEG_INF
        return start, trans

    def constrained_viterbi(self, emissions: np.ndarray) -> tuple[list[int], float]:
        """Viterbi restricted to BIO-consistent paths via score masking."""
        start, trans = self.bio_masks()
        return self._viterbi(emissions, start, trans)

    # -- training ----------------------------------------------------------

    def l2_penalty(self) -> float:
        return 0.5 * self.l2 * sum(
            float(np.sum(g * g)) for g in self.parameter_groups().values()
        )

    def nll(self, emissions: np.ndarray, gold_path: list[int]) -> float:
        """Negative log likelihood of the gold path plus the l2 penalty."""
        return (
            self.log_partition(emissions)
            - self.path_score(emissions, gold_path)
            + self.l2_penalty()
        )

    def nll_gradient(
        self, fseq: FeaturizedSequence, gold_path: list[int]
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Loss and gradient (model expectations minus gold counts, plus l2).

        The gradient dict mirrors :meth:`parameter_groups` exactly.
        """
        length = len(fseq)
        if length < 1:
            raise EmptySequence("cannot train on an empty sequence")
        if len(gold_path) != length:
            raise LengthMismatch(
                f"gold path length {len(gold_path)} != sequence length {length}"
            )
        k = self.num_labels
        emissions = self.emissions(fseq)
        alpha = self._forward(emissions)
        beta = self._backward(emissions)
        log_z = logsumexp(alpha[-1] + self.end_scores)
        marg = np.exp(alpha + beta - log_z)

        # emission residual: expectation minus observed
        resid = marg.copy()
        resid[np.arange(length), gold_path] -= 1.0

        g_sparse = self.l2 * self.sparse_weights
        for t, sv in enumerate(fseq.sparse):
            if sv.indices:
                g_sparse[:, sv.indices] += np.outer(resid[t], np.asarray(sv.values))
        g_dense = self.l2 * self.dense_weights
        if fseq.dense is not None and fseq.dense.size:
            g_dense = g_dense + resid.T @ fseq.dense

        g_trans = self.l2 * self.transitions
        for t in range(length - 1):
            g_trans += np.exp(
                alpha[t][:, None]
                + self.transitions
                + (emissions[t + 1] + beta[t + 1])[None, :]
                - log_z
            )
            g_trans[gold_path[t], gold_path[t + 1]] -= 1.0

        g_start = resid[0] + self.l2 * self.start_scores
        g_end = resid[-1] + self.l2 * self.end_scores

        loss = log_z - self.path_score(emissions, gold_path) + self.l2_penalty()
        grads = {
            "dense": g_dense,
            "end": g_end,
            "sparse": g_sparse,
            "start": g_start,
            "transitions": g_trans,
        }
        return loss, grads


# ---------------------------------------------------------------------------
# linear classifier


@dataclass
class SoftmaxClassifier:
    """Linear softmax head over an aggregated bag of token vectors."""

    weights: np.ndarray  # C x E
    bias: np.ndarray  # C
    aggregation: str = "sum"  # sum | average
    use_bias: bool = True

    def __post_init__(self):
        if self.aggregation not in ("sum", "average"):
            raise ValueError(f"aggregation must be sum|average, got {self.aggregation!r}")
        if self.weights.shape[0] < 2:
            raise ValueError("need at least two classes")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeMismatch("bias", "bias length != number of classes")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def encoding_dim(self) -> int:
        return self.weights.shape[1]

    def encode(self, token_vectors: np.ndarray) -> np.ndarray:
        vectors = np.atleast_2d(np.asarray(token_vectors, dtype=np.float64))
        if vectors.shape[0] == 0 or vectors.size == 0:
            raise EmptyDocument("no token vectors to classify")
        if vectors.shape[1] != self.encoding_dim:
            raise DimMismatch(
                f"token vectors have dim {vectors.shape[1]}, expected {self.encoding_dim}"
            )
        summed = vectors.sum(axis=0)
        return summed / vectors.shape[0] if self.aggregation == "average" else summed

    def scores(self, token_vectors: np.ndarray) -> np.ndarray:
        """Class probability vector (softmax with max subtraction)."""
        logits = self.weights @ self.encode(token_vectors)
        if self.use_bias:
            logits = logits + self.bias
        logits = logits - logits.max()
        exp = np.exp(logits)
        return exp / exp.sum()

    def nll_gradient(
        self, token_vectors: np.ndarray, gold_class: int
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Cross-entropy loss and gradients for weights, bias and inputs.

        The ``inputs`` entry is the per-token gradient (one row per token),
        used only when the upstream embedder is trainable.
        """
        if not 0 <= gold_class < self.num_classes:
            raise ValueError(f"gold class {gold_class} out of range")
        vectors = np.atleast_2d(np.asarray(token_vectors, dtype=np.float64))
        probs = self.scores(vectors)
        encode = self.encode(vectors)
        diff = probs.copy()
        diff[gold_class] -= 1.0
        scale = 1.0 / vectors.shape[0] if self.aggregation == "average" else 1.0
        grads = {
            "weights": np.outer(diff, encode),
            "inputs": np.tile(self.weights.T @ diff * scale, (vectors.shape[0], 1)),
        }
        if self.use_bias:
            grads["bias"] = diff.copy()
        loss = -float(np.log(max(probs[gold_class], 1e-300)))
        return loss, grads
