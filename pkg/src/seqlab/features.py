"""Token representations: static word vectors, handcrafted sparse feature
templates, char n-grams, and concatenation of dense parts.

The sparse templates stand in for learned character/word encoders: shape,
case, affix and neighbor evidence that a linear CRF can weight directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Token, TokenSequence
from .errors import (
    DimMismatch,
    EmptyParts,
    PositionOutOfRange,
    VectorParseError,
)

BOS = "<BOS>"
EOS = "<EOS>"

# Fixed template catalog; order fixed so feature files diff cleanly.
TEMPLATE_CATALOG = (
    "lower",
    "shape",
    "prefix1",
    "prefix2",
    "prefix3",
    "prefix4",
    "suffix1",
    "suffix2",
    "suffix3",
    "suffix4",
    "isDigit",
    "hasDigit",
    "isCapitalized",
    "isPunct",
    "prevLower",
    "nextLower",
    "bias",
)

_SHAPE_COLLAPSE = 4


def word_shape(text: str) -> str:
    """Map uppercase->X, lowercase->x, digit->d, other chars kept.

    Runs longer than four of the same class are collapsed to four so the
    shape alphabet stays small.
    """
    out = []
    run_char = None
    run_len = 0
    for ch in text:
        if ch.isupper():
            mapped = "X"
        elif ch.islower():
            mapped = "x"
        elif ch.isdigit():
            mapped = "d"
        else:
            mapped = ch
        if mapped == run_char:
            run_len += 1
        else:
            run_char = mapped
            run_len = 1
        if run_len <= _SHAPE_COLLAPSE:
            out.append(mapped)
    return "".join(out)


def char_ngram_features(text: str, n_min: int = 2, n_max: int = 3) -> list[str]:
    """All contiguous n-grams of ``^text$`` for n in [n_min, n_max].

    Boundary markers let grams anchor to word edges; empty text yields
    nothing.
    """
    if not 2 <= n_min <= n_max <= 4:
        raise ValueError("char n-gram range must lie within [2, 4]")
    if not text:
        return []
    marked = f"^{text}$"
    grams = []
    for n in range(n_min, n_max + 1):
        for i in range(len(marked) - n + 1):
            grams.append(f"cng={marked[i:i + n]}")
    return grams


@dataclass
class SparseFeatureVector:
    """Sorted unique feature ids with parallel weights (default 1.0)."""

    indices: list[int]
    values: list[float]

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must be parallel")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")


class FeatureTemplateSet:
    """Feature extractor over the fixed template catalog with a growable index.

    While fitting, unseen feature strings receive fresh ids.  Once frozen,
    unseen strings are dropped; the id universe never grows again.
    """

    def __init__(
        self,
        templates: tuple[str, ...] | list[str] = TEMPLATE_CATALOG,
        char_ngrams: bool = False,
        char_ngram_min: int = 2,
        char_ngram_max: int = 3,
    ):
        unknown = [t for t in templates if t not in TEMPLATE_CATALOG]
        if unknown:
            raise ValueError(f"unknown feature templates: {unknown}")
        self.templates = tuple(templates)
        self.char_ngrams = char_ngrams
        self.char_ngram_min = char_ngram_min
        self.char_ngram_max = char_ngram_max
        self.feature_index: dict[str, int] = {}
        self.frozen = False

    def __len__(self) -> int:
        return len(self.feature_index)

    def freeze(self) -> None:
        self.frozen = True

    def feature_strings(self, seq: TokenSequence, position: int) -> list[str]:
        """Active ``template=value`` strings for one position."""
        if not 0 <= position < len(seq):
            raise PositionOutOfRange(position, len(seq))
        text = seq.tokens[position].text
        lower = text.lower()
        prev_lower = seq.tokens[position - 1].text.lower() if position > 0 else BOS
        next_lower = (
            seq.tokens[position + 1].text.lower() if position + 1 < len(seq) else EOS
        )
        values = {
            "lower": lower,
            "shape": word_shape(text),
            "prefix1": text[:1],
            "prefix2": text[:2],
            "prefix3": text[:3],
            "prefix4": text[:4],
            "suffix1": text[-1:],
            "suffix2": text[-2:],
            "suffix3": text[-3:],
            "suffix4": text[-4:],
            "isDigit": str(text.isdigit()).lower(),
            "hasDigit": str(any(c.isdigit() for c in text)).lower(),
            "isCapitalized": str(text[:1].isupper()).lower(),
            "isPunct": str(bool(text) and not any(c.isalnum() for c in text)).lower(),
            "prevLower": prev_lower,
            "nextLower": next_lower,
        }
        strings = []
        for name in self.templates:
            if name == "bias":
                strings.append("bias")
            else:
                strings.append(f"{name}={values[name]}")
        if self.char_ngrams:
            strings.extend(
                char_ngram_features(text, self.char_ngram_min, self.char_ngram_max)
            )
        return strings

    def extract(self, seq: TokenSequence, position: int) -> SparseFeatureVector:
        """Map the position's feature strings through the index.

        Grows the index unless frozen; frozen extraction drops unseen
        strings instead of minting ids.
        """
        ids = set()
        for s in self.feature_strings(seq, position):
            idx = self.feature_index.get(s)
            if idx is None:
                if self.frozen:
                    continue
                idx = len(self.feature_index)
                self.feature_index[s] = idx
            ids.add(idx)
        indices = sorted(ids)
        return SparseFeatureVector(indices=indices, values=[1.0] * len(indices))

    def to_dict(self) -> dict:
        return {
            "templates": list(self.templates),
            "char_ngrams": self.char_ngrams,
            "char_ngram_min": self.char_ngram_min,
            "char_ngram_max": self.char_ngram_max,
            "index": self.feature_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureTemplateSet":
        fts = cls(
            templates=tuple(data["templates"]),
            char_ngrams=bool(data["char_ngrams"]),
            char_ngram_min=int(data["char_ngram_min"]),
            char_ngram_max=int(data["char_ngram_max"]),
        )
        fts.feature_index = {str(k): int(v) for k, v in data["index"].items()}
        fts.freeze()
        return fts


# ---------------------------------------------------------------------------
# dense embeddings


@dataclass
class DenseEmbedding:
    """Static token->vector table with an unknown-token fallback vector."""

    dim: int
    table: dict[str, np.ndarray]
    unk_vector: np.ndarray
    trainable: bool = False
    lowercase: bool = False  # the corpus case policy, applied before lookup

    def vector(self, token: Token | str) -> np.ndarray:
        text = token.text if isinstance(token, Token) else token
        if self.lowercase:
            text = text.lower()
        hit = self.table.get(text)
        return hit if hit is not None else self.unk_vector


def load_word_vectors(path: str | Path, expected_dim: int | None = None) -> DenseEmbedding:
    """Parse a GloVe-style text file: ``token v1 v2 ... vD`` per line.

    An optional ``V D`` header line is detected and skipped.  The unknown
    vector is the elementwise mean of all loaded vectors.
    """
    table: dict[str, np.ndarray] = {}
    dim: int | None = expected_dim
    total: np.ndarray | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(" ")
            if line_no == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header "V D"
                except ValueError:
                    pass
            token = parts[0]
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise VectorParseError(line_no) from exc
            if vec.size == 0:
                raise VectorParseError(line_no, "no vector components")
            if dim is None:
                dim = vec.size
            if vec.size != dim:
                raise DimMismatch(f"expected {dim} components, got {vec.size}", line_no)
            table[token] = vec
            total = vec.copy() if total is None else total + vec
    if dim is None or not table:
        raise VectorParseError(0, "empty vector file")
    return DenseEmbedding(dim=dim, table=table, unk_vector=total / len(table))


def concat_embed(parts: list[np.ndarray]) -> np.ndarray:
    """Concatenate dense parts in declared order."""
    if not parts:
        raise EmptyParts("no vectors to concatenate")
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def hashed_char_ngram_vector(
    text: str, dim: int, n_min: int = 2, n_max: int = 3
) -> np.ndarray:
    """Fixed-width count vector of char n-grams via FNV-1a bucket hashing.

    A deterministic hash keeps checkpoints portable; Python's builtin
    ``hash`` is salted per process.
    """
    vec = np.zeros(dim, dtype=np.float64)
    for gram in char_ngram_features(text, n_min, n_max):
        h = 0xCBF29CE484222325
        for byte in gram.encode("utf-8"):
            h = ((h ^ byte) * 0x100000001B3) & ((1 << 64) - 1)
        vec[h % dim] += 1.0
    return vec
