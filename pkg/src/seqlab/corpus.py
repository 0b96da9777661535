"""Dataset reading, tokenization, numericalization, batching and downloads.

Two on-disk formats are supported: CoNLL-style column files for sequence
labeling (token in the first column, label in the last, blank line between
sequences) and RFC-4180 CSV ``text,label`` records for classification.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import re
import urllib.parse
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DigestMismatch,
    MalformedLine,
    MalformedRecord,
    UnknownTask,
)
from .rng import Rng

log = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Sequences longer than this are accepted but flagged; training cost is the
# user's problem, silent truncation would not be.
LONG_SEQUENCE_WARN = 512

_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Token:
    """One whitespace-free token and its character offset in the source line."""

    text: str
    start: int = 0

    @property
    def end(self) -> int:
        return self.start + len(self.text)


@dataclass
class TokenSequence:
    """One instance: tokens plus either per-token labels or a document class.

    ``labels`` (sequence task) and ``doc_class`` (classification task) are
    mutually exclusive; both absent means an unlabeled inference input.
    """

    tokens: list[Token]
    labels: list[str] | None = None
    doc_class: str | None = None

    def __post_init__(self):
        if self.labels is not None and self.doc_class is not None:
            raise ValueError("a sequence carries labels or a doc_class, not both")
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.tokens)} tokens"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def tokenize_whitespace(line: str) -> TokenSequence:
    """Split on maximal runs of Unicode whitespace, keeping character offsets."""
    tokens = [Token(m.group(), m.start()) for m in _TOKEN_RE.finditer(line)]
    return TokenSequence(tokens=tokens)


def tokenize_characters(token: Token | str) -> list[str]:
    """Unicode scalar values of the token text, in order."""
    text = token.text if isinstance(token, Token) else token
    return list(text)


@dataclass
class Vocabulary:
    """Bidirectional token<->id map with reserved pad (0) and unk (1) ids.

    Ids 2.. are assigned by descending frequency, ties broken
    lexicographically, over tokens meeting ``min_freq`` in the fitting
    corpus.  Immutable after fitting.
    """

    id_of: dict[str, int]
    token_of: dict[int, str]
    freq: dict[str, int]
    min_freq: int = 1
    lowercase: bool = False

    def __len__(self) -> int:
        return len(self.token_of)

    def lookup(self, token: str) -> int:
        if self.lowercase:
            token = token.lower()
        return self.id_of.get(token, UNK_ID)

    def to_dict(self) -> dict:
        return {
            "min_freq": self.min_freq,
            "lowercase": self.lowercase,
            "tokens": [self.token_of[i] for i in range(2, len(self.token_of))],
            "freq": dict(sorted(self.freq.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls(
            id_of={PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID},
            token_of={PAD_ID: PAD_TOKEN, UNK_ID: UNK_TOKEN},
            freq=dict(data.get("freq", {})),
            min_freq=int(data["min_freq"]),
            lowercase=bool(data["lowercase"]),
        )
        for offset, token in enumerate(data["tokens"]):
            vocab.id_of[token] = 2 + offset
            vocab.token_of[2 + offset] = token
        return vocab


def fit_vocabulary(
    corpus: list[TokenSequence], min_freq: int = 1, lowercase: bool = False
) -> Vocabulary:
    """Count token frequencies and assign dense ids above the reserved pair."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for seq in corpus:
        for tok in seq.tokens:
            counts[tok.text.lower() if lowercase else tok.text] += 1
    kept = [t for t, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda t: (-counts[t], t))
    vocab = Vocabulary(
        id_of={PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID},
        token_of={PAD_ID: PAD_TOKEN, UNK_ID: UNK_TOKEN},
        freq=dict(counts),
        min_freq=min_freq,
        lowercase=lowercase,
    )
    for i, token in enumerate(kept, start=2):
        vocab.id_of[token] = i
        vocab.token_of[i] = token
    return vocab


def numericalize(seq: TokenSequence, vocab: Vocabulary) -> list[int]:
    """Per-token id lookup with unk fallback (same case folding as at fit time)."""
    return [vocab.lookup(t.text) for t in seq.tokens]


@dataclass
class Batch:
    """A padded group of sequences with a validity mask."""

    items: list[TokenSequence]
    ids: list[list[int]]
    mask: list[list[bool]]
    max_len: int


def make_batches(
    data: list[TokenSequence],
    batch_size: int,
    shuffle_seed: int | None = None,
    vocab: Vocabulary | None = None,
) -> list[Batch]:
    """Group sequences into padded batches of at most ``batch_size``.

    Shuffling is a Fisher-Yates pass driven only by ``shuffle_seed``; the
    same seed reproduces the same batch composition and order.  Ids are
    padded with the pad id to the per-batch maximum length; without a
    vocabulary the id lists stay empty and only grouping happens.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = list(data)
    if shuffle_seed is not None:
        Rng(shuffle_seed).shuffle(order)
    batches = []
    for i in range(0, len(order), batch_size):
        group = order[i : i + batch_size]
        max_len = max((len(s) for s in group), default=0)
        ids = []
        mask = []
        for seq in group:
            if len(seq) > LONG_SEQUENCE_WARN:
                log.warning("sequence of length %d exceeds %d tokens", len(seq), LONG_SEQUENCE_WARN)
            row = numericalize(seq, vocab) if vocab is not None else []
            pad = max_len - len(seq)
            ids.append(row + [PAD_ID] * (pad if vocab is not None else 0))
            mask.append([True] * len(seq) + [False] * pad)
        batches.append(Batch(items=group, ids=ids, mask=mask, max_len=max_len))
    return batches


# ---------------------------------------------------------------------------
# file readers


def read_conll(path: str | Path, column_sep: str = "auto") -> list[TokenSequence]:
    """Read a CoNLL-style file: first column token, last column label.

    Blank lines separate sequences, middle columns are ignored and lines
    starting with ``-DOCSTART-`` are skipped.  ``column_sep`` is ``auto``
    (tab if the first non-blank line contains one, else whitespace runs),
    ``tab`` or ``space``.
    """
    if column_sep not in ("auto", "tab", "space"):
        raise ValueError(f"column_sep must be auto|tab|space, got {column_sep!r}")
    text = Path(path).read_text(encoding="utf-8")
    return parse_conll(text, column_sep=column_sep)


def parse_conll(text: str, column_sep: str = "auto") -> list[TokenSequence]:
    sep = column_sep
    if sep == "auto":
        sep = "space"
        for raw in text.splitlines():
            if raw.strip():
                sep = "tab" if "\t" in raw else "space"
                break

    sequences: list[TokenSequence] = []
    tokens: list[Token] = []
    labels: list[str] = []
    offset = 0  # offsets as if tokens were joined by single spaces

    def flush():
        nonlocal tokens, labels, offset
        if tokens:
            sequences.append(TokenSequence(tokens=tokens, labels=labels))
            tokens, labels = [], []
        offset = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split("\t") if sep == "tab" else line.split()
        cols = [c for c in cols if c != ""]
        if len(cols) < 2:
            raise MalformedLine(line_no, f"expected at least 2 columns, got {len(cols)}")
        tokens.append(Token(cols[0], start=offset))
        offset += len(cols[0]) + 1
        labels.append(cols[-1])
    flush()
    return sequences


def write_conll(sequences: list[TokenSequence], path: str | Path, sep: str = " ") -> None:
    """Serialize labeled sequences back to the CoNLL layout read_conll accepts."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            for tok, label in zip(seq.tokens, seq.labels or []):
                fh.write(f"{tok.text}{sep}{label}\n")
            fh.write("\n")


def read_csv(path: str | Path, has_header: bool = False) -> list[TokenSequence]:
    """Read RFC-4180 ``text,label`` records into classification instances."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_csv(text, has_header=has_header)


def parse_csv(text: str, has_header: bool = False) -> list[TokenSequence]:
    sequences = []
    reader = csv.reader(io.StringIO(text, newline=""))
    record_no = 0
    try:
        for row in reader:
            record_no += 1
            if has_header and record_no == 1:
                continue
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRecord(record_no, f"expected 2 fields, got {len(row)}")
            body, label = row
            seq = tokenize_whitespace(body)
            seq.doc_class = label
            sequences.append(seq)
    except csv.Error as exc:
        raise MalformedRecord(record_no + 1, str(exc)) from exc
    return sequences


# ---------------------------------------------------------------------------
# dataset downloads


@dataclass
class TaskRegistry:
    """Named download entries: task -> url, sha256 and file format."""

    entries: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "TaskRegistry":
        # The registry file shares the experiment config dialect: one table
        # per task with url / sha256 / format keys.
        from .graphconfig import parse_config_text

        tree = parse_config_text(Path(path).read_text(encoding="utf-8"))
        entries = {}
        for task, body in tree.items():
            if not isinstance(body, dict):
                raise MalformedLine(1, f"registry entry {task!r} is not a table")
            for key in ("url", "sha256", "format"):
                if key not in body:
                    raise MalformedLine(1, f"registry entry {task!r} lacks {key!r}")
            sha = str(body["sha256"])
            if len(sha) != 64 or any(c not in "0123456789abcdef" for c in sha.lower()):
                raise MalformedLine(1, f"registry entry {task!r}: bad sha256")
            if body["format"] not in ("conll", "csv"):
                raise MalformedLine(1, f"registry entry {task!r}: format must be conll|csv")
            entries[task] = {
                "url": str(body["url"]),
                "sha256": sha.lower(),
                "format": str(body["format"]),
            }
        return cls(entries=entries)


def _sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def download_task(task: str, registry: TaskRegistry, dest_dir: str | Path) -> Path:
    """Fetch a registered dataset to ``dest_dir`` and verify its digest.

    Idempotent: an existing file with the expected digest is kept.  On
    digest mismatch the partial download is removed.
    """
    if task not in registry.entries:
        raise UnknownTask(task, known=list(registry.entries))
    entry = registry.entries[task]
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    suffix = Path(urllib.parse.urlparse(entry["url"]).path).suffix or ".dat"
    dest = dest_dir / f"{task}{suffix}"

    if dest.exists() and _sha256_of(dest) == entry["sha256"]:
        log.info("%s already present with matching digest", dest)
        return dest

    with urllib.request.urlopen(entry["url"]) as resp, open(dest, "wb") as out:
        while True:
            chunk = resp.read(65536)
            if not chunk:
                break
            out.write(chunk)

    actual = _sha256_of(dest)
    if actual != entry["sha256"]:
        dest.unlink(missing_ok=True)
        raise DigestMismatch(expected=entry["sha256"], actual=actual)
    return dest
