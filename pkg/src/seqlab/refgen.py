"""Deterministic synthetic reference-string generator.

Produces citation-like token sequences over five fields (author, date,
title, journal, pages) whose shapes are unambiguous enough for the CRF to
learn quickly.  Used by the test suite's learnability checks and handy for
demos; real reference parsing needs real annotated data.
"""

from __future__ import annotations

from pathlib import Path

from .corpus import Token, TokenSequence, write_conll
from .rng import Rng

SURNAMES = [
    "Anders", "Baranov", "Calzolari", "Dubois", "Eriksen", "Fontaine",
    "Garrett", "Hoffmann", "Ivanova", "Jelinek", "Kaufmann", "Larsen",
    "Marchetti", "Novak", "Okafor", "Petrov", "Quirke", "Rossi",
    "Schneider", "Takahashi", "Ueda", "Varga", "Weiss", "Xdepapa",
    "Yamada", "Zhukov",
]

TITLE_WORDS = [
    "adaptive", "analysis", "approach", "automatic", "classification",
    "corpus", "data", "detection", "discourse", "evaluation", "extraction",
    "framework", "grammar", "inference", "knowledge", "language",
    "learning", "lexical", "machine", "methods", "models", "networks",
    "parsing", "probabilistic", "representation", "retrieval", "semantic",
    "sequence", "statistical", "structure", "syntax", "systems", "tagging",
    "text", "translation", "understanding",
]

JOURNAL_WORDS = [
    "Computational", "Linguistics", "Artificial", "Intelligence",
    "Information", "Processing", "Cognitive", "Science", "Language",
    "Resources", "Speech", "Communication", "Knowledge", "Engineering",
]


def _make_reference(rng: Rng) -> TokenSequence:
    words: list[str] = []
    labels: list[str] = []

    def emit(text: str, label: str):
        words.append(text)
        labels.append(label)

    for _ in range(1 + rng.randbelow(3)):
        emit(SURNAMES[rng.randbelow(len(SURNAMES))] + ",", "author")
        emit(chr(ord("A") + rng.randbelow(26)) + ".", "author")

    emit(f"({1950 + rng.randbelow(70)}).", "date")

    n_title = 3 + rng.randbelow(6)
    for i in range(n_title):
        word = TITLE_WORDS[rng.randbelow(len(TITLE_WORDS))]
        emit(word + "." if i == n_title - 1 else word, "title")

    n_journal = 1 + rng.randbelow(3)
    for i in range(n_journal):
        word = JOURNAL_WORDS[rng.randbelow(len(JOURNAL_WORDS))]
        emit(word + "," if i == n_journal - 1 else word, "journal")

    lo = 1 + rng.randbelow(400)
    hi = lo + 1 + rng.randbelow(40)
    if rng.randbelow(2):
        emit("pp.", "pages")
        emit(f"{lo}-{hi}.", "pages")
    else:
        emit(f"{lo}--{hi}.", "pages")

    tokens = []
    offset = 0
    for text in words:
        tokens.append(Token(text, offset))
        offset += len(text) + 1
    return TokenSequence(tokens=tokens, labels=labels)


def generate_references(count: int, seed: int) -> list[TokenSequence]:
    """``count`` labeled references, reproducible from the seed alone."""
    rng = Rng(seed)
    return [_make_reference(rng) for _ in range(count)]


def write_reference_corpus(path: str | Path, count: int, seed: int) -> list[TokenSequence]:
    data = generate_references(count, seed)
    write_conll(data, path)
    return data
