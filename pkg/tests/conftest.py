"""Shared fixtures: tiny deterministic tagger and classifier experiments,
trained once per session through the real CLI."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

TAGGER_TRAIN = """\
Calzolari, author
N. author
(1982). date
towards title
a title
lexical title
database. title
Computational journal
Linguistics, journal
45--97. pages

Prasad, author
A. author
(2018). date
neural title
parsing title
of title
references. title
Language journal
Resources, journal
12--34. pages

Hoffmann, author
K. author
(1999). date
statistical title
models title
for title
tagging. title
Speech journal
Communication, journal
101--120. pages

Ivanova, author
M. author
(2005). date
discourse title
structure title
analysis. title
Artificial journal
Intelligence, journal
7--19. pages

Larsen, author
B. author
(2011). date
corpus title
based title
retrieval. title
Information journal
Processing, journal
55--71. pages

Takahashi, author
Y. author
(1995). date
machine title
translation title
evaluation. title
Cognitive journal
Science, journal
210--233. pages
"""

TAGGER_DEV = """\
Calzolari, author
M. author
(2005). date
statistical title
parsing title
of title
references. title
Computational journal
Linguistics, journal
12--34. pages

Hoffmann, author
A. author
(1982). date
corpus title
models title
analysis. title
Information journal
Processing, journal
7--19. pages
"""

TAGGER_TEST = """\
Prasad, author
K. author
(1999). date
neural title
models title
retrieval. title
Speech journal
Communication, journal
55--71. pages

Larsen, author
N. author
(2011). date
towards title
discourse title
tagging. title
Artificial journal
Intelligence, journal
101--120. pages
"""

TAGGER_EXPERIMENT = """\
# reference-string tagging fixture
[dataset]
class="SeqLabellingDataset"
train="train.conll"
dev="dev.conll"
test="test.conll"
format="conll"

[model]
class="FeatureCrfTagger"
l2=0.0

[engine]
optimizer="sgd"
lr=0.5
epochs=8
batch_size=2
clip_norm=5.0
seed=7
metric="token_accuracy"
checkpoint_dir="ckpt"
"""

CLASSIFIER_TRAIN = """\
"we follow the approach of prior work",background
"previous studies have explored this topic",background
"the corpus was introduced in earlier work",background
"this idea builds on existing research",background
"we apply their algorithm to our data",method
"the model uses a standard architecture",method
"we adopt the training procedure described",method
"our implementation extends the public code",method
"our results exceed the reported baseline",result
"the accuracy improves over their numbers",result
"we compare scores against the benchmark",result
"performance matches the published figures",result
"""

CLASSIFIER_DEV = """\
"we follow prior work on this topic",background
"we apply the standard training procedure",method
"our scores exceed the published baseline",result
"""

CLASSIFIER_TEST = """\
"earlier research explored the corpus",background
"the implementation uses their algorithm",method
"accuracy improves over the baseline",result
"""

CLASSIFIER_EXPERIMENT = """\
# citation-intent style classification fixture
[dataset]
class="TextClassificationDataset"
train="train.csv"
dev="dev.csv"
test="test.csv"
format="csv"
lowercase=true

[model]
class="SimpleClassifier"
encoding_dimension=16
num_classes=3
classification_layer_bias=true

[model.encoder]
class="BOW_Encoder"
emb_dim=16
aggregation_type="sum"
dropout_value=0.0

[[model.encoder.embedder]]
class="VanillaEmbedder"
embed="word_vocab"
emb_dim=16
freeze=False

[engine]
optimizer="sgd"
lr=0.5
epochs=30
batch_size=4
seed=11
metric="accuracy"
checkpoint_dir="ckpt"
"""


def run_cli(args: list[str], cwd: Path, stdin: str | None = None):
    return subprocess.run(
        [sys.executable, "-m", "seqlab.cli", *args],
        cwd=cwd,
        input=stdin,
        capture_output=True,
        text=True,
    )


def write_tagger_files(root: Path) -> Path:
    (root / "train.conll").write_text(TAGGER_TRAIN, encoding="utf-8")
    (root / "dev.conll").write_text(TAGGER_DEV, encoding="utf-8")
    (root / "test.conll").write_text(TAGGER_TEST, encoding="utf-8")
    exp = root / "tagger.toml"
    exp.write_text(TAGGER_EXPERIMENT, encoding="utf-8")
    return exp


def write_classifier_files(root: Path) -> Path:
    (root / "train.csv").write_text(CLASSIFIER_TRAIN, encoding="utf-8")
    (root / "dev.csv").write_text(CLASSIFIER_DEV, encoding="utf-8")
    (root / "test.csv").write_text(CLASSIFIER_TEST, encoding="utf-8")
    exp = root / "classifier.toml"
    exp.write_text(CLASSIFIER_EXPERIMENT, encoding="utf-8")
    return exp


@pytest.fixture(scope="session")
def tagger_fixture(tmp_path_factory) -> dict:
    root = tmp_path_factory.mktemp("tagger_fx")
    exp = write_tagger_files(root)
    proc = run_cli(["run", exp.name], cwd=root)
    assert proc.returncode == 0, proc.stderr
    return {"root": root, "experiment": exp, "checkpoint": root / "ckpt",
            "run_stdout": proc.stdout}


@pytest.fixture(scope="session")
def classifier_fixture(tmp_path_factory) -> dict:
    root = tmp_path_factory.mktemp("classifier_fx")
    exp = write_classifier_files(root)
    proc = run_cli(["run", exp.name], cwd=root)
    assert proc.returncode == 0, proc.stderr
    return {"root": root, "experiment": exp, "checkpoint": root / "ckpt",
            "run_stdout": proc.stdout}


GOLDEN_DIR = Path(__file__).parent / "golden"


def check_golden(name: str, actual: str) -> None:
    """Compare against a committed golden file; write it on first use."""
    path = GOLDEN_DIR / name
    if not path.exists():  # pragma: no cover - only during fixture authoring
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(actual, encoding="utf-8")
        raise AssertionError(f"golden {name} was missing; wrote it, rerun to confirm")
    assert actual == path.read_text(encoding="utf-8"), f"output differs from golden {name}"
