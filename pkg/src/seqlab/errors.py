"""Exception types raised across the toolkit.

Every error carries its diagnostic fields as attributes so callers
(CLI, service) can format them without parsing message strings.
"""

from __future__ import annotations


class SeqlabError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------------------
# corpus


class MalformedLine(SeqlabError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {detail}" if detail else ""))


class MalformedRecord(SeqlabError):
    def __init__(self, record_no: int, detail: str = ""):
        self.record_no = record_no
        super().__init__(f"malformed record {record_no}" + (f": {detail}" if detail else ""))


class UnknownTask(SeqlabError):
    def __init__(self, task: str, known: list[str] | None = None):
        self.task = task
        self.known = known or []
        msg = f"unknown task {task!r}"
        if self.known:
            msg += f" (known: {', '.join(sorted(self.known))})"
        super().__init__(msg)


class DigestMismatch(SeqlabError):
    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(f"sha256 mismatch: expected {expected}, got {actual}")


# ---------------------------------------------------------------------------
# features


class DimMismatch(SeqlabError):
    def __init__(self, detail: str, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(detail if line_no is None else f"line {line_no}: {detail}")


class VectorParseError(SeqlabError):
    def __init__(self, line_no: int, detail: str = "non-numeric field"):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {detail}")


class EmptyParts(SeqlabError):
    pass


class PositionOutOfRange(SeqlabError):
    def __init__(self, position: int, length: int):
        self.position = position
        self.length = length
        super().__init__(f"position {position} out of range for sequence of length {length}")


# ---------------------------------------------------------------------------
# experiment configuration


class ConfigError(SeqlabError):
    """Base class for experiment-file and component-graph errors."""


class ConfigSyntaxError(ConfigError):
    def __init__(self, line_no: int, detail: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {detail}")


class MissingSection(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing required section [{name}]")


class UnknownSection(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown top-level section [{name}] (expected dataset, model or engine)")


class MissingClassKey(ConfigError):
    def __init__(self, table_path: str):
        self.table_path = table_path
        super().__init__(f"table [{table_path}] has no 'class' key")


class CycleDetected(ConfigError):
    def __init__(self, nodes: list[str]):
        self.nodes = nodes
        super().__init__(f"dependency cycle: {' -> '.join(nodes)}")


class DanglingReference(ConfigError):
    def __init__(self, src: str, dst: str):
        self.src = src
        self.dst = dst
        super().__init__(f"node {src!r} depends on missing node {dst!r}")


class DuplicateId(ConfigError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"duplicate component id {node_id!r}")


class UnknownClass(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown component class {name!r}")


class UnsupportedClass(ConfigError):
    def __init__(self, name: str, reason: str):
        self.name = name
        super().__init__(f"component class {name!r} is recognized but not supported: {reason}")


class ParamTypeError(ConfigError):
    def __init__(self, node_id: str, key: str, expected: str):
        self.node_id = node_id
        self.key = key
        self.expected = expected
        super().__init__(f"{node_id}: parameter {key!r} must be {expected}")


class MissingParam(ConfigError):
    def __init__(self, node_id: str, key: str):
        self.node_id = node_id
        self.key = key
        super().__init__(f"{node_id}: missing required parameter {key!r}")


class ExtraParam(ConfigError):
    def __init__(self, node_id: str, key: str):
        self.node_id = node_id
        self.key = key
        super().__init__(f"{node_id}: unknown parameter {key!r}")


class MissingContext(ConfigError):
    def __init__(self, node_id: str, what: str):
        self.node_id = node_id
        super().__init__(f"{node_id}: build context lacks {what}")


# ---------------------------------------------------------------------------
# model core


class LengthMismatch(SeqlabError):
    pass


class EmptySequence(SeqlabError):
    pass


class NotBioLabelSet(SeqlabError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"label {label!r} does not follow the O / B-X / I-X scheme")


class EmptyDocument(SeqlabError):
    pass


class ShapeMismatch(SeqlabError):
    def __init__(self, group: str, detail: str = ""):
        self.group = group
        super().__init__(f"shape mismatch in {group!r}" + (f": {detail}" if detail else ""))


# ---------------------------------------------------------------------------
# engine / checkpoints


class NonFiniteLoss(SeqlabError):
    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class VersionMismatch(SeqlabError):
    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(f"checkpoint format version {found} not supported (expected {supported})")


class CorruptCheckpoint(SeqlabError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"corrupt checkpoint: {detail}")


# ---------------------------------------------------------------------------
# inference


class KindMismatch(SeqlabError):
    def __init__(self, expected: str, got: str):
        self.expected = expected
        self.got = got
        super().__init__(f"model kind {got!r} cannot be used here (need {expected!r})")


class UnknownLabel(SeqlabError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"label {label!r} not in the model's label set")


class UnknownQuery(SeqlabError):
    pass


class EmptyInput(SeqlabError):
    pass


class UnknownTagFormat(SeqlabError):
    def __init__(self, index: int, label: str):
        self.index = index
        self.label = label
        super().__init__(f"label {label!r} at position {index} is neither O nor B-/I- tagged")
