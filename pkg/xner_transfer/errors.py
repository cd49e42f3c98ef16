"""
Exception hierarchy for xner-transfer.

Errors caused by malformed input also derive from ValueError.
"""

from typing import Any, List, Sequence


class XnerError(Exception):
    """Base class for every error raised by this package."""


# Corpus input


class CorpusError(XnerError, ValueError):
    """A corpus file or text could not be read."""


class EmptyInput(CorpusError):
    def __init__(self) -> None:
        super().__init__("input contains no sentences")


class MalformedLine(CorpusError):
    def __init__(self, line_no: int, line: str, reason: str = "wrong column count"):
        self.line_no = line_no
        self.line = line
        super().__init__(f"line {line_no}: {reason}: {line!r}")


class UnknownTag(CorpusError):
    def __init__(self, line_no: int, tag: str):
        self.line_no = line_no
        self.tag = tag
        super().__init__(f"line {line_no}: unknown tag {tag!r}")


class LineCountMismatch(CorpusError):
    def __init__(self, source_count: int, target_count: int):
        self.source_count = source_count
        self.target_count = target_count
        super().__init__(
            f"parallel files differ in length: source has {source_count} lines, "
            f"target has {target_count}"
        )


class EmptyLine(CorpusError):
    def __init__(self, line_no: int, side: str):
        self.line_no = line_no
        self.side = side
        super().__init__(f"{side} line {line_no} is empty")


class AllCorporaEmpty(CorpusError):
    def __init__(self) -> None:
        super().__init__("every corpus passed for sampling is empty")


class UnknownDomain(CorpusError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"domain {name!r} is not registered")


class InvalidSynthSpec(CorpusError):
    def __init__(self, errors: List[str]):
        self.errors = errors
        super().__init__("invalid synthetic corpus spec: " + "; ".join(errors))


# Spans and losses


class OverlappingSpans(XnerError, ValueError):
    def __init__(self, first: Any, second: Any):
        self.first = first
        self.second = second
        super().__init__(f"spans overlap: {first} and {second}")


class IndexOutOfRange(XnerError, IndexError):
    def __init__(self, index: int, size: int):
        self.index = index
        self.size = size
        super().__init__(f"label index {index} outside [0, {size})")


class AllMasked(XnerError, ValueError):
    def __init__(self) -> None:
        super().__init__("every token in the batch is masked")


# Tagger


class EmptyCorpus(XnerError, ValueError):
    def __init__(self) -> None:
        super().__init__("cannot build a vocabulary or train on an empty corpus")


class NonFiniteLoss(XnerError, ArithmeticError):
    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class ModelFormatError(XnerError, ValueError):
    """A serialized model file is not a valid model container."""


# Alignment


class AlignmentError(XnerError):
    """An alignment backend failed."""


class TransportError(AlignmentError):
    """The remote aligner could not be reached or answered with an error."""


class ProtocolError(AlignmentError, ValueError):
    """The remote aligner answered with a payload that breaks the wire contract."""


class InsufficientEntities(AlignmentError, ValueError):
    def __init__(self) -> None:
        super().__init__("no entity surface available to build a negative example")


# Projection


class ProjectionInterrupted(XnerError):
    """
    Projection stopped part way; `cursor` is the index of the first pair
    that was not processed and `outcomes` holds everything before it.
    """

    def __init__(self, cursor: int, outcomes: Sequence[Any], cause: Exception):
        self.cursor = cursor
        self.outcomes = list(outcomes)
        self.cause = cause
        super().__init__(f"projection interrupted at pair {cursor}: {cause}")


# Evaluation and experiments


class ShapeMismatch(XnerError, ValueError):
    def __init__(self, sentence_index: int, reason: str):
        self.sentence_index = sentence_index
        super().__init__(f"sentence {sentence_index}: {reason}")


class SizeExceedsData(XnerError, ValueError):
    def __init__(self, size: int, available: int):
        self.size = size
        self.available = available
        super().__init__(f"requested {size} sentences but only {available} exist")


class CellFailed(XnerError):
    """One (row, seed) cell of an experiment failed."""

    def __init__(self, row: str, seed: int, cause: Exception):
        self.row = row
        self.seed = seed
        self.cause = cause
        super().__init__(f"experiment row {row!r}, seed {seed}: {cause}")


# CLI


class ConfigError(XnerError, ValueError):
    def __init__(self, errors: List[str]):
        self.errors = errors
        super().__init__("invalid configuration: " + "; ".join(errors))


class RunLocked(XnerError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"run directory is locked by another process: {path}")
