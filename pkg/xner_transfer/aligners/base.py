"""
Alignment query and result types shared by every aligner backend.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple


@dataclass(frozen=True)
class AlignmentQuery:
    """A source-language entity surface and the target sentence to search."""

    entity: str
    tokens: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.entity.strip():
            raise ValueError("entity surface must be non-empty")
        if not self.tokens:
            raise ValueError("target sentence must be non-empty")


@dataclass(frozen=True)
class AlignedSpan:
    """Contiguous target span [start, end) with a confidence score."""

    start: int
    end: int
    score: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def surface(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens[self.start : self.end])


@dataclass(frozen=True)
class AlignmentResult:
    """Spans sorted by start; no spans means the entity was not found."""

    spans: Tuple[AlignedSpan, ...] = ()

    def __post_init__(self) -> None:
        spans = tuple(sorted(self.spans, key=lambda s: (s.start, s.end)))
        for prev, nxt in zip(spans, spans[1:]):
            if nxt.start < prev.end:
                raise ValueError(f"aligned spans overlap: {prev} and {nxt}")
        object.__setattr__(self, "spans", spans)

    @property
    def found(self) -> bool:
        return bool(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __iter__(self) -> Iterator[AlignedSpan]:
        return iter(self.spans)


@dataclass(frozen=True)
class AlignerConfig:
    threshold: float = 0.7
    max_span_len: int = 6
    tie_epsilon: float = 0.02

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.max_span_len < 1:
            raise ValueError("max_span_len must be >= 1")
        if self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be non-negative")


class Aligner(ABC):
    """
    Base class for alignment backends.

    Subclasses implement align(); align_many() answers a batch in query order.
    """

    name = "aligner"

    @abstractmethod
    def align(self, query: AlignmentQuery) -> AlignmentResult:
        """Find the target span(s) naming the query entity."""

    def align_many(self, queries: Sequence[AlignmentQuery]) -> List[AlignmentResult]:
        return [self.align(query) for query in queries]


def spans_to_mask(spans: Sequence[AlignedSpan], length: int) -> List[int]:
    """
    Binary token mask with 1 inside any span.

    Raises:
        ValueError: If a span reaches past `length`
    """
    mask = [0] * length
    for span in spans:
        if span.end > length:
            raise ValueError(f"span {span} exceeds sentence length {length}")
        for i in range(span.start, span.end):
            mask[i] = 1
    return mask


def mask_to_spans(
    mask: Sequence[int], scores: Optional[Sequence[float]] = None
) -> List[AlignedSpan]:
    """
    Turn each maximal run of 1s into one span.

    A span's score is the mean token score over its run, or 1.0 without
    scores. Adjacent runs are never merged.
    """
    spans = []
    start: Optional[int] = None
    for i, bit in enumerate(list(mask) + [0]):
        if bit and start is None:
            start = i
        elif not bit and start is not None:
            score = 1.0 if scores is None else sum(scores[start:i]) / (i - start)
            spans.append(AlignedSpan(start, i, min(max(score, 0.0), 1.0)))
            start = None
    return spans
