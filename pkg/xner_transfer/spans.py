"""
Conversion between BIO tag sequences and entity spans.
"""

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from .errors import OverlappingSpans

if TYPE_CHECKING:
    from .corpus import LabeledSentence

OUTSIDE = "O"


@dataclass(frozen=True)
class EntitySpan:
    """Half-open token interval [start, end) carrying an entity type."""

    start: int
    end: int
    etype: str
    surface: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")

    @property
    def key(self) -> Tuple[int, int, str]:
        return (self.start, self.end, self.etype)

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start < other.end and other.start < self.end


def split_tag(tag: str) -> Tuple[str, Optional[str]]:
    """Split "B-PER" into ("B", "PER"); "O" gives ("O", None)."""
    if tag == OUTSIDE:
        return OUTSIDE, None
    prefix, _, etype = tag.partition("-")
    return prefix, etype or None


def decode_spans(
    tags: Sequence[str], tokens: Optional[Sequence[str]] = None
) -> List[EntitySpan]:
    """
    Decode BIO tags into entity spans.

    An "I-T" that does not continue a span of type T opens a new span, the
    same lenient reading conlleval applies.

    Args:
        tags: Tag sequence
        tokens: Tokens used to fill in span surfaces (surfaces stay empty
            when omitted)

    Returns:
        Non-overlapping spans sorted by start
    """
    spans: List[EntitySpan] = []
    start: Optional[int] = None
    current: Optional[str] = None

    def close(end: int) -> None:
        if start is not None and current is not None:
            surface = " ".join(tokens[start:end]) if tokens is not None else ""
            spans.append(EntitySpan(start, end, current, surface))

    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if prefix == "I" and start is not None and etype == current:
            continue
        close(i)
        if prefix in ("B", "I") and etype:
            start, current = i, etype
        else:
            start, current = None, None
    close(len(tags))
    return spans


def sentence_spans(sentence: "LabeledSentence") -> List[EntitySpan]:
    """Decode a sentence's tags with surfaces filled in."""
    return decode_spans(sentence.tags, sentence.tokens)


def encode_spans(spans: Sequence[EntitySpan], length: int) -> List[str]:
    """
    Encode spans as IOB2 tags.

    Raises:
        OverlappingSpans: If any two spans intersect
        ValueError: If a span reaches past `length`
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.overlaps(nxt):
            raise OverlappingSpans(prev, nxt)

    tags = [OUTSIDE] * length
    for span in ordered:
        if span.end > length:
            raise ValueError(f"span {span} exceeds sentence length {length}")
        tags[span.start] = f"B-{span.etype}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.etype}"
    return tags


def to_iob2(tags: Sequence[str]) -> List[str]:
    """Rewrite dangling "I-T" tags as "B-T" (also turns IOB1 into IOB2)."""
    repaired: List[str] = []
    previous = OUTSIDE
    for tag in tags:
        prefix, etype = split_tag(tag)
        if prefix == "I" and split_tag(previous)[1] != etype:
            tag = f"B-{etype}"
        repaired.append(tag)
        previous = tag
    return repaired


def is_iob2(tags: Sequence[str]) -> bool:
    return list(tags) == to_iob2(tags)


def remap_types(
    sentence: "LabeledSentence", mapping: Dict[str, Optional[str]]
) -> "LabeledSentence":
    """
    Rename entity types; a type mapped to None becomes "O".

    Spans are remapped as units, so a renamed span never merges into a
    neighbour of the same type.
    """
    spans = []
    for span in decode_spans(sentence.tags):
        new_type = mapping.get(span.etype, span.etype)
        if new_type is not None:
            spans.append(replace(span, etype=new_type))
    return replace(sentence, tags=tuple(encode_spans(spans, len(sentence.tags))))


def suppress_type(sentence: "LabeledSentence", etype: str) -> "LabeledSentence":
    """Replace every tag of `etype` with "O"; other tags are untouched."""
    tags = tuple(
        OUTSIDE if split_tag(tag)[1] == etype else tag for tag in sentence.tags
    )
    return replace(sentence, tags=tags)
