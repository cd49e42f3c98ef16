"""
Tests for xner_transfer.spans module.
"""

import pytest

from xner_transfer.corpus import LabeledSentence
from xner_transfer.errors import OverlappingSpans
from xner_transfer.spans import (
    EntitySpan,
    decode_spans,
    encode_spans,
    is_iob2,
    remap_types,
    sentence_spans,
    split_tag,
    suppress_type,
    to_iob2,
)


class TestEntitySpan:
    """Test the span value type."""

    def test_rejects_empty_span(self):
        """Test that start must be below end."""
        with pytest.raises(ValueError):
            EntitySpan(2, 2, "PER")

    def test_overlaps(self):
        """Test half-open overlap semantics."""
        a = EntitySpan(0, 2, "PER")
        assert a.overlaps(EntitySpan(1, 3, "LOC"))
        assert not a.overlaps(EntitySpan(2, 3, "LOC"))

    def test_key_ignores_surface(self):
        """Test that the key is (start, end, type)."""
        assert EntitySpan(0, 1, "PER", "Ann").key == (0, 1, "PER")


class TestDecodeSpans:
    """Test BIO decoding."""

    def test_split_tag(self):
        """Test tag splitting."""
        assert split_tag("B-PER") == ("B", "PER")
        assert split_tag("O") == ("O", None)

    def test_decode(self):
        """Test a mixed sequence."""
        tags = ["B-PER", "I-PER", "O", "B-LOC", "B-LOC", "I-ORG"]
        spans = decode_spans(tags)
        assert [s.key for s in spans] == [
            (0, 2, "PER"),
            (3, 4, "LOC"),
            (4, 5, "LOC"),
            (5, 6, "ORG"),
        ]

    def test_decode_with_tokens(self):
        """Test that surfaces are filled from tokens."""
        sentence = LabeledSentence(
            ("Ann", "Lee", "left"), ("B-PER", "I-PER", "O")
        )
        assert sentence_spans(sentence)[0].surface == "Ann Lee"

    def test_dangling_inside_opens_span(self):
        """Test lenient reading of an I- tag after O."""
        assert [s.key for s in decode_spans(["O", "I-PER", "I-PER"])] == [
            (1, 3, "PER")
        ]

    def test_all_outside(self):
        """Test a sentence without entities."""
        assert decode_spans(["O", "O"]) == []


class TestEncodeSpans:
    """Test span encoding."""

    def test_encode_is_inverse_of_decode(self):
        """Test encode(decode(tags)) for IOB2 input."""
        tags = ["B-PER", "I-PER", "O", "B-LOC", "B-LOC", "O"]
        assert encode_spans(decode_spans(tags), len(tags)) == tags

    def test_overlap_rejected(self):
        """Test that overlapping spans raise."""
        with pytest.raises(OverlappingSpans):
            encode_spans([EntitySpan(0, 2, "PER"), EntitySpan(1, 3, "ORG")], 4)

    def test_span_past_end_rejected(self):
        """Test that a span longer than the sentence raises."""
        with pytest.raises(ValueError):
            encode_spans([EntitySpan(2, 5, "PER")], 3)


class TestTagRewrites:
    """Test IOB2 repair and type rewriting."""

    def test_to_iob2(self):
        """Test IOB1 to IOB2 conversion."""
        assert to_iob2(["I-PER", "I-PER", "O", "I-LOC", "I-ORG"]) == [
            "B-PER",
            "I-PER",
            "O",
            "B-LOC",
            "B-ORG",
        ]

    def test_is_iob2(self):
        """Test IOB2 detection."""
        assert is_iob2(["B-PER", "I-PER"])
        assert not is_iob2(["I-PER"])

    def test_suppress_type(self):
        """Test suppression of one type."""
        sentence = LabeledSentence(("a", "b", "c"), ("B-MISC", "O", "B-PER"))
        assert suppress_type(sentence, "MISC").tags == ("O", "O", "B-PER")

    def test_remap_types_keeps_adjacent_spans_apart(self):
        """Test that renaming into a neighbour's type keeps both spans."""
        sentence = LabeledSentence(("a", "b"), ("B-PER", "B-MISC"))
        remapped = remap_types(sentence, {"MISC": "PER"})
        assert remapped.tags == ("B-PER", "B-PER")

    def test_remap_to_none_drops(self):
        """Test that mapping a type to None removes its spans."""
        sentence = LabeledSentence(("a", "b"), ("B-PER", "B-MISC"))
        assert remap_types(sentence, {"MISC": None}).tags == ("B-PER", "O")
