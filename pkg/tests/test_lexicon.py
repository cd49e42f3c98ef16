"""
Tests for xner_transfer.lexicon module.
"""

import pytest

from xner_transfer.lexicon import (
    MAX_COMPOSED,
    Lexicon,
    format_lexicon,
    parse_lexicon,
    read_lexicon,
    write_lexicon,
)


class TestLexicon:
    """Test lexicon lookups."""

    def test_lookup_is_case_insensitive(self):
        """Test that keys are case-folded but targets keep case."""
        lexicon = Lexicon([("Berlin", "Berlino")])
        assert lexicon.get("BERLIN") == {"Berlino"}
        assert "berlin" in lexicon

    def test_multiple_targets(self):
        """Test that a phrase can have several translations."""
        lexicon = Lexicon([("bank", "banca"), ("bank", "riva")])
        assert lexicon.get("bank") == {"banca", "riva"}
        assert len(lexicon) == 2

    def test_compositional_translation(self):
        """Test word-by-word composition for multi-word phrases."""
        lexicon = Lexicon([("new", "neu"), ("york", "york")])
        assert lexicon.translations("New York") == {"neu york"}

    def test_composition_needs_every_word(self):
        """Test that one unknown word blocks composition."""
        lexicon = Lexicon([("new", "neu")])
        assert lexicon.translations("new jersey") == set()

    def test_composition_is_bounded(self):
        """Test that composition stops at MAX_COMPOSED candidates."""
        entries = [(w, f"{w}{i}") for w in ("a", "b", "c") for i in range(5)]
        lexicon = Lexicon(entries)
        assert len(lexicon.translations("a b c")) == MAX_COMPOSED

    def test_empty_phrase_rejected(self):
        """Test that blank phrases are rejected."""
        with pytest.raises(ValueError):
            Lexicon().add(" ", "x")

    def test_inverse(self):
        """Test lexicon inversion."""
        inverse = Lexicon([("house", "casa")]).inverse()
        assert inverse.get("casa") == {"house"}


class TestLexiconFiles:
    """Test the TSV format."""

    def test_parse_and_format(self):
        """Test parsing skips blank lines and formatting is sorted."""
        lexicon = parse_lexicon("b\tx\n\na\ty\n")
        assert format_lexicon(lexicon) == "a\ty\nb\tx\n"

    def test_parse_rejects_missing_tab(self):
        """Test that a line without a tab names its line number."""
        with pytest.raises(ValueError, match="line 2"):
            parse_lexicon("a\tb\nbroken\n")

    def test_file_round_trip(self, tmp_path):
        """Test writing then reading a lexicon file."""
        lexicon = Lexicon([("red", "rosso"), ("red cross", "croce rossa")])
        path = tmp_path / "lexicon.tsv"
        write_lexicon(path, lexicon)
        assert read_lexicon(path) == lexicon
