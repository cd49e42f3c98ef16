"""
Bilingual phrase lexicon used by the lexical aligner.
"""

import itertools
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Set, Tuple, Union

# Compositional lookups multiply per-word alternatives; stop expanding beyond
# this many candidate phrases.
MAX_COMPOSED = 32


class Lexicon:
    """
    Source phrase -> set of target phrases.

    Keys are case-folded on insert and lookup; target phrases keep their case.
    """

    def __init__(self, entries: Iterable[Tuple[str, str]] = ()):
        self._table: Dict[str, Set[str]] = {}
        for source, target in entries:
            self.add(source, target)

    def add(self, source: str, target: str) -> None:
        source, target = " ".join(source.split()), " ".join(target.split())
        if not source or not target:
            raise ValueError("lexicon phrases must be non-empty")
        self._table.setdefault(source.casefold(), set()).add(target)

    def __contains__(self, source: object) -> bool:
        return isinstance(source, str) and source.casefold() in self._table

    def __len__(self) -> int:
        return sum(len(targets) for targets in self._table.values())

    def __iter__(self) -> Iterator[Tuple[str, str]]:
        for source in sorted(self._table):
            for target in sorted(self._table[source]):
                yield source, target

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Lexicon) and self._table == other._table

    def get(self, source: str) -> Set[str]:
        """Direct entries for a phrase."""
        return set(self._table.get(" ".join(source.split()).casefold(), ()))

    def translations(self, source: str) -> Set[str]:
        """
        Direct entries plus word-by-word compositions.

        A multi-word phrase without a direct entry is still translated when
        every word has one; e.g. {"new": "neu", "york": "york"} yields
        "neu york" for "New York".
        """
        found = self.get(source)
        words = source.split()
        if len(words) > 1:
            options: List[List[str]] = []
            for word in words:
                targets = self.get(word)
                if not targets:
                    return found
                options.append(sorted(targets))
            for combo in itertools.islice(itertools.product(*options), MAX_COMPOSED):
                found.add(" ".join(combo))
        return found

    def inverse(self) -> "Lexicon":
        return Lexicon((target, source) for source, target in self)


def parse_lexicon(text: str) -> Lexicon:
    """
    Parse a lexicon from TSV text ("source<TAB>target" per line).

    Raises:
        ValueError: If a non-blank line lacks exactly one tab
    """
    lexicon = Lexicon()
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"lexicon line {line_no}: expected source<TAB>target")
        lexicon.add(parts[0], parts[1])
    return lexicon


def format_lexicon(lexicon: Lexicon) -> str:
    return "".join(f"{source}\t{target}\n" for source, target in lexicon)


def read_lexicon(path: Union[str, Path]) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


def write_lexicon(path: Union[str, Path], lexicon: Lexicon) -> None:
    Path(path).write_text(format_lexicon(lexicon), encoding="utf-8", newline="\n")
