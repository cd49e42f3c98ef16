"""
Corpus formats: CoNLL tagging files, Moses-style parallel text, equal-weight
sampling across corpora and a synthetic bilingual corpus generator.
"""

import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .errors import (
    AllCorporaEmpty,
    EmptyInput,
    EmptyLine,
    InvalidSynthSpec,
    LineCountMismatch,
    MalformedLine,
    UnknownDomain,
    UnknownTag,
)
from .lexicon import Lexicon
from .registry import ENTITY_TYPES, get_domain, is_known_domain
from .spans import OUTSIDE, split_tag, to_iob2

logger = logging.getLogger(__name__)

DOCSTART = "-DOCSTART-"


def is_valid_token(surface: str) -> bool:
    return bool(surface) and not any(ch.isspace() for ch in surface)


@dataclass(frozen=True)
class LabeledSentence:
    """Tokens with one BIO tag each."""

    tokens: Tuple[str, ...]
    tags: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        for token in self.tokens:
            if not is_valid_token(token):
                raise ValueError(f"invalid token {token!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def unlabeled(cls, tokens: Sequence[str]) -> "LabeledSentence":
        return cls(tuple(tokens), (OUTSIDE,) * len(tokens))

    @property
    def has_entities(self) -> bool:
        return any(tag != OUTSIDE for tag in self.tags)


@dataclass(frozen=True)
class ParallelPair:
    """Line-aligned source/target sentence pair."""

    source: Tuple[str, ...]
    target: Tuple[str, ...]
    domain: str
    id: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.source or not self.target:
            raise ValueError(f"pair {self.id}: both sides must be non-empty")


# CoNLL


def _check_tag(tag: str, type_set: Set[str], line_no: int) -> None:
    prefix, etype = split_tag(tag)
    if prefix == OUTSIDE:
        return
    if prefix not in ("B", "I") or etype not in type_set:
        raise UnknownTag(line_no, tag)


def parse_conll(text: str, type_set: Set[str]) -> List[LabeledSentence]:
    """
    Parse CoNLL text: one token per line, tag in the last column, blank
    lines between sentences, "-DOCSTART-" lines ignored.

    IOB1 tags are normalised to IOB2 on the way in.

    Args:
        text: File contents
        type_set: Entity types the tags may use

    Returns:
        Sentences in file order

    Raises:
        EmptyInput: If the text holds no sentence
        MalformedLine: If a line has fewer than two columns or a column count
            different from the first token line
        UnknownTag: If a tag is not "O" or B-/I- of a type in type_set
    """
    sentences: List[LabeledSentence] = []
    tokens: List[str] = []
    tags: List[str] = []
    n_columns: Optional[int] = None

    def flush() -> None:
        if tokens:
            sentences.append(LabeledSentence(tuple(tokens), tuple(to_iob2(tags))))
            tokens.clear()
            tags.clear()

    for line_no, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith(DOCSTART):
            flush()
            continue
        columns = line.split()
        if len(columns) < 2:
            raise MalformedLine(line_no, raw)
        if n_columns is None:
            n_columns = len(columns)
        elif len(columns) != n_columns:
            raise MalformedLine(
                line_no, raw, f"expected {n_columns} columns, got {len(columns)}"
            )
        _check_tag(columns[-1], type_set, line_no)
        tokens.append(columns[0])
        tags.append(columns[-1])
    flush()

    if not sentences:
        raise EmptyInput()
    return sentences


def write_conll(sentences: Sequence[LabeledSentence]) -> str:
    """Format sentences as two-column CoNLL text ("token tag" lines)."""
    parts = []
    for sentence in sentences:
        for token, tag in zip(sentence.tokens, sentence.tags):
            parts.append(f"{token} {tag}\n")
        parts.append("\n")
    return "".join(parts)


def read_conll_file(
    path: Union[str, Path], type_set: Set[str]
) -> List[LabeledSentence]:
    return parse_conll(Path(path).read_text(encoding="utf-8"), type_set)


def write_conll_file(
    path: Union[str, Path], sentences: Sequence[LabeledSentence]
) -> None:
    Path(path).write_text(write_conll(sentences), encoding="utf-8", newline="\n")


# Parallel text


def read_parallel(
    source_text: str, target_text: str, domain: str
) -> List[ParallelPair]:
    """
    Join two line-aligned texts into pairs; ids are 0-based line numbers.

    Raises:
        LineCountMismatch: If the texts have different line counts
        EmptyLine: If line k of either text is blank
        UnknownDomain: If the domain is not registered
    """
    if not is_known_domain(domain):
        raise UnknownDomain(domain)

    source_lines = source_text.splitlines()
    target_lines = target_text.splitlines()
    if len(source_lines) != len(target_lines):
        raise LineCountMismatch(len(source_lines), len(target_lines))

    pairs = []
    for k, (source_line, target_line) in enumerate(zip(source_lines, target_lines)):
        source, target = source_line.split(), target_line.split()
        if not source:
            raise EmptyLine(k, "source")
        if not target:
            raise EmptyLine(k, "target")
        pairs.append(ParallelPair(tuple(source), tuple(target), domain, k))
    return pairs


def read_parallel_files(
    source_path: Union[str, Path], target_path: Union[str, Path], domain: str
) -> List[ParallelPair]:
    return read_parallel(
        Path(source_path).read_text(encoding="utf-8"),
        Path(target_path).read_text(encoding="utf-8"),
        domain,
    )


def write_parallel_files(
    source_path: Union[str, Path],
    target_path: Union[str, Path],
    pairs: Sequence[ParallelPair],
) -> None:
    for path, side in ((source_path, "source"), (target_path, "target")):
        lines = "".join(" ".join(getattr(p, side)) + "\n" for p in pairs)
        Path(path).write_text(lines, encoding="utf-8", newline="\n")


def _equal_quotas(sizes: Sequence[int], n: int) -> List[int]:
    """
    Split n across corpora as evenly as their sizes allow; a corpus smaller
    than its share gives everything and the rest is re-split among the others.
    """
    quotas = [0] * len(sizes)
    open_ = list(range(len(sizes)))
    remaining = n
    while open_ and remaining > 0:
        share, extra = divmod(remaining, len(open_))
        saturated = [i for i in open_ if sizes[i] <= share]
        if saturated:
            for i in saturated:
                quotas[i] = sizes[i]
                remaining -= sizes[i]
            open_ = [i for i in open_ if i not in saturated]
            continue
        for rank, i in enumerate(open_):
            quotas[i] = share + (1 if rank < extra else 0)
        remaining = 0
    return quotas


def sample_equal_weights(
    corpora: Sequence[Tuple[str, Sequence[ParallelPair]]], n: int, seed: int
) -> List[ParallelPair]:
    """
    Draw n pairs giving every corpus the same weight.

    Args:
        corpora: (domain, pairs) per corpus
        n: Number of pairs to draw (fewer come back if the corpora hold fewer)
        seed: Sampling seed

    Returns:
        Sampled pairs in seeded random order

    Raises:
        AllCorporaEmpty: If no corpus has a pair
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if not any(pairs for _, pairs in corpora):
        raise AllCorporaEmpty()

    # Canonical order makes the draw depend on each corpus's contents only.
    pools = [
        sorted(pairs, key=lambda p: (p.source, p.target, p.domain, p.id))
        for _, pairs in corpora
    ]
    quotas = _equal_quotas([len(pool) for pool in pools], n)
    rng = np.random.default_rng(seed)

    drawn: List[ParallelPair] = []
    for (domain, _), pool, quota in zip(corpora, pools, quotas):
        picks = rng.choice(len(pool), size=quota, replace=False) if quota else []
        drawn.extend(pool[int(i)] for i in sorted(picks))
        logger.debug("sampled %d of %d pairs from %s", quota, len(pool), domain)
    order = rng.permutation(len(drawn))
    return [drawn[int(i)] for i in order]


# Synthetic corpora

_SOURCE_CONSONANTS = "bdgklmnprst"
_TARGET_CONSONANTS = "cfhjvwxz"
_VOWELS = "aeiou"
_CUES_PER_TYPE = 3
_ORG_SUFFIXES = 4
_MENTION_SLOTS = 3
# Entity types whose names are carried over to the target language unchanged.
_COPIED_TYPES = ("PER", "ORG")


@dataclass(frozen=True)
class SynthSpec:
    """
    Parameters of a synthetic bilingual corpus.

    ambiguous_rate is the share of mentions whose name is a single word
    shared by every entity type, so only the cue tells the type apart;
    cue_drop is the share of mentions written without their cue word.
    """

    vocab_size: int = 400
    lexicon_seed: int = 7
    entity_rate: float = 0.5
    reorder_prob: float = 0.1
    ambiguous_rate: float = 0.15
    cue_drop: float = 0.15
    type_weights: Mapping[str, float] = field(
        default_factory=lambda: {"PER": 1.0, "ORG": 1.0, "LOC": 1.0}
    )
    domain: str = "synthetic"

    def validate(self) -> List[str]:
        errors = []
        if self.vocab_size < 50:
            errors.append("vocab_size must be at least 50")
        for name in ("entity_rate", "reorder_prob", "ambiguous_rate", "cue_drop"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{name} must lie in [0, 1]")
        if not self.type_weights:
            errors.append("type_weights must not be empty")
        for etype, weight in self.type_weights.items():
            if etype not in ENTITY_TYPES:
                errors.append(f"unknown entity type {etype}")
            if weight < 0:
                errors.append(f"weight for {etype} must be non-negative")
        if self.type_weights and not any(w > 0 for w in self.type_weights.values()):
            errors.append("type_weights needs at least one positive weight")
        if not is_known_domain(self.domain):
            errors.append(f"domain {self.domain!r} is not registered")
        if not errors and _general_budget(self) < 10:
            errors.append("vocab_size too small for the number of entity types")
        return errors


@dataclass
class SyntheticCorpus:
    """Generated corpus; target_gold[i] labels pairs[i].target."""

    source_gold: List[LabeledSentence]
    pairs: List[ParallelPair]
    lexicon: Lexicon
    target_gold: List[LabeledSentence]


def _name_budget(spec: SynthSpec) -> int:
    n_types = len(spec.type_weights)
    return max(4 * n_types, int(0.4 * spec.vocab_size)) // n_types


def _ambiguous_budget(spec: SynthSpec) -> int:
    return max(2, spec.vocab_size // 40)


def _general_budget(spec: SynthSpec) -> int:
    n_types = len(spec.type_weights)
    used = _CUES_PER_TYPE * n_types + _ORG_SUFFIXES + _ambiguous_budget(spec)
    used += _name_budget(spec) * n_types
    return spec.vocab_size - used


class _WordFactory:
    """Unique pseudo-words; source and target words never collide."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.seen: Set[str] = set()

    def make(self, consonants: str, capitalize: bool) -> str:
        while True:
            n_syllables = int(self.rng.integers(2, 4))
            word = "".join(
                consonants[int(self.rng.integers(len(consonants)))]
                + _VOWELS[int(self.rng.integers(len(_VOWELS)))]
                for _ in range(n_syllables)
            )
            if word not in self.seen:
                self.seen.add(word)
                return word.capitalize() if capitalize else word


@dataclass
class _SynthLexicon:
    general: List[str]
    cues: Dict[str, List[str]]
    names: Dict[str, List[str]]
    suffixes: List[str]
    ambiguous: List[str]
    image: Dict[str, str]

    def lexicon(self) -> Lexicon:
        return Lexicon(sorted(self.image.items()))


def _build_synth_lexicon(spec: SynthSpec) -> _SynthLexicon:
    # Depends only on vocabulary size, lexicon seed and the type inventory so
    # that corpora of different domains share one lexicon.
    rng = np.random.default_rng(spec.lexicon_seed)
    words = _WordFactory(rng)
    types = sorted(spec.type_weights)

    def source_words(count: int, capitalize: bool) -> List[str]:
        return [words.make(_SOURCE_CONSONANTS, capitalize) for _ in range(count)]

    cues = {t: source_words(_CUES_PER_TYPE, False) for t in types}
    names = {t: source_words(_name_budget(spec), True) for t in types}
    suffixes = source_words(_ORG_SUFFIXES, True)
    ambiguous = source_words(_ambiguous_budget(spec), True)
    general = source_words(_general_budget(spec), False)

    image: Dict[str, str] = {}
    for word in general + [c for t in types for c in cues[t]]:
        image[word] = words.make(_TARGET_CONSONANTS, False)
    for word in suffixes:
        image[word] = words.make(_TARGET_CONSONANTS, True)
    for word in ambiguous:
        image[word] = word
    for etype in types:
        for word in names[etype]:
            if etype in _COPIED_TYPES:
                image[word] = word
            else:
                image[word] = words.make(_TARGET_CONSONANTS, True)
    return _SynthLexicon(general, cues, names, suffixes, ambiguous, image)


def _domain_view(lex: _SynthLexicon, spec: SynthSpec) -> _SynthLexicon:
    """Restrict general words and names to the domain's own share of them."""
    share = float(get_domain(spec.domain).get("vocab_share", 1.0))
    if share >= 1.0:
        return lex
    key = zlib.crc32(spec.domain.encode("utf-8"))
    rng = np.random.default_rng([spec.lexicon_seed, key])

    def subset(words: List[str], floor: int) -> List[str]:
        size = min(len(words), max(floor, int(round(share * len(words)))))
        picks = rng.choice(len(words), size=size, replace=False)
        return [words[int(i)] for i in sorted(picks)]

    names = {etype: subset(pool, 2) for etype, pool in sorted(lex.names.items())}
    return replace(lex, general=subset(lex.general, 4), names=names)


def _entity_phrase(
    etype: str, lex: _SynthLexicon, rng: np.random.Generator
) -> List[str]:
    pool = lex.names[etype]

    def pick(options: Sequence[str]) -> str:
        return options[int(rng.integers(len(options)))]

    if etype == "PER":
        half = len(pool) // 2
        return [pick(pool[:half]), pick(pool[half:])]
    if etype == "ORG":
        return [pick(pool), pick(lex.suffixes)]
    return [pick(pool)]


def gen_synthetic_corpus(
    spec: SynthSpec, n_sentences: int, seed: int
) -> SyntheticCorpus:
    """
    Generate a deterministic bilingual corpus with gold tags on both sides.

    Each source sentence is a run of general words with up to three entity
    mentions inserted; a mention is a cue word followed by the entity
    phrase, though the cue is dropped with probability cue_drop and the
    phrase is a type-ambiguous single name with probability ambiguous_rate.
    Domains with a vocab_share below 1 draw general words and names from
    their own subset of the shared lexicon. The target side substitutes
    every word through the lexicon and swaps adjacent non-entity tokens with
    probability reorder_prob, so target entities stay contiguous and keep
    their positions.

    Raises:
        InvalidSynthSpec: If the spec does not validate
    """
    errors = spec.validate()
    if errors:
        raise InvalidSynthSpec(errors)

    full = _build_synth_lexicon(spec)
    lex = _domain_view(full, spec)
    types = sorted(spec.type_weights)
    weights = np.array([spec.type_weights[t] for t in types], dtype=float)
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    reorder_rng = np.random.default_rng([seed, 1])

    source_gold, pairs, target_gold = [], [], []
    for index in range(n_sentences):
        segments: List[List[Tuple[str, str]]] = [
            [(lex.general[int(rng.integers(len(lex.general)))], OUTSIDE)]
            for _ in range(int(rng.integers(4, 11)))
        ]
        for _ in range(_MENTION_SLOTS):
            if rng.random() >= spec.entity_rate:
                continue
            etype = types[int(rng.choice(len(types), p=weights))]
            cue = lex.cues[etype][int(rng.integers(_CUES_PER_TYPE))]
            if rng.random() < spec.ambiguous_rate:
                phrase = [lex.ambiguous[int(rng.integers(len(lex.ambiguous)))]]
            else:
                phrase = _entity_phrase(etype, lex, rng)
            mention: List[Tuple[str, str]] = []
            if rng.random() >= spec.cue_drop:
                mention.append((cue, OUTSIDE))
            mention.append((phrase[0], f"B-{etype}"))
            mention += [(word, f"I-{etype}") for word in phrase[1:]]
            segments.insert(int(rng.integers(len(segments) + 1)), mention)

        tokens = [tok for segment in segments for tok, _ in segment]
        tags = [tag for segment in segments for _, tag in segment]
        target = [lex.image[tok] for tok in tokens]
        i = 0
        while i < len(target) - 1:
            both_outside = tags[i] == OUTSIDE and tags[i + 1] == OUTSIDE
            if both_outside and reorder_rng.random() < spec.reorder_prob:
                target[i], target[i + 1] = target[i + 1], target[i]
                i += 2
            else:
                i += 1

        source_gold.append(LabeledSentence(tuple(tokens), tuple(tags)))
        target_gold.append(LabeledSentence(tuple(target), tuple(tags)))
        pairs.append(ParallelPair(tuple(tokens), tuple(target), spec.domain, index))

    logger.debug("generated %d synthetic pairs for domain %s", n_sentences, spec.domain)
    return SyntheticCorpus(source_gold, pairs, full.lexicon(), target_gold)
