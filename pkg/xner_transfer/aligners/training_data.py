"""
Training and evaluation data for entity aligners.

Positive examples pair a source entity surface with the target sentence and
the mask of its gold target span(s). Negative examples pair a target sentence
with the surface of an entity that does not occur in it and an all-zero mask.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..corpus import LabeledSentence
from ..errors import InsufficientEntities
from ..lexicon import Lexicon
from ..spans import OUTSIDE, sentence_spans
from .base import Aligner, AlignmentQuery, spans_to_mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentExample:
    entity: str
    tokens: Tuple[str, ...]
    mask: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "mask", tuple(int(b) for b in self.mask))
        if len(self.tokens) != len(self.mask):
            raise ValueError("mask and tokens differ in length")

    @property
    def is_negative(self) -> bool:
        return not any(self.mask)

    def query(self) -> AlignmentQuery:
        return AlignmentQuery(self.entity, self.tokens)

    def to_dict(self) -> Dict[str, object]:
        return {
            "entity": self.entity,
            "tokens": list(self.tokens),
            "mask": list(self.mask),
        }


def _positives(
    source_gold: Sequence[LabeledSentence], target_gold: Sequence[LabeledSentence]
) -> List[AlignmentExample]:
    # The k-th source span corresponds to the k-th target span; every
    # occurrence of a surface within one target sentence is marked.
    examples = []
    for source, target in zip(source_gold, target_gold):
        src_spans, tgt_spans = sentence_spans(source), sentence_spans(target)
        if len(src_spans) != len(tgt_spans):
            continue
        runs: Dict[str, List[Tuple[int, int]]] = {}
        for src, tgt in zip(src_spans, tgt_spans):
            runs.setdefault(src.surface, []).append((tgt.start, tgt.end))
        for surface, bounds in runs.items():
            mask = [0] * len(target)
            for start, end in bounds:
                mask[start:end] = [1] * (end - start)
            examples.append(AlignmentExample(surface, target.tokens, tuple(mask)))
    return examples


def _noun_phrase(
    source: LabeledSentence,
    target: LabeledSentence,
    lexicon: Lexicon,
    rng: np.random.Generator,
) -> Optional[AlignmentExample]:
    words = [t for t, tag in zip(source.tokens, source.tags) if tag == OUTSIDE]
    rng.shuffle(words)
    for word in words:
        translations = {t.casefold() for t in lexicon.get(word)}
        mask = [int(t.casefold() in translations) for t in target.tokens]
        if any(mask):
            return AlignmentExample(word, target.tokens, tuple(mask))
    return None


def gen_alignment_training_data(
    source_gold: Sequence[LabeledSentence],
    target_gold: Sequence[LabeledSentence],
    n: int,
    negative_frac: float,
    seed: int,
    noun_phrase_frac: float = 0.0,
    lexicon: Optional[Lexicon] = None,
) -> List[AlignmentExample]:
    """
    Build a shuffled alignment data set.

    Args:
        source_gold: Gold-tagged source sentences
        target_gold: Gold-tagged translations, position-aligned with source_gold
        n: Number of examples to produce
        negative_frac: Share of negative examples (round(n * frac) of them)
        seed: Random seed
        noun_phrase_frac: Share of positives whose query is a non-entity source
            word, located in the target through the lexicon
        lexicon: Required when noun_phrase_frac > 0

    Returns:
        n examples in seeded random order

    Raises:
        InsufficientEntities: If no entity surface is available
    """
    if len(source_gold) != len(target_gold):
        raise ValueError("source_gold and target_gold differ in length")
    if not 0.0 <= negative_frac <= 1.0 or not 0.0 <= noun_phrase_frac <= 1.0:
        raise ValueError("fractions must lie in [0, 1]")
    if negative_frac + noun_phrase_frac > 1.0:
        raise ValueError("negative_frac + noun_phrase_frac must not exceed 1")
    if noun_phrase_frac > 0 and lexicon is None:
        raise ValueError("noun_phrase_frac needs a lexicon")

    rng = np.random.default_rng(seed)
    positives = _positives(source_gold, target_gold)
    surfaces = sorted({example.entity for example in positives})
    if not surfaces:
        raise InsufficientEntities()

    n_negative = int(round(n * negative_frac))
    n_noun = int(round(n * noun_phrase_frac))
    n_positive = n - n_negative - n_noun
    examples: List[AlignmentExample] = []

    with_replacement = n_positive > len(positives)
    picks = rng.choice(len(positives), size=n_positive, replace=with_replacement)
    examples.extend(positives[int(i)] for i in picks)

    for _ in range(n_negative):
        for _attempt in range(len(target_gold)):
            index = int(rng.integers(len(target_gold)))
            target = target_gold[index]
            present = {span.surface for span in sentence_spans(source_gold[index])}
            text = " ".join(target.tokens).casefold()
            absent = [
                s for s in surfaces if s not in present and s.casefold() not in text
            ]
            if absent:
                fake = absent[int(rng.integers(len(absent)))]
                zeros = (0,) * len(target)
                examples.append(AlignmentExample(fake, target.tokens, zeros))
                break
        else:
            raise InsufficientEntities()

    if n_noun:
        assert lexicon is not None
        found, attempts = 0, 0
        while found < n_noun and attempts < 10 * n_noun:
            attempts += 1
            index = int(rng.integers(len(source_gold)))
            example = _noun_phrase(source_gold[index], target_gold[index], lexicon, rng)
            if example is not None:
                examples.append(example)
                found += 1
        if found < n_noun:
            logger.warning("only %d of %d noun-phrase examples found", found, n_noun)

    order = rng.permutation(len(examples))
    return [examples[int(i)] for i in order]


def write_alignment_jsonl(
    path: Union[str, Path], examples: Iterable[AlignmentExample]
) -> None:
    lines = [json.dumps(e.to_dict(), ensure_ascii=False) + "\n" for e in examples]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def read_alignment_jsonl(path: Union[str, Path]) -> List[AlignmentExample]:
    """
    Read examples written by write_alignment_jsonl.

    Raises:
        ValueError: On a line that is not a valid example (line number included)
    """
    examples = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            examples.append(
                AlignmentExample(data["entity"], data["tokens"], data["mask"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    return examples


@dataclass(frozen=True)
class AlignerScore:
    precision: float
    recall: float
    f1: float
    examples: int


def score_aligner(
    aligner: Aligner, examples: Sequence[AlignmentExample]
) -> AlignerScore:
    """Token-level precision, recall and F1 of an aligner's masks against gold."""
    results = aligner.align_many([e.query() for e in examples])
    true_pos = predicted = gold = 0
    for example, result in zip(examples, results):
        mask = spans_to_mask(result.spans, len(example.tokens))
        true_pos += sum(p & g for p, g in zip(mask, example.mask))
        predicted += sum(mask)
        gold += sum(example.mask)
    precision = true_pos / predicted if predicted else 0.0
    recall = true_pos / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return AlignerScore(precision, recall, f1, len(examples))

