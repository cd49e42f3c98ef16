"""
Deterministic aligner backed by a bilingual lexicon and edit distance.
"""

import logging
from typing import List, Optional, Tuple

from ..lexicon import Lexicon
from .base import AlignedSpan, Aligner, AlignerConfig, AlignmentQuery, AlignmentResult

logger = logging.getLogger(__name__)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance (unit cost insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, 1):
        current = [i]
        for j, char_b in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (char_a != char_b),
                )
            )
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """1 - editDistance / max(len) over case-folded surfaces."""
    a, b = a.casefold(), b.casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


def _similarity_bound(a: str, b: str) -> float:
    # Edit distance is at least the length difference.
    longest = max(len(a), len(b))
    return 1.0 - abs(len(a) - len(b)) / longest if longest else 1.0


def align_lexical(
    query: AlignmentQuery, lexicon: Lexicon, cfg: Optional[AlignerConfig] = None
) -> AlignmentResult:
    """
    Align an entity by scoring every short contiguous target span.

    A span scores 1.0 when its surface is a lexicon translation of the
    entity, otherwise its normalised similarity to the entity. Spans scoring
    at least the threshold and within tie_epsilon of the best score are
    chosen greedily by (score desc, start asc), skipping overlaps.

    Args:
        query: Entity surface and target tokens
        lexicon: Source -> target phrase table
        cfg: Threshold, maximum span length and tie tolerance

    Returns:
        AlignmentResult, empty when no span reaches the threshold
    """
    cfg = cfg or AlignerConfig()
    tokens = query.tokens
    entity = " ".join(query.entity.split())
    translations = {t.casefold() for t in lexicon.translations(entity)}

    candidates: List[Tuple[float, int, int]] = []
    for start in range(len(tokens)):
        for end in range(start + 1, min(len(tokens), start + cfg.max_span_len) + 1):
            if " ".join(tokens[start:end]).casefold() in translations:
                candidates.append((1.0, start, end))
    floor = cfg.threshold
    if candidates:
        floor = max(floor, 1.0 - cfg.tie_epsilon)

    hits = {(start, end) for _, start, end in candidates}
    for start in range(len(tokens)):
        for end in range(start + 1, min(len(tokens), start + cfg.max_span_len) + 1):
            if (start, end) in hits:
                continue
            surface = " ".join(tokens[start:end])
            if _similarity_bound(entity, surface) < floor:
                continue
            score = similarity(entity, surface)
            if score >= floor:
                candidates.append((score, start, end))

    if not candidates:
        return AlignmentResult()
    best = max(score for score, _, _ in candidates)
    cutoff = max(cfg.threshold, best - cfg.tie_epsilon)

    chosen: List[AlignedSpan] = []
    for score, start, end in sorted(candidates, key=lambda c: (-c[0], c[1], c[2])):
        if score < cutoff:
            break
        if any(start < span.end and span.start < end for span in chosen):
            continue
        chosen.append(AlignedSpan(start, end, score))
    return AlignmentResult(tuple(chosen))


class LexicalAligner(Aligner):
    """Aligner that answers queries with align_lexical."""

    name = "lexical"

    def __init__(self, lexicon: Lexicon, config: Optional[AlignerConfig] = None):
        self.lexicon = lexicon
        self.config = config or AlignerConfig()

    def align(self, query: AlignmentQuery) -> AlignmentResult:
        result = align_lexical(query, self.lexicon, self.config)
        if not result.found:
            logger.debug("no alignment for %r", query.entity)
        return result
