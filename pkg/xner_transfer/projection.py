"""
Annotation projection from tagged source sentences onto their translations.

Every source entity is looked up in the target sentence through an aligner.
A sentence is discarded when any entity cannot be aligned, when one entity
aligns to several spans with different surfaces, or when the aligned spans of
different entities overlap. Kept sentences carry the projected tags plus the
alignment provenance of every entity.
"""

import csv
import io
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .aligners.base import Aligner, AlignmentQuery
from .corpus import LabeledSentence, ParallelPair, write_conll_file
from .errors import AlignmentError, ProjectionInterrupted
from .spans import EntitySpan, encode_spans, sentence_spans, suppress_type

logger = logging.getLogger(__name__)

STATS_FILE = "stats.json"
PROVENANCE_FILE = "provenance.jsonl"
COUNTS_FILE = "entity_counts.csv"


class DiscardReason(str, Enum):
    ALIGNMENT_FAILURE = "AlignmentFailure"
    OVERLAP = "Overlap"
    INCONSISTENT_MULTI_MAP = "InconsistentMultiMap"


class Teacher(Protocol):
    def predict(self, tokens: Sequence[str]) -> LabeledSentence:
        ...


@dataclass(frozen=True)
class EntityProvenance:
    """Where one source entity came from and where it was aligned to."""

    source_start: int
    source_end: int
    etype: str
    surface: str
    target_spans: Tuple[Tuple[int, int, float], ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": [self.source_start, self.source_end],
            "type": self.etype,
            "surface": self.surface,
            "target": [list(span) for span in self.target_spans],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EntityProvenance":
        spans = tuple((int(s), int(e), float(score)) for s, e, score in data["target"])
        start, end = data["source"]
        return cls(int(start), int(end), data["type"], data["surface"], spans)


@dataclass(frozen=True)
class PseudoLabeledSentence:
    sentence: LabeledSentence
    pair_id: int
    domain: str
    provenance: Tuple[EntityProvenance, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.sentence.has_entities

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.pair_id,
            "domain": self.domain,
            "tokens": list(self.sentence.tokens),
            "tags": list(self.sentence.tags),
            "entities": [p.to_dict() for p in self.provenance],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PseudoLabeledSentence":
        return cls(
            LabeledSentence(tuple(data["tokens"]), tuple(data["tags"])),
            int(data["id"]),
            data["domain"],
            tuple(EntityProvenance.from_dict(p) for p in data["entities"]),
        )


@dataclass
class ProjectionStats:
    """Counters; merging and recording commute, so input order does not matter."""

    kept: int = 0
    empty: int = 0
    discarded: Dict[str, int] = field(
        default_factory=lambda: {reason.value: 0 for reason in DiscardReason}
    )
    entity_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    empty_dropped: int = 0

    @property
    def processed(self) -> int:
        return self.kept + sum(self.discarded.values())

    def record_keep(self, item: PseudoLabeledSentence) -> None:
        self.kept += 1
        counts = self.entity_counts.setdefault(item.domain, {})
        spans = sentence_spans(item.sentence)
        if not spans:
            self.empty += 1
        for span in spans:
            counts[span.etype] = counts.get(span.etype, 0) + 1

    def record_discard(self, reason: DiscardReason) -> None:
        self.discarded[reason.value] += 1

    def merge(self, other: "ProjectionStats") -> None:
        self.kept += other.kept
        self.empty += other.empty
        self.empty_dropped += other.empty_dropped
        for reason, count in other.discarded.items():
            self.discarded[reason] = self.discarded.get(reason, 0) + count
        for domain, counts in other.entity_counts.items():
            mine = self.entity_counts.setdefault(domain, {})
            for etype, count in counts.items():
                mine[etype] = mine.get(etype, 0) + count

    def count_table(self, types: Sequence[str]) -> List[List[Any]]:
        """Rows of [domain, count per type..., all] in domain order."""
        rows = []
        for domain in sorted(self.entity_counts):
            counts = self.entity_counts[domain]
            row: List[Any] = [domain] + [counts.get(t, 0) for t in types]
            rows.append(row + [sum(counts.values())])
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "processed": self.processed,
            "kept": self.kept,
            "empty": self.empty,
            "empty_dropped": self.empty_dropped,
            "discarded": dict(self.discarded),
            "entity_counts": {d: dict(c) for d, c in self.entity_counts.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProjectionStats":
        stats = cls(
            kept=int(data["kept"]),
            empty=int(data.get("empty", 0)),
            empty_dropped=int(data.get("empty_dropped", 0)),
        )
        stats.discarded.update({k: int(v) for k, v in data["discarded"].items()})
        stats.entity_counts = {
            d: {t: int(n) for t, n in c.items()}
            for d, c in data.get("entity_counts", {}).items()
        }
        return stats


@dataclass(frozen=True)
class ProjectionConfig:
    suppress_misc: bool = False
    misc_type: str = "MISC"
    empty_ratio: float = 0.3
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.empty_ratio < 1.0:
            raise ValueError("empty_ratio must lie in [0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ProjectionOutcome:
    """Result for one pair: a kept sentence or a discard reason."""

    pair_id: int
    domain: str
    kept: Optional[PseudoLabeledSentence] = None
    reason: Optional[DiscardReason] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.pair_id,
            "domain": self.domain,
            "kept": self.kept.to_dict() if self.kept else None,
            "reason": self.reason.value if self.reason else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProjectionOutcome":
        kept = data.get("kept")
        reason = data.get("reason")
        return cls(
            int(data["id"]),
            data["domain"],
            PseudoLabeledSentence.from_dict(kept) if kept else None,
            DiscardReason(reason) if reason else None,
        )


def project_sentence(
    source: LabeledSentence,
    target_tokens: Sequence[str],
    aligner: Aligner,
    cfg: Optional[ProjectionConfig] = None,
    pair_id: int = 0,
    domain: str = "synthetic",
) -> Union[PseudoLabeledSentence, DiscardReason]:
    """
    Project the entities of one tagged source sentence onto its translation.

    Filters run in a fixed order: alignment failure, inconsistent multi-span
    alignment, then overlap between entities. A source sentence without
    entities projects to an all-"O" target sentence.

    Args:
        source: Teacher-tagged source sentence (IOB2)
        target_tokens: The translation
        aligner: Backend answering one query per source entity
        cfg: Projection settings (MISC suppression is applied by the caller)
        pair_id: Id recorded in the provenance
        domain: Domain recorded in the provenance

    Returns:
        The pseudo-labeled target sentence, or why it was discarded
    """
    target_tokens = tuple(target_tokens)
    entities = sentence_spans(source)
    if not entities:
        return PseudoLabeledSentence(
            LabeledSentence.unlabeled(target_tokens), pair_id, domain
        )

    queries = [AlignmentQuery(e.surface, target_tokens) for e in entities]
    results = aligner.align_many(queries)

    if any(not result.found for result in results):
        return DiscardReason.ALIGNMENT_FAILURE

    for result in results:
        surfaces = {span.surface(target_tokens).casefold() for span in result}
        if len(surfaces) > 1:
            return DiscardReason.INCONSISTENT_MULTI_MAP

    # Repeated mentions of one entity produce identical answers; count them once.
    projected: Dict[Tuple[int, int, str, str], EntitySpan] = {}
    provenance = []
    for entity, result in zip(entities, results):
        for span in result:
            key = (span.start, span.end, entity.etype, entity.surface)
            projected[key] = EntitySpan(span.start, span.end, entity.etype)
        provenance.append(
            EntityProvenance(
                entity.start,
                entity.end,
                entity.etype,
                entity.surface,
                tuple((s.start, s.end, s.score) for s in result),
            )
        )

    ordered = sorted(projected.values(), key=lambda s: (s.start, s.end, s.etype))
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.overlaps(nxt):
            return DiscardReason.OVERLAP

    tags = encode_spans(ordered, len(target_tokens))
    return PseudoLabeledSentence(
        LabeledSentence(target_tokens, tuple(tags)), pair_id, domain, tuple(provenance)
    )


def collect(
    outcomes: Sequence[ProjectionOutcome],
) -> Tuple[List[PseudoLabeledSentence], ProjectionStats]:
    """Fold outcomes into the kept dataset (input order) and stats."""
    dataset, stats = [], ProjectionStats()
    for outcome in outcomes:
        if outcome.kept is not None:
            dataset.append(outcome.kept)
            stats.record_keep(outcome.kept)
        elif outcome.reason is not None:
            stats.record_discard(outcome.reason)
    return dataset, stats


def build_pseudo_dataset(
    pairs: Sequence[ParallelPair],
    teacher: Teacher,
    aligner: Aligner,
    cfg: Optional[ProjectionConfig] = None,
    start: int = 0,
    outcomes: Optional[Sequence[ProjectionOutcome]] = None,
) -> Tuple[List[PseudoLabeledSentence], ProjectionStats]:
    """
    Tag every source sentence with the teacher and project it.

    Args:
        pairs: Parallel pairs to process
        teacher: Source-language tagger (anything with predict(tokens))
        aligner: Alignment backend
        cfg: Projection settings
        start: Index of the first pair to process when resuming
        outcomes: Outcomes of pairs[:start] from an interrupted run

    Returns:
        Kept sentences in input order and the accounting of every pair

    Raises:
        ProjectionInterrupted: If the aligner fails; carries the cursor and
            the outcomes gathered so far so the run can be resumed
    """
    cfg = cfg or ProjectionConfig()
    done = list(outcomes or [])
    if len(done) != start:
        raise ValueError(f"resuming at {start} needs {start} prior outcomes")

    def process(pair: ParallelPair) -> ProjectionOutcome:
        source = teacher.predict(pair.source)
        if cfg.suppress_misc:
            source = suppress_type(source, cfg.misc_type)
        result = project_sentence(
            source, pair.target, aligner, cfg, pair.id, pair.domain
        )
        if isinstance(result, DiscardReason):
            return ProjectionOutcome(pair.id, pair.domain, reason=result)
        return ProjectionOutcome(pair.id, pair.domain, kept=result)

    def run(todo: Sequence[ParallelPair]) -> Iterator[ProjectionOutcome]:
        if cfg.workers == 1:
            yield from map(process, todo)
            return
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            yield from pool.map(process, todo)

    try:
        for outcome in run(pairs[start:]):
            done.append(outcome)
    except AlignmentError as exc:
        logger.error("projection stopped at pair %d: %s", len(done), exc)
        raise ProjectionInterrupted(len(done), done, exc) from exc

    dataset, stats = collect(done)
    logger.info(
        "projected %d pairs: kept %d (%d empty), discarded %s",
        stats.processed,
        stats.kept,
        stats.empty,
        ", ".join(f"{k}={v}" for k, v in stats.discarded.items()),
    )
    return dataset, stats


def _item_is_empty(item: Union[PseudoLabeledSentence, LabeledSentence]) -> bool:
    sentence = item.sentence if isinstance(item, PseudoLabeledSentence) else item
    return not sentence.has_entities


def balance_empty_ratio(
    datasets: Mapping[str, Sequence[Any]], target_ratio: float, seed: int
) -> Dict[str, List[Any]]:
    """
    Subsample empty sentences so each domain's empty share is <= target_ratio.

    With N non-empty sentences a domain keeps at most
    floor(target_ratio * N / (1 - target_ratio)) empties, picked at random
    (seeded per domain) and left in their original order. Non-empty
    sentences are never dropped.
    """
    if not 0.0 <= target_ratio < 1.0:
        raise ValueError("target_ratio must lie in [0, 1)")
    balanced = {}
    for domain, items in datasets.items():
        empties = [i for i, item in enumerate(items) if _item_is_empty(item)]
        n_full = len(items) - len(empties)
        limit = int(np.floor(target_ratio * n_full / (1.0 - target_ratio) + 1e-9))
        if len(empties) <= limit:
            balanced[domain] = list(items)
            continue
        rng = np.random.default_rng([seed, zlib.crc32(domain.encode("utf-8"))])
        keep = set(int(i) for i in rng.choice(empties, size=limit, replace=False))
        balanced[domain] = [
            item
            for i, item in enumerate(items)
            if not _item_is_empty(item) or i in keep
        ]
        logger.info("%s: kept %d of %d empty sentences", domain, limit, len(empties))
    return balanced


def by_domain(
    dataset: Sequence[PseudoLabeledSentence],
) -> Dict[str, List[PseudoLabeledSentence]]:
    grouped: Dict[str, List[PseudoLabeledSentence]] = {}
    for item in dataset:
        grouped.setdefault(item.domain, []).append(item)
    return grouped


def format_count_table(stats: ProjectionStats, types: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["domain"] + list(types) + ["All"])
    writer.writerows(stats.count_table(types))
    return buffer.getvalue()


def write_pseudo_dataset(
    out_dir: Union[str, Path],
    dataset: Sequence[PseudoLabeledSentence],
    stats: ProjectionStats,
    types: Sequence[str],
) -> None:
    """
    Persist a pseudo-labeled dataset.

    Writes one CoNLL file per domain, provenance JSON lines, stats.json and
    the type x domain count table as CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for domain, items in by_domain(dataset).items():
        write_conll_file(out / f"{domain}.conll", [item.sentence for item in items])
    lines = [json.dumps(item.to_dict(), ensure_ascii=False) + "\n" for item in dataset]
    (out / PROVENANCE_FILE).write_text("".join(lines), encoding="utf-8", newline="\n")
    (out / STATS_FILE).write_text(
        json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / COUNTS_FILE).write_text(
        format_count_table(stats, types), encoding="utf-8", newline="\n"
    )


def read_pseudo_dataset(
    out_dir: Union[str, Path],
) -> Tuple[List[PseudoLabeledSentence], ProjectionStats]:
    out = Path(out_dir)
    text = (out / PROVENANCE_FILE).read_text(encoding="utf-8")
    dataset = [
        PseudoLabeledSentence.from_dict(json.loads(line))
        for line in text.splitlines()
        if line.strip()
    ]
    stats = ProjectionStats.from_dict(
        json.loads((out / STATS_FILE).read_text(encoding="utf-8"))
    )
    return dataset, stats
