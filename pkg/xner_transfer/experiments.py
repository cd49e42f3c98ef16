"""
Experiment harnesses: domain mix, training-set size sweep and ablation.

Every harness trains one model per (row, seed) cell, evaluates it on the
target test sets and folds the cells into report tables in a fixed order.
Given a run directory, each cell is also written as JSON together with a
manifest of the configuration and dataset hashes.
"""

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .corpus import LabeledSentence
from .errors import CellFailed, SizeExceedsData, XnerError
from .evaluation import EvalReport, ReportTable, evaluate
from .losses import REWEIGHTED, LossKind
from .projection import PseudoLabeledSentence
from .spans import split_tag, to_iob2
from .stages import hash_json, hash_sentences
from .tagger import (
    TaggerConfig,
    TaggerModel,
    TrainConfig,
    build_vocab,
    init_model,
    predict_batch,
    remap_vocab,
    train,
)

logger = logging.getLogger(__name__)

DOMAIN_MIX = "domain_mix"
SIZE_SWEEP = "size_sweep"
ABLATION = "ablation"
KINDS = (DOMAIN_MIX, SIZE_SWEEP, ABLATION)

ROW_ZERO_TRANSFER = "zero-transfer"
ROW_COMBINED = "combined"
PLATEAU_TOLERANCE = 0.01

ABLATION_SETTINGS = {
    1: "Sequential fine-tune with RW",
    2: "Zero-transfer",
    3: "Sequential fine-tune with CE",
    4: "Skip fine-tune on source",
    5: "Fine-tune on source/target mixed (CE)",
    6: "Fine-tune on source/target mixed (RW)",
}

# Published F1 change of each ablation setting over zero-transfer
# (German target, mBERT encoder). Shown in reports, never asserted.
ABLATION_REFERENCE_DELTAS = {1: 2.5, 2: 0.0, 3: 0.6, 4: 0.2, 5: 2.4, 6: -20.5}

# Published F1 change of target fine-tuning over zero-transfer per language.
TRANSFER_REFERENCE_DELTAS = {
    "mBERT": {"de": 2.5, "es": 2.4, "nl": 0.0, "zh": 6.4},
    "XLM-R": {"de": 3.5, "es": -1.9, "nl": -1.5, "zh": 4.2},
}


def _default_teacher_train() -> TrainConfig:
    return TrainConfig(loss=LossKind.focal(2.0), epochs=5)


def _default_student_train() -> TrainConfig:
    return TrainConfig(loss=LossKind.reweighted(4.0), epochs=5, warmup_epochs=2)


@dataclass(frozen=True)
class ExperimentSpec:
    """
    What to run.

    domains and testsets select (and order) the pseudo-labeled domains and
    target test sets; empty means all available. mixed_ratio is the number of
    source sentences per pseudo-labeled sentence in the mixed ablation
    settings. label_noise injects symmetric token-level noise into the
    pseudo-labeled training data.
    """

    kind: str
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    domains: Tuple[str, ...] = ()
    testsets: Tuple[str, ...] = ()
    sizes: Tuple[int, ...] = ()
    settings: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    tagger: TaggerConfig = field(default_factory=TaggerConfig)
    teacher_train: TrainConfig = field(default_factory=_default_teacher_train)
    student_train: TrainConfig = field(default_factory=_default_student_train)
    mixed_ratio: float = 1.0
    label_noise: float = 0.0
    min_count: int = 1

    def validate(self) -> List[str]:
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind must be one of {', '.join(KINDS)}")
        if not self.seeds:
            errors.append("at least one seed is required")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            errors.append("sizes must be strictly increasing")
        if any(size < 1 for size in self.sizes):
            errors.append("sizes must be positive")
        if self.kind == SIZE_SWEEP and not self.sizes:
            errors.append("a size sweep needs sizes")
        if any(s not in ABLATION_SETTINGS for s in self.settings):
            errors.append("ablation settings are numbered 1 to 6")
        if self.mixed_ratio < 0:
            errors.append("mixed_ratio must be non-negative")
        if not 0.0 <= self.label_noise <= 1.0:
            errors.append("label_noise must lie in [0, 1]")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "seeds": list(self.seeds),
            "domains": list(self.domains),
            "testsets": list(self.testsets),
            "sizes": list(self.sizes),
            "settings": list(self.settings),
            "tagger": {
                "embed_dim": self.tagger.embed_dim,
                "window": self.tagger.window,
                "hidden_dim": self.tagger.hidden_dim,
                "labels": list(self.tagger.labels),
            },
            "teacher_train": self.teacher_train.to_dict(),
            "student_train": self.student_train.to_dict(),
            "mixed_ratio": self.mixed_ratio,
            "label_noise": self.label_noise,
            "min_count": self.min_count,
        }


@dataclass
class ExperimentData:
    """
    Inputs shared by the harnesses.

    teacher, when given, is used for every seed; otherwise one teacher per
    seed is trained on source_train.
    """

    source_train: List[LabeledSentence]
    pseudo: Dict[str, List[LabeledSentence]]
    testsets: Dict[str, List[LabeledSentence]]
    teacher: Optional[TaggerModel] = None

    @classmethod
    def from_pseudo(
        cls,
        source_train: Sequence[LabeledSentence],
        pseudo: Mapping[str, Sequence[Union[PseudoLabeledSentence, LabeledSentence]]],
        testsets: Mapping[str, Sequence[LabeledSentence]],
        teacher: Optional[TaggerModel] = None,
    ) -> "ExperimentData":
        sentences = {
            domain: [
                item.sentence if isinstance(item, PseudoLabeledSentence) else item
                for item in items
            ]
            for domain, items in pseudo.items()
        }
        return cls(
            list(source_train),
            sentences,
            {k: list(v) for k, v in testsets.items()},
            teacher,
        )


def types_of(labels: Sequence[str]) -> List[str]:
    """Entity types of a label set in first-seen order."""
    types: List[str] = []
    for label in labels:
        etype = split_tag(label)[1]
        if etype and etype not in types:
            types.append(etype)
    return types


def inject_label_noise(
    sentences: Sequence[LabeledSentence],
    rate: float,
    labels: Sequence[str],
    seed: int,
) -> List[LabeledSentence]:
    """
    Symmetric token-level label noise.

    Each tag is replaced with probability `rate` by a different label drawn
    uniformly from `labels`; the result is repaired to IOB2.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    labels = list(labels)
    rng = np.random.default_rng(seed)
    noisy = []
    for sentence in sentences:
        tags = list(sentence.tags)
        for i, tag in enumerate(tags):
            if rng.random() < rate:
                others = [label for label in labels if label != tag]
                if others:
                    tags[i] = others[int(rng.integers(len(others)))]
        noisy.append(LabeledSentence(sentence.tokens, tuple(to_iob2(tags))))
    return noisy


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def _concat(parts: Sequence[Sequence[LabeledSentence]]) -> List[LabeledSentence]:
    return [sentence for part in parts for sentence in part]


@dataclass
class CellResult:
    row: str
    seed: int
    config: Dict[str, Any]
    reports: Dict[str, EvalReport]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "row": self.row,
            "seed": self.seed,
            "config": self.config,
            "metrics": {name: r.to_dict() for name, r in self.reports.items()},
        }


class ExperimentRunner:
    """
    Shared machinery of the harnesses: teachers, students, scoring and
    artifact persistence.
    """

    def __init__(
        self,
        spec: ExperimentSpec,
        data: ExperimentData,
        run_dir: Optional[Union[str, Path]] = None,
    ):
        errors = spec.validate()
        if errors:
            raise ValueError("invalid experiment spec: " + "; ".join(errors))
        self.spec = spec
        self.data = data
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.cells: List[CellResult] = []
        self._teachers: Dict[int, TaggerModel] = {}

    # Data selection

    def domains(self) -> List[str]:
        domains = list(self.spec.domains or self.data.pseudo)
        for domain in domains:
            if domain not in self.data.pseudo:
                raise KeyError(f"no pseudo-labeled data for domain {domain!r}")
        return domains

    def testsets(self) -> List[str]:
        names = list(self.spec.testsets or self.data.testsets)
        for name in names:
            if name not in self.data.testsets:
                raise KeyError(f"no test set named {name!r}")
        return names

    def pooled_test(self) -> List[LabeledSentence]:
        return _concat([self.data.testsets[name] for name in self.testsets()])

    def pooled_pseudo(self) -> List[LabeledSentence]:
        return _concat([self.data.pseudo[d] for d in self.domains()])

    def noisy(
        self, sentences: Sequence[LabeledSentence], seed: int
    ) -> List[LabeledSentence]:
        if self.spec.label_noise <= 0:
            return list(sentences)
        return inject_label_noise(
            sentences, self.spec.label_noise, self.spec.tagger.labels, seed
        )

    # Models

    def teacher(self, seed: int) -> TaggerModel:
        if self.data.teacher is not None:
            return self.data.teacher
        if seed not in self._teachers:
            vocab = build_vocab(self.data.source_train, self.spec.min_count)
            model = init_model(replace(self.spec.tagger, seed=seed), vocab)
            cfg = replace(self.spec.teacher_train, seed=seed)
            self._teachers[seed], _ = train(model, self.data.source_train, cfg)
        return self._teachers[seed]

    def sequential(
        self, seed: int, sentences: Sequence[LabeledSentence], loss: LossKind
    ) -> TaggerModel:
        """Teacher initialisation moved onto the target vocabulary, then trained."""
        vocab = build_vocab(sentences, self.spec.min_count)
        student = remap_vocab(self.teacher(seed), vocab, seed)
        cfg = replace(self.spec.student_train, loss=loss, seed=seed)
        return train(student, sentences, cfg)[0]

    def scratch(
        self, seed: int, sentences: Sequence[LabeledSentence], loss: LossKind
    ) -> TaggerModel:
        vocab = build_vocab(sentences, self.spec.min_count)
        model = init_model(replace(self.spec.tagger, seed=seed), vocab)
        cfg = replace(self.spec.student_train, loss=loss, seed=seed)
        return train(model, sentences, cfg)[0]

    def reweighted_loss(self) -> LossKind:
        loss = self.spec.student_train.loss
        return loss if loss.name == REWEIGHTED else LossKind.reweighted(4.0)

    # Cells

    def score(
        self, model: TaggerModel, names: Sequence[str]
    ) -> Dict[str, EvalReport]:
        reports = {}
        for name in names:
            gold = self.data.testsets[name]
            reports[name] = evaluate(predict_batch(model, gold), gold)
        pooled = self.pooled_test() if len(names) != 1 else self.data.testsets[names[0]]
        reports["all"] = evaluate(predict_batch(model, pooled), pooled)
        return reports

    def cell(
        self,
        row: str,
        seed: int,
        config: Dict[str, Any],
        build: Callable[[], TaggerModel],
    ) -> CellResult:
        try:
            model = build()
            reports = self.score(model, self.testsets())
        except (XnerError, ValueError, ArithmeticError) as exc:
            raise CellFailed(row, seed, exc) from exc
        result = CellResult(row, seed, config, reports)
        self.cells.append(result)
        logger.info("%s seed %d: F1 %.4f", row, seed, reports["all"].f1)
        if self.run_dir is not None:
            cells_dir = self.run_dir / "cells"
            cells_dir.mkdir(parents=True, exist_ok=True)
            path = cells_dir / f"{_slug(row)}__seed{seed}.json"
            path.write_text(
                json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        return result

    def write_manifest(self, rows: Sequence[str]) -> None:
        if self.run_dir is None:
            return
        datasets = {"source_train": hash_sentences(self.data.source_train)}
        for domain, sentences in sorted(self.data.pseudo.items()):
            datasets[f"pseudo/{domain}"] = hash_sentences(sentences)
        for name, sentences in sorted(self.data.testsets.items()):
            datasets[f"test/{name}"] = hash_sentences(sentences)
        manifest = {
            "kind": self.spec.kind,
            "config": self.spec.to_dict(),
            "config_hash": hash_json(self.spec.to_dict()),
            "seeds": list(self.spec.seeds),
            "rows": list(rows),
            "datasets": datasets,
        }
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0


# Domain mix


@dataclass
class DomainMixResult:
    f1_table: ReportTable
    type_table: ReportTable
    count_table: ReportTable
    cells: List[CellResult]

    def tables(self) -> Dict[str, ReportTable]:
        return {
            "domain_mix_f1": self.f1_table,
            "domain_mix_types": self.type_table,
            "domain_mix_counts": self.count_table,
        }


def entity_count_table(
    pseudo: Mapping[str, Sequence[LabeledSentence]], types: Sequence[str]
) -> ReportTable:
    """Entity count by type per domain of pseudo-labeled data."""
    table = ReportTable("entity counts", ["domain"] + list(types) + ["All"])
    for domain, sentences in pseudo.items():
        counts = {t: 0 for t in types}
        for sentence in sentences:
            for tag in sentence.tags:
                prefix, etype = split_tag(tag)
                if prefix == "B" and etype in counts:
                    counts[etype] += 1
        table.add_row([domain] + [counts[t] for t in types] + [sum(counts.values())])
    return table


def run_domain_mix(
    spec: ExperimentSpec,
    data: ExperimentData,
    run_dir: Optional[Union[str, Path]] = None,
) -> DomainMixResult:
    """
    One student per pseudo-labeled domain plus one on all domains combined,
    compared with zero-transfer on every test set.

    Rows are zero-transfer, each domain in order, then combined; cells hold
    the mean F1 over seeds. Also reports per-type F1 on the pooled test sets
    and the entity counts of each domain's pseudo-labeled data.
    """
    runner = ExperimentRunner(spec, data, run_dir)
    domains, testsets = runner.domains(), runner.testsets()
    types = types_of(spec.tagger.labels)
    student_loss = spec.student_train.loss
    rows = [ROW_ZERO_TRANSFER] + domains + [ROW_COMBINED]

    f1_table = ReportTable("F1 by training domain", ["train"] + testsets)
    type_table = ReportTable("F1 by entity type", ["train"] + types + ["All"])
    f1_table.notes.append(
        "reference F1 change of target fine-tuning over zero-transfer (mBERT): "
        + ", ".join(
            f"{k} {v:+.1f}" for k, v in TRANSFER_REFERENCE_DELTAS["mBERT"].items()
        )
    )

    for row in rows:
        if row == ROW_ZERO_TRANSFER:
            sentences: List[LabeledSentence] = []
        elif row == ROW_COMBINED:
            sentences = runner.pooled_pseudo()
        else:
            sentences = data.pseudo[row]
        loss_config = None if row == ROW_ZERO_TRANSFER else student_loss.to_dict()
        config = {"row": row, "loss": loss_config, "examples": len(sentences)}

        cells = []
        for seed in spec.seeds:
            train_set = runner.noisy(sentences, seed)

            def build(
                seed: int = seed, train_set: List[LabeledSentence] = train_set
            ) -> TaggerModel:
                if row == ROW_ZERO_TRANSFER:
                    return runner.teacher(seed)
                return runner.sequential(seed, train_set, student_loss)

            cells.append(runner.cell(row, seed, config, build))

        f1_table.add_row(
            [row] + [_mean([c.reports[t].f1 for c in cells]) for t in testsets]
        )
        type_row: List[Any] = [row]
        for etype in types:
            type_row.append(
                _mean(
                    [
                        c.reports["all"].per_type[etype].f1
                        if etype in c.reports["all"].per_type
                        else 0.0
                        for c in cells
                    ]
                )
            )
        type_table.add_row(type_row + [_mean([c.reports["all"].f1 for c in cells])])

    count_table = entity_count_table({d: data.pseudo[d] for d in domains}, types)
    runner.write_manifest(rows)
    return DomainMixResult(f1_table, type_table, count_table, runner.cells)


# Size sweep


@dataclass(frozen=True)
class SweepPoint:
    size: int
    mean_f1: float
    std_f1: float
    per_seed: Tuple[float, ...]


@dataclass
class SizeSweepResult:
    points: List[SweepPoint]
    plateau: int
    table: ReportTable
    cells: List[CellResult]

    def tables(self) -> Dict[str, ReportTable]:
        return {"size_sweep": self.table}


def plateau_size(
    points: Sequence[SweepPoint], tolerance: float = PLATEAU_TOLERANCE
) -> int:
    """First size whose mean F1 is within `tolerance` of the best mean F1."""
    best = max(point.mean_f1 for point in points)
    for point in points:
        if point.mean_f1 >= best - tolerance:
            return point.size
    return points[-1].size


def run_size_sweep(
    spec: ExperimentSpec,
    data: ExperimentData,
    run_dir: Optional[Union[str, Path]] = None,
) -> SizeSweepResult:
    """
    Train students on growing seeded subsets of the pooled pseudo-labeled data.

    For each seed the pool is permuted once and every size takes a prefix,
    so larger training sets contain the smaller ones.

    Raises:
        SizeExceedsData: If the largest size exceeds the pooled data
    """
    runner = ExperimentRunner(spec, data, run_dir)
    pool = runner.pooled_pseudo()
    if spec.sizes[-1] > len(pool):
        raise SizeExceedsData(spec.sizes[-1], len(pool))
    loss = spec.student_train.loss

    per_size: Dict[int, List[float]] = {size: [] for size in spec.sizes}
    for seed in spec.seeds:
        order = np.random.default_rng(seed).permutation(len(pool))
        for size in spec.sizes:
            subset = runner.noisy([pool[int(i)] for i in order[:size]], seed)
            config = {"size": size, "loss": loss.to_dict()}

            def build(
                seed: int = seed, subset: List[LabeledSentence] = subset
            ) -> TaggerModel:
                return runner.sequential(seed, subset, loss)

            cell = runner.cell(f"size-{size}", seed, config, build)
            per_size[size].append(cell.reports["all"].f1)

    points = [
        SweepPoint(size, _mean(f1s), float(np.std(f1s)), tuple(f1s))
        for size, f1s in per_size.items()
    ]
    plateau = plateau_size(points)
    table = ReportTable("F1 by training size", ["size", "mean_f1", "std_f1"])
    for point in points:
        table.add_row([point.size, point.mean_f1, point.std_f1])
    table.notes.append(f"plateau: first size within 1 F1 point of the best: {plateau}")
    runner.write_manifest([f"size-{size}" for size in spec.sizes])
    return SizeSweepResult(points, plateau, table, runner.cells)


# Ablation


@dataclass
class AblationResult:
    table: ReportTable
    configs: Dict[int, Dict[str, Any]]
    per_seed_f1: Dict[int, List[float]]
    cells: List[CellResult]

    def tables(self) -> Dict[str, ReportTable]:
        return {"ablation": self.table}


def ablation_config(setting: int, runner: ExperimentRunner) -> Dict[str, Any]:
    """Initialisation, training data and loss of one ablation setting."""
    ce = LossKind.cross_entropy().to_dict()
    rw = runner.reweighted_loss().to_dict()
    configs: Dict[int, Dict[str, Any]] = {
        1: {"init": "teacher", "data": "pseudo", "loss": rw},
        2: {"init": "teacher", "data": "none", "loss": None},
        3: {"init": "teacher", "data": "pseudo", "loss": ce},
        4: {"init": "scratch", "data": "pseudo", "loss": rw},
        5: {"init": "scratch", "data": "source+pseudo", "loss": ce},
        6: {"init": "scratch", "data": "source+pseudo", "loss": rw},
    }
    return dict(configs[setting], setting=setting, name=ABLATION_SETTINGS[setting])


def mixed_training_set(
    source: Sequence[LabeledSentence],
    pseudo: Sequence[LabeledSentence],
    ratio: float,
    seed: int,
) -> List[LabeledSentence]:
    """pseudo plus round(ratio * len(pseudo)) source sentences (seeded pick)."""
    n_source = min(len(source), int(round(ratio * len(pseudo))))
    order = np.random.default_rng([seed, 2]).permutation(len(source))
    return [source[int(i)] for i in sorted(order[:n_source])] + list(pseudo)


def run_ablation(
    spec: ExperimentSpec,
    data: ExperimentData,
    run_dir: Optional[Union[str, Path]] = None,
) -> AblationResult:
    """
    Compare the six training settings on the pooled target test sets.

    Rows follow setting order; columns are mean precision, recall and F1 over
    seeds. The reference delta of each setting is attached as a note.
    """
    runner = ExperimentRunner(spec, data, run_dir)
    pseudo = runner.pooled_pseudo()
    table = ReportTable("ablation", ["setting", "precision", "recall", "f1"])
    configs, per_seed = {}, {}

    for setting in spec.settings:
        config = ablation_config(setting, runner)
        configs[setting] = config
        loss = LossKind.from_dict(config["loss"]) if config["loss"] else None

        cells = []
        for seed in spec.seeds:
            noisy = runner.noisy(pseudo, seed)

            def build(
                seed: int = seed,
                noisy: List[LabeledSentence] = noisy,
                config: Dict[str, Any] = config,
                loss: Optional[LossKind] = loss,
            ) -> TaggerModel:
                if config["data"] == "none" or loss is None:
                    return runner.teacher(seed)
                if config["data"] == "source+pseudo":
                    mixed = mixed_training_set(
                        data.source_train, noisy, spec.mixed_ratio, seed
                    )
                    return runner.scratch(seed, mixed, loss)
                if config["init"] == "scratch":
                    return runner.scratch(seed, noisy, loss)
                return runner.sequential(seed, noisy, loss)

            cells.append(runner.cell(config["name"], seed, config, build))

        reports = [c.reports["all"] for c in cells]
        per_seed[setting] = [r.f1 for r in reports]
        table.add_row(
            [
                config["name"],
                _mean([r.precision for r in reports]),
                _mean([r.recall for r in reports]),
                _mean(per_seed[setting]),
            ]
        )
        delta = ABLATION_REFERENCE_DELTAS[setting]
        table.notes.append(f"{config['name']}: reference F1 change {delta:+.1f}")

    runner.write_manifest([ABLATION_SETTINGS[s] for s in spec.settings])
    return AblationResult(table, configs, per_seed, runner.cells)


def run_experiment(
    spec: ExperimentSpec,
    data: ExperimentData,
    run_dir: Optional[Union[str, Path]] = None,
) -> Union[DomainMixResult, SizeSweepResult, AblationResult]:
    if spec.kind == DOMAIN_MIX:
        return run_domain_mix(spec, data, run_dir)
    if spec.kind == SIZE_SWEEP:
        return run_size_sweep(spec, data, run_dir)
    if spec.kind == ABLATION:
        return run_ablation(spec, data, run_dir)
    raise ValueError(f"unknown experiment kind {spec.kind!r}")

