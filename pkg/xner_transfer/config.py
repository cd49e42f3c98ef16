"""
Pipeline configuration read from YAML.

Every section maps onto a dataclass with defaults. Unknown keys are errors,
and relative paths resolve against the directory of the config file.
Command-line flags override file values, which override the defaults.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar, Union

import yaml

from .aligners import Aligner, AlignerConfig, LexicalAligner, RemoteAligner
from .corpus import SynthSpec
from .errors import ConfigError
from .experiments import ExperimentSpec
from .lexicon import Lexicon
from .losses import LOSS_NAMES, LossKind
from .projection import ProjectionConfig
from .registry import get_domain, get_entity_types, is_known_domain
from .tagger import TaggerConfig, TrainConfig, labels_for_types

logger = logging.getLogger(__name__)

GAMMA_RANGE = (0.0, 5.0)
ALIGNER_KINDS = ("lexical", "remote")

T = TypeVar("T")


@dataclass
class PathsConfig:
    """
    File locations. parallel maps a domain to {"source": ..., "target": ...};
    target_test maps a test-set name to a CoNLL file.
    """

    source_train: Optional[str] = None
    source_test: Optional[str] = None
    parallel: Dict[str, Dict[str, str]] = field(default_factory=dict)
    target_test: Dict[str, str] = field(default_factory=dict)
    lexicon: Optional[str] = None
    output_dir: str = "runs/default"


@dataclass
class TaggerSettings:
    embed_dim: int = 32
    window: int = 2
    hidden_dim: int = 64
    min_count: int = 1
    types: List[str] = field(default_factory=lambda: ["PER", "ORG", "LOC"])

    def tagger_config(self, seed: int) -> TaggerConfig:
        return TaggerConfig(
            self.embed_dim,
            self.window,
            self.hidden_dim,
            labels_for_types(self.types),
            seed,
        )


@dataclass
class AlignerSettings:
    kind: str = "lexical"
    threshold: float = 0.7
    max_span_len: int = 6
    tie_epsilon: float = 0.02
    endpoint: Optional[str] = None
    timeout: float = 10.0
    max_in_flight: int = 4
    min_score: float = 0.0

    def aligner_config(self) -> AlignerConfig:
        return AlignerConfig(self.threshold, self.max_span_len, self.tie_epsilon)

    def build(self, lexicon: Optional[Lexicon] = None) -> Aligner:
        if self.kind == "remote":
            if not self.endpoint:
                raise ConfigError(["aligner.endpoint: required for the remote aligner"])
            return RemoteAligner(
                self.endpoint, self.timeout, self.max_in_flight, self.min_score
            )
        return LexicalAligner(lexicon or Lexicon(), self.aligner_config())


@dataclass
class SynthSettings:
    """
    Synthetic corpus layout written by the synth command. Each entry of
    domains is {"name": ..., "type_weights": {...}}; weights default to the
    registered domain profile.
    """

    vocab_size: int = 400
    lexicon_seed: int = 7
    entity_rate: float = 0.5
    reorder_prob: float = 0.1
    ambiguous_rate: float = 0.15
    cue_drop: float = 0.15
    pairs_per_domain: int = 4000
    source_train: int = 500
    source_test: int = 100
    target_test: int = 200
    domains: List[Dict[str, Any]] = field(
        default_factory=lambda: [{"name": "synthetic"}]
    )

    def spec_for(self, entry: Dict[str, Any], types: Sequence[str]) -> SynthSpec:
        weights = entry.get("type_weights")
        if weights is None:
            profile = get_domain(entry["name"]).get("type_weights", {})
            weights = {t: float(profile.get(t, 1.0)) for t in types}
        return SynthSpec(
            vocab_size=self.vocab_size,
            lexicon_seed=self.lexicon_seed,
            entity_rate=self.entity_rate,
            reorder_prob=self.reorder_prob,
            ambiguous_rate=self.ambiguous_rate,
            cue_drop=self.cue_drop,
            type_weights=dict(weights),
            domain=entry["name"],
        )


@dataclass
class ExperimentSettings:
    kind: str = "ablation"
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    domains: List[str] = field(default_factory=list)
    testsets: List[str] = field(default_factory=list)
    sizes: List[int] = field(default_factory=list)
    settings: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    mixed_ratio: float = 1.0
    label_noise: float = 0.0


def _default_teacher() -> TrainConfig:
    return TrainConfig(loss=LossKind.focal(2.0), epochs=5)


def _default_student() -> TrainConfig:
    return TrainConfig(loss=LossKind.reweighted(4.0), epochs=5, warmup_epochs=2)


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    tagger: TaggerSettings = field(default_factory=TaggerSettings)
    teacher: TrainConfig = field(default_factory=_default_teacher)
    student: TrainConfig = field(default_factory=_default_student)
    aligner: AlignerSettings = field(default_factory=AlignerSettings)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    synth: SynthSettings = field(default_factory=SynthSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    sample_size: Optional[int] = None
    seed: int = 0

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    def teacher_train(self) -> TrainConfig:
        return replace(self.teacher, seed=self.seed)

    def student_train(self) -> TrainConfig:
        return replace(self.student, seed=self.seed)

    def experiment_spec(self, kind: Optional[str] = None) -> ExperimentSpec:
        exp = self.experiment
        return ExperimentSpec(
            kind=kind or exp.kind,
            seeds=tuple(exp.seeds),
            domains=tuple(exp.domains),
            testsets=tuple(exp.testsets),
            sizes=tuple(exp.sizes),
            settings=tuple(exp.settings),
            tagger=self.tagger.tagger_config(self.seed),
            teacher_train=self.teacher,
            student_train=self.student,
            mixed_ratio=exp.mixed_ratio,
            label_noise=exp.label_noise,
            min_count=self.tagger.min_count,
        )


def _section(cls: Type[T], data: Any, name: str, errors: List[str]) -> T:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        errors.append(f"{name}: expected a mapping")
        return cls()
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    for key in sorted(set(data) - known):
        errors.append(f"{name}.{key}: unknown key")
    try:
        return cls(**{k: v for k, v in data.items() if k in known})
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return cls()


def _train_section(
    data: Any, name: str, default: TrainConfig, errors: List[str]
) -> TrainConfig:
    if data is None:
        return default
    if not isinstance(data, dict):
        errors.append(f"{name}: expected a mapping")
        return default
    known = {f.name for f in fields(TrainConfig)} - {"seed"}
    for key in sorted(set(data) - known):
        errors.append(f"{name}.{key}: unknown key")
    values = {k: v for k, v in data.items() if k in known}
    loss = values.get("loss")
    if loss is not None:
        if not isinstance(loss, dict):
            errors.append(f"{name}.loss: expected a mapping with kind and gamma")
            return default
        for key in sorted(set(loss) - {"kind", "gamma"}):
            errors.append(f"{name}.loss.{key}: unknown key")
        merged = {**default.loss.to_dict(), **loss}
        if merged["kind"] not in LOSS_NAMES:
            errors.append(f"{name}.loss.kind: must be one of {', '.join(LOSS_NAMES)}")
            return default
        values["loss"] = merged
    try:
        return TrainConfig.from_dict({**default.to_dict(), **values, "seed": 0})
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return default


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value).expanduser()
    return str(path if path.is_absolute() else base / path)


def _resolve_paths(paths: PathsConfig, base: Path) -> PathsConfig:
    return PathsConfig(
        source_train=_resolve(base, paths.source_train),
        source_test=_resolve(base, paths.source_test),
        parallel={
            domain: {side: str(_resolve(base, p)) for side, p in sides.items()}
            for domain, sides in paths.parallel.items()
        },
        target_test={k: str(_resolve(base, v)) for k, v in paths.target_test.items()},
        lexicon=_resolve(base, paths.lexicon),
        output_dir=str(_resolve(base, paths.output_dir)),
    )


def config_from_dict(
    data: Optional[Dict[str, Any]], base_dir: Union[str, Path, None] = None
) -> PipelineConfig:
    """
    Build a PipelineConfig from parsed YAML.

    Raises:
        ConfigError: Listing every unknown key and invalid value
    """
    data = data or {}
    errors: List[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be a mapping"])
    sections = {
        "paths",
        "tagger",
        "teacher",
        "student",
        "aligner",
        "projection",
        "synth",
        "experiment",
        "sample_size",
        "seed",
    }
    for key in sorted(set(data) - sections):
        errors.append(f"{key}: unknown key")

    defaults = PipelineConfig()
    cfg = PipelineConfig(
        paths=_section(PathsConfig, data.get("paths"), "paths", errors),
        tagger=_section(TaggerSettings, data.get("tagger"), "tagger", errors),
        teacher=_train_section(
            data.get("teacher"), "teacher", defaults.teacher, errors
        ),
        student=_train_section(
            data.get("student"), "student", defaults.student, errors
        ),
        aligner=_section(AlignerSettings, data.get("aligner"), "aligner", errors),
        projection=_section(
            ProjectionConfig, data.get("projection"), "projection", errors
        ),
        synth=_section(SynthSettings, data.get("synth"), "synth", errors),
        experiment=_section(
            ExperimentSettings, data.get("experiment"), "experiment", errors
        ),
        sample_size=data.get("sample_size"),
        seed=data.get("seed", 0),
    )
    if errors:
        raise ConfigError(errors)
    if base_dir is not None:
        cfg.paths = _resolve_paths(cfg.paths, Path(base_dir))
    return cfg


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """
    Read a YAML config file.

    Raises:
        ConfigError: If the file is missing, is not valid YAML or has bad keys
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config: {path} does not exist"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: {path} is not valid YAML: {exc}"]) from exc
    logger.debug("loaded config from %s", path)
    return config_from_dict(data, path.parent)


def _check_gamma(name: str, loss: LossKind, errors: List[str]) -> None:
    low, high = GAMMA_RANGE
    if not low <= loss.gamma <= high:
        errors.append(f"{name}.loss.gamma: must lie in [{low:g}, {high:g}]")


def validate_config(cfg: PipelineConfig, required: Sequence[str] = ()) -> List[str]:
    """
    Check value ranges and that referenced files exist.

    Args:
        cfg: Configuration to check
        required: Path fields the calling command needs ("source_train",
            "source_test", "parallel", "target_test", "lexicon")

    Returns:
        Error strings naming the offending field (empty when valid)
    """
    errors: List[str] = []
    paths = cfg.paths
    for name in ("source_train", "source_test", "lexicon"):
        value = getattr(paths, name)
        if value is None:
            if name in required:
                errors.append(f"paths.{name}: required")
        elif not Path(value).exists():
            errors.append(f"paths.{name}: file does not exist")

    if "parallel" in required and not paths.parallel:
        errors.append("paths.parallel: at least one domain is required")
    for domain, sides in paths.parallel.items():
        if not is_known_domain(domain):
            errors.append(f"paths.parallel.{domain}: domain is not registered")
        for side in ("source", "target"):
            if side not in sides:
                errors.append(f"paths.parallel.{domain}.{side}: required")
            elif not Path(sides[side]).exists():
                errors.append(f"paths.parallel.{domain}.{side}: file does not exist")
    if "target_test" in required and not paths.target_test:
        errors.append("paths.target_test: at least one test set is required")
    for name, value in paths.target_test.items():
        if not Path(value).exists():
            errors.append(f"paths.target_test.{name}: file does not exist")

    known_types = set(get_entity_types())
    for etype in cfg.tagger.types:
        if etype not in known_types:
            errors.append(f"tagger.types: unknown entity type {etype}")
    if min(cfg.tagger.embed_dim, cfg.tagger.hidden_dim) < 1 or cfg.tagger.window < 0:
        errors.append("tagger: dimensions must be >= 1 and window >= 0")
    if cfg.tagger.min_count < 1:
        errors.append("tagger.min_count: must be >= 1")

    _check_gamma("teacher", cfg.teacher.loss, errors)
    _check_gamma("student", cfg.student.loss, errors)

    if cfg.aligner.kind not in ALIGNER_KINDS:
        errors.append(f"aligner.kind: must be one of {', '.join(ALIGNER_KINDS)}")
    elif cfg.aligner.kind == "remote" and not cfg.aligner.endpoint:
        errors.append("aligner.endpoint: required for the remote aligner")
    try:
        cfg.aligner.aligner_config()
    except ValueError as exc:
        errors.append(f"aligner: {exc}")
    if cfg.aligner.max_in_flight < 1:
        errors.append("aligner.max_in_flight: must be >= 1")

    if cfg.sample_size is not None and cfg.sample_size < 0:
        errors.append("sample_size: must be non-negative")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        errors.append("seed: must be a non-negative integer")

    if not cfg.synth.domains:
        errors.append("synth.domains: at least one domain is required")
    for index, entry in enumerate(cfg.synth.domains):
        if "name" not in entry:
            errors.append(f"synth.domains[{index}].name: required")
        elif not is_known_domain(entry["name"]):
            errors.append(f"synth.domains[{index}].name: domain is not registered")

    try:
        spec_errors = cfg.experiment_spec().validate()
    except ValueError as exc:
        spec_errors = [str(exc)]
    errors.extend(f"experiment: {e}" for e in spec_errors)
    return errors


def config_to_dict(cfg: PipelineConfig) -> Dict[str, Any]:
    """Plain-data form of a config, suitable for yaml.safe_dump."""

    def train(section: TrainConfig) -> Dict[str, Any]:
        data = section.to_dict()
        data.pop("seed")
        return data

    return {
        "paths": asdict(cfg.paths),
        "tagger": asdict(cfg.tagger),
        "teacher": train(cfg.teacher),
        "student": train(cfg.student),
        "aligner": asdict(cfg.aligner),
        "projection": asdict(cfg.projection),
        "synth": asdict(cfg.synth),
        "experiment": asdict(cfg.experiment),
        "sample_size": cfg.sample_size,
        "seed": cfg.seed,
    }


def dump_config(cfg: PipelineConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(
        yaml.safe_dump(config_to_dict(cfg), sort_keys=False), encoding="utf-8"
    )
