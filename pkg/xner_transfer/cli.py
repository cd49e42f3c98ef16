"""
Command-line entry point: the five pipeline stages, the synthetic corpus
generator and the experiment harnesses.

    xner-transfer --out runs/demo synth
    xner-transfer --config runs/demo/config.yaml train-teacher
    xner-transfer --config runs/demo/config.yaml project
    xner-transfer --config runs/demo/config.yaml finetune
    xner-transfer --config runs/demo/config.yaml evaluate
    xner-transfer --config runs/demo/config.yaml experiment --kind ablation

Every stage records its input hashes under <out>/stages and is skipped when
rerun with unchanged inputs. Log verbosity comes from XNF_LOG.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .config import (
    PipelineConfig,
    config_to_dict,
    dump_config,
    load_config,
    validate_config,
)
from .corpus import (
    ParallelPair,
    gen_synthetic_corpus,
    read_conll_file,
    read_parallel_files,
    sample_equal_weights,
    write_conll_file,
    write_parallel_files,
)
from .errors import ConfigError, ProjectionInterrupted, XnerError
from .evaluation import CSV, MARKDOWN, emit_report, evaluate, report_table
from .experiments import KINDS, ExperimentData, run_experiment
from .lexicon import Lexicon, read_lexicon, write_lexicon
from .projection import (
    ProjectionOutcome,
    balance_empty_ratio,
    build_pseudo_dataset,
    by_domain,
    read_pseudo_dataset,
    write_pseudo_dataset,
)
from .stages import RunLock, StageCache, hash_file, hash_json
from .tagger import (
    build_vocab,
    init_model,
    load_model,
    predict_batch,
    remap_vocab,
    save_model,
    train,
)

logger = logging.getLogger(__name__)

LOG_ENV = "XNF_LOG"
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

DATA_DIR = "data"
TEACHER_FILE = "teacher.xnft"
STUDENT_FILE = "student.xnft"
PSEUDO_DIR = "pseudo"
REPORTS_DIR = "reports"
LOGS_DIR = "logs"
EXPERIMENTS_DIR = "experiments"
CURSOR_FILE = "project.cursor.json"


def configure_logging() -> None:
    """Attach one stream handler to the package logger, level from XNF_LOG."""
    package = logging.getLogger("xner_transfer")
    for handler in list(package.handlers):
        package.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    package.addHandler(handler)

    value = os.environ.get(LOG_ENV, "info").strip().lower()
    package.setLevel(LOG_LEVELS.get(value, logging.INFO))
    if value not in LOG_LEVELS:
        logger.warning("unknown %s value %r, using info", LOG_ENV, value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="YAML pipeline configuration"
    )
    common.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help="Override the seed"
    )
    common.add_argument(
        "--out", default=argparse.SUPPRESS, help="Override the output directory"
    )

    parser = argparse.ArgumentParser(
        prog="xner-transfer",
        description="Cross-lingual NER transfer through annotation projection.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "synth", parents=[common], help="Generate a synthetic bilingual corpus"
    )
    sub.add_parser(
        "train-teacher", parents=[common], help="Train the source-language tagger"
    )

    project = sub.add_parser(
        "project", parents=[common], help="Build the pseudo-labeled target data"
    )
    project.add_argument(
        "--suppress-misc",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Drop MISC entities from the teacher's predictions",
    )
    project.add_argument(
        "--sample-size",
        type=int,
        default=argparse.SUPPRESS,
        help="Number of parallel pairs to draw with equal domain weights",
    )

    sub.add_parser(
        "finetune", parents=[common], help="Train the student on pseudo labels"
    )

    evaluate_cmd = sub.add_parser(
        "evaluate", parents=[common], help="Score a model on the target test sets"
    )
    evaluate_cmd.add_argument(
        "--model", default=None, help="Model file (default: the student)"
    )

    experiment = sub.add_parser(
        "experiment", parents=[common], help="Run an experiment harness"
    )
    experiment.add_argument("--kind", choices=KINDS, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (or defaults) with command-line overrides applied."""
    config_path = getattr(args, "config", None)
    cfg = load_config(config_path) if config_path else PipelineConfig()
    if hasattr(args, "seed"):
        cfg.seed = args.seed
    if hasattr(args, "out"):
        cfg.paths.output_dir = str(Path(args.out))
    if hasattr(args, "suppress_misc"):
        cfg.projection = replace(cfg.projection, suppress_misc=True)
    if hasattr(args, "sample_size"):
        cfg.sample_size = args.sample_size
    return cfg


def _require(cfg: PipelineConfig, fields: Sequence[str]) -> None:
    errors = validate_config(cfg, fields)
    if errors:
        raise ConfigError(errors)


def _require_file(path: Path, produced_by: str) -> None:
    if not path.exists():
        raise ConfigError([f"{path}: missing; run {produced_by} first"])


def _types(cfg: PipelineConfig) -> List[str]:
    return list(cfg.tagger.types)


def _write_json(path: Path, data: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# Stages


def cmd_synth(cfg: PipelineConfig) -> None:
    """Write a synthetic corpus and a config.yaml that points at it."""
    _require(cfg, ())
    out = cfg.output_dir
    data = out / DATA_DIR
    data.mkdir(parents=True, exist_ok=True)
    synth = cfg.synth
    types = _types(cfg)
    specs = [synth.spec_for(entry, types) for entry in synth.domains]

    # Source-language gold comes from a generic mix, test sets from
    # seeds disjoint from the parallel text.
    base = replace(specs[0], type_weights={t: 1.0 for t in types}, domain="synthetic")
    source = gen_synthetic_corpus(
        base, synth.source_train + synth.source_test, cfg.seed
    )
    split = synth.source_train
    write_conll_file(data / "source_train.conll", source.source_gold[:split])
    write_conll_file(data / "source_test.conll", source.source_gold[split:])
    write_lexicon(data / "lexicon.tsv", source.lexicon)

    written = PipelineConfig(
        tagger=cfg.tagger,
        teacher=cfg.teacher,
        student=cfg.student,
        aligner=cfg.aligner,
        projection=cfg.projection,
        synth=cfg.synth,
        experiment=cfg.experiment,
        sample_size=cfg.sample_size,
        seed=cfg.seed,
    )
    written.paths.source_train = f"{DATA_DIR}/source_train.conll"
    written.paths.source_test = f"{DATA_DIR}/source_test.conll"
    written.paths.lexicon = f"{DATA_DIR}/lexicon.tsv"
    written.paths.output_dir = "."

    for index, spec in enumerate(specs, start=1):
        corpus = gen_synthetic_corpus(
            spec, synth.pairs_per_domain, cfg.seed * 1000 + 2 * index
        )
        test = gen_synthetic_corpus(
            spec, synth.target_test, cfg.seed * 1000 + 2 * index + 1
        )
        name = spec.domain
        write_parallel_files(
            data / f"{name}.src", data / f"{name}.tgt", corpus.pairs
        )
        write_conll_file(data / f"{name}.test.conll", test.target_gold)
        written.paths.parallel[name] = {
            "source": f"{DATA_DIR}/{name}.src",
            "target": f"{DATA_DIR}/{name}.tgt",
        }
        written.paths.target_test[name] = f"{DATA_DIR}/{name}.test.conll"
        logger.info(
            "%s: %d parallel pairs, %d test sentences",
            name,
            len(corpus.pairs),
            len(test.target_gold),
        )

    dump_config(written, out / "config.yaml")
    logger.info("wrote synthetic corpus and config to %s", out)


def cmd_train_teacher(cfg: PipelineConfig, cache: StageCache) -> Path:
    _require(cfg, ("source_train",))
    out = cfg.output_dir
    model_path = out / TEACHER_FILE
    inputs = {
        "source_train": hash_file(cfg.paths.source_train),
        "settings": hash_json(
            {
                "tagger": config_to_dict(cfg)["tagger"],
                "train": cfg.teacher_train().to_dict(),
            }
        ),
    }
    if cache.is_fresh("train-teacher", inputs):
        logger.info("train-teacher: inputs unchanged, skipping")
        return model_path

    sentences = read_conll_file(cfg.paths.source_train, set(_types(cfg)))
    vocab = build_vocab(sentences, cfg.tagger.min_count)
    model = init_model(cfg.tagger.tagger_config(cfg.seed), vocab)
    model, history = train(model, sentences, cfg.teacher_train())
    save_model(model, model_path)

    log: Dict[str, object] = {"loss_history": history, "sentences": len(sentences)}
    if cfg.paths.source_test:
        held_out = read_conll_file(cfg.paths.source_test, set(_types(cfg)))
        report = evaluate(predict_batch(model, held_out), held_out)
        log["held_out"] = report.to_dict()
        logger.info("teacher held-out F1 %.4f", report.f1)
    log_path = out / LOGS_DIR / "train-teacher.json"
    _write_json(log_path, log)

    cache.record(
        "train-teacher", inputs, [model_path, Path(f"{model_path}.vocab"), log_path]
    )
    return model_path


def _load_pairs(cfg: PipelineConfig) -> List[ParallelPair]:
    corpora = [
        (domain, read_parallel_files(sides["source"], sides["target"], domain))
        for domain, sides in sorted(cfg.paths.parallel.items())
    ]
    if cfg.sample_size is None:
        return [pair for _, pairs in corpora for pair in pairs]
    return sample_equal_weights(corpora, cfg.sample_size, cfg.seed)


def _read_cursor(path: Path, inputs: Dict[str, str]) -> List[ProjectionOutcome]:
    if not path.exists():
        return []
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("inputs") != inputs:
        logger.info("project: cursor belongs to other inputs, starting over")
        return []
    outcomes = [ProjectionOutcome.from_dict(o) for o in data["outcomes"]]
    logger.info("project: resuming at pair %d", len(outcomes))
    return outcomes


def cmd_project(cfg: PipelineConfig, cache: StageCache) -> Path:
    _require(cfg, ("parallel",))
    out = cfg.output_dir
    teacher_path = out / TEACHER_FILE
    _require_file(teacher_path, "train-teacher")
    pseudo_dir = out / PSEUDO_DIR

    inputs = {
        "teacher": hash_file(teacher_path),
        "settings": hash_json(
            {
                "aligner": config_to_dict(cfg)["aligner"],
                "projection": config_to_dict(cfg)["projection"],
                "sample_size": cfg.sample_size,
                "seed": cfg.seed,
            }
        ),
    }
    for domain, sides in sorted(cfg.paths.parallel.items()):
        for side in ("source", "target"):
            inputs[f"{domain}.{side}"] = hash_file(sides[side])
    if cfg.paths.lexicon:
        inputs["lexicon"] = hash_file(cfg.paths.lexicon)
    if cache.is_fresh("project", inputs):
        logger.info("project: inputs unchanged, skipping")
        return pseudo_dir

    teacher = load_model(teacher_path)
    lexicon = read_lexicon(cfg.paths.lexicon) if cfg.paths.lexicon else Lexicon()
    aligner = cfg.aligner.build(lexicon)
    pairs = _load_pairs(cfg)

    cursor_path = out / CURSOR_FILE
    done = _read_cursor(cursor_path, inputs)
    try:
        dataset, stats = build_pseudo_dataset(
            pairs, teacher, aligner, cfg.projection, len(done), done
        )
    except ProjectionInterrupted as exc:
        _write_json(
            cursor_path,
            {
                "inputs": inputs,
                "cursor": exc.cursor,
                "outcomes": [o.to_dict() for o in exc.outcomes],
            },
        )
        logger.error("project: wrote resume cursor to %s", cursor_path)
        raise

    balanced = balance_empty_ratio(
        by_domain(dataset), cfg.projection.empty_ratio, cfg.seed
    )
    kept = [item for domain in sorted(balanced) for item in balanced[domain]]
    stats.empty_dropped = len(dataset) - len(kept)

    write_pseudo_dataset(pseudo_dir, kept, stats, _types(cfg))
    if cursor_path.exists():
        cursor_path.unlink()
    outputs = sorted(p for p in pseudo_dir.iterdir() if p.is_file())
    cache.record("project", inputs, outputs)
    return pseudo_dir


def cmd_finetune(cfg: PipelineConfig, cache: StageCache) -> Path:
    _require(cfg, ())
    out = cfg.output_dir
    teacher_path = out / TEACHER_FILE
    pseudo_dir = out / PSEUDO_DIR
    _require_file(teacher_path, "train-teacher")
    _require_file(pseudo_dir, "project")
    model_path = out / STUDENT_FILE

    provenance = sorted(p for p in pseudo_dir.iterdir() if p.is_file())
    inputs = {
        "teacher": hash_file(teacher_path),
        "pseudo": hash_json({p.name: hash_file(p) for p in provenance}),
        "settings": hash_json(
            {"train": cfg.student_train().to_dict(), "min_count": cfg.tagger.min_count}
        ),
    }
    if cache.is_fresh("finetune", inputs):
        logger.info("finetune: inputs unchanged, skipping")
        return model_path

    dataset, _ = read_pseudo_dataset(pseudo_dir)
    sentences = [item.sentence for item in dataset]
    teacher = load_model(teacher_path)
    vocab = build_vocab(sentences, cfg.tagger.min_count)
    student = remap_vocab(teacher, vocab, cfg.seed)
    student, history = train(student, sentences, cfg.student_train())
    save_model(student, model_path)

    log_path = out / LOGS_DIR / "finetune.json"
    _write_json(log_path, {"loss_history": history, "sentences": len(sentences)})
    cache.record(
        "finetune", inputs, [model_path, Path(f"{model_path}.vocab"), log_path]
    )
    return model_path


def cmd_evaluate(
    cfg: PipelineConfig, cache: StageCache, model_path: Optional[Path] = None
) -> List[Path]:
    _require(cfg, ("target_test",))
    out = cfg.output_dir
    model_path = model_path or out / STUDENT_FILE
    _require_file(model_path, "finetune")
    reports = out / REPORTS_DIR
    stem = model_path.stem

    inputs = {"model": hash_file(model_path)}
    for name, path in sorted(cfg.paths.target_test.items()):
        inputs[f"test/{name}"] = hash_file(path)
    if cache.is_fresh("evaluate", inputs):
        logger.info("evaluate: inputs unchanged, skipping")
        return []

    model = load_model(model_path)
    outputs, markdown = [], []
    for name, path in sorted(cfg.paths.target_test.items()):
        gold = read_conll_file(path, set(_types(cfg)))
        report = evaluate(predict_batch(model, gold), gold)
        table = report_table(report, f"{stem} on {name}")
        csv_path = reports / f"{stem}.{name}.csv"
        reports.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(emit_report(table, CSV), encoding="utf-8", newline="\n")
        outputs.append(csv_path)
        markdown.append(emit_report(table, MARKDOWN))
        logger.info("%s on %s: F1 %.4f", stem, name, report.f1)

    md_path = reports / f"{stem}.md"
    md_path.write_text("\n".join(markdown), encoding="utf-8", newline="\n")
    outputs.append(md_path)
    cache.record("evaluate", inputs, outputs)
    return outputs


def cmd_experiment(
    cfg: PipelineConfig, cache: StageCache, kind: Optional[str] = None
) -> Path:
    _require(cfg, ("source_train", "target_test"))
    out = cfg.output_dir
    pseudo_dir = out / PSEUDO_DIR
    _require_file(pseudo_dir, "project")

    spec = cfg.experiment_spec(kind)
    errors = spec.validate()
    if errors:
        raise ConfigError([f"experiment: {e}" for e in errors])
    run_dir = out / EXPERIMENTS_DIR / spec.kind
    stage = f"experiment-{spec.kind}"

    pseudo_files = sorted(p for p in pseudo_dir.iterdir() if p.is_file())
    inputs = {
        "source_train": hash_file(cfg.paths.source_train),
        "pseudo": hash_json({p.name: hash_file(p) for p in pseudo_files}),
        "spec": hash_json(spec.to_dict()),
    }
    for name, path in sorted(cfg.paths.target_test.items()):
        inputs[f"test/{name}"] = hash_file(path)
    if cache.is_fresh(stage, inputs):
        logger.info("%s: inputs unchanged, skipping", stage)
        for table in sorted(run_dir.glob("*.md")):
            print(table.read_text(encoding="utf-8"))
        return run_dir

    types = set(_types(cfg))
    dataset, _ = read_pseudo_dataset(pseudo_dir)
    data = ExperimentData.from_pseudo(
        read_conll_file(cfg.paths.source_train, types),
        by_domain(dataset),
        {
            name: read_conll_file(path, types)
            for name, path in sorted(cfg.paths.target_test.items())
        },
    )
    result = run_experiment(spec, data, run_dir)
    for name, table in result.tables().items():
        (run_dir / f"{name}.csv").write_text(
            emit_report(table, CSV), encoding="utf-8", newline="\n"
        )
        (run_dir / f"{name}.md").write_text(
            emit_report(table, MARKDOWN), encoding="utf-8", newline="\n"
        )
        print(emit_report(table, MARKDOWN))
    cache.record(stage, inputs, sorted(p for p in run_dir.rglob("*") if p.is_file()))
    return run_dir


def run(args: argparse.Namespace) -> None:
    cfg = resolve_config(args)
    cache = StageCache(cfg.output_dir)
    with RunLock(cfg.output_dir):
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train-teacher":
            cmd_train_teacher(cfg, cache)
        elif args.command == "project":
            cmd_project(cfg, cache)
        elif args.command == "finetune":
            cmd_finetune(cfg, cache)
        elif args.command == "evaluate":
            model = Path(args.model) if args.model else None
            cmd_evaluate(cfg, cache, model)
        elif args.command == "experiment":
            cmd_experiment(cfg, cache, args.kind)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line.

    Returns:
        0 on success, 1 on a pipeline or file system error, 2 on bad
        arguments
    """
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run(args)
    except XnerError as exc:
        if isinstance(exc, ConfigError):
            for error in exc.errors:
                logger.error("%s", error)
        else:
            logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
