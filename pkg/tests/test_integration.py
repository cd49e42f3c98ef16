"""
Integration tests for the complete projection pipeline.
"""

import csv
import json
import time

import pytest
import yaml

from xner_transfer.cli import main
from xner_transfer.config import load_config
from xner_transfer.projection import read_pseudo_dataset

PIPELINE = {
    "tagger": {"embed_dim": 16, "window": 1, "hidden_dim": 24},
    "teacher": {"epochs": 5},
    "student": {"epochs": 2, "warmup_epochs": 1},
    "synth": {
        "pairs_per_domain": 80,
        "source_train": 150,
        "source_test": 30,
        "target_test": 30,
        "domains": [{"name": "news"}, {"name": "subtitles"}],
    },
    "experiment": {"seeds": [0], "settings": [1, 2]},
}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    base = root / "base.yaml"
    base.write_text(yaml.safe_dump(PIPELINE))
    out = root / "run"
    assert main(["--config", str(base), "--out", str(out), "synth"]) == 0
    config = str(out / "config.yaml")
    for command in ("train-teacher", "project", "finetune", "evaluate"):
        assert main(["--config", config, command]) == 0, command
    return out


@pytest.mark.integration
class TestPipelineIntegration:
    """Integration tests running every stage through the command line."""

    def test_stage_records(self, run_dir):
        """Test that every stage left a record of its inputs."""
        for stage in ("train-teacher", "project", "finetune", "evaluate"):
            record = json.loads((run_dir / "stages" / f"{stage}.json").read_text())
            assert record["stage"] == stage
            assert record["input_hashes"]

    def test_teacher_log(self, run_dir):
        """Test the training log of the teacher."""
        log = json.loads((run_dir / "logs" / "train-teacher.json").read_text())
        assert len(log["loss_history"]) == 5
        assert log["sentences"] == 150
        assert 0.0 <= log["held_out"]["micro"]["f1"] <= 1.0

    def test_pseudo_labeled_data(self, run_dir):
        """Test the accounting of the projected data."""
        dataset, stats = read_pseudo_dataset(run_dir / "pseudo")
        assert stats.processed == 160
        assert stats.kept - stats.empty_dropped == len(dataset)
        assert {item.domain for item in dataset} <= {"news", "subtitles"}
        assert (run_dir / "pseudo" / "entity_counts.csv").exists()

    def test_reports(self, run_dir):
        """Test one CSV per test set and one markdown summary."""
        reports = run_dir / "reports"
        assert (reports / "student.news.csv").exists()
        assert (reports / "student.subtitles.csv").exists()
        markdown = (reports / "student.md").read_text()
        assert "### student on news" in markdown
        assert "| micro |" in markdown

    def test_rerun_is_skipped(self, run_dir, caplog):
        """Test that unchanged inputs skip a stage."""
        model = run_dir / "teacher.xnft"
        before = model.stat().st_mtime_ns
        assert main(["--config", str(run_dir / "config.yaml"), "train-teacher"]) == 0
        assert model.stat().st_mtime_ns == before
        assert "inputs unchanged" in caplog.text

    def test_seed_change_retrains(self, run_dir):
        """Test that a new seed invalidates the teacher."""
        record = run_dir / "stages" / "train-teacher.json"
        before = json.loads(record.read_text())["input_hashes"]
        config = str(run_dir / "config.yaml")
        assert main(["--config", config, "--seed", "1", "train-teacher"]) == 0
        after = json.loads(record.read_text())["input_hashes"]
        assert after["settings"] != before["settings"]
        assert main(["--config", config, "train-teacher"]) == 0

    def test_teacher_model_evaluates(self, run_dir):
        """Test scoring a model other than the student."""
        config = str(run_dir / "config.yaml")
        model = str(run_dir / "teacher.xnft")
        assert main(["--config", config, "evaluate", "--model", model]) == 0
        assert (run_dir / "reports" / "teacher.news.csv").exists()

    def test_experiment(self, run_dir, capsys):
        """Test an ablation over the pipeline's own data."""
        config = str(run_dir / "config.yaml")
        assert main(["--config", config, "experiment", "--kind", "ablation"]) == 0
        out = run_dir / "experiments" / "ablation"
        assert (out / "ablation.csv").exists()
        assert (out / "manifest.json").exists()
        assert "Zero-transfer" in capsys.readouterr().out
        assert load_config(config).experiment.settings == [1, 2]

    def test_experiment_rerun_is_skipped(self, run_dir, caplog):
        """Test that an experiment with unchanged inputs is not run again."""
        config = str(run_dir / "config.yaml")
        command = ["--config", config, "experiment", "--kind", "ablation"]
        assert main(command) == 0
        manifest = run_dir / "experiments" / "ablation" / "manifest.json"
        before = manifest.stat().st_mtime_ns
        caplog.clear()
        assert main(command) == 0
        assert manifest.stat().st_mtime_ns == before
        assert "experiment-ablation: inputs unchanged" in caplog.text


def _micro_f1(path):
    with path.open(encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            if row["type"] == "micro":
                return float(row["f1"])
    raise AssertionError(f"no micro row in {path}")


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default") / "run"
    started = time.perf_counter()
    assert main(["--out", str(out), "synth"]) == 0
    config = str(out / "config.yaml")
    for command in ("train-teacher", "project", "finetune", "evaluate"):
        assert main(["--config", config, command]) == 0, command
    elapsed = time.perf_counter() - started
    teacher = str(out / "teacher.xnft")
    assert main(["--config", config, "evaluate", "--model", teacher]) == 0
    return out, elapsed


@pytest.mark.integration
@pytest.mark.slow
class TestDefaultPipeline:
    """Test the outcome of the pipeline run with every setting at its default."""

    def test_teacher_learns_the_source_language(self, default_run):
        """Test the teacher's held-out F1 on source sentences."""
        out, _ = default_run
        log = json.loads((out / "logs" / "train-teacher.json").read_text())
        assert log["held_out"]["micro"]["f1"] >= 0.90

    def test_student_beats_zero_transfer(self, default_run):
        """Test that projected data lifts target F1 well above the teacher's."""
        out, _ = default_run
        student = _micro_f1(out / "reports" / "student.synthetic.csv")
        zero_transfer = _micro_f1(out / "reports" / "teacher.synthetic.csv")
        assert student >= 0.80
        assert student >= zero_transfer + 0.10

    def test_runs_within_five_minutes(self, default_run):
        """Test the wall clock of synth through evaluate."""
        _, elapsed = default_run
        assert elapsed < 300
