"""
Tests for xner_transfer.experiments module.
"""

import json

import pytest

from xner_transfer.corpus import LabeledSentence, SynthSpec, gen_synthetic_corpus
from xner_transfer.errors import CellFailed, SizeExceedsData
from xner_transfer.evaluation import evaluate
from xner_transfer.experiments import (
    ABLATION,
    ABLATION_SETTINGS,
    DOMAIN_MIX,
    ROW_COMBINED,
    ROW_ZERO_TRANSFER,
    SIZE_SWEEP,
    ExperimentData,
    ExperimentRunner,
    ExperimentSpec,
    SweepPoint,
    ablation_config,
    entity_count_table,
    inject_label_noise,
    mixed_training_set,
    plateau_size,
    run_ablation,
    run_domain_mix,
    run_experiment,
    run_size_sweep,
    types_of,
)
from xner_transfer.losses import LossKind
from xner_transfer.projection import PseudoLabeledSentence
from xner_transfer.spans import is_iob2
from xner_transfer.tagger import (
    TaggerConfig,
    TrainConfig,
    build_vocab,
    init_model,
    predict_batch,
    train,
)

TINY_TAGGER = TaggerConfig(embed_dim=6, window=1, hidden_dim=8)
FAST_TEACHER = TrainConfig(loss=LossKind.focal(2.0), epochs=2)
FAST_STUDENT = TrainConfig(loss=LossKind.reweighted(4.0), epochs=1)


def _spec(kind, **overrides):
    values = dict(
        kind=kind,
        seeds=(0,),
        tagger=TINY_TAGGER,
        teacher_train=FAST_TEACHER,
        student_train=FAST_STUDENT,
    )
    values.update(overrides)
    return ExperimentSpec(**values)


@pytest.fixture(scope="module")
def data():
    corpus = gen_synthetic_corpus(SynthSpec(), 80, seed=0)
    test = gen_synthetic_corpus(SynthSpec(), 30, seed=1).target_gold
    return ExperimentData.from_pseudo(
        corpus.source_gold[:40],
        {"news": corpus.target_gold[40:60], "un": corpus.target_gold[60:]},
        {"news-test": test[:15], "un-test": test[15:]},
    )


def _sent(tags):
    tags = tags.split()
    return LabeledSentence(tuple(f"w{i}" for i in range(len(tags))), tuple(tags))


class TestExperimentSpec:
    """Test experiment spec validation."""

    def test_defaults_validate(self):
        """Test that the default ablation spec is valid."""
        assert ExperimentSpec(ABLATION).validate() == []

    def test_errors(self):
        """Test that each broken field is reported."""
        spec = ExperimentSpec(
            "nope", seeds=(), sizes=(5, 5), settings=(7,), label_noise=2.0
        )
        errors = spec.validate()
        assert len(errors) == 5

    def test_sweep_needs_sizes(self):
        """Test that a size sweep without sizes is rejected."""
        assert ExperimentSpec(SIZE_SWEEP).validate() == ["a size sweep needs sizes"]

    def test_runner_rejects_invalid_spec(self, data):
        """Test that the runner validates its spec."""
        with pytest.raises(ValueError):
            ExperimentRunner(ExperimentSpec(ABLATION, seeds=()), data)

    def test_to_dict(self):
        """Test that the manifest form is JSON serialisable."""
        out = json.loads(json.dumps(_spec(ABLATION).to_dict()))
        assert out["student_train"]["loss"] == {"kind": "rw", "gamma": 4.0}
        assert out["tagger"]["labels"][0] == "O"


class TestHelpers:
    """Test data helpers shared by the harnesses."""

    def test_types_of(self):
        """Test types in first-seen order."""
        assert types_of(["O", "B-LOC", "I-LOC", "B-PER"]) == ["LOC", "PER"]

    def test_from_pseudo_unwraps(self):
        """Test that pseudo-labeled items become plain sentences."""
        item = PseudoLabeledSentence(_sent("B-PER O"), 0, "news")
        built = ExperimentData.from_pseudo([], {"news": [item]}, {})
        assert built.pseudo == {"news": [item.sentence]}

    def test_noise_rate_zero(self):
        """Test that no noise leaves the data unchanged."""
        sentences = [_sent("B-PER I-PER O")]
        assert inject_label_noise(sentences, 0.0, TINY_TAGGER.labels, 0) == sentences

    def test_noise_rate_one(self):
        """Test that full noise relabels every outside token."""
        noisy = inject_label_noise([_sent("O O O O")], 1.0, TINY_TAGGER.labels, 0)
        assert "O" not in noisy[0].tags
        assert is_iob2(noisy[0].tags)

    def test_noise_is_seeded(self):
        """Test that equal seeds give equal noise."""
        sentences = [_sent("O B-LOC O O B-PER I-PER")] * 20
        a = inject_label_noise(sentences, 0.3, TINY_TAGGER.labels, 4)
        b = inject_label_noise(sentences, 0.3, TINY_TAGGER.labels, 4)
        assert a == b
        assert a != sentences

    def test_noise_rate_range(self):
        """Test that the rate must be a probability."""
        with pytest.raises(ValueError):
            inject_label_noise([], 1.5, TINY_TAGGER.labels, 0)

    def test_mixed_training_set(self):
        """Test the source share of the mixed settings."""
        source = [_sent("O")] * 10
        pseudo = [_sent("B-PER")] * 5
        mixed = mixed_training_set(source, pseudo, 1.0, seed=0)
        assert len(mixed) == 10
        assert mixed[5:] == pseudo
        assert mixed_training_set(source, pseudo, 0.0, seed=0) == pseudo
        assert len(mixed_training_set(source, pseudo, 5.0, seed=0)) == 15

    def test_plateau(self):
        """Test the first size within tolerance of the best."""
        points = [
            SweepPoint(10, 0.5, 0.0, ()),
            SweepPoint(20, 0.705, 0.0, ()),
            SweepPoint(40, 0.71, 0.0, ()),
            SweepPoint(80, 0.712, 0.0, ()),
        ]
        assert plateau_size(points) == 20
        assert plateau_size(points, tolerance=0.0) == 80

    def test_entity_counts(self):
        """Test entity counting by type and domain."""
        table = entity_count_table(
            {"news": [_sent("B-PER I-PER O B-LOC")], "un": [_sent("O")]},
            ["PER", "LOC"],
        )
        assert table.rows == [["news", 1, 1, 2], ["un", 0, 0, 0]]

    def test_ablation_configs(self, data):
        """Test the initialisation, data and loss of each setting."""
        runner = ExperimentRunner(_spec(ABLATION), data)
        assert ablation_config(2, runner)["loss"] is None
        assert ablation_config(3, runner)["loss"] == {"kind": "ce", "gamma": 0.0}
        fourth = ablation_config(4, runner)
        assert (fourth["init"], fourth["loss"]["kind"]) == ("scratch", "rw")
        assert ablation_config(6, runner)["data"] == "source+pseudo"

    def test_reweighted_fallback(self, data):
        """Test the RW settings when students train with another loss."""
        spec = _spec(ABLATION, student_train=TrainConfig(epochs=1))
        runner = ExperimentRunner(spec, data)
        assert runner.reweighted_loss() == LossKind.reweighted(4.0)

    def test_unknown_domain(self, data):
        """Test that selecting a missing domain fails."""
        runner = ExperimentRunner(_spec(DOMAIN_MIX, domains=("web",)), data)
        with pytest.raises(KeyError):
            runner.domains()

    def test_cell_failure(self, data):
        """Test that a failing cell names its row and seed."""
        runner = ExperimentRunner(_spec(ABLATION), data)

        def build():
            raise ValueError("no data")

        with pytest.raises(CellFailed) as exc:
            runner.cell("broken", 3, {}, build)
        assert (exc.value.row, exc.value.seed) == ("broken", 3)


class TestHarnesses:
    """Test the experiment harnesses end to end on a tiny corpus."""

    def test_domain_mix(self, data, tmp_path):
        """Test rows, columns and written artifacts."""
        result = run_domain_mix(_spec(DOMAIN_MIX), data, tmp_path)
        rows = [ROW_ZERO_TRANSFER, "news", "un", ROW_COMBINED]
        assert result.f1_table.column("train") == rows
        assert result.f1_table.columns == ["train", "news-test", "un-test"]
        assert result.type_table.columns == ["train", "PER", "ORG", "LOC", "All"]
        assert result.count_table.column("domain") == ["news", "un"]
        assert len(result.cells) == 4
        assert (tmp_path / "cells" / "zero-transfer__seed0.json").exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["rows"] == rows
        assert set(manifest["datasets"]) == {
            "source_train",
            "pseudo/news",
            "pseudo/un",
            "test/news-test",
            "test/un-test",
        }
        for row in result.f1_table.rows:
            assert all(0.0 <= value <= 1.0 for value in row[1:])

    def test_domain_mix_is_deterministic(self, data):
        """Test that equal seeds reproduce every cell."""
        first = run_domain_mix(_spec(DOMAIN_MIX), data)
        second = run_domain_mix(_spec(DOMAIN_MIX), data)
        assert first.f1_table.rows == second.f1_table.rows

    def test_size_sweep(self, data):
        """Test one point per size and a plateau among them."""
        result = run_size_sweep(_spec(SIZE_SWEEP, sizes=(5, 20)), data)
        assert [p.size for p in result.points] == [5, 20]
        assert result.plateau in (5, 20)
        assert result.table.column("size") == [5, 20]

    def test_size_sweep_too_large(self, data):
        """Test that sizes beyond the pooled data are rejected."""
        with pytest.raises(SizeExceedsData):
            run_size_sweep(_spec(SIZE_SWEEP, sizes=(5, 1000)), data)

    def test_zero_transfer_setting_scores_the_teacher(self, data):
        """Test that setting 2 evaluates the source model unchanged."""
        vocab = build_vocab(data.source_train)
        model = init_model(TINY_TAGGER, vocab)
        teacher, _ = train(model, data.source_train, FAST_TEACHER)
        given = ExperimentData(data.source_train, data.pseudo, data.testsets, teacher)
        result = run_ablation(_spec(ABLATION, settings=(2,)), given)
        pooled = data.testsets["news-test"] + data.testsets["un-test"]
        expected = evaluate(predict_batch(teacher, pooled), pooled).f1
        assert result.per_seed_f1[2] == [expected]

    @pytest.mark.slow
    def test_ablation(self, data, tmp_path):
        """Test every setting over two seeds."""
        result = run_ablation(_spec(ABLATION, seeds=(0, 1)), data, tmp_path)
        assert result.table.column("setting") == [
            ABLATION_SETTINGS[s] for s in range(1, 7)
        ]
        assert all(len(f1s) == 2 for f1s in result.per_seed_f1.values())
        assert len(result.table.notes) == 6
        assert len(list((tmp_path / "cells").glob("*.json"))) == 12

    def test_ablation_with_label_noise(self, data):
        """Test that noisy pseudo labels still train."""
        spec = _spec(ABLATION, settings=(1,), label_noise=0.2)
        result = run_ablation(spec, data)
        assert 0.0 <= result.per_seed_f1[1][0] <= 1.0

    def test_dispatch(self, data):
        """Test that run_experiment picks the harness by kind."""
        result = run_experiment(_spec(ABLATION, settings=(2,)), data)
        assert list(result.tables()) == ["ablation"]
        with pytest.raises(ValueError):
            run_experiment(_spec("unknown"), data)


DISJOINT_MIXES = {
    "subtitles": {"PER": 1.0, "ORG": 0.0, "LOC": 0.0},
    "un": {"PER": 0.0, "ORG": 1.0, "LOC": 0.0},
    "news": {"PER": 0.0, "ORG": 0.0, "LOC": 1.0},
}


def _target(n, seed, **spec):
    return gen_synthetic_corpus(SynthSpec(**spec), n, seed).target_gold


@pytest.fixture(scope="module")
def source_train():
    return gen_synthetic_corpus(SynthSpec(), 500, seed=100).source_gold


@pytest.mark.slow
class TestExperimentOutcomes:
    """Test the qualitative results the harnesses exist to show."""

    def test_reweighting_holds_up_under_label_noise(self, source_train):
        """Test that the reweighted loss matches cross entropy on noisy labels."""
        data = ExperimentData.from_pseudo(
            source_train,
            {"synthetic": _target(2000, seed=101)},
            {"synthetic-test": _target(300, seed=102)},
        )
        spec = ExperimentSpec(
            ABLATION, seeds=(0, 1, 2, 3, 4), settings=(1, 3), label_noise=0.2
        )
        result = run_ablation(spec, data)
        rw, ce = result.per_seed_f1[1], result.per_seed_f1[3]
        assert sum(r >= c for r, c in zip(rw, ce)) >= 3
        assert min(rw) > 0.5

    def test_each_domain_is_best_on_its_own_test_set(self, source_train):
        """Test that in-domain or combined data wins every test column."""
        pseudo, testsets = {}, {}
        for index, (domain, weights) in enumerate(DISJOINT_MIXES.items()):
            spec = dict(domain=domain, type_weights=weights)
            pseudo[domain] = _target(400, seed=200 + index, **spec)
            testsets[f"{domain}-test"] = _target(100, seed=300 + index, **spec)
        data = ExperimentData.from_pseudo(source_train, pseudo, testsets)

        result = run_domain_mix(ExperimentSpec(DOMAIN_MIX, seeds=(0,)), data)
        table = result.f1_table
        for domain in DISJOINT_MIXES:
            column = table.column(f"{domain}-test")
            best = table.rows[column.index(max(column))][0]
            assert best in (domain, ROW_COMBINED)

    def test_more_pseudo_labeled_data_helps(self, source_train):
        """Test that F1 grows from 100 to 4000 sentences and plateaus."""
        data = ExperimentData.from_pseudo(
            source_train,
            {"synthetic": _target(4000, seed=401)},
            {"synthetic-test": _target(300, seed=402)},
        )
        spec = ExperimentSpec(SIZE_SWEEP, seeds=(0, 1), sizes=(100, 4000))
        result = run_size_sweep(spec, data)
        assert result.points[-1].mean_f1 - result.points[0].mean_f1 > 0
        assert result.plateau in (100, 4000)
