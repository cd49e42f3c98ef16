"""
Tests for xner_transfer.projection module.
"""

import json

import pytest

from xner_transfer.aligners import (
    AlignedSpan,
    Aligner,
    AlignmentResult,
    LexicalAligner,
)
from xner_transfer.corpus import (
    LabeledSentence,
    ParallelPair,
    SynthSpec,
    gen_synthetic_corpus,
)
from xner_transfer.errors import ProjectionInterrupted, TransportError
from xner_transfer.lexicon import Lexicon
from xner_transfer.projection import (
    COUNTS_FILE,
    PROVENANCE_FILE,
    STATS_FILE,
    DiscardReason,
    ProjectionConfig,
    ProjectionOutcome,
    ProjectionStats,
    PseudoLabeledSentence,
    balance_empty_ratio,
    build_pseudo_dataset,
    by_domain,
    format_count_table,
    project_sentence,
    read_pseudo_dataset,
    write_pseudo_dataset,
)


class StubAligner(Aligner):
    """Answers each entity surface with fixed (start, end) spans."""

    name = "stub"

    def __init__(self, answers, fail_on=()):
        self.answers = answers
        self.fail_on = set(fail_on)
        self.calls = []

    def align(self, query):
        self.calls.append(query.entity)
        if query.entity in self.fail_on:
            raise TransportError("aligner down")
        spans = self.answers.get(query.entity, [])
        return AlignmentResult(tuple(AlignedSpan(s, e) for s, e in spans))


class OracleTeacher:
    """Tags each source sentence with its gold labels."""

    def __init__(self, gold):
        self.gold = {sentence.tokens: sentence for sentence in gold}

    def predict(self, tokens):
        return self.gold.get(tuple(tokens), LabeledSentence.unlabeled(tokens))


def _sentence(text):
    """ "Ann/B-PER Lee/I-PER left/O" -> LabeledSentence."""
    tokens, tags = zip(*(item.split("/") for item in text.split()))
    return LabeledSentence(tokens, tags)


DISCARD = DiscardReason

# (source, target, aligner answers, expected target tags or discard reason)
FILTER_CASES = [
    pytest.param(
        "Cologne/B-LOC is/O big/O",
        "Köln ist groß",
        {"Cologne": [(0, 1)]},
        "B-LOC O O",
        id="one-entity-one-span",
    ),
    pytest.param(
        "Ann/B-PER Lee/I-PER lives/O here/O",
        "hier wohnt Ann Lee",
        {"Ann Lee": [(2, 4)]},
        "O O B-PER I-PER",
        id="multi-token-span",
    ),
    pytest.param(
        "Ann/B-PER met/O Bob/B-PER",
        "Ann traf Bob",
        {"Ann": [(0, 1)]},
        DISCARD.ALIGNMENT_FAILURE,
        id="second-entity-unaligned",
    ),
    pytest.param(
        "Cologne/B-LOC and/O Cologne/B-LOC",
        "Köln und Koeln",
        {"Cologne": [(0, 1), (2, 3)]},
        DISCARD.INCONSISTENT_MULTI_MAP,
        id="multi-span-different-surfaces",
    ),
    pytest.param(
        "Cologne/B-LOC is/O Cologne/B-LOC",
        "Köln ist köln",
        {"Cologne": [(0, 1), (2, 3)]},
        "B-LOC O B-LOC",
        id="multi-span-same-surface-casefolded",
    ),
    pytest.param(
        "Acme/B-ORG Bank/I-ORG hired/O Ann/B-PER",
        "Acme Bank stellte Ann",
        {"Acme Bank": [(0, 2)], "Ann": [(1, 2)]},
        DISCARD.OVERLAP,
        id="overlapping-entities",
    ),
    pytest.param(
        "Paris/B-LOC France/B-LOC",
        "Paris France",
        {"Paris": [(0, 1)], "France": [(1, 2)]},
        "B-LOC B-LOC",
        id="adjacent-entities-same-type",
    ),
    pytest.param(
        "it/O rains/O",
        "es regnet",
        {},
        "O O",
        id="no-entities",
    ),
    pytest.param(
        "Jordan/B-PER visited/O Jordan/B-LOC",
        "Jordan besuchte Jordanien",
        {"Jordan": [(0, 1)]},
        DISCARD.OVERLAP,
        id="two-types-same-span",
    ),
    pytest.param(
        "Ann/B-PER and/O Bob/B-PER and/O Cologne/B-LOC",
        "Ann und Koeln und Köln",
        {"Bob": [], "Cologne": [(2, 3), (4, 5)], "Ann": [(0, 1)]},
        DISCARD.ALIGNMENT_FAILURE,
        id="failure-reported-before-inconsistency",
    ),
    pytest.param(
        "Cologne/B-LOC and/O Ann/B-PER",
        "Köln und Koeln",
        {"Cologne": [(0, 1), (2, 3)], "Ann": [(0, 1)]},
        DISCARD.INCONSISTENT_MULTI_MAP,
        id="inconsistency-reported-before-overlap",
    ),
    pytest.param(
        "Ann/B-PER saw/O Ann/B-PER",
        "Ann sah Ann",
        {"Ann": [(0, 1), (2, 3)]},
        "B-PER O B-PER",
        id="repeated-mention-not-an-overlap",
    ),
    pytest.param(
        "Rome/B-LOC and/O Roma/B-ORG",
        "Rom und Rom",
        {"Rome": [(0, 1), (2, 3)], "Roma": [(2, 3)]},
        DISCARD.OVERLAP,
        id="multi-span-hits-other-entity",
    ),
]


class TestProjectSentence:
    """Test the per-sentence projection filters."""

    @pytest.mark.parametrize("source, target, answers, expected", FILTER_CASES)
    def test_filters(self, source, target, answers, expected):
        """Test each filter fixture."""
        result = project_sentence(
            _sentence(source), target.split(), StubAligner(answers)
        )
        if isinstance(expected, DiscardReason):
            assert result == expected
        else:
            assert isinstance(result, PseudoLabeledSentence)
            assert result.sentence.tokens == tuple(target.split())
            assert " ".join(result.sentence.tags) == expected

    def test_provenance(self):
        """Test that every source entity records its aligned spans."""
        result = project_sentence(
            _sentence("Ann/B-PER saw/O Rome/B-LOC"),
            "Ann sah Rom".split(),
            StubAligner({"Ann": [(0, 1)], "Rome": [(2, 3)]}),
            pair_id=7,
            domain="news",
        )
        assert result.pair_id == 7 and result.domain == "news"
        assert [(p.surface, p.etype, p.target_spans) for p in result.provenance] == [
            ("Ann", "PER", ((0, 1, 1.0),)),
            ("Rome", "LOC", ((2, 3, 1.0),)),
        ]

    def test_one_query_per_entity(self):
        """Test that the aligner is asked once per source entity."""
        aligner = StubAligner({"Ann": [(0, 1), (2, 3)]})
        source = _sentence("Ann/B-PER saw/O Ann/B-PER")
        project_sentence(source, "a b c".split(), aligner)
        assert aligner.calls == ["Ann", "Ann"]

    def test_serialisation(self):
        """Test the provenance dict form."""
        result = project_sentence(
            _sentence("Ann/B-PER left/O"),
            "Ann ging".split(),
            StubAligner({"Ann": [(0, 1)]}),
        )
        assert PseudoLabeledSentence.from_dict(result.to_dict()) == result


def _synthetic(n=200, seed=0):
    corpus = gen_synthetic_corpus(SynthSpec(), n, seed)
    return corpus, OracleTeacher(corpus.source_gold)


class TestBuildPseudoDataset:
    """Test dataset construction over many pairs."""

    def test_empty_input(self):
        """Test that no pairs give no data and zero stats."""
        dataset, stats = build_pseudo_dataset([], OracleTeacher([]), StubAligner({}))
        assert dataset == []
        assert stats.processed == 0 and stats.kept == 0
        assert sum(stats.discarded.values()) == 0

    def test_synthetic_corpus(self):
        """Test lexical projection against the generator's gold tags."""
        corpus, teacher = _synthetic()
        aligner = LexicalAligner(corpus.lexicon)
        dataset, stats = build_pseudo_dataset(corpus.pairs, teacher, aligner)
        assert stats.processed == 200
        assert stats.kept >= 180
        gold = corpus.target_gold
        exact = sum(item.sentence == gold[item.pair_id] for item in dataset)
        assert exact >= 0.95 * len(dataset)

    def test_generating_lexicon_is_exact(self):
        """Test that without reordering every kept sentence matches gold."""
        corpus = gen_synthetic_corpus(SynthSpec(reorder_prob=0.0), 500, seed=9)
        teacher = OracleTeacher(corpus.source_gold)
        dataset, stats = build_pseudo_dataset(
            corpus.pairs, teacher, LexicalAligner(corpus.lexicon)
        )
        assert stats.processed == 500
        assert stats.kept >= 495
        wrong = [
            item.pair_id
            for item in dataset
            if item.sentence != corpus.target_gold[item.pair_id]
        ]
        assert wrong == []

    def test_accounting(self):
        """Test that kept plus discards equals the pairs processed."""
        corpus, teacher = _synthetic(60, seed=2)
        aligner = LexicalAligner(Lexicon())
        dataset, stats = build_pseudo_dataset(corpus.pairs, teacher, aligner)
        assert stats.kept == len(dataset)
        assert stats.kept + sum(stats.discarded.values()) == 60
        assert stats.discarded[DiscardReason.ALIGNMENT_FAILURE.value] > 0

    def test_suppress_misc(self):
        """Test that MISC entities vanish when suppression is on."""
        source = _sentence("Ann/B-PER likes/O Jazz/B-MISC")
        pair = ParallelPair(source.tokens, ("Ann", "mag", "Jazz"), "news", 0)
        teacher = OracleTeacher([source])
        aligner = StubAligner({"Ann": [(0, 1)], "Jazz": [(2, 3)]})

        kept, _ = build_pseudo_dataset([pair], teacher, aligner)
        assert kept[0].sentence.tags == ("B-PER", "O", "B-MISC")

        cfg = ProjectionConfig(suppress_misc=True)
        kept, _ = build_pseudo_dataset([pair], teacher, aligner, cfg)
        assert kept[0].sentence.tags == ("B-PER", "O", "O")
        assert aligner.calls[-1] == "Ann"

    def test_workers_do_not_change_the_result(self):
        """Test that a thread pool gives the same dataset in input order."""
        corpus, teacher = _synthetic(40, seed=3)
        aligner = LexicalAligner(corpus.lexicon)
        serial = build_pseudo_dataset(corpus.pairs, teacher, aligner)
        threaded = build_pseudo_dataset(
            corpus.pairs, teacher, aligner, ProjectionConfig(workers=4)
        )
        assert serial[0] == threaded[0]
        assert serial[1].to_dict() == threaded[1].to_dict()

    def test_interrupt_and_resume(self):
        """Test that a failed aligner leaves a cursor to resume from."""
        sources = [_sentence(f"W{i}/B-PER x/O") for i in range(4)]
        pairs = [
            ParallelPair(s.tokens, s.tokens, "news", i)
            for i, s in enumerate(sources)
        ]
        teacher = OracleTeacher(sources)
        answers = {f"W{i}": [(0, 1)] for i in range(4)}

        with pytest.raises(ProjectionInterrupted) as exc:
            build_pseudo_dataset(
                pairs, teacher, StubAligner(answers, fail_on={"W2"})
            )
        assert exc.value.cursor == 2
        assert len(exc.value.outcomes) == 2
        assert isinstance(exc.value.cause, TransportError)

        # Outcomes survive the cursor file's JSON round trip.
        saved = json.loads(json.dumps([o.to_dict() for o in exc.value.outcomes]))
        outcomes = [ProjectionOutcome.from_dict(o) for o in saved]
        resumed = build_pseudo_dataset(
            pairs, teacher, StubAligner(answers), start=2, outcomes=outcomes
        )
        full = build_pseudo_dataset(pairs, teacher, StubAligner(answers))
        assert resumed[0] == full[0]
        assert resumed[1].to_dict() == full[1].to_dict()

    def test_resume_needs_matching_outcomes(self):
        """Test that start and outcomes must agree."""
        with pytest.raises(ValueError):
            build_pseudo_dataset([], OracleTeacher([]), StubAligner({}), start=1)


def _items(domain, n_full, n_empty):
    full = [
        PseudoLabeledSentence(LabeledSentence(("Ann",), ("B-PER",)), i, domain)
        for i in range(n_full)
    ]
    empty = [
        PseudoLabeledSentence(LabeledSentence(("x",), ("O",)), n_full + i, domain)
        for i in range(n_empty)
    ]
    return full + empty


class TestBalanceEmptyRatio:
    """Test empty-sentence subsampling."""

    def test_limit(self):
        """Test 50 full + 50 empty at ratio 0.2 keeps 12 empties."""
        balanced = balance_empty_ratio({"news": _items("news", 50, 50)}, 0.2, seed=0)
        items = balanced["news"]
        empties = [i for i in items if i.is_empty]
        assert len(items) - len(empties) == 50
        assert len(empties) == 12
        assert len(empties) / len(items) <= 0.2
        assert [i.pair_id for i in items] == sorted(i.pair_id for i in items)

    def test_no_empties(self):
        """Test that a domain without empties is unchanged."""
        items = _items("un", 5, 0)
        assert balance_empty_ratio({"un": items}, 0.3, seed=0) == {"un": items}

    def test_ratio_zero(self):
        """Test that ratio 0 removes every empty sentence."""
        balanced = balance_empty_ratio({"un": _items("un", 5, 5)}, 0.0, seed=0)
        assert not any(i.is_empty for i in balanced["un"])

    def test_deterministic_per_domain(self):
        """Test that each domain's draw depends on the seed only."""
        data = {"un": _items("un", 10, 30), "news": _items("news", 10, 30)}
        a = balance_empty_ratio(data, 0.3, seed=1)
        b = balance_empty_ratio({"un": data["un"]}, 0.3, seed=1)
        assert a["un"] == b["un"]

    def test_invalid_ratio(self):
        """Test that the ratio must be below one."""
        with pytest.raises(ValueError):
            balance_empty_ratio({}, 1.0, seed=0)


class TestStatsAndFiles:
    """Test statistics and persistence."""

    def test_merge(self):
        """Test that merged stats add up."""
        a, b = ProjectionStats(), ProjectionStats()
        a.record_keep(_items("news", 1, 0)[0])
        b.record_keep(_items("news", 0, 1)[0])
        b.record_discard(DiscardReason.OVERLAP)
        a.merge(b)
        assert (a.kept, a.empty, a.processed) == (2, 1, 3)
        assert a.entity_counts == {"news": {"PER": 1}}

    def test_count_table(self):
        """Test the type by domain table."""
        stats = ProjectionStats()
        for item in _items("news", 2, 0) + _items("un", 1, 0):
            stats.record_keep(item)
        assert format_count_table(stats, ["PER", "LOC"]) == (
            "domain,PER,LOC,All\nnews,2,0,2\nun,1,0,1\n"
        )

    def test_write_and_read(self, tmp_path):
        """Test the on-disk layout of a pseudo-labeled dataset."""
        corpus, teacher = _synthetic(30, seed=4)
        dataset, stats = build_pseudo_dataset(
            corpus.pairs, teacher, LexicalAligner(corpus.lexicon)
        )
        write_pseudo_dataset(tmp_path, dataset, stats, ["PER", "ORG", "LOC"])
        for name in ("synthetic.conll", PROVENANCE_FILE, STATS_FILE, COUNTS_FILE):
            assert (tmp_path / name).exists()
        loaded, loaded_stats = read_pseudo_dataset(tmp_path)
        assert loaded == dataset
        assert loaded_stats.to_dict() == stats.to_dict()
        assert set(by_domain(loaded)) == {"synthetic"}
