"""Tests for lightalign.pipeline module."""

from __future__ import annotations

import json
import logging

import numpy as np
import pytest

from lightalign.config import AlignConfig
from lightalign.decode import SparseSim
from lightalign.kg import DatasetError, SplitSpec, load_dataset
from lightalign.pipeline import (
    AlignmentPipeline,
    Metrics,
    evaluate,
    evaluate_pairs_file,
    result_document,
    run,
    run_basic,
    run_iterative,
    run_literal,
    write_result,
)
from lightalign.synth import make_isomorphic_copy

FAST = AlignConfig(dim=256)


class TestEvaluate:
    """Tests for evaluate function."""

    def test_all_ranked_first(self):
        """Gold on the diagonal of an identity ranking is always rank 1."""
        metrics = evaluate(np.eye(3), [(0, 0), (1, 1), (2, 2)])

        assert (metrics.hits1, metrics.hits10, metrics.mrr) == (1.0, 1.0, 1.0)
        assert metrics.count == 3

    def test_always_second(self):
        """Rank 2 everywhere gives Hits@1 0, Hits@10 1 and MRR 0.5."""
        metrics = evaluate(np.array([[0.5, 1.0], [1.0, 0.5]]), [(0, 0), (1, 1)])

        assert metrics.hits1 == 0.0
        assert metrics.hits10 == 1.0
        assert metrics.mrr == pytest.approx(0.5)

    def test_hand_ranked(self):
        """Ranks 1, 2, 3, 11 and absent."""
        ones = np.ones(10)
        sim = SparseSim.from_rows(
            (5, 12),
            [
                np.array([0]),
                np.array([0, 1]),
                np.array([0, 1, 2]),
                np.arange(11),
                np.array([1]),
            ],
            [
                np.array([1.0]),
                np.array([0.9, 1.0]),
                np.array([0.9, 1.0, 1.0]),
                np.concatenate([[0.9], ones]),
                np.array([1.0]),
            ],
        )

        metrics = evaluate(sim, [(i, 0) for i in range(5)])

        assert metrics.hits1 == pytest.approx(0.2)
        assert metrics.hits10 == pytest.approx(0.6)
        assert metrics.mrr == pytest.approx((1 + 1 / 2 + 1 / 3 + 1 / 11) / 5)

    def test_ties_rank_lower_column_first(self):
        """With equal scores the lower column ranks ahead."""
        ranking = np.array([[1.0, 1.0]])

        assert evaluate(ranking, [(0, 0)]).hits1 == 1.0
        assert evaluate(ranking, [(0, 1)]).mrr == pytest.approx(0.5)

    def test_empty_pairs(self):
        """Nothing to evaluate is an error."""
        with pytest.raises(ValueError, match="empty"):
            evaluate(np.eye(2), [])

    def test_metrics_line(self):
        """The CLI summary line has four-decimal metrics."""
        line = Metrics(1.0, 1.0, 0.75, 4).line(1.5)

        assert line == "hits@1 1.0000 hits@10 1.0000 mrr 0.7500 seconds 1.50"


class TestEvaluatePairsFile:
    """Tests for evaluate_pairs_file function."""

    def test_scores_and_duplicates(self, tmp_path):
        """Duplicate predictions keep their best score; missing sources miss."""
        pred = tmp_path / "pairs.tsv"
        pred.write_text("0\t10\t0.9\n0\t11\t0.5\n0\t10\t0.2\n1\t11\n1\t10\t0.1\n")
        ref = tmp_path / "ref"
        ref.write_text("0\t10\n1\t11\n2\t12\n")

        metrics = evaluate_pairs_file(pred, ref)

        assert metrics.hits1 == pytest.approx(2 / 3)
        assert metrics.mrr == pytest.approx(2 / 3)
        assert metrics.count == 3

    def test_malformed_score(self, tmp_path):
        """A non-numeric score column is a data error."""
        pred = tmp_path / "pairs.tsv"
        pred.write_text("0\t10\thigh\n")
        ref = tmp_path / "ref"
        ref.write_text("0\t10\n")

        with pytest.raises(DatasetError, match="malformed score"):
            evaluate_pairs_file(pred, ref)

    def test_empty_reference(self, tmp_path):
        """A reference file without pairs is rejected."""
        pred = tmp_path / "pairs.tsv"
        pred.write_text("0\t10\n")
        ref = tmp_path / "ref"
        ref.write_text("\n")

        with pytest.raises(DatasetError, match="no reference pairs"):
            evaluate_pairs_file(pred, ref)


class TestRunBasic:
    """Tests for run_basic on synthetic and toy data."""

    def test_isomorphic_copy_is_solved(self):
        """A relabelled copy of a graph is aligned perfectly."""
        pair = make_isomorphic_copy(300, 1200, relations=20, seed=3)

        result = run_basic(pair, FAST)

        assert result.metrics.hits1 == pytest.approx(1.0)
        assert len(result.pairs) == len(pair.test_pairs)

    @pytest.mark.parametrize("reverse", [True, False])
    def test_reverse_triples_switch(self, reverse):
        """Labels are sized for the graphs the views are built from."""
        pair = make_isomorphic_copy(100, 400, relations=10, seed=1)
        pipeline = AlignmentPipeline(pair, FAST.replace(reverse_triples=reverse))

        result = pipeline.run_basic()

        views_src, views_tgt = pipeline.views()
        assert views_src.relation_count == (20 if reverse else 10)
        assert views_tgt.relation_count == views_src.relation_count
        assert result.metrics.count == len(pair.test_pairs)

    def test_zero_rounds_cannot_align_test_entities(self):
        """With k = 0 test entities carry no signal."""
        pair = make_isomorphic_copy(100, 400, relations=10, seed=1)

        result = run_basic(pair, FAST.replace(rounds=0))

        assert result.metrics.hits1 == 0.0
        assert result.metrics.mrr == 0.0
        assert result.pairs == []

    def test_greedy_decoder(self):
        """The greedy decoder skips Sinkhorn and still solves the easy case."""
        pair = make_isomorphic_copy(200, 800, relations=10, seed=2)

        result = run_basic(pair, FAST.replace(decoder="greedy"))

        assert result.metrics.hits1 >= 0.95
        assert "sinkhorn" not in result.timing

    def test_all_candidates(self, toy_pair):
        """candidates=all ranks over every entity and reports global indices."""
        result = run_basic(toy_pair, FAST.replace(candidates="all"))

        assert {s for s, _, _ in result.pairs} <= set(range(4))
        assert result.metrics.count == 2

    def test_needs_seeds(self, toy_pair):
        """Basic mode refuses a pair without seeds."""
        unseeded = type(toy_pair)(toy_pair.source, toy_pair.target, test_pairs=((1, 1),))

        with pytest.raises(DatasetError, match="seed"):
            run_basic(unseeded, FAST)

    def test_valid_metrics_reported(self, toy_dir):
        """A validation split gets its own metrics block."""
        pair = load_dataset(toy_dir, SplitSpec(ratio=0.5, valid_ratio=0.25))

        result = run_basic(pair, FAST)

        assert result.valid_metrics is not None
        assert result.valid_metrics.count == 1
        assert set(result_document(result)["valid"]) == {"hits1", "hits10", "mrr"}


class TestAcceptance:
    """End-to-end quality checks on larger synthetic pairs."""

    def test_noise_free_thousand_entities(self):
        """1000 entities, 4000 triples, 30% seeds: every test entity aligned."""
        pair = make_isomorphic_copy(1000, 4000, seed=0)

        result = run_basic(pair, AlignConfig())

        assert result.metrics.hits1 >= 0.999

    def test_noisy_copy(self):
        """20% rewired tails still align well; self-training does not hurt."""
        pair = make_isomorphic_copy(1000, 4000, noise=0.2, seed=0)
        cfg = AlignConfig(iterative_epochs=3)

        basic = run_basic(pair, cfg)
        iterative = run_iterative(pair, cfg)

        assert basic.metrics.hits1 >= 0.8
        assert iterative.metrics.hits1 >= basic.metrics.hits1

    def test_more_seeds_do_not_hurt(self):
        """On noise-free copies Hits@1 is non-decreasing in the seed ratio."""
        scores = []
        for ratio in (0.1, 0.2, 0.3):
            pair = make_isomorphic_copy(400, 1600, seed=5, ratio=ratio)
            scores.append(run_basic(pair, AlignConfig()).metrics.hits1)

        assert scores[0] <= scores[1] <= scores[2]


class TestRunIterative:
    """Tests for the self-training loop."""

    def test_zero_epochs_equals_basic(self):
        """iterative_epochs = 0 reproduces basic mode exactly."""
        pair = make_isomorphic_copy(150, 500, relations=8, noise=0.1, seed=4)
        cfg = FAST.replace(iterative_epochs=0)

        basic = run_basic(pair, cfg)
        iterative = run_iterative(pair, cfg)

        assert iterative.pairs == basic.pairs
        assert iterative.metrics == basic.metrics
        assert iterative.epochs == []

    def test_logs_each_epoch(self, caplog):
        """Every epoch logs how many pseudo-seeds it added."""
        pair = make_isomorphic_copy(150, 500, relations=8, noise=0.1, seed=4)

        with caplog.at_level(logging.INFO, logger="lightalign.pipeline"):
            result = run_iterative(pair, FAST.replace(iterative_epochs=2))

        assert any("Epoch 1/2" in r.getMessage() for r in caplog.records)
        assert 1 <= len(result.epochs) <= 2
        assert result_document(result)["epochs"] == result.epochs

    def test_pseudo_seeds_skip_anchored_entities(self, toy_pair):
        """Mutual pairs touching an anchored entity are not promoted."""
        pipeline = AlignmentPipeline(toy_pair, FAST)
        # candidate space is the test entities: sources 1, 3 and targets 1, 3
        plan = SparseSim.from_dense(np.eye(2))

        assert pipeline.pseudo_seeds(plan, [(1, 2)]) == [(3, 3)]
        assert pipeline.pseudo_seeds(plan, []) == [(1, 1), (3, 3)]


class TestRunLiteral:
    """Tests for literal (name-embedding) mode."""

    def test_embeddings_alone_align_toy(self, toy_dir, toy_pair):
        """Identical embeddings on matched entities give Hits@1 = 1 at k = 0."""
        cfg = FAST.replace(mode="literal", rounds=0, iterative_epochs=0)

        result = run_literal(toy_pair, cfg, toy_dir / "emb_1", toy_dir / "emb_2")

        assert result.metrics.hits1 == 1.0

    def test_self_training_from_embeddings(self, toy_dir, toy_pair):
        """Literal mode promotes mutual pairs and still aligns the toy."""
        cfg = FAST.replace(mode="literal", rounds=1)

        result = run(toy_pair, cfg, toy_dir / "emb_1", toy_dir / "emb_2")

        assert result.metrics.hits1 == 1.0
        assert result.epochs

    def test_identical_embeddings_are_chance(self, tmp_path):
        """When every entity has the same vector nothing beats the first candidate."""
        pair = make_isomorphic_copy(60, 200, relations=5, seed=2)
        for name, kg in (("emb_1", pair.source), ("emb_2", pair.target)):
            lines = [f"{kg.file_id(i)}\t0.5 0.5 0.5" for i in range(kg.entity_count)]
            (tmp_path / name).write_text("\n".join(lines) + "\n")
        cfg = FAST.replace(mode="literal", rounds=0, iterative_epochs=0)

        result = run_literal(pair, cfg, tmp_path / "emb_1", tmp_path / "emb_2")

        assert result.metrics.hits1 <= 1 / result.metrics.count

    def test_missing_embeddings(self, toy_pair):
        """Literal mode without embedding files is a data error."""
        with pytest.raises(DatasetError, match="embedding"):
            run(toy_pair, FAST.replace(mode="literal"))


class TestWriteResult:
    """Tests for write_result and result_document."""

    def test_writes_pairs_and_metrics(self, toy_pair, tmp_path):
        """pairs.tsv uses file IDs; metrics.json carries every key."""
        result = run_basic(toy_pair, FAST)

        write_result(result, tmp_path / "out", toy_pair)

        doc = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert {
            "hits1",
            "hits10",
            "mrr",
            "seconds_total",
            "seconds_per_stage",
            "config",
            "dataset_fingerprint",
        } <= set(doc)
        assert doc["config"]["dim"] == 256
        lines = (tmp_path / "out" / "pairs.tsv").read_text().splitlines()
        assert [line.rsplit("\t", 1)[0] for line in lines] == ["1\t11", "3\t13"]

    def test_runs_are_deterministic(self, tmp_path):
        """Same data and config give byte-identical pairs and equal metrics."""
        pair = make_isomorphic_copy(120, 400, relations=6, noise=0.1, seed=9)
        docs = []
        for name in ("a", "b"):
            write_result(run_basic(pair, FAST), tmp_path / name, pair)
            doc = json.loads((tmp_path / name / "metrics.json").read_text())
            doc.pop("seconds_total")
            doc.pop("seconds_per_stage")
            docs.append(doc)

        assert (tmp_path / "a" / "pairs.tsv").read_bytes() == (
            tmp_path / "b" / "pairs.tsv"
        ).read_bytes()
        assert docs[0] == docs[1]
