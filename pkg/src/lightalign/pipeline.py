"""End-to-end alignment: labels -> propagation -> retrieval -> decoding -> metrics.

Three modes share one pipeline:

- basic: random orthogonal labels on the seed pairs, one decoding pass
- iterative: basic, then mutual-argmax pairs of the transport plan become
  pseudo-seeds with fresh labels and everything is re-run, for a fixed number
  of epochs or until no new pair appears
- literal: entity labels from name embeddings, no seeds; self-trains the same
  way when ``iterative_epochs`` > 0
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from lightalign.config import AlignConfig
from lightalign.decode import (
    MUTUAL_ARGMAX,
    Ranking,
    SparseSim,
    extract_alignment,
    greedy_nearest,
    sinkhorn_sparse,
    topk_retrieve,
)
from lightalign.kg import (
    DatasetError,
    KgPair,
    Pair,
    dataset_fingerprint,
    read_scored_pairs,
    save_pairs,
)
from lightalign.labels import (
    LabelSet,
    init_literal,
    init_random_orthogonal,
    share_anchor_rows,
)
from lightalign.propagate import TripleViews, build_views, propagate

logger = logging.getLogger(__name__)

ScoredPair = tuple[int, int, float]


@dataclass(frozen=True)
class Metrics:
    """Hits@1, Hits@10 and MRR over ``count`` evaluation pairs."""

    hits1: float
    hits10: float
    mrr: float
    count: int

    def to_dict(self) -> dict[str, float]:
        return {"hits1": self.hits1, "hits10": self.hits10, "mrr": self.mrr}

    def line(self, seconds: float = 0.0) -> str:
        """The one-line summary printed by the CLI."""
        return (
            f"hits@1 {self.hits1:.4f} hits@10 {self.hits10:.4f} "
            f"mrr {self.mrr:.4f} seconds {seconds:.2f}"
        )


@dataclass
class AlignmentResult:
    pairs: list[ScoredPair]
    metrics: Metrics
    config: AlignConfig
    fingerprint: str
    timing: dict[str, float] = field(default_factory=dict)
    valid_metrics: Optional[Metrics] = None
    # new pseudo-seeds per self-training epoch
    epochs: list[int] = field(default_factory=list)

    @property
    def seconds_total(self) -> float:
        return float(sum(self.timing.values()))


def _gold_rank(cols: np.ndarray, vals: np.ndarray, gold: int) -> float:
    hit = np.flatnonzero(cols == gold)
    if not len(hit):
        return float("inf")
    score = vals[hit[0]]
    ahead = np.count_nonzero(vals > score) + np.count_nonzero((vals == score) & (cols < gold))
    return float(1 + ahead)


def evaluate(ranking: Ranking, test_pairs: Sequence[Pair]) -> Metrics:
    """Rank every gold target among its source's candidates.

    Candidates are ordered by descending score, ties by ascending column. A gold
    target with no stored entry counts as a miss (rank infinity).
    """
    if not test_pairs:
        raise ValueError("cannot evaluate an empty set of pairs")
    ranks = np.empty(len(test_pairs))
    if isinstance(ranking, SparseSim):
        m = ranking.matrix
        for i, (s, t) in enumerate(test_pairs):
            start, end = m.indptr[s], m.indptr[s + 1]
            ranks[i] = _gold_rank(m.indices[start:end], m.data[start:end], t)
    else:
        dense = np.asarray(ranking, dtype=np.float64)
        cols = np.arange(dense.shape[1])
        for i, (s, t) in enumerate(test_pairs):
            ranks[i] = _gold_rank(cols, dense[s], t)
    return Metrics(
        hits1=float(np.mean(ranks <= 1)),
        hits10=float(np.mean(ranks <= 10)),
        mrr=float(np.mean(1.0 / ranks)),
        count=len(test_pairs),
    )


def evaluate_pairs_file(pairs_path: Path | str, reference_path: Path | str) -> Metrics:
    """Score a predictions file against a reference file, both in file IDs.

    A source may appear on several prediction lines; its candidates are ranked
    by the optional score column (missing scores count as 1.0).
    """
    predictions = read_scored_pairs(pairs_path)
    reference = [(s, t) for s, t, _ in read_scored_pairs(reference_path)]
    if not reference:
        raise DatasetError(f"{reference_path}: no reference pairs")

    src_index: dict[int, int] = {}
    tgt_index: dict[int, int] = {}
    for s, t, _ in predictions:
        src_index.setdefault(s, len(src_index))
        tgt_index.setdefault(t, len(tgt_index))
    for s, t in reference:
        src_index.setdefault(s, len(src_index))
        tgt_index.setdefault(t, len(tgt_index))

    rows: list[dict[int, float]] = [{} for _ in range(len(src_index))]
    for s, t, score in predictions:
        row = rows[src_index[s]]
        col = tgt_index[t]
        row[col] = max(score, row.get(col, -np.inf))
    sim = SparseSim.from_rows(
        (len(src_index), len(tgt_index)),
        [np.array(sorted(r), dtype=np.int64) for r in rows],
        [np.array([r[c] for c in sorted(r)]) for r in rows],
    )
    return evaluate(sim, [(src_index[s], tgt_index[t]) for s, t in reference])


class _CandidateSpace:
    """Source/target entity subsets that decoding ranks over."""

    def __init__(self, pair: KgPair, candidates: str) -> None:
        if candidates == "all":
            self.src = np.arange(pair.source.entity_count)
            self.tgt = np.arange(pair.target.entity_count)
        else:
            evaluated = pair.test_pairs + pair.valid_pairs
            self.src = np.array(sorted({s for s, _ in evaluated}), dtype=np.int64)
            self.tgt = np.array(sorted({t for _, t in evaluated}), dtype=np.int64)
        self._src_pos = {int(e): i for i, e in enumerate(self.src)}
        self._tgt_pos = {int(e): i for i, e in enumerate(self.tgt)}

    def local(self, pairs: Sequence[Pair]) -> list[Pair]:
        return [(self._src_pos[s], self._tgt_pos[t]) for s, t in pairs]

    def to_global(self, pairs: Sequence[ScoredPair]) -> list[ScoredPair]:
        return [(int(self.src[s]), int(self.tgt[t]), v) for s, t, v in pairs]


class AlignmentPipeline:
    """One alignment run over a KgPair. Single use; not thread-safe while running."""

    def __init__(self, pair: KgPair, config: AlignConfig) -> None:
        self.pair = pair
        self.config = config
        self.timing: dict[str, float] = {}
        self.graphs = pair.with_reverse_triples() if config.reverse_triples else pair
        self._views: Optional[tuple[TripleViews, TripleViews]] = None
        self._space = _CandidateSpace(pair, config.candidates)

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timing[name] = self.timing.get(name, 0.0) + elapsed
            logger.debug("Stage %s took %.3fs", name, elapsed)

    def views(self) -> tuple[TripleViews, TripleViews]:
        if self._views is None:
            with self._stage("views"):
                self._views = (build_views(self.graphs.source), build_views(self.graphs.target))
        return self._views

    def decode(self, labels: LabelSet) -> SparseSim:
        """Propagate ``labels`` and return the decoded ranking over the candidate space."""
        cfg = self.config
        views_src, views_tgt = self.views()
        with self._stage("propagate"):
            state_src, state_tgt = propagate(
                views_src,
                views_tgt,
                labels,
                cfg.rounds,
                normalize=cfg.per_round_l2,
                three_view=cfg.three_view,
            )
        with self._stage("retrieve"):
            sim = topk_retrieve(
                state_src.concatenated[self._space.src],
                state_tgt.concatenated[self._space.tgt],
                cfg.topk,
                backend=cfg.backend,
                threads=cfg.threads,
            )
        if cfg.decoder == "greedy":
            return sim
        with self._stage("sinkhorn"):
            return sinkhorn_sparse(sim, cfg.tau, cfg.sinkhorn_q)

    def pseudo_seeds(self, plan: SparseSim, anchors: Sequence[Pair]) -> list[Pair]:
        """Mutual-argmax pairs of the plan whose entities are not yet anchored.

        Higher plan scores are taken first.
        """
        used_src = {s for s, _ in anchors}
        used_tgt = {t for _, t in anchors}
        mutual = sorted(
            self._space.to_global(extract_alignment(plan, MUTUAL_ARGMAX)),
            key=lambda p: (-p[2], p[0], p[1]),
        )
        fresh: list[Pair] = []
        for s, t, _ in mutual:
            if s in used_src or t in used_tgt:
                continue
            fresh.append((s, t))
            used_src.add(s)
            used_tgt.add(t)
        return fresh

    def _self_train(
        self,
        labels_for: Callable[[Sequence[Pair]], LabelSet],
        anchors: list[Pair],
        epochs: int,
    ) -> tuple[SparseSim, list[int]]:
        """Decode, promote mutual pairs to anchors, repeat; returns the last ranking."""
        history: list[int] = []
        plan = self.decode(labels_for(anchors))
        for epoch in range(1, epochs + 1):
            fresh = self.pseudo_seeds(plan, anchors)
            history.append(len(fresh))
            logger.info(
                "Epoch %d/%d: %d new pseudo-seeds (%d anchors)",
                epoch,
                epochs,
                len(fresh),
                len(anchors) + len(fresh),
            )
            if not fresh:
                break
            anchors = anchors + fresh
            plan = self.decode(labels_for(anchors))
        return plan, history

    def _result(self, plan: SparseSim, epochs: list[int]) -> AlignmentResult:
        with self._stage("evaluate"):
            pairs = self._space.to_global(greedy_nearest(plan))
            metrics = evaluate(plan, self._space.local(self.pair.test_pairs))
            valid = (
                evaluate(plan, self._space.local(self.pair.valid_pairs))
                if self.pair.valid_pairs
                else None
            )
        logger.info(
            "Aligned %d sources: hits@1 %.4f hits@10 %.4f mrr %.4f",
            len(pairs),
            metrics.hits1,
            metrics.hits10,
            metrics.mrr,
        )
        return AlignmentResult(
            pairs=pairs,
            metrics=metrics,
            config=self.config,
            fingerprint=dataset_fingerprint(self.pair),
            timing=dict(self.timing),
            valid_metrics=valid,
            epochs=epochs,
        )

    def _require_seeds(self) -> None:
        if not self.pair.seed_pairs:
            raise DatasetError("this mode needs at least one seed pair")
        if not self.pair.test_pairs:
            raise DatasetError("no test pairs to evaluate")

    def run_basic(self) -> AlignmentResult:
        self._require_seeds()
        return self._run_seeded(0)

    def run_iterative(self) -> AlignmentResult:
        self._require_seeds()
        return self._run_seeded(self.config.iterative_epochs)

    def _run_seeded(self, epochs: int) -> AlignmentResult:
        cfg = self.config

        def labels_for(anchors: Sequence[Pair]) -> LabelSet:
            with self._stage("labels"):
                return init_random_orthogonal(self.graphs, cfg.dim, cfg.seed, anchors)

        plan, history = self._self_train(labels_for, list(self.pair.seed_pairs), epochs)
        return self._result(plan, history)

    def run_literal(self, emb_src: Path | str, emb_tgt: Path | str) -> AlignmentResult:
        if not self.pair.test_pairs:
            raise DatasetError("no test pairs to evaluate")
        with self._stage("labels"):
            base = init_literal(self.graphs, emb_src, emb_tgt)

        def labels_for(anchors: Sequence[Pair]) -> LabelSet:
            return share_anchor_rows(base, anchors)

        plan, history = self._self_train(labels_for, [], self.config.iterative_epochs)
        return self._result(plan, history)


def run_basic(pair: KgPair, config: AlignConfig) -> AlignmentResult:
    return AlignmentPipeline(pair, config).run_basic()


def run_iterative(pair: KgPair, config: AlignConfig) -> AlignmentResult:
    return AlignmentPipeline(pair, config).run_iterative()


def run_literal(
    pair: KgPair, config: AlignConfig, emb_src: Path | str, emb_tgt: Path | str
) -> AlignmentResult:
    return AlignmentPipeline(pair, config).run_literal(emb_src, emb_tgt)


def run(
    pair: KgPair,
    config: AlignConfig,
    emb_src: Optional[Path | str] = None,
    emb_tgt: Optional[Path | str] = None,
) -> AlignmentResult:
    """Dispatch on ``config.mode``."""
    if config.mode == "literal":
        if emb_src is None or emb_tgt is None:
            raise DatasetError("literal mode needs source and target embedding files")
        return run_literal(pair, config, emb_src, emb_tgt)
    if config.mode == "iterative":
        return run_iterative(pair, config)
    return run_basic(pair, config)


def result_document(result: AlignmentResult) -> dict:
    """The metrics.json payload."""
    doc = {
        **result.metrics.to_dict(),
        "seconds_total": round(result.seconds_total, 6),
        "seconds_per_stage": {k: round(v, 6) for k, v in result.timing.items()},
        "config": result.config.to_dict(),
        "dataset_fingerprint": result.fingerprint,
    }
    if result.valid_metrics is not None:
        doc["valid"] = result.valid_metrics.to_dict()
    if result.epochs:
        doc["epochs"] = result.epochs
    return doc


def write_result(result: AlignmentResult, out_dir: Path | str, pair: KgPair) -> None:
    """Write ``pairs.tsv`` and ``metrics.json`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_pairs(out / "pairs.tsv", result.pairs, pair)
    with open(out / "metrics.json", "w", encoding="utf-8") as f:
        json.dump(result_document(result), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Wrote %d pairs and metrics to %s", len(result.pairs), out)
