"""Interpretability tracer.

Random labels compress the seed pairs into d dimensions, so the propagated
vectors are not readable. On a small subgraph around one alignment decision we
can afford one-hot labels instead: dimension x of an entity's vector is then its
relevance to the x-th seed pair. The tracer reports, for the source entity, its
predicted counterpart and its gold counterpart, the strongest anchors at every
round and how many of them the source shares with each candidate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import yaml

from lightalign.kg import KgPair, KnowledgeGraph, Pair, Triple
from lightalign.propagate import LabelState, propagate_onehot_subgraph

logger = logging.getLogger(__name__)

DEFAULT_TOP_M = 5


class TraceError(ValueError):
    """Raised when a trace cannot be computed for the requested entities."""


@dataclass(frozen=True)
class SubgraphPair:
    """A KgPair restricted to a node set, plus local -> global index maps."""

    pair: KgPair
    source_nodes: np.ndarray
    target_nodes: np.ndarray

    def local_source(self, entity: int) -> Optional[int]:
        return _position(self.source_nodes, entity)

    def local_target(self, entity: int) -> Optional[int]:
        return _position(self.target_nodes, entity)


def _position(nodes: np.ndarray, entity: int) -> Optional[int]:
    i = int(np.searchsorted(nodes, entity))
    return i if i < len(nodes) and nodes[i] == entity else None


def _neighbourhood(kg: KnowledgeGraph, focus: Sequence[int], hops: int) -> np.ndarray:
    """Sorted entities within ``hops`` undirected steps of any focus entity."""
    n = kg.entity_count
    arr = kg.triple_array()
    adj = sp.csr_matrix(
        (np.ones(2 * len(arr)), (np.r_[arr[:, 0], arr[:, 2]], np.r_[arr[:, 2], arr[:, 0]])),
        shape=(n, n),
    )
    reached = np.zeros(n, dtype=bool)
    reached[list(focus)] = True
    frontier = reached.copy()
    for _ in range(hops):
        if not frontier.any():
            break
        nxt = (adj @ frontier.astype(np.float64)) > 0
        frontier = nxt & ~reached
        reached |= frontier
    return np.flatnonzero(reached)


def _induced(kg: KnowledgeGraph, nodes: np.ndarray) -> KnowledgeGraph:
    """Subgraph on ``nodes``; relations keep their indices."""
    local = {int(g): i for i, g in enumerate(nodes)}
    triples = tuple(
        Triple(local[h], r, local[t]) for h, r, t in kg.triples if h in local and t in local
    )
    return replace(
        kg,
        entity_count=len(nodes),
        triples=triples,
        entity_names=(
            tuple(kg.entity_names[i] for i in nodes) if kg.entity_names is not None else None
        ),
        entity_ids=tuple(kg.file_id(int(i)) for i in nodes),
    )


def _check_focus(kg: KnowledgeGraph, focus: Sequence[int], side: str) -> None:
    for e in focus:
        if not 0 <= e < kg.entity_count:
            raise TraceError(f"{side} entity index {e} out of range (0..{kg.entity_count - 1})")


def extract_subgraph(
    pair: KgPair,
    focus_source: Sequence[int],
    focus_target: Sequence[int],
    hops: int,
) -> SubgraphPair:
    """Induced subgraphs within ``hops`` of the focus entities of each graph.

    Only seed pairs with both members inside survive. Evaluation pairs are
    dropped.
    """
    if not focus_source and not focus_target:
        raise TraceError("at least one focus entity is required")
    if hops < 0:
        raise TraceError(f"hops must be >= 0, got {hops}")
    _check_focus(pair.source, focus_source, "source")
    _check_focus(pair.target, focus_target, "target")

    src_nodes = _neighbourhood(pair.source, focus_source, hops)
    tgt_nodes = _neighbourhood(pair.target, focus_target, hops)
    sub = SubgraphPair(
        pair=KgPair(
            source=_induced(pair.source, src_nodes),
            target=_induced(pair.target, tgt_nodes),
            id_convention=pair.id_convention,
        ),
        source_nodes=src_nodes,
        target_nodes=tgt_nodes,
    )
    seeds = []
    for s, t in pair.seed_pairs:
        ls, lt = sub.local_source(s), sub.local_target(t)
        if ls is not None and lt is not None:
            seeds.append((ls, lt))
    sub = replace(sub, pair=replace(sub.pair, seed_pairs=tuple(sorted(seeds))))
    logger.debug(
        "Subgraph at %d hops: %d/%d entities, %d seed pairs",
        hops,
        len(src_nodes),
        len(tgt_nodes),
        len(seeds),
    )
    return sub


@dataclass(frozen=True)
class AnchorScore:
    anchor: int  # position in the subgraph's seed list
    name: str
    score: float


@dataclass(frozen=True)
class FocalTrace:
    """Top anchors of one focal entity, per round 0..k."""

    role: str  # source, predicted or gold
    entity: int
    name: str
    rounds: tuple[tuple[AnchorScore, ...], ...]

    def anchors(self, round_: int) -> set[int]:
        return {a.anchor for a in self.rounds[round_]}


@dataclass(frozen=True)
class TraceReport:
    source: FocalTrace
    predicted: FocalTrace
    gold: FocalTrace
    hops: int
    top_m: int
    # shared top-m anchors with the source entity, per round 0..k
    shared_predicted: tuple[int, ...]
    shared_gold: tuple[int, ...]
    # the same over the union of rounds 1..k
    shared_predicted_union: int
    shared_gold_union: int

    @property
    def rounds(self) -> int:
        return len(self.source.rounds) - 1

    def to_dict(self) -> dict[str, Any]:
        def focal(f: FocalTrace) -> dict[str, Any]:
            return {
                "entity": f.entity,
                "name": f.name,
                "rounds": [
                    [{"anchor": a.name, "score": round(a.score, 6)} for a in entries]
                    for entries in f.rounds
                ],
            }

        return {
            "hops": self.hops,
            "rounds": self.rounds,
            "top_m": self.top_m,
            "source": focal(self.source),
            "predicted": focal(self.predicted),
            "gold": focal(self.gold),
            "shared_anchors": {
                "predicted": {
                    "per_round": list(self.shared_predicted),
                    "union": self.shared_predicted_union,
                },
                "gold": {"per_round": list(self.shared_gold), "union": self.shared_gold_union},
            },
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    def format_text(self) -> str:
        lines = [f"Trace over {self.hops}-hop subgraph, {self.rounds} rounds, top {self.top_m}"]
        for f in (self.source, self.predicted, self.gold):
            lines.append(f"[{f.role}] {f.name} ({f.entity})")
            for t, entries in enumerate(f.rounds):
                body = ", ".join(f"{a.name} {a.score:.4f}" for a in entries) or "-"
                lines.append(f"  round {t}: {body}")
        for role, per_round, union in (
            ("predicted", self.shared_predicted, self.shared_predicted_union),
            ("gold", self.shared_gold, self.shared_gold_union),
        ):
            rounds = " ".join(f"r{t}={c}" for t, c in enumerate(per_round))
            lines.append(f"shared anchors source/{role}: {rounds} union={union}")
        return "\n".join(lines)


def _anchor_names(pair: KgPair, seeds: Sequence[Pair]) -> list[str]:
    names = []
    for s, t in seeds:
        src, tgt = pair.source.entity_label(s), pair.target.entity_label(t)
        names.append(src if src == tgt else f"{src} / {tgt}")
    return names


def _ranked(row: np.ndarray, names: list[str], m: int) -> tuple[AnchorScore, ...]:
    nonzero = np.flatnonzero(row > 0)
    order = nonzero[np.lexsort((nonzero, -row[nonzero]))][:m]
    return tuple(AnchorScore(int(x), names[x], float(row[x])) for x in order)


def _focal(
    role: str, state: LabelState, local: int, entity: int, name: str, names: list[str], m: int
) -> FocalTrace:
    rounds = tuple(_ranked(r[local], names, m) for r in state.entity_rounds)
    return FocalTrace(role=role, entity=entity, name=name, rounds=rounds)


def trace_alignment(
    pair: KgPair,
    source_entity: int,
    predicted_target: int,
    gold_target: int,
    hops: Optional[int] = None,
    k: int = 2,
    m: int = DEFAULT_TOP_M,
    reverse_triples: bool = True,
    normalize: bool = True,
) -> TraceReport:
    """Explain one alignment decision with one-hot propagation on a subgraph.

    ``hops`` defaults to ``k``: labels cannot travel farther than the round count.

    Raises:
        TraceError: an entity is out of range or no seed pair lies in the subgraph.
    """
    if k < 1:
        raise TraceError(f"rounds must be >= 1, got {k}")
    if m < 1:
        raise TraceError(f"top-m must be >= 1, got {m}")
    hops = k if hops is None else hops

    sub = extract_subgraph(pair, [source_entity], [predicted_target, gold_target], hops)
    if not sub.pair.seed_pairs:
        raise TraceError(
            f"no seed pair lies within {hops} hops of the focus entities; try a larger --hops"
        )
    graphs = sub.pair.with_reverse_triples() if reverse_triples else sub.pair
    seeds = list(sub.pair.seed_pairs)
    names = _anchor_names(sub.pair, seeds)
    src_state = propagate_onehot_subgraph(graphs.source, [s for s, _ in seeds], k, normalize)
    tgt_state = propagate_onehot_subgraph(graphs.target, [t for _, t in seeds], k, normalize)

    def local(nodes_pos: Optional[int], entity: int) -> int:
        if nodes_pos is None:
            raise TraceError(f"entity {entity} fell outside the subgraph; try a larger --hops")
        return nodes_pos

    src = _focal(
        "source",
        src_state,
        local(sub.local_source(source_entity), source_entity),
        source_entity,
        pair.source.entity_label(source_entity),
        names,
        m,
    )
    pred, gold = (
        _focal(
            role,
            tgt_state,
            local(sub.local_target(entity), entity),
            entity,
            pair.target.entity_label(entity),
            names,
            m,
        )
        for role, entity in (("predicted", predicted_target), ("gold", gold_target))
    )

    def shared(other: FocalTrace) -> tuple[tuple[int, ...], int]:
        per_round = tuple(len(src.anchors(t) & other.anchors(t)) for t in range(k + 1))
        union_src = set().union(*(src.anchors(t) for t in range(1, k + 1)))
        union_other = set().union(*(other.anchors(t) for t in range(1, k + 1)))
        return per_round, len(union_src & union_other)

    shared_pred, union_pred = shared(pred)
    shared_gold, union_gold = shared(gold)
    return TraceReport(
        source=src,
        predicted=pred,
        gold=gold,
        hops=hops,
        top_m=m,
        shared_predicted=shared_pred,
        shared_gold=shared_gold,
        shared_predicted_union=union_pred,
        shared_gold_union=union_gold,
    )
