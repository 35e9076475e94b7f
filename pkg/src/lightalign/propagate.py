"""Three-view label propagation.

The KG adjacency tensor (entity x entity x relation) is never built. Instead it
is summed along each axis into three sparse views:

- side  (|E| x |E|): head -> tail
- front (|E| x |R|): head -> relation
- top   (|R| x |E|): relation -> tail

and labels move through them each round::

    E(t) = side @ E(t-1) + front @ R(t-1)
    R(t) = top @ E(t-1)

Every view is L1 row-normalized (D^-1 A), and by default every round's rows
are L2-normalized. The output of an entity is the concatenation of its rows
for rounds 0..k.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from lightalign.kg import KnowledgeGraph
from lightalign.labels import LabelSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TripleViews:
    """The side, front and top views of one KG as CSR matrices."""

    side: sp.csr_matrix
    front: sp.csr_matrix
    top: sp.csr_matrix

    @property
    def entity_count(self) -> int:
        return int(self.side.shape[0])

    @property
    def relation_count(self) -> int:
        return int(self.top.shape[0])


@dataclass(frozen=True)
class LabelState:
    """Per-round entity and relation labels of one KG, plus their concatenation."""

    entity_rounds: tuple[np.ndarray, ...]
    relation_rounds: tuple[np.ndarray, ...]
    concatenated: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "concatenated", np.hstack(self.entity_rounds))

    @property
    def rounds(self) -> int:
        return len(self.entity_rounds) - 1


def _csr(rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
    m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=shape)
    m.sum_duplicates()
    m.sort_indices()
    return m


def row_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    """L1-normalize each row; empty rows stay empty."""
    sums = np.asarray(m.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    out = m.copy()
    out.data = out.data * np.repeat(inv, np.diff(out.indptr))
    return out


def build_views(kg: KnowledgeGraph, normalize: bool = True) -> TripleViews:
    """Compress a KG into its three views.

    Duplicate triples count once; distinct triples sharing a (head, tail) or
    (head, relation) or (relation, tail) key accumulate before normalization.
    """
    triples = kg.deduplicated()
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    n_e, n_r = kg.entity_count, kg.relation_count
    side = _csr(h, t, (n_e, n_e))
    front = _csr(h, r, (n_e, n_r))
    top = _csr(r, t, (n_r, n_e))
    if normalize:
        side, front, top = row_normalize(side), row_normalize(front), row_normalize(top)
    return TripleViews(side=side, front=front, top=top)


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def propagate_graph(
    views: TripleViews,
    entities: np.ndarray,
    relations: np.ndarray,
    k: int,
    normalize: bool = True,
    three_view: bool = True,
) -> LabelState:
    """Run k rounds on one KG starting from round-0 entity/relation labels.

    With ``three_view=False`` the front and top views are dropped and this is
    classical label propagation over the side view.
    """
    if k < 0:
        raise ValueError(f"round count must be >= 0, got {k}")
    if entities.shape[0] != views.entity_count:
        raise ValueError(
            f"entity labels have {entities.shape[0]} rows, views expect {views.entity_count}"
        )
    if relations.shape[0] != views.relation_count:
        raise ValueError(
            f"relation labels have {relations.shape[0]} rows, "
            f"views expect {views.relation_count}"
        )
    if entities.shape[1] != relations.shape[1]:
        raise ValueError(
            f"entity labels have dim {entities.shape[1]}, relation labels {relations.shape[1]}"
        )

    ent = np.asarray(entities, dtype=np.float64)
    rel = np.asarray(relations, dtype=np.float64)
    entity_rounds = [ent]
    relation_rounds = [rel]
    for step in range(1, k + 1):
        if three_view:
            next_ent = views.side @ ent + views.front @ rel
            next_rel = views.top @ ent
        else:
            next_ent = views.side @ ent
            next_rel = np.zeros_like(rel)
        if normalize:
            next_ent = l2_normalize_rows(next_ent)
            next_rel = l2_normalize_rows(next_rel)
        ent, rel = np.asarray(next_ent), np.asarray(next_rel)
        entity_rounds.append(ent)
        relation_rounds.append(rel)
        logger.debug(
            "round %d: %d/%d entities labelled",
            step,
            int(np.count_nonzero(np.any(ent != 0, axis=1))),
            ent.shape[0],
        )
    return LabelState(tuple(entity_rounds), tuple(relation_rounds))


def propagate(
    views_src: TripleViews,
    views_tgt: TripleViews,
    labels: LabelSet,
    k: int,
    normalize: bool = True,
    three_view: bool = True,
) -> tuple[LabelState, LabelState]:
    """Propagate both graphs independently from the same label set."""
    src = propagate_graph(
        views_src, labels.source, labels.source_relations, k, normalize, three_view
    )
    tgt = propagate_graph(
        views_tgt, labels.target, labels.target_relations, k, normalize, three_view
    )
    return src, tgt


def propagate_onehot_subgraph(
    subgraph: KnowledgeGraph,
    seeds: Sequence[int],
    k: int,
    normalize: bool = True,
    three_view: bool = True,
) -> LabelState:
    """One-hot propagation on a small graph: dimension x is the x-th seed's relevance.

    ``seeds`` lists one local entity index per class, in class order.
    """
    if not seeds:
        raise ValueError("at least one seed entity is required")
    ent = np.zeros((subgraph.entity_count, len(seeds)))
    ent[np.asarray(seeds, dtype=np.int64), np.arange(len(seeds))] = 1.0
    rel = np.zeros((subgraph.relation_count, len(seeds)))
    return propagate_graph(build_views(subgraph), ent, rel, k, normalize, three_view)
