"""Initial label matrices for entities and relations.

Three ways to label the seed pairs:

- one-hot: the x-th seed pair owns the x-th standard basis vector (exact, wide)
- random-orthogonal: each seed pair shares one random unit vector on the
  d-dimensional hyper-sphere (approximately orthogonal, fixed width)
- literal: every entity starts from its L2-normalized name embedding

Unaligned entities and all relations start at zero in the first two modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lightalign.kg import DatasetError, KgPair, KnowledgeGraph, Pair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelSet:
    """Round-0 label matrices for both graphs; arrays are read-only."""

    source: np.ndarray  # |E_s| x d
    target: np.ndarray  # |E_t| x d
    source_relations: np.ndarray  # |R_s| x d
    target_relations: np.ndarray  # |R_t| x d

    def __post_init__(self) -> None:
        dims = {m.shape[1] for m in self.matrices()}
        if len(dims) != 1:
            raise ValueError(f"label matrices disagree on dimension: {sorted(dims)}")
        for m in self.matrices():
            m.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.source.shape[1])

    def matrices(self) -> tuple[np.ndarray, ...]:
        return (self.source, self.target, self.source_relations, self.target_relations)


def _zeros(kg: KnowledgeGraph, dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros((kg.entity_count, dim)), np.zeros((kg.relation_count, dim))


def orthogonality_bound(eps: float, d: int) -> float:
    """Upper bound on P(<x, y> > eps) for independent unit vectors in d dimensions."""
    return float((1.0 - eps * eps) ** ((d + 1) / 2))


def random_unit_vectors(count: int, d: int, seed: int, start: int = 0) -> np.ndarray:
    """Vectors drawn uniformly on the unit sphere, one RNG stream per index.

    Row ``i`` depends only on ``(seed, start + i)``, so growing the anchor list
    never changes earlier rows.
    """
    if d < 1:
        raise ValueError(f"label dimension must be >= 1, got {d}")
    out = np.empty((count, d))
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(start + i,)))
        v = rng.standard_normal(d)
        out[i] = v / np.linalg.norm(v)
    return out


def _check_anchors(pair: KgPair, anchors: Sequence[Pair]) -> None:
    if not anchors:
        raise ValueError("at least one seed pair is required")
    src = [s for s, _ in anchors]
    tgt = [t for _, t in anchors]
    if len(set(src)) != len(src) or len(set(tgt)) != len(tgt):
        raise ValueError("anchor pairs must be one-to-one")
    if max(src) >= pair.source.entity_count or max(tgt) >= pair.target.entity_count:
        raise ValueError("anchor pair index out of range")


def _assign(pair: KgPair, anchors: Sequence[Pair], vectors: np.ndarray) -> LabelSet:
    dim = vectors.shape[1]
    src, src_rel = _zeros(pair.source, dim)
    tgt, tgt_rel = _zeros(pair.target, dim)
    idx = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    src[idx[:, 0]] = vectors
    tgt[idx[:, 1]] = vectors
    return LabelSet(src, tgt, src_rel, tgt_rel)


def init_onehot(pair: KgPair, anchors: Sequence[Pair] | None = None) -> LabelSet:
    """One class per seed pair; dim equals the number of pairs."""
    anchors = list(pair.seed_pairs if anchors is None else anchors)
    _check_anchors(pair, anchors)
    return _assign(pair, anchors, np.eye(len(anchors)))


def init_random_orthogonal(
    pair: KgPair, d: int, seed: int, anchors: Sequence[Pair] | None = None
) -> LabelSet:
    """Shared random unit vector per seed pair, zero elsewhere.

    ``anchors`` defaults to the seed pairs; pseudo-seeds are appended after
    them so the seed rows stay bit-identical across self-training epochs.
    """
    if d < 1:
        raise ValueError(f"label dimension must be >= 1, got {d}")
    anchors = list(pair.seed_pairs if anchors is None else anchors)
    _check_anchors(pair, anchors)
    return _assign(pair, anchors, random_unit_vectors(len(anchors), d, seed))


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def load_embeddings(path: Path | str, kg: KnowledgeGraph) -> np.ndarray:
    """Read ``<entity id> TAB <float> ...`` rows into a |E| x d matrix.

    Values after the ID may be separated by TABs or spaces.

    Raises:
        DatasetError: missing file or entity, ragged dimensions, non-finite values.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"missing embedding file: {path}")
    rows: dict[int, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.split()
            if not parts:
                continue
            try:
                eid = int(parts[0])
                values = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: malformed embedding line") from None
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise DatasetError(
                    f"{path.name}:{lineno}: dimension {len(values)} differs from {dim}"
                )
            if not np.all(np.isfinite(values)):
                raise DatasetError(f"{path.name}:{lineno}: non-finite value")
            if eid not in kg.index_of_id:
                logger.debug("%s:%d: skipping unknown entity ID %d", path.name, lineno, eid)
                continue
            rows[kg.index_of_id[eid]] = values

    missing = [kg.file_id(i) for i in range(kg.entity_count) if i not in rows]
    if missing:
        raise DatasetError(
            f"{path.name}: no vector for {len(missing)} entities (first: {missing[0]})"
        )
    if dim is None:
        return np.zeros((kg.entity_count, 0))
    matrix = np.empty((kg.entity_count, dim))
    for i, values in rows.items():
        matrix[i] = values
    return matrix


def init_literal(
    pair: KgPair, embeddings_src: Path | str, embeddings_tgt: Path | str
) -> LabelSet:
    """Entity labels from name embeddings, L2-normalized per row. No seeds required."""
    src = _normalize_rows(load_embeddings(embeddings_src, pair.source))
    tgt = _normalize_rows(load_embeddings(embeddings_tgt, pair.target))
    if src.shape[1] != tgt.shape[1]:
        raise DatasetError(
            f"embedding dimensions differ: source {src.shape[1]}, target {tgt.shape[1]}"
        )
    dim = src.shape[1]
    return LabelSet(
        src,
        tgt,
        np.zeros((pair.source.relation_count, dim)),
        np.zeros((pair.target.relation_count, dim)),
    )


def share_anchor_rows(labels: LabelSet, anchors: Sequence[Pair]) -> LabelSet:
    """Give both members of each anchor pair the normalized sum of their two rows.

    Used by literal-mode self-training: matched entities end up with one shared
    label, the literal analogue of a shared random label.
    """
    if not anchors:
        return labels
    src = np.array(labels.source)
    tgt = np.array(labels.target)
    idx = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    shared = _normalize_rows(src[idx[:, 0]] + tgt[idx[:, 1]])
    src[idx[:, 0]] = shared
    tgt[idx[:, 1]] = shared
    return LabelSet(
        src, tgt, np.array(labels.source_relations), np.array(labels.target_relations)
    )
