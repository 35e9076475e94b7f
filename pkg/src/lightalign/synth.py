"""Synthetic benchmark: a random KG and a relabelled, optionally noisy, copy of it."""

from __future__ import annotations

import logging

import numpy as np

from lightalign.kg import KgPair, KnowledgeGraph, Triple, split_pairs

logger = logging.getLogger(__name__)


def _random_graph(rng: np.random.Generator, n: int, m: int, relations: int) -> np.ndarray:
    """(m, 3) triples: a random spanning tree first, then uniform extra edges."""
    child = np.arange(1, n)
    parent = np.array([rng.integers(0, i) for i in child], dtype=np.int64)
    flip = rng.random(n - 1) < 0.5
    heads = np.where(flip, parent, child)
    tails = np.where(flip, child, parent)

    extra = m - (n - 1)
    extra_heads = rng.integers(0, n, size=extra)
    # offset in 1..n-1 keeps extra edges free of self-loops
    extra_tails = (extra_heads + rng.integers(1, n, size=extra)) % n
    h = np.concatenate([heads, extra_heads])
    t = np.concatenate([tails, extra_tails])
    r = rng.integers(0, relations, size=m)
    return np.stack([h, r, t], axis=1).astype(np.int64)


def _graph(
    triples: np.ndarray, n: int, relations: int, prefix: str, id_offset: int, rel_offset: int
) -> KnowledgeGraph:
    return KnowledgeGraph(
        entity_count=n,
        relation_count=relations,
        triples=tuple(Triple(int(h), int(r), int(t)) for h, r, t in triples),
        entity_names=tuple(f"{prefix}{i}" for i in range(n)),
        entity_ids=tuple(range(id_offset, id_offset + n)),
        relation_ids=tuple(range(rel_offset, rel_offset + relations)),
    )


def make_isomorphic_copy(
    entities: int,
    triples: int,
    relations: int = 50,
    noise: float = 0.0,
    seed: int = 0,
    ratio: float = 0.3,
) -> KgPair:
    """A random source KG and its entity- and relation-permuted copy.

    With probability ``noise`` each copied triple gets a uniformly random tail.
    Reference pairs follow the entity permutation and are split into seeds and
    test pairs by ``ratio``. Same arguments give the same KgPair.
    """
    if entities < 2:
        raise ValueError(f"need at least 2 entities, got {entities}")
    if triples < entities - 1:
        raise ValueError(
            f"need at least {entities - 1} triples to connect {entities} entities, got {triples}"
        )
    if relations < 1:
        raise ValueError(f"need at least 1 relation, got {relations}")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise {noise!r} outside [0, 1]")

    rng = np.random.default_rng(seed)
    src = _random_graph(rng, entities, triples, relations)

    perm = rng.permutation(entities)
    rel_perm = rng.permutation(relations)
    tgt = np.stack([perm[src[:, 0]], rel_perm[src[:, 1]], perm[src[:, 2]]], axis=1)
    rewired = rng.random(triples) < noise
    tgt[rewired, 2] = rng.integers(0, entities, size=int(rewired.sum()))
    tgt = tgt[rng.permutation(triples)]

    reference = [(i, int(perm[i])) for i in range(entities)]
    seeds, _, test = split_pairs(reference, ratio, seed)
    logger.info(
        "Synthesised %d entities, %d triples (%d rewired), %d seed / %d test pairs",
        entities,
        triples,
        int(rewired.sum()),
        len(seeds),
        len(test),
    )
    return KgPair(
        source=_graph(src, entities, relations, "s", 0, 0),
        target=_graph(tgt, entities, relations, "t", entities, relations),
        seed_pairs=tuple(seeds),
        test_pairs=tuple(test),
        id_convention="global",
    )
