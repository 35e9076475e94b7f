"""Shared fixtures for lightalign tests."""

import shutil
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import yaml

from lightalign import config
from lightalign.kg import KgPair, KnowledgeGraph, SplitSpec, Triple, load_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch, tmp_path):
    """Keep the user's config file and thread env var out of every test."""
    monkeypatch.setattr(config, "CONFIG_PATH", tmp_path / "no-such-dir" / "config.yaml")
    monkeypatch.delenv(config.THREADS_ENV, raising=False)


@pytest.fixture
def toy_dir(tmp_path):
    """A writable copy of the 4-entity toy dataset."""
    target = tmp_path / "toy"
    shutil.copytree(FIXTURES / "toy", target)
    return target


@pytest.fixture
def toy_pair(toy_dir):
    """The toy dataset split by its sup_ent_ids file."""
    return load_dataset(toy_dir, SplitSpec(train_file=toy_dir / "sup_ent_ids"))


@pytest.fixture
def six_node():
    """The hand-executed one-hot propagation fixture, fractions as floats."""
    raw = yaml.safe_load((FIXTURES / "six_node_trace.yaml").read_text())

    def table(rows):
        return np.array([[float(Fraction(v)) for v in row] for row in rows])

    kg = KnowledgeGraph(
        entity_count=len(raw["entities"]),
        relation_count=len(raw["relations"]),
        triples=tuple(Triple(*t) for t in raw["triples"]),
        entity_names=tuple(raw["entities"]),
        relation_names=tuple(raw["relations"]),
    )
    return {
        "kg": kg,
        "seeds": raw["seeds"],
        "rounds": raw["rounds"],
        "entity_rounds": [table(r) for r in raw["entity_rounds"]],
        "relation_rounds": [table(r) for r in raw["relation_rounds"]],
    }


def make_kg(n, triples, relations=None, names=None):
    """Small KnowledgeGraph from (h, r, t) tuples."""
    triples = [Triple(*t) for t in triples]
    if relations is None:
        relations = max((t.rel for t in triples), default=-1) + 1
    return KnowledgeGraph(
        entity_count=n,
        relation_count=relations,
        triples=tuple(triples),
        entity_names=tuple(names) if names is not None else None,
    )


@pytest.fixture
def anchor_overlap_pair():
    """Source S linked to anchors 1-5; target P shares all five, target G only three.

    Source: S=0 -> 1..5, entities 6 and 7 isolated.
    Target: P=0 -> 1..5, G=8 -> 1, 2, 3, 6, 7.
    Seeds: (i, i) for i = 1..7.
    """
    source = make_kg(8, [(0, 0, i) for i in range(1, 6)], relations=1)
    target = make_kg(9, [(0, 0, i) for i in range(1, 6)] + [(8, 0, i) for i in (1, 2, 3, 6, 7)])
    return KgPair(source=source, target=target, seed_pairs=tuple((i, i) for i in range(1, 8)))


@pytest.fixture
def kg_factory():
    """Build a small KnowledgeGraph from (h, r, t) tuples."""
    return make_kg
