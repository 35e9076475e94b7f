"""Tests for lightalign.synth module."""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from lightalign.kg import SplitSpec, load_dataset, write_dataset
from lightalign.synth import make_isomorphic_copy


def edge_set(kg):
    return {(h, t) for h, _, t in kg.triples}


class TestMakeIsomorphicCopy:
    """Tests for make_isomorphic_copy function."""

    def test_sizes(self):
        """Entity, triple and relation counts match the request."""
        pair = make_isomorphic_copy(50, 120, relations=7, seed=0)

        for kg in (pair.source, pair.target):
            assert kg.entity_count == 50
            assert kg.relation_count == 7
            assert len(kg.triples) == 120
        assert len(pair.seed_pairs) == 15
        assert len(pair.test_pairs) == 35

    def test_same_seed_same_pair(self):
        """Generation is deterministic in its arguments."""
        assert make_isomorphic_copy(40, 90, seed=3) == make_isomorphic_copy(40, 90, seed=3)
        assert make_isomorphic_copy(40, 90, seed=3) != make_isomorphic_copy(40, 90, seed=4)

    def test_noise_free_copy_is_isomorphic(self):
        """Mapping source triples through the reference pairs gives the target triples."""
        pair = make_isomorphic_copy(60, 200, relations=5, seed=2)
        ent = dict(pair.seed_pairs + pair.test_pairs)

        mapped = Counter((ent[h], ent[t]) for h, _, t in pair.source.triples)

        assert mapped == Counter((h, t) for h, _, t in pair.target.triples)
        # relations are permuted, so usage counts match as multisets
        src_usage = sorted(Counter(r for _, r, _ in pair.source.triples).values())
        assert src_usage == sorted(Counter(r for _, r, _ in pair.target.triples).values())

    def test_noise_rewires_tails(self):
        """With noise some mapped triples no longer exist in the target."""
        pair = make_isomorphic_copy(100, 400, relations=3, noise=0.5, seed=1)
        ent = dict(pair.seed_pairs + pair.test_pairs)
        target_edges = {(h, t) for h, _, t in pair.target.triples}

        missing = sum((ent[h], ent[t]) not in target_edges for h, _, t in pair.source.triples)

        assert 100 < missing < 300

    def test_source_is_connected(self):
        """The spanning tree makes the source graph weakly connected."""
        pair = make_isomorphic_copy(300, 299, seed=5)
        arr = pair.source.triple_array()
        adj = csr_matrix((np.ones(len(arr)), (arr[:, 0], arr[:, 2])), shape=(300, 300))

        n_components, _ = connected_components(adj, directed=True, connection="weak")

        assert n_components == 1

    def test_no_self_loops_in_source(self):
        """Neither tree nor extra edges join an entity to itself."""
        pair = make_isomorphic_copy(30, 300, seed=6)

        assert all(h != t for h, _, t in pair.source.triples)

    def test_file_ids_are_disjoint(self):
        """Source and target use disjoint entity and relation IDs."""
        pair = make_isomorphic_copy(10, 20, relations=4, seed=0)

        assert set(pair.source.entity_ids).isdisjoint(pair.target.entity_ids)
        assert set(pair.source.relation_ids).isdisjoint(pair.target.relation_ids)
        assert pair.source.entity_label(0) == "s0"
        assert pair.target.entity_label(0) == "t0"

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"entities": 1, "triples": 0}, "entities"),
            ({"entities": 10, "triples": 5}, "triples"),
            ({"entities": 10, "triples": 20, "relations": 0}, "relation"),
            ({"entities": 10, "triples": 20, "noise": 1.5}, "noise"),
        ],
    )
    def test_invalid_arguments(self, kwargs, match):
        """Impossible sizes and probabilities are rejected."""
        with pytest.raises(ValueError, match=match):
            make_isomorphic_copy(**kwargs)


class TestSynthOnDisk:
    """Synthetic pairs written with write_dataset."""

    def test_byte_reproducible(self, tmp_path):
        """Two generations with one seed write identical files."""
        for name in ("a", "b"):
            write_dataset(make_isomorphic_copy(80, 200, noise=0.1, seed=7), tmp_path / name)

        for path in sorted((tmp_path / "a").iterdir()):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()

    def test_reloads_with_same_split(self, tmp_path):
        """Loading with sup_ent_ids restores the generated seed and test pairs."""
        pair = make_isomorphic_copy(80, 200, seed=7)
        write_dataset(pair, tmp_path)

        loaded = load_dataset(tmp_path, SplitSpec(train_file=tmp_path / "sup_ent_ids"))

        assert loaded.seed_pairs == pair.seed_pairs
        assert set(loaded.test_pairs) == set(pair.test_pairs)
        assert edge_set(loaded.source) == edge_set(pair.source)
