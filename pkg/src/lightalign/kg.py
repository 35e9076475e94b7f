"""Knowledge graph types and ingestion of the ent_ids / triples / ref_ent_ids dataset layout.

A dataset directory holds, one TAB-separated record per line:

- ``ent_ids_1`` / ``ent_ids_2``: ``<id> TAB <name>``
- ``triples_1`` / ``triples_2``: ``<head id> TAB <relation id> TAB <tail id>``
- ``ref_ent_ids``: ``<source id> TAB <target id>``
- ``sup_ent_ids`` (optional): explicit training pairs, same format
- ``rel_ids_1`` / ``rel_ids_2`` (optional): ``<relation id> TAB <name>``

File IDs are re-mapped to dense 0-based indices per graph; the mapping is kept
on the loaded objects so results can be written back with the original IDs.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ENT_FILES = ("ent_ids_1", "ent_ids_2")
TRIPLE_FILES = ("triples_1", "triples_2")
REL_FILES = ("rel_ids_1", "rel_ids_2")
REF_FILE = "ref_ent_ids"
SUP_FILE = "sup_ent_ids"

Pair = tuple[int, int]


class DatasetError(ValueError):
    """Raised for unreadable or inconsistent dataset and embedding files."""


class Triple(NamedTuple):
    """One (head, relation, tail) fact with graph-local indices."""

    head: int
    rel: int
    tail: int


@dataclass(frozen=True)
class KnowledgeGraph:
    """A typed directed multigraph. Immutable after construction."""

    entity_count: int
    relation_count: int
    triples: tuple[Triple, ...] = ()
    entity_names: Optional[tuple[str, ...]] = None
    relation_names: Optional[tuple[str, ...]] = None
    entity_ids: Optional[tuple[int, ...]] = None
    relation_ids: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.entity_count < 0 or self.relation_count < 0:
            raise ValueError("entity_count and relation_count must be >= 0")
        arr = self.triple_array()
        if len(arr):
            if arr.min() < 0:
                raise ValueError("triple indices must be >= 0")
            if arr[:, [0, 2]].max() >= self.entity_count:
                raise ValueError(
                    f"triple entity index out of range (entity_count={self.entity_count})"
                )
            if arr[:, 1].max() >= self.relation_count:
                raise ValueError(
                    f"triple relation index out of range (relation_count={self.relation_count})"
                )
        for name, values, size in (
            ("entity_names", self.entity_names, self.entity_count),
            ("entity_ids", self.entity_ids, self.entity_count),
            ("relation_names", self.relation_names, self.relation_count),
            ("relation_ids", self.relation_ids, self.relation_count),
        ):
            if values is not None and len(values) != size:
                raise ValueError(f"{name} has {len(values)} entries, expected {size}")

    def triple_array(self) -> np.ndarray:
        """Triples as an (n, 3) int64 array, in stored order."""
        return np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)

    def deduplicated(self) -> np.ndarray:
        """Distinct triples as a sorted (n, 3) int64 array."""
        arr = self.triple_array()
        if not len(arr):
            return arr
        return np.unique(arr, axis=0)

    def entity_label(self, index: int) -> str:
        """Display name of an entity: its name, else its file ID, else its index."""
        if self.entity_names is not None:
            return self.entity_names[index]
        if self.entity_ids is not None:
            return str(self.entity_ids[index])
        return str(index)

    @cached_property
    def index_of_id(self) -> dict[int, int]:
        """File ID -> local index (identity when no ID map is attached)."""
        if self.entity_ids is None:
            return {i: i for i in range(self.entity_count)}
        return {eid: i for i, eid in enumerate(self.entity_ids)}

    def file_id(self, index: int) -> int:
        return self.entity_ids[index] if self.entity_ids is not None else index


@dataclass(frozen=True)
class KgPair:
    """Two graphs plus seed (training) and test alignment pairs."""

    source: KnowledgeGraph
    target: KnowledgeGraph
    seed_pairs: tuple[Pair, ...] = ()
    test_pairs: tuple[Pair, ...] = ()
    valid_pairs: tuple[Pair, ...] = ()
    id_convention: str = "global"

    def __post_init__(self) -> None:
        for name in ("seed_pairs", "test_pairs", "valid_pairs"):
            for s, t in getattr(self, name):
                if not (0 <= s < self.source.entity_count and 0 <= t < self.target.entity_count):
                    raise ValueError(f"{name} contains out-of-range pair ({s}, {t})")
        seeds = set(self.seed_pairs)
        if seeds & set(self.test_pairs) or seeds & set(self.valid_pairs):
            raise ValueError("seed pairs overlap evaluation pairs")
        src = [s for s, _ in self.seed_pairs]
        tgt = [t for _, t in self.seed_pairs]
        if len(set(src)) != len(src) or len(set(tgt)) != len(tgt):
            raise ValueError("seed pairs must be one-to-one")

    def with_reverse_triples(self) -> KgPair:
        return replace(
            self,
            source=add_reverse_triples(self.source),
            target=add_reverse_triples(self.target),
        )


@dataclass(frozen=True)
class SplitSpec:
    """How reference pairs are divided into seed, validation and test pairs.

    An explicit ``train_file`` wins; otherwise the reference pairs are shuffled
    with ``seed`` and the first ``ceil(ratio * n)`` become seeds.
    """

    ratio: float = 0.3
    seed: int = 0
    train_file: Optional[Path] = None
    valid_ratio: float = 0.0

    def __post_init__(self) -> None:
        if self.train_file is None and not 0.0 < self.ratio <= 1.0:
            raise DatasetError(f"split ratio {self.ratio!r} outside (0, 1]")
        if not 0.0 <= self.valid_ratio < 1.0:
            raise DatasetError(f"valid ratio {self.valid_ratio!r} outside [0, 1)")


def _ceil_fraction(ratio: float, n: int) -> int:
    # round() first so that 0.3 * 15000 does not become 4501
    return min(n, math.ceil(round(ratio * n, 9)))


def split_pairs(
    pairs: Sequence[Pair], ratio: float, seed: int, valid_ratio: float = 0.0
) -> tuple[list[Pair], list[Pair], list[Pair]]:
    """Seeded (seeds, valid, test) split of reference pairs."""
    if not 0.0 < ratio <= 1.0:
        raise DatasetError(f"split ratio {ratio!r} outside (0, 1]")
    n = len(pairs)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [pairs[i] for i in order]
    n_seed = _ceil_fraction(ratio, n)
    n_valid = min(n - n_seed, _ceil_fraction(valid_ratio, n)) if valid_ratio > 0 else 0
    seeds = shuffled[:n_seed]
    valid = shuffled[n_seed : n_seed + n_valid]
    test = shuffled[n_seed + n_valid :]
    return seeds, valid, test


def _read_records(path: Path, fields: int | None) -> list[tuple[int, list[str]]]:
    """Read TAB-separated records as (line number, fields); blank lines skipped."""
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t") if fields is not None else line.split("\t", 1)
            if fields is not None and len(parts) != fields:
                raise DatasetError(
                    f"{path.name}:{lineno}: expected {fields} TAB-separated fields, "
                    f"got {len(parts)}"
                )
            records.append((lineno, parts))
    return records


def _to_int(path: Path, lineno: int, value: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise DatasetError(f"{path.name}:{lineno}: non-integer ID {value!r}") from None


def _read_names(path: Path) -> tuple[list[int], list[str]]:
    ids: list[int] = []
    names: list[str] = []
    seen: set[int] = set()
    for lineno, parts in _read_records(path, None):
        eid = _to_int(path, lineno, parts[0])
        if eid in seen:
            raise DatasetError(f"{path.name}:{lineno}: duplicate ID {eid}")
        seen.add(eid)
        ids.append(eid)
        names.append(parts[1] if len(parts) > 1 else str(eid))
    return ids, names


def _read_id_pairs(path: Path) -> list[tuple[int, int, int]]:
    """Pairs of file IDs with their line numbers."""
    return [
        (lineno, _to_int(path, lineno, a), _to_int(path, lineno, b))
        for lineno, (a, b) in _read_records(path, 2)
    ]


def _load_graph(directory: Path, side: int) -> KnowledgeGraph:
    ent_path = directory / ENT_FILES[side]
    triple_path = directory / TRIPLE_FILES[side]
    rel_path = directory / REL_FILES[side]

    entity_ids, entity_names = _read_names(ent_path)
    index = {eid: i for i, eid in enumerate(entity_ids)}

    raw: list[tuple[int, int, int]] = []
    for lineno, parts in _read_records(triple_path, 3):
        h, r, t = (_to_int(triple_path, lineno, p) for p in parts)
        for eid in (h, t):
            if eid not in index:
                raise DatasetError(f"{triple_path.name}:{lineno}: unknown entity ID {eid}")
        raw.append((h, r, t))

    relation_names: Optional[list[str]] = None
    if rel_path.exists():
        relation_ids, relation_names = _read_names(rel_path)
        known = set(relation_ids)
        for h, r, t in raw:
            if r not in known:
                raise DatasetError(f"{triple_path.name}: relation ID {r} not in {rel_path.name}")
    else:
        relation_ids = sorted({r for _, r, _ in raw})
    rel_index = {rid: i for i, rid in enumerate(relation_ids)}

    triples = tuple(Triple(index[h], rel_index[r], index[t]) for h, r, t in raw)
    logger.debug(
        "%s: %d entities, %d relations, %d triples",
        TRIPLE_FILES[side],
        len(entity_ids),
        len(relation_ids),
        len(triples),
    )
    return KnowledgeGraph(
        entity_count=len(entity_ids),
        relation_count=len(relation_ids),
        triples=triples,
        entity_names=tuple(entity_names),
        relation_names=tuple(relation_names) if relation_names is not None else None,
        entity_ids=tuple(entity_ids),
        relation_ids=tuple(relation_ids),
    )


def _local_pairs(path: Path, source: KnowledgeGraph, target: KnowledgeGraph) -> list[Pair]:
    pairs = []
    for lineno, a, b in _read_id_pairs(path):
        if a not in source.index_of_id:
            raise DatasetError(f"{path.name}:{lineno}: unknown source entity ID {a}")
        if b not in target.index_of_id:
            raise DatasetError(f"{path.name}:{lineno}: unknown target entity ID {b}")
        pairs.append((source.index_of_id[a], target.index_of_id[b]))
    return pairs


def load_dataset(directory: Path | str, split: SplitSpec | None = None) -> KgPair:
    """Load a dataset directory into a KgPair.

    Raises:
        DatasetError: missing file, malformed line, unknown ID or bad split.
    """
    directory = Path(directory)
    split = split or SplitSpec()
    if not directory.is_dir():
        raise DatasetError(f"dataset directory not found: {directory}")

    source = _load_graph(directory, 0)
    target = _load_graph(directory, 1)
    convention = (
        "global" if not set(source.entity_ids or ()) & set(target.entity_ids or ()) else "per-kg"
    )

    ref = _local_pairs(directory / REF_FILE, source, target)
    if split.train_file is not None:
        train_path = Path(split.train_file)
        if not train_path.is_absolute() and not train_path.exists():
            train_path = directory / train_path
        seeds = _local_pairs(train_path, source, target)
        seed_set = set(seeds)
        rest = [p for p in ref if p not in seed_set]
        if split.valid_ratio > 0 and rest:
            order = np.random.default_rng(split.seed).permutation(len(rest))
            shuffled = [rest[i] for i in order]
            n_valid = min(len(rest), _ceil_fraction(split.valid_ratio, len(rest) + len(seeds)))
            valid, test = shuffled[:n_valid], shuffled[n_valid:]
        else:
            valid, test = [], rest
    else:
        seeds, valid, test = split_pairs(ref, split.ratio, split.seed, split.valid_ratio)

    try:
        pair = KgPair(
            source=source,
            target=target,
            seed_pairs=tuple(seeds),
            test_pairs=tuple(test),
            valid_pairs=tuple(valid),
            id_convention=convention,
        )
    except ValueError as e:
        raise DatasetError(f"{directory}: {e}") from e

    logger.info(
        "Loaded %s: %d/%d entities, %d/%d triples, %d seed / %d valid / %d test pairs (%s IDs)",
        directory,
        source.entity_count,
        target.entity_count,
        len(source.triples),
        len(target.triples),
        len(seeds),
        len(valid),
        len(test),
        convention,
    )
    return pair


def add_reverse_triples(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Add (t, r + R, h) for every (h, r, t); relation_count doubles.

    Not idempotent: applying it twice doubles again.
    """
    offset = kg.relation_count
    reverse = tuple(Triple(t, r + offset, h) for h, r, t in kg.triples)
    names = None
    if kg.relation_names is not None:
        names = kg.relation_names + tuple(f"{n}^-1" for n in kg.relation_names)
    return replace(
        kg,
        relation_count=2 * offset,
        triples=tuple(kg.triples) + reverse,
        relation_names=names,
        relation_ids=None,
    )


def _graph_lines(kg: KnowledgeGraph) -> tuple[list[str], list[str]]:
    ent_lines = [f"{kg.file_id(i)}\t{kg.entity_label(i)}" for i in range(kg.entity_count)]
    rel_ids = kg.relation_ids or tuple(range(kg.relation_count))
    triple_lines = [f"{kg.file_id(h)}\t{rel_ids[r]}\t{kg.file_id(t)}" for h, r, t in kg.triples]
    return ent_lines, triple_lines


def _pair_lines(pair: KgPair, pairs: Iterable[Pair]) -> list[str]:
    return [f"{pair.source.file_id(s)}\t{pair.target.file_id(t)}" for s, t in pairs]


def _dataset_files(pair: KgPair) -> dict[str, list[str]]:
    files: dict[str, list[str]] = {}
    for side, kg in enumerate((pair.source, pair.target)):
        ent_lines, triple_lines = _graph_lines(kg)
        files[ENT_FILES[side]] = ent_lines
        files[TRIPLE_FILES[side]] = triple_lines
        if kg.relation_names is not None and kg.relation_ids is not None:
            files[REL_FILES[side]] = [
                f"{rid}\t{name}" for rid, name in zip(kg.relation_ids, kg.relation_names)
            ]
    files[REF_FILE] = _pair_lines(pair, pair.seed_pairs + pair.valid_pairs + pair.test_pairs)
    files[SUP_FILE] = _pair_lines(pair, pair.seed_pairs)
    return files


def write_dataset(pair: KgPair, directory: Path | str) -> None:
    """Write a KgPair in the layout load_dataset reads (inverse up to line order)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, lines in _dataset_files(pair).items():
        with open(directory / name, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(line + "\n" for line in lines)


def dataset_fingerprint(pair: KgPair) -> str:
    """64-bit content hash (hex) of the sorted dataset lines."""
    digest = hashlib.blake2b(digest_size=8)
    for name, lines in sorted(_dataset_files(pair).items()):
        if name == SUP_FILE:
            continue
        digest.update(name.encode("utf-8") + b"\0")
        for line in sorted(lines):
            digest.update(line.encode("utf-8") + b"\n")
    return digest.hexdigest()


def load_pairs(path: Path | str, pair: KgPair) -> list[Pair]:
    """Read a file of ``<source id> TAB <target id>`` lines into local pairs."""
    return _local_pairs(Path(path), pair.source, pair.target)


def read_scored_pairs(path: Path | str) -> list[tuple[int, int, float]]:
    """Read ``<source id> TAB <target id> [TAB score]`` lines as file IDs.

    A missing score reads as 1.0.
    """
    path = Path(path)
    out = []
    for lineno, parts in _read_records(path, None):
        fields = "\t".join(parts).split("\t")
        if len(fields) not in (2, 3):
            raise DatasetError(
                f"{path.name}:{lineno}: expected 2 or 3 TAB-separated fields, got {len(fields)}"
            )
        score = 1.0
        if len(fields) == 3:
            try:
                score = float(fields[2])
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: malformed score {fields[2]!r}") from None
        out.append((_to_int(path, lineno, fields[0]), _to_int(path, lineno, fields[1]), score))
    return out


def save_pairs(
    path: Path | str,
    pairs: Iterable[tuple[int, int] | tuple[int, int, float]],
    pair: KgPair,
) -> None:
    """Write local pairs back with file IDs; a third element is written as a 6-decimal score."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for item in pairs:
            line = f"{pair.source.file_id(item[0])}\t{pair.target.file_id(item[1])}"
            if len(item) > 2:
                line += f"\t{item[2]:.6f}"  # type: ignore[misc]
            f.write(line + "\n")

