"""Decoding label vectors into an alignment.

Pipeline: top-k cosine retrieval -> sparse Sinkhorn -> argmax extraction.
Dense Sinkhorn, the Hungarian solver and greedy nearest-neighbour decoding are
kept as reference decoders for tests, ablations and small instances.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

logger = logging.getLogger(__name__)

# Normalization denominators are clamped here
_FLOOR = 1e-30
# Source rows scored per block during exact retrieval
_BLOCK_ROWS = 1024

ROW_ARGMAX = "row-argmax"
MUTUAL_ARGMAX = "mutual-argmax"


@dataclass(frozen=True)
class SparseSim:
    """Row-sparse score matrix; absent entries are structural zeros.

    Entries are stored in CSR arrays and only ever touched through ``data``,
    so explicitly stored 0.0 scores are never dropped.
    """

    matrix: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.matrix.shape[0]), int(self.matrix.shape[1]))

    @property
    def nnz(self) -> int:
        return int(len(self.matrix.data))

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.shape[0]), np.diff(self.matrix.indptr))

    def row(self, i: int) -> list[tuple[int, float]]:
        """Stored (column, score) entries of row i, best first, ties by column."""
        start, end = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        cols = self.matrix.indices[start:end]
        vals = self.matrix.data[start:end]
        order = np.lexsort((cols, -vals))
        return [(int(cols[j]), float(vals[j])) for j in order]

    def with_data(self, data: np.ndarray) -> SparseSim:
        """Same sparsity pattern, new values."""
        m = sp.csr_matrix(
            (data, self.matrix.indices.copy(), self.matrix.indptr.copy()), shape=self.shape
        )
        return type(self)(m)

    def transpose(self) -> SparseSim:
        rows = self.row_ids()
        order = np.lexsort((rows, self.matrix.indices))
        cols_sorted = self.matrix.indices[order]
        indptr = np.zeros(self.shape[1] + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols_sorted, minlength=self.shape[1]), out=indptr[1:])
        m = sp.csr_matrix(
            (self.matrix.data[order], rows[order], indptr), shape=(self.shape[1], self.shape[0])
        )
        return type(self)(m)

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.matrix.indices] = self.matrix.data
        return out

    @classmethod
    def from_rows(
        cls, shape: tuple[int, int], cols: list[np.ndarray], vals: list[np.ndarray]
    ) -> SparseSim:
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.cumsum([len(c) for c in cols], out=indptr[1:])
        indices = np.concatenate(cols).astype(np.int32) if cols else np.zeros(0, np.int32)
        data = np.concatenate(vals).astype(np.float64) if vals else np.zeros(0)
        return cls(sp.csr_matrix((data, indices, indptr), shape=shape))

    @classmethod
    def from_dense(cls, scores: np.ndarray, k: int | None = None) -> SparseSim:
        """Keep the k best entries per row of a dense matrix (all when k is None)."""
        scores = np.asarray(scores, dtype=np.float64)
        n, m = scores.shape
        k = m if k is None else k
        cols, vals = _topk_block(scores, k)
        return cls.from_rows((n, m), cols, vals)


class TransportPlan(SparseSim):
    """Sinkhorn output on the sparsity pattern of its input similarity."""


Ranking = Union[SparseSim, np.ndarray]


def _l2_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def _topk_block(scores: np.ndarray, k: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per row: the k best columns by (score desc, column asc)."""
    n, m = scores.shape
    k = min(k, m)
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    if k == 0 or n == 0:
        return [np.zeros(0, np.int64)] * n, [np.zeros(0)] * n
    if k < m:
        cand = np.argpartition(-scores, k - 1, axis=1)[:, :k]
    else:
        cand = np.tile(np.arange(m), (n, 1))
    cand_vals = np.take_along_axis(scores, cand, axis=1)
    thresh = cand_vals.min(axis=1)
    # rows where the k-th score is tied with an unselected column
    ambiguous = (scores == thresh[:, None]).sum(axis=1) != (cand_vals == thresh[:, None]).sum(
        axis=1
    )
    for i in range(n):
        if ambiguous[i]:
            order = np.lexsort((np.arange(m), -scores[i]))[:k]
            c, v = order, scores[i, order]
        else:
            order = np.lexsort((cand[i], -cand_vals[i]))
            c, v = cand[i, order], cand_vals[i, order]
        cols.append(c)
        vals.append(v)
    return cols, vals


def _search_exact(src: np.ndarray, tgt: np.ndarray, k: int, threads: int) -> SparseSim:
    nonzero = np.any(src != 0, axis=1)
    blocks = [(s, min(s + _BLOCK_ROWS, len(src))) for s in range(0, len(src), _BLOCK_ROWS)]

    def score(block: tuple[int, int]) -> tuple[list[np.ndarray], list[np.ndarray]]:
        start, end = block
        return _topk_block(src[start:end] @ tgt.T, k)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score, blocks))
    else:
        results = [score(b) for b in blocks]

    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for block_cols, block_vals in results:
        cols.extend(block_cols)
        vals.extend(block_vals)
    empty_c, empty_v = np.zeros(0, np.int64), np.zeros(0)
    for i in np.flatnonzero(~nonzero):
        cols[i], vals[i] = empty_c, empty_v
    return SparseSim.from_rows((len(src), len(tgt)), cols, vals)


def _search_faiss(src: np.ndarray, tgt: np.ndarray, k: int) -> SparseSim:
    try:
        import faiss
    except ImportError:
        raise RuntimeError(
            "retrieval backend 'faiss' requested but faiss is not installed "
            "(pip install 'lightalign[ann]')"
        ) from None

    k = min(k, len(tgt))
    index = faiss.IndexFlatIP(tgt.shape[1])
    index.add(np.ascontiguousarray(tgt, dtype=np.float32))
    scores, ids = index.search(np.ascontiguousarray(src, dtype=np.float32), k)
    nonzero = np.any(src != 0, axis=1)
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for i in range(len(src)):
        keep = ids[i] >= 0 if nonzero[i] else np.zeros(k, dtype=bool)
        c, v = ids[i][keep].astype(np.int64), scores[i][keep].astype(np.float64)
        order = np.lexsort((c, -v))
        cols.append(c[order])
        vals.append(v[order])
    return SparseSim.from_rows((len(src), len(tgt)), cols, vals)


def topk_retrieve(
    src: np.ndarray,
    tgt: np.ndarray,
    k: int,
    backend: str = "exact",
    threads: int = 1,
) -> SparseSim:
    """Top-k cosine neighbours in ``tgt`` for every row of ``src``.

    Zero source rows get empty rows. The exact backend breaks ties by ascending
    column; the faiss backend is approximate in tie order only.
    """
    if k < 1:
        raise ValueError(f"top-k must be >= 1, got {k}")
    if src.ndim != 2 or tgt.ndim != 2 or src.shape[1] != tgt.shape[1]:
        raise ValueError(f"dimension mismatch: {src.shape} vs {tgt.shape}")
    if backend not in ("exact", "faiss"):
        raise ValueError(f"unknown retrieval backend {backend!r}")
    a, b = _l2_rows(src), _l2_rows(tgt)
    sim = _search_exact(a, b, k, threads) if backend == "exact" else _search_faiss(a, b, k)
    logger.debug(
        "Retrieved %d candidates for %d sources over %d targets (%s, k=%d)",
        sim.nnz,
        len(src),
        len(tgt),
        backend,
        k,
    )
    return sim


def retrieval_recall(approx: SparseSim, exact: SparseSim) -> float:
    """Fraction of the exact top-k columns the approximate result also found."""
    hit = total = 0
    for i in range(exact.shape[0]):
        truth = {c for c, _ in exact.row(i)}
        if not truth:
            continue
        hit += len(truth & {c for c, _ in approx.row(i)})
        total += len(truth)
    return hit / total if total else 1.0


def _check_sinkhorn_args(tau: float, q: int) -> None:
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if q < 0:
        raise ValueError(f"sinkhorn iterations must be >= 0, got {q}")


def _raw_exp(values: np.ndarray, tau: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        out = np.exp(values / tau)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"exp(S / tau) overflows at tau={tau}; use q >= 1 or a larger tau")
    return out


def sinkhorn_dense(
    scores: np.ndarray, tau: float, q: int, final_row_norm: bool = True
) -> np.ndarray:
    """Dense Sinkhorn: exp(S/tau), then q rounds of row- then column-normalization.

    A final row normalization follows the last round so rows read as
    probabilities. q = 0 returns exp(S/tau) unnormalized and raises ValueError
    when that overflows.
    """
    _check_sinkhorn_args(tau, q)
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix contains non-finite values")
    if q == 0:
        return _raw_exp(s, tau)
    z = s / tau
    if z.size:
        z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    for _ in range(q):
        p = p / np.maximum(p.sum(axis=1, keepdims=True), _FLOOR)
        p = p / np.maximum(p.sum(axis=0, keepdims=True), _FLOOR)
    if final_row_norm:
        p = p / np.maximum(p.sum(axis=1, keepdims=True), _FLOOR)
    return p


def sinkhorn_sparse(
    sim: SparseSim, tau: float, q: int, final_row_norm: bool = True
) -> TransportPlan:
    """Sinkhorn restricted to the stored entries of ``sim``.

    Row and column sums run over stored entries only and absent entries stay
    absent. Cost is O(q * nnz).
    """
    _check_sinkhorn_args(tau, q)
    data = np.asarray(sim.matrix.data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError("similarity matrix contains non-finite values")
    n_rows, n_cols = sim.shape
    rows = sim.row_ids()
    cols = sim.matrix.indices
    if q == 0:
        return TransportPlan(sim.with_data(_raw_exp(data, tau)).matrix)

    z = data / tau
    if len(z):
        row_max = np.full(n_rows, -np.inf)
        np.maximum.at(row_max, rows, z)
        z = z - row_max[rows]
    p = np.exp(z)

    def row_norm(values: np.ndarray) -> np.ndarray:
        sums = np.bincount(rows, weights=values, minlength=n_rows)
        return values / np.maximum(sums, _FLOOR)[rows]

    for _ in range(q):
        p = row_norm(p)
        col_sums = np.bincount(cols, weights=p, minlength=n_cols)
        p = p / np.maximum(col_sums, _FLOOR)[cols]
    if final_row_norm:
        p = row_norm(p)
    return TransportPlan(sim.with_data(p).matrix)


def hungarian(scores: np.ndarray) -> np.ndarray:
    """Exact max-score assignment; returns the assigned column per row, -1 if none.

    Rectangular inputs are padded to square with a large negative score.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("score matrix must be 2-D")
    if not np.all(np.isfinite(s)):
        raise ValueError("score matrix contains non-finite values")
    n, m = s.shape
    size = max(n, m)
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    pad = (np.abs(s).max() if s.size else 0.0) * (size + 1) + 1.0
    padded = np.full((size, size), -pad)
    padded[:n, :m] = s
    rows, assigned = linear_sum_assignment(padded, maximize=True)
    perm = np.full(n, -1, dtype=np.int64)
    for r, c in zip(rows, assigned):
        if r < n and c < m:
            perm[r] = c
    return perm


def assignment_score(scores: np.ndarray, perm: np.ndarray) -> float:
    """Frobenius product <P, S> of an assignment with the score matrix."""
    mask = perm >= 0
    return float(np.asarray(scores)[np.flatnonzero(mask), perm[mask]].sum())


def _best_per_group(
    groups: np.ndarray, others: np.ndarray, values: np.ndarray, n_groups: int
) -> np.ndarray:
    """For each group the ``other`` index with the highest value (ties -> lowest index)."""
    best = np.full(n_groups, -1, dtype=np.int64)
    if not len(values):
        return best
    order = np.lexsort((others, -values, groups))
    g = groups[order]
    first = np.ones(len(g), dtype=bool)
    first[1:] = g[1:] != g[:-1]
    best[g[first]] = others[order][first]
    return best


def _as_sparse(plan: Ranking) -> SparseSim:
    if isinstance(plan, SparseSim):
        return plan
    return SparseSim.from_dense(np.asarray(plan, dtype=np.float64))


def extract_alignment(plan: Ranking, mode: str = ROW_ARGMAX) -> list[tuple[int, int, float]]:
    """Read (source, target, score) pairs off a plan.

    row-argmax: every source with support gets its best column.
    mutual-argmax: only pairs that are each other's best, in both directions.
    """
    if mode not in (ROW_ARGMAX, MUTUAL_ARGMAX):
        raise ValueError(f"unknown extraction mode {mode!r}")
    sim = _as_sparse(plan)
    data = np.asarray(sim.matrix.data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError("plan contains non-finite values")
    n_rows, n_cols = sim.shape
    rows = sim.row_ids()
    cols = sim.matrix.indices.astype(np.int64)
    row_best = _best_per_group(rows, cols, data, n_rows)
    if mode == MUTUAL_ARGMAX:
        back = sim.transpose()
        col_best = _best_per_group(
            back.row_ids(), back.matrix.indices.astype(np.int64), back.matrix.data, n_cols
        )
    lookup = {(int(r), int(c)): float(v) for r, c, v in zip(rows, cols, data)}
    pairs = []
    for i in np.flatnonzero(row_best >= 0):
        j = int(row_best[i])
        if mode == MUTUAL_ARGMAX and col_best[j] != i:
            continue
        pairs.append((int(i), j, lookup[(int(i), j)]))
    return pairs


def greedy_nearest(sim: Ranking) -> list[tuple[int, int, float]]:
    """Each source takes its most similar target; no one-to-one constraint."""
    return extract_alignment(sim, ROW_ARGMAX)
