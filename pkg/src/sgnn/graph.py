"""Sparse adjacency storage and the parameter-free propagation operators.

``SparseGraph`` holds a symmetric adjacency ``A`` in CSR form without
self-loops. ``normalize_gcn`` builds ``P = D^{-1/2} (A + I) D^{-1/2}`` and
``propagate`` applies one of the supported operators to a dense feature matrix
as a sequence of sparse-dense products (``P^m`` is never materialized).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ShapeError

PROP_KINDS = ("gcn_first_order", "gcn_power", "ssgc_average")
SSGC_DEFAULT_M = 16
SSGC_DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class SparseGraph:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @classmethod
    def from_edges(cls, n, src, dst, weights=None, symmetrize=True) -> "SparseGraph":
        """Build from an edge list. Duplicates are merged (first weight wins)."""
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if weights is None:
            weights = np.ones(src.shape[0])
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if not (src.shape == dst.shape == weights.shape):
            raise ShapeError("src, dst and weights must have equal length")
        if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise ContractError(f"edge endpoint outside [0, {n})")
        if np.any(weights < 0):
            raise ContractError("negative edge weight")
        keep = src != dst
        src, dst, weights = src[keep], dst[keep], weights[keep]
        if symmetrize:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            weights = np.concatenate([weights, weights])
        key = src * n + dst
        _, first = np.unique(key, return_index=True)
        src, dst, weights = src[first], dst[first], weights[first]
        order = np.lexsort((dst, src))
        src, dst, weights = src[order], dst[order], weights[order]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, src + 1, 1)
        row_ptr = np.cumsum(row_ptr)
        return cls(int(n), row_ptr, dst.astype(np.int64), weights)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def edges(self):
        """Yield ``(i, j, w)`` for each stored entry with ``i < j``."""
        for i in range(self.n):
            for jj in range(self.row_ptr[i], self.row_ptr[i + 1]):
                j = int(self.col_idx[jj])
                if i < j:
                    yield i, j, float(self.values[jj])

    def validate(self) -> None:
        n = self.n
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (n + 1,) or rp[0] != 0 or np.any(np.diff(rp) < 0):
            raise ContractError("row_ptr must have length n+1, start at 0 and be non-decreasing")
        if ci.shape[0] != rp[-1] or self.values.shape[0] != rp[-1]:
            raise ContractError("col_idx/values length must equal row_ptr[n]")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise ContractError("col_idx entry outside [0, n)")
        for i in range(n):
            row = ci[rp[i]:rp[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ContractError(f"row {i} is not strictly ascending")
        a = self.to_scipy()
        if (a != a.T).nnz:
            raise ContractError("adjacency is not symmetric")

    def block(self, rows: np.ndarray) -> np.ndarray:
        """Dense ``A[rows][:, rows]`` in O(sum of row degrees * log m), independent of n."""
        rows = np.asarray(rows, dtype=np.int64)
        m = rows.shape[0]
        out = np.zeros((m, m))
        if m == 0:
            return out
        starts = self.row_ptr[rows]
        counts = self.row_ptr[rows + 1] - starts
        total = int(counts.sum())
        if total == 0:
            return out
        owner = np.repeat(np.arange(m), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pos = np.repeat(starts, counts) + offs
        cols = self.col_idx[pos]
        vals = self.values[pos]
        order = np.argsort(rows, kind="stable")
        sorted_rows = rows[order]
        loc = np.searchsorted(sorted_rows, cols)
        loc = np.minimum(loc, m - 1)
        hit = sorted_rows[loc] == cols
        out[owner[hit], order[loc[hit]]] = vals[hit]
        return out


@dataclass(frozen=True, eq=False)
class Propagator:
    """A normalized propagation matrix together with the operator applied by ``propagate``."""

    matrix: sp.csr_matrix
    kind: str = "gcn_first_order"
    m: int = 1
    alpha: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def with_kind(self, kind: str, m: int | None = None, alpha: float | None = None) -> "Propagator":
        if kind not in PROP_KINDS:
            raise ContractError(f"unknown propagation kind {kind!r}")
        if kind == "gcn_first_order":
            m, alpha = 1, 0.0
        elif kind == "gcn_power":
            m, alpha = (m if m is not None else 2), 0.0
        else:
            m = SSGC_DEFAULT_M if m is None else m
            alpha = SSGC_DEFAULT_ALPHA if alpha is None else alpha
        if m < 1:
            raise ContractError("propagation order m must be >= 1")
        return Propagator(self.matrix, kind, int(m), float(alpha))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize_gcn(g: SparseGraph) -> Propagator:
    if g.values.size and np.any(g.values < 0):
        raise ContractError("negative edge weight")
    a = g.to_scipy() + sp.identity(g.n, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    data = a.data * inv_sqrt[rows] * inv_sqrt[a.indices]
    p = sp.csr_matrix((data, a.indices.copy(), a.indptr.copy()), shape=a.shape)
    return Propagator(p)


def _check_x(p: Propagator, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != p.n:
        raise ShapeError(f"features must have shape ({p.n}, d), got {x.shape}")
    return x


def _apply(p: Propagator, x: np.ndarray, last) -> np.ndarray:
    """Run the operator. ``last`` performs the final sparse product, full or row-sliced,
    and ``last.rows_of`` selects the matching rows of an intermediate full matrix."""
    mat = p.matrix
    if p.kind == "gcn_first_order":
        return last(x)
    if p.kind == "gcn_power":
        y = x
        for _ in range(p.m - 1):
            y = mat @ y
        return last(y)
    # ssgc_average: (1/m) sum_{l=1..m} ((1 - alpha) P^l X + alpha X)
    xr = last.rows_of(x)
    acc = np.zeros_like(xr)
    y = x
    for step in range(1, p.m + 1):
        if step < p.m:
            y = mat @ y
            term = last.rows_of(y)
        else:
            term = last(y)
        acc += (1.0 - p.alpha) * term + p.alpha * xr
    return acc / p.m


class _Full:
    def __init__(self, mat):
        self.mat = mat

    def __call__(self, y):
        return self.mat @ y

    @staticmethod
    def rows_of(y):
        return y


class _Rows:
    def __init__(self, mat, rows):
        self.sub = mat[rows]
        self.rows = rows

    def __call__(self, y):
        return self.sub @ y

    def rows_of(self, y):
        return y[self.rows]


def propagate(p: Propagator, x) -> np.ndarray:
    x = _check_x(p, x)
    return np.ascontiguousarray(_apply(p, x, _Full(p.matrix)))


def spmm_rows(p: Propagator, x, rows) -> np.ndarray:
    """Rows ``rows`` of ``propagate(p, x)``; bit-identical to slicing the full product."""
    x = _check_x(p, x)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    if rows.size == 0:
        return np.zeros((0, x.shape[1]))
    if rows.min() < 0 or rows.max() >= p.n:
        raise ContractError(f"row index outside [0, {p.n})")
    return np.ascontiguousarray(_apply(p, x, _Rows(p.matrix, rows)))
