"""Correlation graph over land nodes and its self-looped normalization."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class WildfireGraph:
    """Undirected weighted graph; ``adjacency`` is a symmetric CSR matrix with zero diagonal."""

    adjacency: sp.csr_matrix
    threshold: float

    @property
    def node_count(self) -> int:
        return int(self.adjacency.shape[0])

    @property
    def edge_count(self) -> int:
        return int(sp.triu(self.adjacency, k=1).nnz)

    def edges(self):
        """Upper-triangle edges as ``(i, j, weight)`` arrays sorted by ``(i, j)``."""
        upper = sp.triu(self.adjacency, k=1).tocsr()
        upper.sort_indices()
        coo = upper.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(np.float64)

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @classmethod
    def from_edges(cls, n: int, rows, cols, weights, threshold: float = 0.0) -> "WildfireGraph":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(rows == cols):
            raise ValueError("self-loops are not allowed in the adjacency")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        upper = sp.coo_matrix((weights, (lo, hi)), shape=(n, n)).tocsr()
        return cls(_symmetrize(upper), float(threshold))

    @classmethod
    def from_dense(cls, dense, threshold: float = 0.0) -> "WildfireGraph":
        dense = np.asarray(dense, dtype=np.float64)
        if not np.array_equal(dense, dense.T):
            raise ValueError("adjacency must be symmetric")
        upper = sp.csr_matrix(np.triu(dense, k=1))
        return cls(_symmetrize(upper), float(threshold))


def _symmetrize(upper: sp.spmatrix) -> sp.csr_matrix:
    full = (upper + upper.T).tocsr()
    full.eliminate_zeros()
    full.sort_indices()
    return full


def pearson_r(x, y) -> float:
    """Sample Pearson correlation; 0 when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"series must be 1-D of equal length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    nx, ny = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.clip((xc @ yc) / (nx * ny), -1.0, 1.0))


def _standardize(series: np.ndarray) -> np.ndarray:
    """Rows centred and scaled to unit norm; constant rows become zero."""
    centred = series - series.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centred, centred))
    out = np.zeros_like(centred)
    ok = norms > 0
    out[ok] = centred[ok] / norms[ok, None]
    return out


def iter_correlation_blocks(series, block: int = 1024):
    """Yield ``(row_start, col_start, r_block)`` over the upper block triangle.

    Memory stays at O(block^2 + N * time).
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[1] < 2:
        raise ValueError(f"expected (N, time>=2) series, got {series.shape}")
    z = _standardize(series)
    n = z.shape[0]
    for i0 in range(0, n, block):
        zi = z[i0:i0 + block]
        for j0 in range(i0, n, block):
            r = np.clip(zi @ z[j0:j0 + block].T, -1.0, 1.0)
            yield i0, j0, r


def correlation_matrix(series, block: int = 1024) -> np.ndarray:
    """Dense ``N x N`` Pearson matrix with unit diagonal for non-constant rows."""
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    out = np.zeros((n, n))
    for i0, j0, r in iter_correlation_blocks(series, block):
        out[i0:i0 + r.shape[0], j0:j0 + r.shape[1]] = r
        out[j0:j0 + r.shape[1], i0:i0 + r.shape[0]] = r.T
    return out


def pairwise_correlations(series, block: int = 1024) -> np.ndarray:
    """Pearson r for every pair ``i < j`` in row-major pair order."""
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    rows = [[] for _ in range(n)]
    for i0, j0, r in iter_correlation_blocks(series, block):
        for a in range(r.shape[0]):
            i = i0 + a
            lo = max(i + 1 - j0, 0)
            if lo < r.shape[1]:
                rows[i].append(r[a, lo:])
    return np.concatenate([np.concatenate(parts) for parts in rows if parts])


def empirical_quantile(values, q: float) -> float:
    """Linear-interpolation quantile of a sorted copy of ``values``."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("no values")
    h = (v.size - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


def compute_threshold(series, q: float = 0.10, block: int = 1024) -> float:
    """Cut-off ``tau``: the ``q``-quantile of Pearson r over all node pairs ``i < j``.

    ``series`` is ``(N, time)``, already concatenated over the training members.
    """
    if not 0 < q < 1:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] < 2:
        raise ValueError("need at least two node series")
    return empirical_quantile(pairwise_correlations(series, block), q)


def build_adjacency(series, tau: float, block: int = 1024) -> WildfireGraph:
    """Keep pair ``(i, j)`` with weight r when ``r > tau`` (strict) and ``i != j``.

    Non-positive correlations never become edges, even when ``tau < 0``;
    weights must stay in (0, 1] for the degree normalization.
    """
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    cut = max(float(tau), 0.0)
    rows, cols, vals = [], [], []
    for i0, j0, r in iter_correlation_blocks(series, block):
        a, b = np.nonzero(r > cut)
        i, j = a + i0, b + j0
        keep = i < j
        rows.append(i[keep])
        cols.append(j[keep])
        vals.append(r[a[keep], b[keep]])
    if n == 0:
        return WildfireGraph(sp.csr_matrix((0, 0)), float(tau))
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return WildfireGraph(_symmetrize(upper), float(tau))


def normalize_adjacency(graph: WildfireGraph) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` where ``D`` holds the row sums of ``A + I``."""
    a_tilde = (graph.adjacency + sp.identity(graph.node_count, format="csr")).tocsr()
    d = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(d)
    coo = a_tilde.tocoo()
    # scale factor formed first so (i, j) and (j, i) round identically
    data = coo.data * (inv_sqrt[coo.row] * inv_sqrt[coo.col])
    out = sp.csr_matrix((data, (coo.row, coo.col)), shape=a_tilde.shape)
    out.sort_indices()
    return out


def identity_adjacency(n: int) -> sp.csr_matrix:
    """Adjacency that makes the graph layer a per-node transform."""
    return sp.identity(n, format="csr", dtype=np.float64)


def write_edgelist(path, graph: WildfireGraph) -> None:
    """Header ``N <count> tau <value>`` then one ``i j weight`` line per undirected edge."""
    rows, cols, w = graph.edges()
    lines = [f"N {graph.node_count} tau {graph.threshold:.17g}"]
    lines += [f"{i} {j} {x:.17g}" for i, j, x in zip(rows, cols, w)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> WildfireGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing graph file {path}")
    lines = path.read_text().splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[0] != "N" or head[2] != "tau":
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    n, tau = int(head[1]), float(head[3])
    rows, cols, w = [], [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        i, j, x = line.split()
        rows.append(int(i))
        cols.append(int(j))
        w.append(float(x))
    return WildfireGraph.from_edges(n, rows, cols, w, tau)
