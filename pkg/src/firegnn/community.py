"""Weighted modularity and Louvain community detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import WildfireGraph
from .grid import LandMask, inflate


@dataclass(frozen=True, eq=False)
class Partition:
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1 or (a.size and a.min() < 0):
            raise ValueError("assignment must be a 1-D array of non-negative ids")
        object.__setattr__(self, "assignment", a)

    @property
    def community_count(self) -> int:
        return int(np.unique(self.assignment).size)

    @property
    def node_count(self) -> int:
        return int(self.assignment.size)

    def relabeled(self) -> "Partition":
        """Ids renumbered 0..k-1 by first appearance in node order."""
        return Partition(_relabel(self.assignment))

    def same_structure(self, other: "Partition") -> bool:
        return np.array_equal(_relabel(self.assignment), _relabel(other.assignment))


@dataclass(frozen=True)
class LouvainConfig:
    resolution: float = 1.06
    seed: int = 0
    min_gain: float = 1e-7

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")


def _relabel(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def _adjacency(g) -> sp.csr_matrix:
    return (g.adjacency if isinstance(g, WildfireGraph) else sp.csr_matrix(g)).tocsr()


def modularity(g, partition, resolution: float = 1.0) -> float:
    """``Q = (1/2m) sum_ij (A_ij - gamma k_i k_j / 2m) delta(c_i, c_j)`` on weighted edges."""
    adj = _adjacency(g)
    labels = partition.assignment if isinstance(partition, Partition) else np.asarray(partition)
    if labels.shape != (adj.shape[0],):
        raise ValueError(f"partition covers {labels.shape} nodes, graph has {adj.shape[0]}")
    k = np.asarray(adj.sum(axis=1)).ravel()
    two_m = float(k.sum())
    if two_m == 0:
        raise ValueError("modularity is undefined on a graph without edges")
    coo = adj.tocoo()
    internal = float(coo.data[labels[coo.row] == labels[coo.col]].sum())
    tot = np.bincount(_relabel(labels), weights=k)
    return internal / two_m - resolution * float(tot @ tot) / (two_m * two_m)


def _one_level(adj: sp.csr_matrix, resolution, min_gain, rng):
    """Local moving on one graph level. Returns ``(labels, moved_any)``."""
    n = adj.shape[0]
    k = np.asarray(adj.sum(axis=1)).ravel()
    m = k.sum() / 2.0
    comm = np.arange(n)
    tot = k.copy()
    indptr, indices, data = adj.indptr, adj.indices, adj.data
    moved_any = False
    while True:
        moved = False
        for i in rng.permutation(n):
            lo, hi = indptr[i], indptr[i + 1]
            nbrs, w = indices[lo:hi], data[lo:hi]
            off = nbrs != i
            nbrs, w = nbrs[off], w[off]
            ci = comm[i]
            tot[ci] -= k[i]
            if nbrs.size == 0:
                tot[ci] += k[i]
                continue
            cands, inv = np.unique(comm[nbrs], return_inverse=True)
            w_c = np.bincount(inv.ravel(), weights=w)
            scale = resolution * k[i] / (2.0 * m)
            own_pos = np.searchsorted(cands, ci)
            own_w = w_c[own_pos] if own_pos < cands.size and cands[own_pos] == ci else 0.0
            own = own_w - scale * tot[ci]
            gains = w_c - scale * tot[cands]
            best, best_gain = ci, own
            for c, gval in zip(cands, gains):
                # real modularity change of leaving ci for c is (gval - own) / m
                if c != ci and gval > best_gain and (gval - own) / m > min_gain:
                    best, best_gain = c, gval
            tot[best] += k[i]
            if best != ci:
                comm[i] = best
                moved = moved_any = True
        if not moved:
            break
    return _relabel(comm), moved_any


def _aggregate(adj: sp.csr_matrix, labels) -> sp.csr_matrix:
    n, nc = adj.shape[0], int(labels.max()) + 1
    member = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, nc))
    out = (member.T @ adj @ member).tocsr()
    out.sort_indices()
    return out


def louvain(g, config: LouvainConfig = LouvainConfig(), history: list | None = None):
    """Greedy modularity optimisation by local moves and graph aggregation.

    Nodes are visited in a seeded random order each pass; a node moves only
    when the modularity gain exceeds ``config.min_gain``. Returns
    ``(Partition, Q)``. If ``history`` is a list, the modularity of the
    singleton start and of every completed phase is appended to it.
    """
    adj = _adjacency(g)
    n = adj.shape[0]
    if adj.nnz == 0 or float(adj.sum()) == 0:
        raise ValueError("Louvain needs a graph with at least one edge")
    rng = np.random.default_rng(config.seed)
    node_comm = np.arange(n)
    level = adj
    if history is not None:
        history.append(modularity(adj, node_comm, config.resolution))
    while True:
        labels, moved = _one_level(level, config.resolution, config.min_gain, rng)
        if not moved:
            break
        node_comm = labels[node_comm]
        level = _aggregate(level, labels)
        if history is not None:
            history.append(modularity(adj, node_comm, config.resolution))
    part = Partition(_relabel(node_comm))
    return part, modularity(adj, part, config.resolution)


def community_map(partition: Partition, mask: LandMask, sentinel: int = -1) -> np.ndarray:
    """Community ids painted onto the grid; non-land cells hold ``sentinel``."""
    if partition.node_count != mask.node_count:
        raise ValueError(f"partition has {partition.node_count} nodes, mask has {mask.node_count}")
    return inflate(partition.assignment, mask, fill=sentinel)


def community_summary(g, partition: Partition):
    """Rows ``(community, size, internal_weight)``; each undirected edge counted once."""
    adj = _adjacency(g)
    labels = partition.assignment
    upper = sp.triu(adj, k=1).tocoo()
    same = labels[upper.row] == labels[upper.col]
    count = int(labels.max()) + 1 if labels.size else 0
    weight = np.bincount(labels[upper.row[same]], weights=upper.data[same], minlength=count)
    size = np.bincount(labels, minlength=count)
    return [(c, int(size[c]), float(weight[c])) for c in range(count)]


def write_partition(path, partition: Partition) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "community"])
        w.writerows(enumerate(partition.assignment.tolist()))


def read_partition(path) -> Partition:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    nodes = [int(r["node"]) for r in rows]
    if nodes != list(range(len(nodes))):
        raise ValueError(f"{path}: nodes must be listed 0..N-1 in order")
    return Partition(np.array([int(r["community"]) for r in rows], dtype=np.int64))


def write_summary(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["community", "size", "internal_weight"])
        for c, size, weight in rows:
            w.writerow([c, size, repr(weight)])
