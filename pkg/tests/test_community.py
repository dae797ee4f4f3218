import numpy as np
import pytest

from firegnn.community import (
    LouvainConfig, Partition, community_map, community_summary, louvain, modularity, read_partition,
    write_partition, write_summary,
)
from firegnn.graph import WildfireGraph
from firegnn.grid import LandMask, mask_snapshot


def set_partitions(n):
    """Every partition of range(n) as a restricted growth string."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield list(prefix)
            return
        for c in range(top + 2):
            yield from grow(prefix + [c], max(top, c))
    yield from grow([0], 0) if n else iter([[]])


def oracle_q(a, labels, gamma):
    n = len(labels)
    k = [sum(a[i][j] for j in range(n)) for i in range(n)]
    two_m = sum(k)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                total += a[i][j] - gamma * k[i] * k[j] / two_m
    return total / two_m


def best_q(a, gamma):
    return max(oracle_q(a, p, gamma) for p in set_partitions(len(a)))


def random_weighted(n, seed, p=0.6):
    rng = np.random.default_rng(seed)
    w = np.triu(rng.random((n, n)) * (rng.random((n, n)) < p), 1)
    return w + w.T


def barbell():
    a = np.zeros((8, 8))
    for block in (range(4), range(4, 8)):
        for i in block:
            for j in block:
                if i != j:
                    a[i, j] = 1.0
    a[3, 4] = a[4, 3] = 1.0
    return a


def triangles():
    a = np.zeros((6, 6))
    for i, j in ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)):
        a[i, j] = a[j, i] = 1.0
    return a


def test_set_partition_counts_are_bell_numbers():
    assert [sum(1 for _ in set_partitions(n)) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]


def test_two_node_examples():
    g = WildfireGraph.from_edges(2, [0], [1], [1.0])
    assert modularity(g, Partition([0, 0]), 1.0) == 0.0
    assert modularity(g, Partition([0, 1]), 1.0) == -0.5


def test_empty_graph_is_an_error():
    g = WildfireGraph.from_edges(3, [], [], [])
    with pytest.raises(ValueError):
        modularity(g, Partition([0, 1, 2]))
    with pytest.raises(ValueError):
        louvain(g)


def test_partition_size_mismatch():
    with pytest.raises(ValueError):
        modularity(WildfireGraph.from_dense(barbell()), Partition([0, 1]))


@pytest.mark.parametrize("n,seed", [(4, 0), (5, 1), (6, 2), (6, 3)])
@pytest.mark.parametrize("gamma", [1.0, 1.06, 0.5])
def test_modularity_matches_exhaustive_double_sum(n, seed, gamma):
    a = random_weighted(n, seed)
    g = WildfireGraph.from_dense(a)
    rows = a.tolist()
    for labels in set_partitions(n):
        assert abs(modularity(g, Partition(labels), gamma) - oracle_q(rows, labels, gamma)) < 1e-12


def test_barbell_recovers_the_two_cliques():
    a = barbell()
    part, q = louvain(WildfireGraph.from_dense(a), LouvainConfig(resolution=1.0))
    assert part.same_structure(Partition([0, 0, 0, 0, 1, 1, 1, 1]))
    assert abs(q - best_q(a.tolist(), 1.0)) < 1e-12


def test_disjoint_triangles_stay_apart():
    a = triangles()
    rows = a.tolist()
    two = oracle_q(rows, [0, 0, 0, 1, 1, 1], 1.0)
    merged = [p for p in set_partitions(6) if len(set(p[:3]) | set(p[3:])) < len(set(p[:3])) + len(set(p[3:]))]
    assert all(oracle_q(rows, p, 1.0) < two for p in merged)
    part, q = louvain(WildfireGraph.from_dense(a), LouvainConfig(resolution=1.0))
    assert part.same_structure(Partition([0, 0, 0, 1, 1, 1]))
    assert q == pytest.approx(two, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_louvain_never_beats_exhaustive_maximum(seed):
    n = 6 + seed % 3
    a = random_weighted(n, seed + 20, p=0.5)
    if not a.any():
        pytest.skip("no edges drawn")
    part, q = louvain(WildfireGraph.from_dense(a), LouvainConfig(seed=seed))
    best = best_q(a.tolist(), 1.06)
    assert q <= best + 1e-12
    assert abs(q - modularity(WildfireGraph.from_dense(a), part, 1.06)) < 1e-10
    print(f"n={n} louvain Q={q:.6f} optimum={best:.6f} gap={best - q:.2e}")


def test_returned_q_and_history_are_consistent():
    a = random_weighted(40, 5, p=0.15)
    g = WildfireGraph.from_dense(a)
    hist = []
    part, q = louvain(g, LouvainConfig(seed=3), history=hist)
    assert abs(q - modularity(g, part, 1.06)) < 1e-10
    assert len(hist) >= 2
    assert all(b >= a_ for a_, b in zip(hist, hist[1:]))
    assert abs(hist[-1] - q) < 1e-10


def test_louvain_deterministic_under_seed():
    g = WildfireGraph.from_dense(random_weighted(30, 7, p=0.2))
    a, qa = louvain(g, LouvainConfig(seed=9))
    b, qb = louvain(g, LouvainConfig(seed=9))
    assert np.array_equal(a.assignment, b.assignment) and qa == qb


def test_tiny_resolution_favours_single_community():
    a = random_weighted(7, 11, p=0.7)
    rows = a.tolist()
    gamma = 1e-9
    single = oracle_q(rows, [0] * 7, gamma)
    assert single >= best_q(rows, gamma) - 1e-12


def test_isolated_nodes_stay_singletons():
    a = np.zeros((5, 5))
    a[0, 1] = a[1, 0] = 1.0
    a[1, 2] = a[2, 1] = 1.0
    part, _ = louvain(WildfireGraph.from_dense(a), LouvainConfig(resolution=1.0))
    labels = part.assignment
    assert labels[3] != labels[4] and labels[3] not in labels[:3]


def test_community_map_round_trip_and_relabel():
    mask = LandMask.from_array(np.array([[1, 1, 0], [0, 1, 1]], dtype=bool))
    p = Partition([0, 1, 1, 2])
    img = community_map(p, mask)
    assert img[0, 2] == -1 and img[1, 0] == -1
    assert np.array_equal(mask_snapshot(img, mask), p.assignment)
    uniform = community_map(Partition([0, 0, 0, 0]), mask)
    assert set(uniform[mask.is_land].tolist()) == {0}
    swapped = Partition([2, 0, 0, 1])
    assert not np.array_equal(community_map(swapped, mask), img)
    assert swapped.same_structure(p)
    with pytest.raises(ValueError):
        community_map(Partition([0, 1]), mask)


def test_partition_and_summary_files(tmp_path):
    a = barbell()
    g = WildfireGraph.from_dense(a)
    part = Partition([0, 0, 0, 0, 1, 1, 1, 1])
    write_partition(tmp_path / "p.csv", part)
    assert np.array_equal(read_partition(tmp_path / "p.csv").assignment, part.assignment)
    rows = community_summary(g, part)
    assert rows == [(0, 4, 6.0), (1, 4, 6.0)]
    write_summary(tmp_path / "s.csv", rows)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "community,size,internal_weight"
