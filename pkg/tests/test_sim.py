import numpy as np
import pytest
import scipy.sparse as sp

from daic.algorithms import AlgorithmSpec, LinearSystem, build_kernel
from daic.graph import Graph
from daic.sim import (SimError, oracle_components, oracle_dijkstra, oracle_path_counts, oracle_simrank,
                      oracle_solve, path_sum, paths_into, round_robin_sequence, run_sequence,
                      sync_sequence, traditional_iterate)

from _graphs import random_graph, symmetric_graph

CHAIN = Graph.from_adjacency({1: [(2, 2.5)], 2: [(3, 1.0)], 3: []}, weighted=True)
CYCLE = Graph.from_adjacency({1: [(2, 1.0)], 2: [(3, 1.0)], 3: [(1, 1.0)]})


def test_path_sum_examples():
    g = Graph.from_adjacency({1: [(2, 1.0)], 2: []})
    k = build_kernel(AlgorithmSpec("pagerank"), g)
    assert path_sum(g, k, 2, 0) == pytest.approx(0.2)
    assert path_sum(g, k, 2, 1) == pytest.approx(0.36)


def test_path_sum_guard():
    g = random_graph(9, 0)
    k = build_kernel(AlgorithmSpec("pagerank"), g)
    with pytest.raises(SimError):
        path_sum(g, k, 1, 2)
    small = random_graph(5, 0)
    with pytest.raises(SimError):
        path_sum(small, build_kernel(AlgorithmSpec("pagerank"), small), 1, 6)


def test_paths_into_counts_walks():
    g = random_graph(6, 3, mu=0.8)
    A = np.zeros((6, 6), dtype=int)
    for s, t, _ in g.edges():
        A[s - 1, t - 1] = 1
    for length in range(4):
        walks = np.linalg.matrix_power(A, length).sum(axis=0)
        assert [len(paths_into(g, j, length)) for j in range(6)] == list(walks)


def test_sync_sequence_reproduces_supersteps():
    g = random_graph(30, 2)
    k = build_kernel(AlgorithmSpec("pagerank"), g)
    from daic.engine import EngineConfig, run
    res = run(g, k, EngineConfig(mode="sync", max_updates=10**9, terminator="quiescence"))
    steps = res.stats.supersteps
    assert np.allclose(run_sequence(g, k, sync_sequence(g, steps)), res.values(k), rtol=0, atol=1e-12)


def test_empty_subsets_change_nothing():
    k = build_kernel(AlgorithmSpec("pagerank"), CYCLE)
    assert np.array_equal(run_sequence(CYCLE, k, [[], []]), k.v0)
    with pytest.raises(SimError):
        run_sequence(CYCLE, k, [[9]])


def test_round_robin_passes_lead_sync():
    g = random_graph(40, 4)
    k = build_kernel(AlgorithmSpec("pagerank"), g)
    for passes in (1, 3, 6):
        rr = run_sequence(g, k, round_robin_sequence(g, passes))
        sync = run_sequence(g, k, sync_sequence(g, passes))
        assert rr.sum() >= sync.sum() - 1e-12


def test_traditional_iterate_matches_power_iteration():
    g = random_graph(50, 5)
    k = build_kernel(AlgorithmSpec("pagerank"), g)
    outdeg = g.out_degree
    P = np.zeros((50, 50))
    for s, t, _ in g.edges():
        P[t - 1, s - 1] = 0.8 / outdeg[s - 1]
    r = np.zeros(50)
    for step in range(1, 30):
        r = 0.2 + P @ r
        assert np.abs(traditional_iterate(g, k, step) - r).sum() < 1e-12
    assert np.array_equal(traditional_iterate(g, k, 0), k.v0)


def test_traditional_iterate_sssp_is_bellman_ford():
    g = random_graph(60, 6, weighted=True)
    k = build_kernel(AlgorithmSpec("sssp", {"source": 1}), g)
    dist = np.full(60, np.inf)
    dist[0] = 0.0
    for _ in range(60):
        for s, t, w in g.edges():
            dist[t - 1] = min(dist[t - 1], dist[s - 1] + w)
    assert np.array_equal(traditional_iterate(g, k, 60), dist)


def test_oracle_examples():
    assert list(oracle_dijkstra(CHAIN, 1)) == [0.0, 2.5, 3.5]
    s = LinearSystem(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), [3.0, 3.0])
    assert np.allclose(oracle_solve(AlgorithmSpec("jacobi", {"system": s}), None), [1, 1])
    assert np.allclose(oracle_solve(AlgorithmSpec("pagerank"), CYCLE), 1.0)


def test_component_oracle():
    g = Graph.from_adjacency({1: [(2, 1)], 2: [(1, 1)], 3: [(4, 1)], 4: [(3, 1)]}, vertices=[5])
    assert list(oracle_components(g)) == [2, 2, 4, 4, 5]
    with pytest.raises(SimError):
        oracle_components(CHAIN)


def test_dijkstra_against_floyd_warshall():
    g = random_graph(40, 8, weighted=True)
    D = np.full((40, 40), np.inf)
    np.fill_diagonal(D, 0)
    for s, t, w in g.edges():
        D[s - 1, t - 1] = w
    for m in range(40):
        D = np.minimum(D, D[:, [m]] + D[[m], :])
    assert np.allclose(oracle_dijkstra(g, 1), D[0], rtol=1e-12)


def test_path_count_oracle():
    g = Graph.from_adjacency({1: [(2, 1), (3, 1)], 2: [(4, 1)], 3: [(4, 1)], 4: []})
    assert list(oracle_path_counts(g)) == [1, 2, 2, 5]
    with pytest.raises(SimError):
        oracle_path_counts(CYCLE)


def test_simrank_oracle_properties():
    g = random_graph(10, 2)
    S = oracle_simrank(g, 0.8)
    assert np.allclose(S, S.T) and np.all(np.diag(S) == 1)
    assert np.all((S >= 0) & (S <= 1))


def test_oracle_guards():
    with pytest.raises(SimError):
        oracle_solve(AlgorithmSpec("simrank"), random_graph(70, 1))
    with pytest.raises(SimError):
        oracle_solve(AlgorithmSpec("pagerank"), random_graph(70, 1), max_vertices=10)


def test_starvation_free_priority_singletons():
    """Argmax scheduling one vertex at a time leaves no pending delta at quiescence."""
    g = random_graph(30, 9, weighted=True)
    k = build_kernel(AlgorithmSpec("sssp", {"source": 1}), g)
    from daic.engine import make_entry, receive, update
    entries = {int(v): make_entry(k, int(v)) for v in g.vids}
    for _ in range(10_000):
        pending = [e for e in entries.values() if k.changes(np.array(e.v), np.array(e.dv))]
        if not pending:
            break
        best = max(pending, key=lambda e: (e.priority, -e.vid))
        for m in update(best, k):
            receive(entries[m.dest], m.value, k)
    assert all(e.dv == np.inf or e.dv >= e.v for e in entries.values())
    got = np.array([entries[int(v)].v for v in g.vids])
    assert np.array_equal(got, oracle_dijkstra(g, 1))
