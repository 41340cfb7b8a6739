import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from daic.algorithms import (ALGORITHMS, AlgorithmError, AlgorithmSpec, LinearSystem, authority_graph,
                             build_kernel, build_nodepair_graph, jacobi_to_graph, read_linear_system)
from daic.graph import Graph
from daic.kernel import check_conditions
from daic.sim import oracle_solve, traditional_solve

from _graphs import dominant_system, layered_dag, random_graph, symmetric_graph


def kernel_for(name, seed=0, n=50, exact=False):
    params = {"damping": 0.8} if name == "rooted_pagerank" else {}
    if name == "jacobi":
        params["system"] = dominant_system(n, seed)
        return AlgorithmSpec(name, params), None
    if name == "connected_components":
        return AlgorithmSpec(name, params), symmetric_graph(n, seed)
    if name == "simrank":
        return AlgorithmSpec(name, params), random_graph(12, seed)
    if name == "counting":
        return AlgorithmSpec(name, params), layered_dag(5, n // 5, 2, seed)
    return AlgorithmSpec(name, params), random_graph(n, seed, weighted=name in ("sssp", "adsorption"))


@pytest.mark.parametrize("name", ALGORITHMS)
def test_every_kernel_satisfies_the_conditions(name):
    spec, graph = kernel_for(name)
    report = check_conditions(build_kernel(spec, graph), samples=10_000, tol=1e-9)
    assert report.ok, report.render()


def test_pagerank_initialisation():
    k = build_kernel(AlgorithmSpec("pagerank", {"d": 0.8}), random_graph(10, 1))
    assert np.allclose(k.dv1, 0.2) and np.all(k.v0 == 0)


def test_sssp_initialisation():
    g = random_graph(10, 1, weighted=True)
    k = build_kernel(AlgorithmSpec("sssp", {"source": 4}), g)
    assert np.all(np.isinf(k.v0))
    assert k.dv1[3] == 0 and np.all(np.isinf(np.delete(k.dv1, 3)))


def test_components_initialisation():
    g = random_graph(10, 1)
    k = build_kernel(AlgorithmSpec("connected_components"), g)
    assert np.all(k.v0 == -1) and list(k.dv1) == list(range(1, 11))
    assert k.zero == -np.inf


@pytest.mark.parametrize("spec", [
    ("pagerank", {"d": 1.0}), ("simrank", {"C": 0}), ("katz", {"beta": -1}),
    ("sssp", {"source": 999}), ("adsorption", {"labels": 0}), ("nope", {}),
    ("jacobi", {}), ("rooted_pagerank", {"damping": 1.5})])
def test_invalid_specs(spec):
    with pytest.raises(AlgorithmError):
        build_kernel(AlgorithmSpec(*spec), random_graph(10, 0))


def test_exact_mode_only_for_additive():
    with pytest.raises(AlgorithmError):
        build_kernel(AlgorithmSpec("sssp"), random_graph(5, 0, weighted=True), exact=True)


def test_nodepair_graph_examples():
    g2, index = build_nodepair_graph(Graph.from_adjacency({1: [(2, 1.0)], 2: []}))
    assert g2.n == 4 and list(g2.edges()) == [(index[1, 1], index[2, 2], 1.0)]
    assert index == {(1, 1): 1, (1, 2): 2, (2, 1): 3, (2, 2): 4}
    empty, _ = build_nodepair_graph(Graph.from_adjacency({}, vertices=[1, 2, 3]))
    assert empty.n == 9 and empty.m == 0


def test_nodepair_graph_matches_brute_force():
    g = random_graph(7, 5)
    g2, index = build_nodepair_graph(g)
    E = {(s, t) for s, t, _ in g.edges()}
    V = [int(v) for v in g.vids]
    want = {(index[a, b], index[c, d]) for a, b, c, d in itertools.product(V, repeat=4)
            if (a, c) in E and (b, d) in E}
    assert {(s, t) for s, t, _ in g2.edges()} == want
    cycle = Graph.from_adjacency({1: [(2, 1)], 2: [(3, 1)], 3: [(1, 1)]})
    c2, _ = build_nodepair_graph(cycle)
    assert (c2.n, c2.m) == (9, 9)


def test_nodepair_guard():
    with pytest.raises(AlgorithmError):
        build_nodepair_graph(random_graph(30, 0), max_vertices=20)


def test_jacobi_graph_example():
    sys2 = LinearSystem(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), [3.0, 3.0])
    g = jacobi_to_graph(sys2)
    assert sorted(g.edges()) == [(1, 2, -0.5), (2, 1, -0.5)]
    k = build_kernel(AlgorithmSpec("jacobi", {"system": sys2}), None)
    assert list(k.dv1) == [1.5, 1.5]
    assert np.allclose(traditional_solve(k), [1.0, 1.0])


def test_jacobi_diagonal_and_zero_pivot():
    diag = LinearSystem(sp.diags([2.0, 4.0]), [2.0, 2.0])
    k = build_kernel(AlgorithmSpec("jacobi", {"system": diag}), None)
    assert k.graph.m == 0 and list(k.dv1) == [1.0, 0.5]
    with pytest.raises(AlgorithmError, match="row 2"):
        jacobi_to_graph(LinearSystem(sp.csr_matrix([[1.0, 1.0], [1.0, 0.0]]), [1, 1]))


def test_read_linear_system(tmp_path):
    (tmp_path / "A.txt").write_text("% comment\n1 1 2\n1 2 1\n2 1 1\n2 2 2\n")
    (tmp_path / "b.txt").write_text("3\n3\n")
    s = read_linear_system(tmp_path / "A.txt", tmp_path / "b.txt")
    assert np.array_equal(s.A.toarray(), [[2, 1], [1, 2]]) and list(s.b) == [3, 3]
    (tmp_path / "bad.txt").write_text("1 1\n")
    with pytest.raises(AlgorithmError, match=":1:"):
        read_linear_system(tmp_path / "bad.txt", tmp_path / "b.txt")


def test_jacobi_random_system_converges():
    s = dominant_system(10, 3)
    k = build_kernel(AlgorithmSpec("jacobi", {"system": s}), None)
    assert np.allclose(traditional_solve(k), np.linalg.solve(s.A.toarray(), s.b), atol=1e-10)


def test_pagerank_mass_is_conserved_without_dangling_vertices():
    n = 200
    rng = np.random.default_rng(1)
    src = np.repeat(np.arange(n), 3)
    dst = (src + rng.integers(1, n, len(src))) % n
    pairs = np.unique(np.stack([src, dst], 1), axis=0)
    g = Graph.from_edges(n, pairs[:, 0], pairs[:, 1])
    r = traditional_solve(build_kernel(AlgorithmSpec("pagerank"), g))
    assert r.sum() == pytest.approx(n, rel=1e-3)


def test_authority_graph_is_wtw():
    g = random_graph(20, 4)
    W = np.zeros((20, 20))
    for s, t, _ in g.edges():
        W[s - 1, t - 1] = 1
    A = np.zeros((20, 20))
    for s, t, w in authority_graph(g).edges():
        A[s - 1, t - 1] = w
    assert np.array_equal(A, W.T @ W)


def test_components_on_directed_graphs_take_backward_reachable_maximum():
    g = Graph.from_adjacency({3: [(1, 1.0)], 1: [(2, 1.0)], 2: []})
    k = build_kernel(AlgorithmSpec("connected_components"), g)
    assert list(traditional_solve(k)) == [3.0, 3.0, 3.0]
    k = build_kernel(AlgorithmSpec("connected_components"), g.reverse())
    assert list(traditional_solve(k)) == [2.0, 2.0, 3.0]


@pytest.mark.parametrize("name", [a for a in ALGORITHMS])
def test_traditional_iteration_matches_oracle(name):
    spec, graph = kernel_for(name, seed=7, n=40)
    k = build_kernel(spec, graph)
    got = np.asarray(traditional_solve(k), dtype=float)
    want = np.asarray(oracle_solve(spec, graph), dtype=float)
    if k.settles:
        assert np.array_equal(got, want)
    else:
        assert np.allclose(got, want, rtol=1e-9, atol=1e-10)


def test_rooted_pagerank_literal_form_diverges_on_cycles():
    cycle = Graph.from_adjacency({1: [(2, 1)], 2: [(3, 1)], 3: [(1, 1)]})
    k = build_kernel(AlgorithmSpec("rooted_pagerank"), cycle)
    assert k.params["damping"] == 1.0
    v = k.v0
    for _ in range(30):
        v = k.step(v)
    assert v.sum() > 9
