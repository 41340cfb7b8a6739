"""Kernels for the shipped algorithms and the graph transforms some of them need."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .kernel import DECREASING, INCREASING, Kernel

ALGORITHMS = ("pagerank", "sssp", "connected_components", "adsorption", "hits_authority",
              "katz", "jacobi", "simrank", "rooted_pagerank", "counting")

# which kernels propagate with ⊕ = +
ADDITIVE = frozenset(ALGORITHMS) - {"sssp", "connected_components"}

DEFAULT_PARAMS = {
    "pagerank": {"d": 0.8},
    "sssp": {"source": 1},
    "connected_components": {},
    "adsorption": {"labels": 2, "p_cont": 0.7, "p_inj": 0.3},
    "hits_authority": {"d": "auto"},
    "katz": {"beta": 0.05, "source": 1},
    "jacobi": {},
    "simrank": {"C": 0.8, "max_vertices": 2000},
    "rooted_pagerank": {"source": 1, "damping": 1.0},
    "counting": {},
}


class AlgorithmError(ValueError):
    pass


@dataclass
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise AlgorithmError(f"unknown algorithm {self.name!r}")
        self.params = {**DEFAULT_PARAMS[self.name], **self.params}

    def validate(self, graph: Graph | None) -> None:
        p, name = self.params, self.name
        if name == "pagerank" and not 0 < p["d"] < 1:
            raise AlgorithmError("pagerank needs 0 < d < 1")
        if name == "simrank" and not 0 < p["C"] < 1:
            raise AlgorithmError("simrank needs 0 < C < 1")
        if name == "katz" and not p["beta"] > 0:
            raise AlgorithmError("katz needs beta > 0")
        if name == "adsorption":
            if int(p["labels"]) < 1:
                raise AlgorithmError("adsorption needs at least one label")
            if not (0 <= p["p_cont"] < 1 and 0 <= p["p_inj"] <= 1):
                raise AlgorithmError("adsorption probabilities out of range")
        if name == "hits_authority" and p["d"] != "auto" and not p["d"] > 0:
            raise AlgorithmError("hits_authority needs d > 0")
        if name == "rooted_pagerank" and not 0 < p["damping"] <= 1:
            raise AlgorithmError("rooted_pagerank needs 0 < damping <= 1")
        if name == "jacobi":
            if not isinstance(p.get("system"), LinearSystem):
                raise AlgorithmError("jacobi needs a LinearSystem under params['system']")
            return
        if graph is None:
            raise AlgorithmError(f"{name} needs an input graph")
        if "source" in p and p["source"] not in graph:
            raise AlgorithmError(f"source vertex {p['source']} not in graph")


@dataclass
class LinearSystem:
    """A·x = b with A as a scipy sparse matrix; unknown i is vertex i+1."""
    A: sp.csr_matrix
    b: np.ndarray

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.b.shape != (n,):
            raise AlgorithmError("A must be square and match b")

    @property
    def n(self) -> int:
        return self.A.shape[0]


def read_linear_system(matrix_path, rhs_path) -> LinearSystem:
    """``row col value`` triples (1-based) plus one b entry per line."""
    rows, cols, vals = [], [], []
    with open(matrix_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("%")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise AlgorithmError(f"{matrix_path}:{lineno}: expected 'row col value'")
            rows.append(int(parts[0]) - 1)
            cols.append(int(parts[1]) - 1)
            vals.append(float(parts[2]))
    with open(rhs_path, encoding="utf-8") as fh:
        b = np.array([float(x) for x in fh.read().split()])
    n = len(b)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return LinearSystem(A, b)


# graph transforms -----------------------------------------------------------

def jacobi_to_graph(system: LinearSystem) -> Graph:
    """One vertex per unknown; edge i->j weighted -A_ji/A_jj for each A_ji != 0, i != j."""
    A = system.A.tocoo()
    diag = system.A.diagonal()
    zero_rows = np.flatnonzero(diag == 0)
    if len(zero_rows):
        raise AlgorithmError(f"zero diagonal entry in row {zero_rows[0] + 1}")
    keep = (A.row != A.col) & (A.data != 0)
    j, i, a = A.row[keep], A.col[keep], A.data[keep]
    order = np.lexsort((j, i))
    return Graph.from_edges(system.n, i[order], j[order], (-a / diag[j])[order], weighted=True)


def build_nodepair_graph(graph: Graph, max_vertices: int = 2000):
    """Node-pair graph: edge (a,b)->(c,d) whenever a->c and b->d.

    Pair (a, b) of dense indices gets vid ``a*n + b + 1``, i.e. ``(a-1)*n + b``
    for graphs whose vids are 1..n.
    """
    n = graph.n
    if n > max_vertices:
        raise AlgorithmError(f"node-pair graph of {n} vertices exceeds the guard of {max_vertices}")
    s, t = graph.sources, graph.targets
    m = graph.m
    a = np.repeat(s, m)
    c = np.repeat(t, m)
    b = np.tile(s, m)
    d = np.tile(t, m)
    src, dst = a * n + b, c * n + d
    order = np.lexsort((dst, src))
    g2 = Graph.from_edges(n * n, src[order], dst[order], first_vid=1)
    index = {(int(graph.vids[x]), int(graph.vids[y])): x * n + y + 1 for x in range(n) for y in range(n)}
    return g2, index


def authority_graph(graph: Graph) -> Graph:
    """Graph of A = WᵀW (co-citation counts); self-loops carry in-degrees."""
    n = graph.n
    W = sp.csr_matrix((np.ones(graph.m), (graph.sources, graph.targets)), shape=(n, n))
    A = (W.T @ W).tocoo()
    order = np.lexsort((A.col, A.row))
    g = Graph(graph.vids, np.concatenate([[0], np.cumsum(np.bincount(A.row, minlength=n))]),
              A.col[order], A.data[order], weighted=True)
    return g


def transition_reverse_graph(graph: Graph) -> Graph:
    """Reverse of ``graph`` whose edge i->j carries P(j, i) = w_ji / Σ_out w_j."""
    out_weight = np.bincount(graph.sources, weights=graph.weights, minlength=graph.n)
    prob = graph.weights / out_weight[graph.sources]
    return graph.reverse(prob)


def spectral_radius(graph: Graph, iterations: int = 500) -> float:
    n = graph.n
    if graph.m == 0:
        return 0.0
    M = sp.csr_matrix((np.abs(graph.weights), (graph.targets, graph.sources)), shape=(n, n))
    x = np.ones(n)
    rho = 0.0
    for _ in range(iterations):
        y = M @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        rho, x = norm / np.linalg.norm(x), y / norm
    return float(rho)


# kernels --------------------------------------------------------------------

def _num(x, exact: bool):
    return Fraction(str(x)) if exact else float(x)


def _array(values, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(np.shape(values), dtype=object)
        flat = np.asarray(values, dtype=float).ravel()
        out.ravel()[:] = [Fraction(x) for x in flat]
        return out
    return np.asarray(values, dtype=float).copy()


def _linear(coef: np.ndarray, value_shape=()):
    if value_shape:
        def g(edges, x):
            return coef[edges][:, None] * x
    else:
        def g(edges, x):
            return coef[edges] * x
    return g


def _indicator(graph: Graph, vid, exact: bool) -> np.ndarray:
    out = np.zeros(graph.n)
    out[graph.index_of(vid)] = 1.0
    return _array(out, exact)


def build_kernel(spec: AlgorithmSpec, graph: Graph | None, exact: bool = False) -> Kernel:
    """Kernel for ``spec`` over ``graph``; ``kernel.graph`` is the graph to run on.

    ``exact`` switches additive kernels to Fraction arithmetic.
    """
    spec.validate(graph)
    name, p = spec.name, spec.params
    if exact and name not in ADDITIVE:
        raise AlgorithmError(f"{name} has no exact mode")
    params = {k: v for k, v in p.items() if k != "system"}
    return _BUILDERS[name](graph, p, exact, params)


def _pagerank(graph, p, exact, params):
    d = _num(p["d"], exact)
    outdeg = graph.out_degree
    if exact:
        coef = np.array([d / int(k) for k in outdeg[graph.sources]], dtype=object)
    else:
        coef = d / outdeg[graph.sources]
    base = np.full(graph.n, 1 - d, dtype=object if exact else float)
    return Kernel("pagerank", graph, np.add, 0, _array(np.zeros(graph.n), exact), base, base.copy(),
                  _linear(coef), params=params)


def _sssp(graph, p, exact, params):
    w = graph.weights

    def g(edges, x):
        return x + w[edges]

    dv1 = np.full(graph.n, np.inf)
    dv1[graph.index_of(p["source"])] = 0.0
    return Kernel("sssp", graph, np.minimum, np.inf, np.full(graph.n, np.inf), dv1, dv1.copy(), g,
                  direction=DECREASING, settles=True, ignore_infinite=True, params=params)


def _components(graph, p, exact, params):
    def g(edges, x):
        return np.array(x, dtype=float, copy=True)

    ids = graph.vids.astype(float)
    return Kernel("connected_components", graph, np.maximum, -np.inf, np.full(graph.n, -1.0), ids,
                  ids.copy(), g, settles=True, params=params)


def _adsorption(graph, p, exact, params):
    labels = int(p["labels"])
    p_cont = _num(p["p_cont"], exact)
    p_inj = _num(p["p_inj"], exact)
    in_weight = np.bincount(graph.targets, weights=graph.weights, minlength=graph.n)
    if exact:
        w = [Fraction(x) for x in graph.weights]
        totals = [Fraction(0)] * graph.n
        for t, x in zip(graph.targets, w):
            totals[t] += x
        coef = np.array([p_cont * x / totals[t] for t, x in zip(graph.targets, w)], dtype=object)
    else:
        coef = p_cont * graph.weights / in_weight[graph.targets]
    injected = np.zeros((graph.n, labels))
    injected[np.arange(graph.n), graph.vids % labels] = 1.0
    dv1 = _array(injected, exact) * p_inj
    return Kernel("adsorption", graph, np.add, 0, _array(np.zeros((graph.n, labels)), exact), dv1,
                  dv1.copy(), _linear(coef, (labels,)), value_shape=(labels,), params=params)


def _hits(graph, p, exact, params):
    auth = authority_graph(graph)
    d = p["d"]
    if d == "auto":
        rho = spectral_radius(auth)
        d = 0.5 / rho if rho > 0 else 0.5
        params["d"] = d
    d = _num(d, exact)
    coef = _array(auth.weights, exact) * d
    ones = _array(np.ones(graph.n), exact)
    return Kernel("hits_authority", auth, np.add, 0, _array(np.zeros(graph.n), exact), ones,
                  ones.copy(), _linear(coef), params=params)


def _katz(graph, p, exact, params):
    beta = _num(p["beta"], exact)
    coef = _array(np.ones(graph.m), exact) * beta
    dv1 = _indicator(graph, p["source"], exact)
    return Kernel("katz", graph, np.add, 0, _array(np.zeros(graph.n), exact), dv1, dv1.copy(),
                  _linear(coef), params=params)


def _jacobi(graph, p, exact, params):
    system = p["system"]
    jgraph = jacobi_to_graph(system)
    if graph is not None and graph != jgraph:
        raise AlgorithmError("graph does not match the linear system")
    coef = _array(jgraph.weights, exact)
    dv1 = _array(system.b / system.A.diagonal(), exact)
    return Kernel("jacobi", jgraph, np.add, 0, _array(np.zeros(jgraph.n), exact), dv1, dv1.copy(),
                  _linear(coef), params=params)


def _simrank(graph, p, exact, params):
    C = _num(p["C"], exact)
    n = graph.n
    g2, _ = build_nodepair_graph(graph, int(p["max_vertices"]))
    indeg = graph.in_degree
    a, b = np.divmod(g2.targets, n)
    # edges into diagonal pairs carry nothing: s(a, a) stays pinned at 1
    if exact:
        coef = np.array([Fraction(0) if x == y else C / (int(indeg[x]) * int(indeg[y]))
                         for x, y in zip(a, b)], dtype=object)
    else:
        with np.errstate(divide="ignore"):
            coef = np.where(a == b, 0.0, C / (indeg[a] * indeg[b]))
    pa, pb = np.divmod(np.arange(n * n), n)
    diag = _array((pa == pb).astype(float), exact)
    return Kernel("simrank", g2, np.add, 0, _array(np.zeros(n * n), exact), diag, diag.copy(),
                  _linear(coef), params=params)


def _rooted_pagerank(graph, p, exact, params):
    rev = transition_reverse_graph(graph)
    damping = _num(p["damping"], exact)
    coef = _array(rev.weights, exact) * damping
    dv1 = _indicator(rev, p["source"], exact)
    return Kernel("rooted_pagerank", rev, np.add, 0, _array(np.zeros(graph.n), exact), dv1,
                  dv1.copy(), _linear(coef), params=params)


def _counting(graph, p, exact, params):
    inject = p.get("inject")
    dv1 = np.ones(graph.n) if inject is None else np.asarray(inject, dtype=float)
    dv1 = _array(dv1, exact)

    def g(edges, x):
        return x.copy()

    return Kernel("counting", graph, np.add, 0, _array(np.zeros(graph.n), exact), dv1, dv1.copy(), g,
                  params={k: v for k, v in params.items() if k != "inject"})


_BUILDERS = {
    "pagerank": _pagerank,
    "sssp": _sssp,
    "connected_components": _components,
    "adsorption": _adsorption,
    "hits_authority": _hits,
    "katz": _katz,
    "jacobi": _jacobi,
    "simrank": _simrank,
    "rooted_pagerank": _rooted_pagerank,
    "counting": _counting,
}
