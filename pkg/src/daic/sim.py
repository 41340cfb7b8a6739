"""Single-threaded reference executors and independent ground-truth solvers.

``run_sequence`` replays an explicit update sequence entry by entry with the
engine's ``receive``/``update`` operations. ``path_sum`` evaluates the closed
form of synchronous accumulation by enumerating paths. The ``oracle_*``
solvers share nothing with the kernels beyond the input graph.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .algorithms import (AlgorithmError, AlgorithmSpec, LinearSystem, build_kernel)
from .engine import make_entry, receive, update
from .graph import Graph
from .kernel import Kernel

PATH_SUM_MAX_VERTICES = 8
PATH_SUM_MAX_K = 5


class SimError(ValueError):
    pass


UpdateSequence = Sequence[Iterable[int]]


def sync_sequence(graph: Graph, k: int) -> list[list[int]]:
    return [list(map(int, graph.vids)) for _ in range(k)]


def round_robin_sequence(graph: Graph, passes: int) -> list[list[int]]:
    """Singleton subsets, ``passes`` sweeps in ascending vid order."""
    return [[int(v)] for _ in range(passes) for v in graph.vids]


def run_sequence(graph: Graph, kernel: Kernel, seq: UpdateSequence, record_every: int | None = None):
    """Replay ``seq`` from (v0, dv1); messages from S_t are delivered before S_{t+1}.

    Returns the v array (dense order). With ``record_every=r`` also returns
    the v arrays observed after every r-th subset.
    """
    if graph is not None and graph is not kernel.graph and graph != kernel.graph:
        raise SimError("kernel was built for a different graph")
    g = kernel.graph
    entries = {int(vid): make_entry(kernel, int(vid)) for vid in g.vids}
    trace = []

    def current():
        out = kernel.zeros(g.n)
        for i, vid in enumerate(g.vids):
            out[i] = entries[int(vid)].v
        return out

    for t, subset in enumerate(seq, 1):
        outbox = []
        for vid in subset:
            if vid not in entries:
                raise SimError(f"unknown vertex {vid} in update sequence")
            outbox.extend(update(entries[vid], kernel))
        for msg in outbox:
            receive(entries[msg.dest], msg.value, kernel)
        if record_every and t % record_every == 0:
            trace.append(current())
    final = current()
    return (final, trace) if record_every else final


def paths_into(graph: Graph, j: int, length: int) -> list[list[int]]:
    """All directed paths (as dense-index edge lists) of exactly ``length`` hops ending at j."""
    rev_ptr = np.concatenate([[0], np.cumsum(np.bincount(graph.targets, minlength=graph.n))])
    rev_edges = np.argsort(graph.targets, kind="stable")
    out = []

    def walk(node, hops, suffix):
        if hops == 0:
            out.append(suffix)
            return
        for e in rev_edges[rev_ptr[node]:rev_ptr[node + 1]]:
            walk(graph.sources[e], hops - 1, [int(e)] + suffix)

    walk(j, length, [])
    return out


def path_sum(graph: Graph, kernel: Kernel, j: int, k: int):
    """v_j after k+1 synchronous steps, from the closed form over paths of length ≤ k.

    Each path i0 -> ... -> j contributes g along its edges applied to dv1[i0].
    """
    g = kernel.graph
    if graph is not None and graph is not g and graph != g:
        raise SimError("kernel was built for a different graph")
    if g.n > PATH_SUM_MAX_VERTICES or k > PATH_SUM_MAX_K or k < 0:
        raise SimError(f"path_sum is limited to {PATH_SUM_MAX_VERTICES} vertices and k <= {PATH_SUM_MAX_K}")
    jj = g.index_of(j)
    total = kernel.op(kernel.v0[jj], kernel.dv1[jj])
    for length in range(1, k + 1):
        for path in paths_into(g, jj, length):
            x = kernel.dv1[g.sources[path[0]]]
            for e in path:
                x = kernel.edge_value(e, x)
            total = kernel.op(total, x)
    return total


def traditional_iterate(graph: Graph, kernel: Kernel, k: int) -> np.ndarray:
    if graph is not None and graph is not kernel.graph and graph != kernel.graph:
        raise SimError("kernel was built for a different graph")
    v = kernel.v0.copy()
    for _ in range(k):
        v = kernel.step(v)
    return v


def traditional_solve(kernel: Kernel, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Iterate the update function until the largest change is below ``tol`` (exact for min/max)."""
    v = kernel.v0.copy()
    for _ in range(max_iter):
        nxt = kernel.step(v)
        if kernel.settles:
            if np.array_equal(nxt, v):
                return nxt
        else:
            if np.max(np.abs(nxt - v), initial=0.0) <= tol * max(1.0, np.max(np.abs(nxt), initial=0.0)):
                return nxt
        v = nxt
    raise SimError(f"traditional iteration did not converge in {max_iter} steps")


# oracles -----------------------------------------------------------------------

def oracle_dijkstra(graph: Graph, source: int) -> np.ndarray:
    dist = np.full(graph.n, np.inf)
    s = graph.index_of(source)
    dist[s] = 0.0
    heap = [(0.0, s)]
    done = np.zeros(graph.n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(graph.indptr[u], graph.indptr[u + 1]):
            t = graph.targets[e]
            nd = d + graph.weights[e]
            if nd < dist[t]:
                dist[t] = nd
                heapq.heappush(heap, (nd, t))
    return dist


def oracle_components(graph: Graph) -> np.ndarray:
    """Union-find; each vertex gets the largest vid of its component. Symmetric graphs only."""
    fwd = set(zip(graph.sources.tolist(), graph.targets.tolist()))
    if any((t, s) not in fwd for s, t in fwd):
        raise SimError("component oracle needs a symmetric graph")
    parent = list(range(graph.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, t in fwd:
        rs, rt = find(s), find(t)
        if rs != rt:
            parent[rs] = rt
    best = {}
    for i in range(graph.n):
        r = find(i)
        best[r] = max(best.get(r, -1), int(graph.vids[i]))
    return np.array([float(best[find(i)]) for i in range(graph.n)])


def _fixed_point(M: sp.spmatrix, b: np.ndarray, tol=1e-15, max_iter=100_000) -> np.ndarray:
    """Solve x = b + M x by plain iteration (M must be a contraction in practice)."""
    x = b.copy()
    for _ in range(max_iter):
        nxt = b + M @ x
        if not np.all(np.isfinite(nxt)):
            raise SimError("oracle iteration diverged")
        if np.max(np.abs(nxt - x), initial=0.0) <= tol * max(1.0, np.max(np.abs(nxt), initial=0.0)):
            return nxt
        x = nxt
    raise SimError("oracle iteration did not converge")


def _adjacency(graph: Graph, weights=None) -> sp.csr_matrix:
    """W[i, j] = weight of edge i -> j."""
    w = graph.weights if weights is None else weights
    return sp.csr_matrix((w, (graph.sources, graph.targets)), shape=(graph.n, graph.n))


def oracle_pagerank(graph: Graph, d: float) -> np.ndarray:
    """Power iteration of R = (1-d)·1 + d·Pᵀ R with P row-normalized by out-degree."""
    outdeg = np.bincount(graph.sources, minlength=graph.n)
    W = _adjacency(graph, np.ones(graph.m))
    scale = np.divide(1.0, outdeg, out=np.zeros(graph.n), where=outdeg > 0)
    P = sp.diags(scale) @ W
    return _fixed_point((d * P.T).tocsr(), np.full(graph.n, 1.0 - d))


def oracle_simrank(graph: Graph, C: float, tol=1e-15, max_iter=10_000) -> np.ndarray:
    """Naive SimRank: s(a,a)=1, s(a,b) = C/(|I(a)||I(b)|) Σ s(c,d) over in-neighbours."""
    n = graph.n
    ins = [[] for _ in range(n)]
    for s, t in zip(graph.sources, graph.targets):
        ins[t].append(s)
    S = np.eye(n)
    for _ in range(max_iter):
        nxt = np.eye(n)
        for a in range(n):
            for b in range(n):
                if a == b or not ins[a] or not ins[b]:
                    continue
                nxt[a, b] = C * S[np.ix_(ins[a], ins[b])].sum() / (len(ins[a]) * len(ins[b]))
        if np.max(np.abs(nxt - S)) <= tol:
            return nxt
        S = nxt
    raise SimError("simrank oracle did not converge")


def oracle_path_counts(graph: Graph, inject=None) -> np.ndarray:
    """Topological-order DP: v_j = inject_j + Σ_{i->j} v_i. DAGs only; exact Python ints."""
    inj = [1] * graph.n if inject is None else [int(x) for x in inject]
    indeg = np.bincount(graph.targets, minlength=graph.n).tolist()
    count = list(inj)
    ready = deque(i for i in range(graph.n) if indeg[i] == 0)
    seen = 0
    while ready:
        u = ready.popleft()
        seen += 1
        for e in range(graph.indptr[u], graph.indptr[u + 1]):
            t = int(graph.targets[e])
            count[t] += count[u]
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    if seen != graph.n:
        raise SimError("path-count oracle needs a DAG")
    return np.array(count, dtype=object)


def oracle_solve(spec: AlgorithmSpec, graph: Graph | None, max_vertices: int = 200_000) -> np.ndarray:
    """Ground truth in the dense order of the graph the kernel runs on."""
    name, p = spec.name, spec.params
    if name == "jacobi":
        system: LinearSystem = p["system"]
        if system.n > 5000:
            raise SimError("direct solve is limited to 5000 unknowns")
        return np.linalg.solve(system.A.toarray(), system.b)
    if graph is None:
        raise SimError(f"{name} needs a graph")
    if graph.n > max_vertices:
        raise SimError(f"oracle is limited to {max_vertices} vertices")
    if name == "sssp":
        return oracle_dijkstra(graph, p["source"])
    if name == "connected_components":
        return oracle_components(graph)
    if name == "pagerank":
        return oracle_pagerank(graph, p["d"])
    if name == "counting":
        return oracle_path_counts(graph, p.get("inject")).astype(float)
    if name == "simrank":
        if graph.n > 60:
            raise SimError("simrank oracle is limited to 60 vertices")
        return oracle_simrank(graph, p["C"]).ravel()
    if name == "katz":
        e = np.zeros(graph.n)
        e[graph.index_of(p["source"])] = 1.0
        A = _adjacency(graph, np.ones(graph.m))
        return _fixed_point((p["beta"] * A.T).tocsr(), e)
    if name == "rooted_pagerank":
        # P[j, i]: probability of stepping j -> i
        out_w = np.bincount(graph.sources, weights=graph.weights, minlength=graph.n)
        P = sp.diags(np.divide(1.0, out_w, out=np.zeros(graph.n), where=out_w > 0)) @ _adjacency(graph)
        e = np.zeros(graph.n)
        e[graph.index_of(p["source"])] = 1.0
        return _fixed_point((p["damping"] * P).tocsr(), e)
    if name == "hits_authority":
        W = _adjacency(graph, np.ones(graph.m))
        A = (W.T @ W).tocsr()
        d = p["d"]
        if d == "auto":
            d = build_kernel(AlgorithmSpec(name, dict(p)), graph).params["d"]
        return _fixed_point((d * A).tocsr(), np.ones(graph.n))
    if name == "adsorption":
        L = int(p["labels"])
        W = _adjacency(graph)
        in_w = np.asarray(W.sum(axis=0)).ravel()
        # column-normalize: M[j, i] = p_cont · w_ij / Σ_k w_kj
        M = p["p_cont"] * (W @ sp.diags(np.divide(1.0, in_w, out=np.zeros(graph.n), where=in_w > 0))).T
        inj = np.zeros((graph.n, L))
        inj[np.arange(graph.n), graph.vids % L] = p["p_inj"]
        return np.column_stack([_fixed_point(M.tocsr(), inj[:, c]) for c in range(L)])
    raise AlgorithmError(f"no oracle for {name}")
