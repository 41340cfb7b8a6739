"""Directed graphs: text format, hash partitioning and log-normal generation.

Text format, one vertex per line::

    vid<TAB>t1:w1 t2:w2 ...     (weighted)
    vid<TAB>t1 t2 ...           (unweighted, weights default to 1.0)

Generated graphs use numpy's PCG64 bit generator (``np.random.default_rng``),
so a seed reproduces the same edge list on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class Graph:
    """Immutable directed graph in CSR form.

    Vertices are identified by arbitrary non-negative vids; internally they are
    addressed by their rank in ``vids`` (the dense index). Edge ``e`` runs from
    ``sources[e]`` to ``targets[e]`` with ``weights[e]``.
    """

    def __init__(self, vids, indptr, targets, weights, weighted: bool = False):
        self.vids = np.asarray(vids, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        # an edgeless graph has no weights to speak of; keeps text round-trips exact
        self.weighted = bool(weighted) and len(self.targets) > 0
        if len(self.indptr) != len(self.vids) + 1:
            raise GraphError("indptr must have |V|+1 entries")
        if len(self.targets) != len(self.weights) or self.indptr[-1] != len(self.targets):
            raise GraphError("edge arrays are inconsistent")
        if np.any(np.diff(self.vids) <= 0):
            raise GraphError("vids must be strictly increasing")
        if len(self.vids) and self.vids[0] < 0:
            raise GraphError("vids must be non-negative")
        if len(self.targets) and (self.targets.min() < 0 or self.targets.max() >= len(self.vids)):
            raise GraphError("edge target outside the vertex set")
        if not np.all(np.isfinite(self.weights)):
            raise GraphError("edge weights must be finite")
        for arr in (self.vids, self.indptr, self.targets, self.weights):
            arr.flags.writeable = False
        self._sources = None
        self._in_degree = None

    # construction -----------------------------------------------------

    @classmethod
    def from_adjacency(cls, adjacency: dict[int, Sequence[tuple[int, float]]],
                       weighted: bool = False, vertices: Iterable[int] = ()) -> "Graph":
        ids = set(adjacency)
        ids.update(vertices)
        for edges in adjacency.values():
            ids.update(t for t, _ in edges)
        vids = np.array(sorted(ids), dtype=np.int64)
        pos = {int(v): i for i, v in enumerate(vids)}
        indptr = [0]
        targets: list[int] = []
        weights: list[float] = []
        for vid in vids:
            seen = set()
            for t, w in adjacency.get(int(vid), ()):
                if t in seen:
                    raise GraphError(f"duplicate edge {vid}->{t}")
                seen.add(t)
                targets.append(pos[t])
                weights.append(float(w))
            indptr.append(len(targets))
        return cls(vids, indptr, targets, weights, weighted)

    @classmethod
    def from_edges(cls, n: int, src, dst, weights=None, weighted: bool | None = None,
                   first_vid: int = 1) -> "Graph":
        """Build from dense 0-based edge arrays over vids ``first_vid..first_vid+n-1``.

        Edges keep their given order within each source.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if weights is None:
            w = np.ones(len(src))
            weighted = bool(weighted)
        else:
            w = np.asarray(weights, dtype=np.float64)
            weighted = True if weighted is None else weighted
        order = np.argsort(src, kind="stable")
        counts = np.bincount(src, minlength=n) if len(src) else np.zeros(n, dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        g = cls(np.arange(first_vid, first_vid + n), indptr, dst[order], w[order], weighted)
        _check_no_duplicates(g)
        return g

    # queries ----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.vids)

    @property
    def m(self) -> int:
        return len(self.targets)

    @property
    def sources(self) -> np.ndarray:
        if self._sources is None:
            s = np.repeat(np.arange(self.n), np.diff(self.indptr))
            s.flags.writeable = False
            self._sources = s
        return self._sources

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def in_degree(self) -> np.ndarray:
        if self._in_degree is None:
            d = np.bincount(self.targets, minlength=self.n)
            d.flags.writeable = False
            self._in_degree = d
        return self._in_degree

    def index_of(self, vid: int) -> int:
        i = int(np.searchsorted(self.vids, vid))
        if i >= self.n or self.vids[i] != vid:
            raise KeyError(vid)
        return i

    def indices_of(self, vids) -> np.ndarray:
        vids = np.asarray(vids, dtype=np.int64)
        idx = np.searchsorted(self.vids, vids)
        bad = (idx >= self.n) | (self.vids[np.minimum(idx, self.n - 1)] != vids) if self.n else np.ones(len(vids), bool)
        if np.any(bad):
            raise KeyError(int(vids[np.argmax(bad)]))
        return idx

    def __contains__(self, vid) -> bool:
        try:
            self.index_of(vid)
        except KeyError:
            return False
        return True

    def out_edges(self, vid: int) -> list[tuple[int, float]]:
        i = self.index_of(vid)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(self.vids[t]), float(w)) for t, w in zip(self.targets[lo:hi], self.weights[lo:hi])]

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for s, t, w in zip(self.sources, self.targets, self.weights):
            yield int(self.vids[s]), int(self.vids[t]), float(w)

    def reverse(self, weights=None) -> "Graph":
        """Graph with every edge flipped; ``weights`` overrides per original edge."""
        w = self.weights if weights is None else np.asarray(weights, dtype=np.float64)
        order = np.lexsort((self.sources, self.targets))
        counts = np.bincount(self.targets, minlength=self.n)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return Graph(self.vids, indptr, self.sources[order], w[order], self.weighted or weights is not None)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.weighted == other.weighted
                and np.array_equal(self.vids, other.vids)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.targets, other.targets)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        kind = "weighted" if self.weighted else "unweighted"
        return f"<Graph {kind} |V|={self.n} |E|={self.m}>"


def _check_no_duplicates(g: Graph) -> None:
    if g.m == 0:
        return
    key = g.sources * g.n + g.targets
    if len(np.unique(key)) != g.m:
        raise GraphError("duplicate (source, target) edge")


# text format ----------------------------------------------------------

def parse_line(line: str, lineno: int | None = None) -> tuple[int, list[tuple[int, float]]]:
    line = line.rstrip("\r\n")
    head, _, rest = line.partition("\t")
    vid = _parse_int(head.strip(), lineno, "vertex id")
    adjacency = []
    for tok in rest.split():
        t, sep, w = tok.partition(":")
        target = _parse_int(t, lineno, "target id")
        weight = _parse_float(w, lineno) if sep else 1.0
        adjacency.append((target, weight))
    return vid, adjacency


def _parse_int(text: str, lineno, what: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(lineno, f"malformed {what} {text!r}") from None
    if value < 0:
        raise ParseError(lineno, f"negative {what} {text!r}")
    return value


def _parse_float(text: str, lineno) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(lineno, f"malformed weight {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, f"non-finite weight {text!r}")
    return value


def parse_lines(lines: Iterable[str]) -> Graph:
    adjacency: dict[int, list[tuple[int, float]]] = {}
    weighted = False
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        vid, adj = parse_line(line, lineno)
        if vid in adjacency:
            raise ParseError(lineno, f"vertex {vid} listed twice")
        targets = [t for t, _ in adj]
        if len(set(targets)) != len(targets):
            raise ParseError(lineno, f"duplicate edge from vertex {vid}")
        weighted = weighted or ":" in line.partition("\t")[2]
        adjacency[vid] = adj
    return Graph.from_adjacency(adjacency, weighted=weighted)


def read_graph(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


def render_lines(graph: Graph) -> Iterator[str]:
    for i, vid in enumerate(graph.vids):
        lo, hi = graph.indptr[i], graph.indptr[i + 1]
        ts = graph.vids[graph.targets[lo:hi]]
        if graph.weighted:
            toks = [f"{t}:{float(w)!r}" for t, w in zip(ts, graph.weights[lo:hi])]
        else:
            toks = [str(t) for t in ts]
        yield f"{vid}\t{' '.join(toks)}"


def write_graph(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in render_lines(graph):
            fh.write(line + "\n")


# partitioning ---------------------------------------------------------

def partition(vid: int, shards: int) -> int:
    if shards < 1:
        raise ValueError(f"shard count must be >= 1, got {shards}")
    return int(vid) % shards


# generation -----------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    node_count: int
    degree_mu: float = -0.5
    degree_sigma: float = 2.3
    weight_mu: float | None = None
    weight_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.degree_sigma <= 0:
            raise ValueError("degree_sigma must be > 0")
        if (self.weight_mu is None) != (self.weight_sigma is None):
            raise ValueError("weight_mu and weight_sigma go together")
        if self.weight_sigma is not None and self.weight_sigma <= 0:
            raise ValueError("weight_sigma must be > 0")

    @property
    def weighted(self) -> bool:
        return self.weight_mu is not None


def draw_in_degrees(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    raw = rng.lognormal(config.degree_mu, config.degree_sigma, size=config.node_count)
    return np.clip(np.floor(raw + 0.5), 0, config.node_count - 1).astype(np.int64)


def generate(config: GeneratorConfig) -> Graph:
    """Random graph whose in-degrees follow a rounded, clamped log-normal law.

    Each node's in-neighbours are drawn uniformly without replacement from the
    other nodes, so there are no self-loops and no parallel edges. Vids run
    from 1 to ``node_count``.
    """
    n = config.node_count
    rng = np.random.default_rng(config.seed)
    indeg = draw_in_degrees(config, rng)
    src_parts, dst_parts = [], []
    for j in np.flatnonzero(indeg):
        picks = rng.choice(n - 1, size=int(indeg[j]), replace=False)
        picks[picks >= j] += 1
        src_parts.append(picks)
        dst_parts.append(np.full(len(picks), j, dtype=np.int64))
    src = np.concatenate(src_parts) if src_parts else np.empty(0, np.int64)
    dst = np.concatenate(dst_parts) if dst_parts else np.empty(0, np.int64)
    weights = None
    if config.weighted:
        weights = rng.lognormal(config.weight_mu, config.weight_sigma, size=len(src))
    return Graph.from_edges(n, src, dst, weights, weighted=config.weighted)
