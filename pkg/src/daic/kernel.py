"""The accumulative-kernel abstraction and its algebraic sanity checks.

A kernel bundles the edge function ``g``, the accumulation operator (a numpy
ufunc: ``add``, ``minimum`` or ``maximum``), its identity element, the initial
``v0``/``dv1`` arrays and the constant term ``c`` of the update function
``v_j = (⊕_i g_ij(v_i)) ⊕ c_j``. Values are numpy scalars or fixed-length
vectors (``value_shape``); exact kernels use object arrays of Fractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .graph import Graph

INCREASING = 1
DECREASING = -1


@dataclass(eq=False)
class Kernel:
    name: str
    graph: Graph
    op: np.ufunc
    zero: Any
    v0: np.ndarray
    dv1: np.ndarray
    const: np.ndarray
    # g(edge_ids, x) -> message values, one per edge; x has one row per edge
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    value_shape: tuple = ()
    direction: int = INCREASING
    # True when the fixed point is reached after finitely many updates (min/max)
    settles: bool = False
    ignore_infinite: bool = False
    params: dict = field(default_factory=dict)
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    @property
    def dtype(self):
        return self.v0.dtype

    @property
    def exact(self) -> bool:
        return self.v0.dtype == object

    def accumulate(self, a, b):
        return self.op(a, b)

    def zeros(self, n: int) -> np.ndarray:
        out = np.empty((n,) + self.value_shape, dtype=self.dtype)
        out[...] = self.zero
        return out

    def init(self, vid: int):
        i = self.graph.index_of(vid)
        return self.v0[i], self.dv1[i]

    def progress_of(self, values) -> np.ndarray:
        """Per-value real progress contribution (component sum for vectors)."""
        x = np.asarray(values)
        if self.value_shape:
            x = x.sum(axis=tuple(range(x.ndim - len(self.value_shape), x.ndim)))
        if self.ignore_infinite and x.dtype != object:
            x = np.where(np.isfinite(x), x, 0.0)
        return x

    def priority(self, v, dv) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return np.abs(self.progress_of(self.op(v, dv)) - self.progress_of(v))

    def is_zero(self, values) -> np.ndarray:
        z = np.asarray(values) == self.zero
        if self.value_shape:
            z = z.all(axis=tuple(range(z.ndim - len(self.value_shape), z.ndim)))
        return z

    def changes(self, v, dv) -> np.ndarray:
        """Mask of entries where accumulating ``dv`` would alter ``v``."""
        diff = self.op(v, dv) != v
        if self.value_shape:
            diff = diff.any(axis=tuple(range(diff.ndim - len(self.value_shape), diff.ndim)))
        return diff

    def edge_value(self, edge_id: int, x):
        """g for a single edge, on a single value."""
        arr = np.empty((1,) + self.value_shape, dtype=self.dtype)
        arr[0] = x
        return self.g(np.array([edge_id]), arr)[0]

    def spread(self, x, count: int) -> np.ndarray:
        out = np.empty((count,) + self.value_shape, dtype=self.dtype)
        out[...] = x
        return out

    def step(self, values: np.ndarray) -> np.ndarray:
        """One traditional lock-step application of the update function."""
        graph = self.graph
        out = np.array(self.const, copy=True)
        if graph.m:
            msgs = self.g(np.arange(graph.m), values[graph.sources])
            self.op.at(out, graph.targets, msgs)
        return out

    def sample_values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, size)
        shape = (size,) + self.value_shape
        if self.op is np.minimum:
            x = rng.uniform(0.0, 100.0, shape)
            x[rng.random(shape) < 0.1] = np.inf
        elif self.op is np.maximum:
            x = rng.integers(-1, 1000, shape).astype(float)
            x[rng.random(shape) < 0.1] = -np.inf
        else:
            x = rng.uniform(-10.0, 10.0, shape)
        return x


def priority_default(v, dv, kernel: Kernel) -> float:
    """|progress(v ⊕ dv) − progress(v)| for a single entry."""
    return float(np.asarray(kernel.priority(np.asarray(v), np.asarray(dv))).sum())


# condition checking -------------------------------------------------------

CONDITIONS = ("distributive", "commutative", "associative", "identity", "init")


@dataclass
class ConditionReport:
    distributive_ok: bool = True
    commutative_ok: bool = True
    associative_ok: bool = True
    identity_ok: bool = True
    init_ok: bool = True
    counterexamples: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(getattr(self, c + "_ok") for c in CONDITIONS)

    @property
    def counterexample(self) -> dict | None:
        for c in CONDITIONS:
            if c in self.counterexamples:
                return self.counterexamples[c]
        return None

    def fail(self, condition: str, witness: dict) -> None:
        setattr(self, condition + "_ok", False)
        self.counterexamples.setdefault(condition, witness)

    def render(self) -> str:
        lines = []
        for c in CONDITIONS:
            flag = getattr(self, c + "_ok")
            lines.append(f"{c:<13} {'ok' if flag else 'FAILED'}")
            if not flag:
                lines.append(f"  witness: {self.counterexamples[c]}")
        return "\n".join(lines)


def close(a, b, tol: float) -> np.ndarray:
    """Elementwise equality within ``tol``: absolute below 1, relative above."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.dtype == object or b.dtype == object:
        a = a.astype(float)
        b = b.astype(float)
    same = a == b
    with np.errstate(invalid="ignore", over="ignore"):
        diff = np.abs(a - b)
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        return same | ((diff <= tol * scale) & np.isfinite(diff))


def _rows_close(a, b, tol, nvalue_dims):
    ok = close(a, b, tol)
    if nvalue_dims:
        ok = ok.all(axis=tuple(range(1, 1 + nvalue_dims)))
    return ok


def _first_bad(ok: np.ndarray):
    bad = np.flatnonzero(~ok)
    return int(bad[0]) if len(bad) else None


def check_conditions(kernel: Kernel, graph: Graph | None = None, samples: int = 10_000,
                     tol: float = 1e-9, seed: int = 0) -> ConditionReport:
    """Sampled check of the four sufficient conditions; never raises."""
    if samples < 1 or tol < 0:
        raise ValueError("samples must be >= 1 and tol >= 0")
    if graph is not None and graph is not kernel.graph and graph != kernel.graph:
        raise ValueError("kernel was built for a different graph")
    graph = kernel.graph
    rng = np.random.default_rng(seed)
    report = ConditionReport()
    op, k = kernel.op, len(kernel.value_shape)
    x = kernel.sample_values(rng, samples)
    y = kernel.sample_values(rng, samples)
    z = kernel.sample_values(rng, samples)

    def item(a, i):
        return np.asarray(a[i]).tolist()

    if graph.m:
        edges = rng.integers(0, graph.m, samples)
        with np.errstate(all="ignore"):
            lhs = kernel.g(edges, op(x, y))
            rhs = op(kernel.g(edges, x), kernel.g(edges, y))
        i = _first_bad(_rows_close(lhs, rhs, tol, k))
        if i is not None:
            s, t = graph.sources[edges[i]], graph.targets[edges[i]]
            report.fail("distributive", {
                "edge": (int(graph.vids[s]), int(graph.vids[t])),
                "x": item(x, i), "y": item(y, i),
                "g(x+y)": item(lhs, i), "g(x)+g(y)": item(rhs, i)})

    with np.errstate(all="ignore"):
        xy, yx = op(x, y), op(y, x)
        left, right = op(op(x, y), z), op(x, op(y, z))
        ident = op(x, kernel.zeros(samples))
    i = _first_bad(_rows_close(xy, yx, tol, k))
    if i is not None:
        report.fail("commutative", {"x": item(x, i), "y": item(y, i),
                                    "x+y": item(xy, i), "y+x": item(yx, i)})
    i = _first_bad(_rows_close(left, right, tol, k))
    if i is not None:
        report.fail("associative", {"x": item(x, i), "y": item(y, i), "z": item(z, i),
                                    "(x+y)+z": item(left, i), "x+(y+z)": item(right, i)})
    i = _first_bad(_rows_close(ident, x, tol, k))
    if i is not None:
        report.fail("identity", {"x": item(x, i), "x+0": item(ident, i)})

    if graph.n:
        with np.errstate(all="ignore"):
            first = op(kernel.v0, kernel.dv1)
            stepped = kernel.step(kernel.v0)
        i = _first_bad(_rows_close(first, stepped, tol, k))
        if i is not None:
            report.fail("init", {"vid": int(graph.vids[i]), "v0+dv1": item(first, i),
                                 "f(v0)": item(stepped, i)})
    return report
