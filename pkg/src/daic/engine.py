"""Synchronous and asynchronous execution of accumulative kernels.

Every worker owns the state table of the vertices ``partition(vid) == index``
and plays two roles: *receive* (fold incoming delta messages into ``dv``) and
*update* (snapshot-and-reset ``dv``, fold it into ``v``, send ``g(dv)`` along
out-edges). Both roles touch the table only while holding the worker's lock,
so a snapshot-reset can never lose a concurrently received message.

Scheduling:

* ``sync``      supersteps separated by a global barrier.
* ``async_rr``  each worker sweeps its table in chunks, round-robin.
* ``async_pri`` each worker repeatedly extracts its highest-priority entries.

With ``inline=True`` the workers are stepped cooperatively in one thread,
which makes asynchronous runs bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from . import checkpoint as ckpt
from .graph import Graph, partition
from .kernel import Kernel, priority_default
from .transport import DEFAULT_FLUSH_CAP, DeltaMessage, MessageBatch, MsgTable

log = logging.getLogger(__name__)

MODES = ("sync", "async_rr", "async_pri")
TERMINATORS = ("auto", "progress", "quiescence", "reference")


class EngineError(RuntimeError):
    pass


@dataclass
class EngineConfig:
    mode: str = "async_pri"
    workers: int = 1
    queue_fraction: float = 0.01
    flush_timeout: float = 0.005
    flush_cap: int = DEFAULT_FLUSH_CAP
    term_check_interval: float = 0.1
    terminator: str = "auto"
    # None means 0.001·N for the reference distance, 1e-6·N for progress deltas
    term_threshold: float | None = None
    # entries whose priority is at or below this are treated as settled
    epsilon: float = 0.0
    checkpoint_interval: float | None = None
    checkpoint_dir: Any = None
    # None means 10⁴·|V|
    max_updates: int | None = None
    max_seconds: float | None = None
    inline: bool = False
    seed: int = 0
    reference: np.ndarray | None = None
    # test hook: abandon the run shortly after this many checkpoints
    crash_after_checkpoints: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise EngineError(f"unknown mode {self.mode!r}")
        if self.workers < 1:
            raise EngineError("workers must be >= 1")
        if not 0 < self.queue_fraction <= 1:
            raise EngineError("queue_fraction must be in (0, 1]")
        if self.terminator not in TERMINATORS:
            raise EngineError(f"unknown terminator {self.terminator!r}")
        if self.terminator == "reference" and self.reference is None:
            raise EngineError("reference terminator needs a reference vector")
        if self.checkpoint_interval is not None and self.checkpoint_dir is None:
            raise EngineError("checkpointing needs a checkpoint_dir")


@dataclass
class RunStats:
    wall_time: float = 0.0
    updates: int = 0
    messages: int = 0
    messages_aggregated_away: int = 0
    messages_transferred: int = 0
    # (elapsed seconds, updates, messages, progress metric)
    samples: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    supersteps: int = 0
    checkpoints: int = 0
    routing_errors: int = 0
    crashed: bool = False

    def csv_lines(self):
        yield "elapsed_ms,updates,messages,progress"
        for t, u, m, p in self.samples:
            yield f"{t * 1000:.3f},{u},{m},{p!r}"


# single-entry operations ----------------------------------------------------

@dataclass
class EdgeData:
    edge_ids: np.ndarray
    targets: np.ndarray  # target vids


@dataclass
class StateEntry:
    vid: int
    v: Any
    dv: Any
    priority: float
    data: EdgeData


def make_entry(kernel: Kernel, vid: int) -> StateEntry:
    g = kernel.graph
    i = g.index_of(vid)
    lo, hi = g.indptr[i], g.indptr[i + 1]
    v0, dv1 = kernel.v0[i], kernel.dv1[i]
    data = EdgeData(np.arange(lo, hi), g.vids[g.targets[lo:hi]])
    return StateEntry(int(vid), _own(v0), _own(dv1), priority_default(v0, dv1, kernel), data)


def _own(x):
    return x.copy() if isinstance(x, np.ndarray) else x


def receive(entry: StateEntry, m, kernel: Kernel) -> None:
    entry.dv = kernel.op(entry.dv, m)
    entry.priority = priority_default(entry.v, entry.dv, kernel)


def update(entry: StateEntry, kernel: Kernel) -> list[DeltaMessage]:
    snap, entry.dv = entry.dv, _own(kernel.zeros(1)[0])
    entry.v = kernel.op(entry.v, snap)
    entry.priority = priority_default(entry.v, entry.dv, kernel)
    edges = entry.data.edge_ids
    if not len(edges) or np.all(kernel.is_zero(np.asarray(snap))):
        return []
    msgs = kernel.g(edges, kernel.spread(snap, len(edges)))
    keep = ~kernel.is_zero(msgs)
    return [DeltaMessage(int(t), m) for t, m in zip(entry.data.targets[keep], msgs[keep])]


# state tables ----------------------------------------------------------------

class StateTable:
    """Columnar five-field table: vid, v, dv, priority, data (adjacency slice)."""

    def __init__(self, kernel: Kernel, worker: int, shards: int, local: np.ndarray,
                 v: np.ndarray | None = None, dv: np.ndarray | None = None):
        g = kernel.graph
        self.worker = worker
        self.shards = shards
        self.gidx = local
        self.vids = g.vids[local]
        self.v = kernel.v0[local].copy() if v is None else v
        self.dv = kernel.dv1[local].copy() if dv is None else dv
        self.priority = np.asarray(kernel.priority(self.v, self.dv), dtype=float)
        self.starts = g.indptr[local]
        self.counts = g.out_degree[local]

    def __len__(self) -> int:
        return len(self.vids)

    def entry(self, vid: int, kernel: Kernel) -> StateEntry:
        i = int(np.searchsorted(self.vids, vid))
        if i >= len(self) or self.vids[i] != vid:
            raise KeyError(vid)
        lo = self.starts[i]
        edges = np.arange(lo, lo + self.counts[i])
        return StateEntry(int(vid), _own(self.v[i]), _own(self.dv[i]), float(self.priority[i]),
                          EdgeData(edges, kernel.graph.vids[kernel.graph.targets[edges]]))


def extract_priority_batch(table, queue_fraction: float, rng: np.random.Generator | None = None,
                           sample_size: int = 1024) -> list[int]:
    """Vids of roughly the top ``queue_fraction`` of ``table`` by priority.

    A uniform sample of at most ``sample_size`` entries fixes the threshold
    (its ``1 - queue_fraction`` quantile); every entry at or above it is
    taken, capped at ``ceil(queue_fraction * len)`` with ties going to the
    lower vid.
    """
    pos = top_fraction(np.asarray(table.vids), np.asarray(table.priority, dtype=float),
                       queue_fraction, rng, sample_size)
    return [int(x) for x in np.asarray(table.vids)[pos]]


def top_fraction(vids, prios, fraction, rng=None, sample_size=1024) -> np.ndarray:
    n = len(prios)
    if not 0 < fraction <= 1:
        raise ValueError("queue fraction must be in (0, 1]")
    if n == 0:
        return np.empty(0, np.int64)
    k = max(1, math.ceil(fraction * n - 1e-9))
    if k >= n:
        return np.lexsort((vids, -prios))
    if n <= sample_size:
        # the sample is the whole table, so its quantile is exact
        cand = np.arange(n)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        sample = prios[rng.choice(n, size=sample_size, replace=False)]
        q = int((1.0 - fraction) * (sample_size - 1))
        threshold = np.partition(sample, q)[q]
        cand = np.flatnonzero(prios >= threshold)
    order = np.lexsort((vids[cand], -prios[cand]))
    return cand[order[:k]]


# workers -----------------------------------------------------------------------

_STOP = object()


@dataclass
class _Marker:
    sequence: int
    done: threading.Event


class Worker:
    def __init__(self, engine: "Engine", index: int, table: StateTable):
        self.engine = engine
        self.kernel = engine.kernel
        self.index = index
        self.table = table
        self.lock = threading.Lock()
        self.inbox: queue.SimpleQueue = queue.SimpleQueue()
        n = engine.kernel.graph.n
        cfg = engine.config
        self.msg_tables = {w: MsgTable(self.kernel, n, cfg.flush_timeout, cfg.flush_cap)
                           for w in range(cfg.workers) if w != index}
        self.rng = np.random.default_rng([cfg.seed, index])
        self.cursor = 0
        self.updates = 0
        self.messages = 0
        self.transferred = 0
        self.sent_batches = 0
        self.applied_batches = 0
        self.routing_errors = 0
        self.idle = False
        self.wakeup = threading.Event()
        self.pause_request = threading.Event()
        self.paused = threading.Event()
        self.resume = threading.Event()
        self._pending_snap = None

    # selection ---------------------------------------------------------

    def _active(self, idx=None) -> np.ndarray:
        t, k = self.table, self.kernel
        v = t.v if idx is None else t.v[idx]
        dv = t.dv if idx is None else t.dv[idx]
        act = k.changes(v, dv)
        eps = self.engine.config.epsilon
        if eps > 0:
            act &= (t.priority if idx is None else t.priority[idx]) > eps
        return act

    def select(self) -> np.ndarray:
        mode = self.engine.config.mode
        if mode == "async_rr":
            return self._select_rr()
        if mode == "async_pri":
            return self._select_priority()
        return np.flatnonzero(self._active())

    def _select_rr(self) -> np.ndarray:
        n = len(self.table)
        chunk = max(1, math.ceil(self.engine.config.queue_fraction * n - 1e-9))
        scanned = 0
        while scanned < n:
            lo = self.cursor
            hi = min(lo + chunk, n)
            self.cursor = hi % n
            scanned += hi - lo
            idx = np.arange(lo, hi)
            act = self._active(idx)
            if act.any():
                return idx[act]
        return np.empty(0, np.int64)

    def _select_priority(self) -> np.ndarray:
        active = np.flatnonzero(self._active())
        if not len(active):
            return active
        k = max(1, math.ceil(self.engine.config.queue_fraction * len(self.table) - 1e-9))
        if len(active) <= k:
            return active
        pos = top_fraction(self.table.vids[active], self.table.priority[active],
                           k / len(active), self.rng)
        return active[pos]

    # update role ---------------------------------------------------------

    def snapshot_batch(self, sel: np.ndarray):
        """Atomically take and reset dv for ``sel`` and fold it into v."""
        t, k = self.table, self.kernel
        snap = t.dv[sel].copy()
        t.dv[sel] = k.zero
        t.v[sel] = k.op(t.v[sel], snap)
        t.priority[sel] = k.priority(t.v[sel], t.dv[sel])
        self.updates += len(sel)
        return snap

    def step(self) -> int:
        """One update batch; returns how many entries were updated."""
        with self.lock:
            sel = self.select()
            if not len(sel):
                return 0
            snap = self.snapshot_batch(sel)
        self.send(sel, snap)
        return len(sel)

    def send(self, sel: np.ndarray, snap: np.ndarray) -> None:
        t, k, eng = self.table, self.kernel, self.engine
        counts = t.counts[sel]
        total = int(counts.sum())
        if total == 0:
            return
        offsets = np.cumsum(counts) - counts
        edges = np.repeat(t.starts[sel] - offsets, counts) + np.arange(total)
        keep_src = ~k.is_zero(snap)
        if not keep_src.all():
            mask = np.repeat(keep_src, counts)
            edges = edges[mask]
            counts = counts[keep_src]
            snap = snap[keep_src]
        with np.errstate(over="ignore", invalid="ignore"):
            msgs = k.g(edges, np.repeat(snap, counts, axis=0))
        keep = ~k.is_zero(msgs)
        targets = k.graph.targets[edges[keep]]
        msgs = msgs[keep]
        self.messages += len(targets)
        owners = eng.owner[targets]
        local = owners == self.index
        if local.any():
            self.apply(eng.local_pos[targets[local]], msgs[local])
        if not local.all():
            rt, rm, ro = targets[~local], msgs[~local], owners[~local]
            for w in np.unique(ro):
                sel_w = ro == w
                self.msg_tables[int(w)].buffer_many(rt[sel_w], rm[sel_w])

    def apply(self, pos: np.ndarray, values: np.ndarray) -> None:
        t, k = self.table, self.kernel
        with self.lock:
            k.op.at(t.dv, pos, values)
            t.priority[pos] = k.priority(t.v[pos], t.dv[pos])
            self.idle = False

    def flush(self, force: bool = False, now: float | None = None) -> None:
        now = time.monotonic() if now is None else now
        for w, table in self.msg_tables.items():
            batch = table.flush(now, force=force)
            if len(batch):
                self.transferred += len(batch)
                self.sent_batches += 1
                dest = self.engine.workers[w]
                dest.inbox.put(batch)
                dest.wakeup.set()

    @property
    def aggregated_away(self) -> int:
        return sum(t.aggregated_away for t in self.msg_tables.values())

    def buffered(self) -> bool:
        return any(len(t) for t in self.msg_tables.values())

    # receive role ----------------------------------------------------------

    def receive_batch(self, batch: MessageBatch) -> None:
        owners = self.engine.owner[batch.dests]
        ok = owners == self.index
        if not ok.all():
            self.routing_errors += int((~ok).sum())
            batch = MessageBatch(batch.dests[ok], batch.values[ok])
        self.apply(self.engine.local_pos[batch.dests], batch.values)
        self.applied_batches += 1

    def drain(self) -> None:
        while True:
            try:
                item = self.inbox.get_nowait()
            except queue.Empty:
                return
            self._handle(item)

    def _handle(self, item) -> bool:
        if item is _STOP:
            return False
        if isinstance(item, _Marker):
            item.done.set()
            return True
        self.receive_batch(item)
        self.wakeup.set()
        return True

    def receive_loop(self) -> None:
        while self._handle(self.inbox.get()):
            pass

    def update_loop(self) -> None:
        eng = self.engine
        try:
            while not eng.stop.is_set():
                if self.pause_request.is_set():
                    self.paused.set()
                    self.resume.wait()
                    self.paused.clear()
                    continue
                if self.step():
                    self.flush()
                    continue
                self.flush(force=True)
                with self.lock:
                    if not self._active().any():
                        self.idle = True
                if self.idle:
                    self.wakeup.wait(0.002)
                    self.wakeup.clear()
        except BaseException as exc:  # surfaced by the coordinator
            eng.failure = exc
            eng.stop.set()

    # observation -------------------------------------------------------------

    def progress(self) -> float:
        with self.lock:
            return float(np.sum(self.kernel.progress_of(self.table.v)))

    def quiet(self) -> bool:
        with self.lock:
            return self.inbox.empty() and not self.buffered() and not self._active().any()


# engine ----------------------------------------------------------------------------

class RunResult(NamedTuple):
    tables: list
    stats: RunStats

    def values(self, kernel: Kernel) -> np.ndarray:
        return collect(self.tables, kernel)


def collect(tables, kernel: Kernel) -> np.ndarray:
    """Global v array in the graph's dense vertex order."""
    out = kernel.zeros(kernel.graph.n)
    for t in tables:
        out[t.gidx] = t.v
    return out


def l1_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    same = a == b
    with np.errstate(invalid="ignore"):
        diff = np.where(same, 0.0, np.abs(a - b))
    return float(np.sum(diff))


class Engine:
    def __init__(self, kernel: Kernel, config: EngineConfig, snapshot: ckpt.Snapshot | None = None):
        self.kernel = kernel
        self.config = config
        g = kernel.graph
        W = config.workers
        self.owner = g.vids % W
        self.local_pos = np.zeros(g.n, dtype=np.int64)
        self.stop = threading.Event()
        self.failure: BaseException | None = None
        self.stats = RunStats()
        self._checkpoint_seq = 0
        tables = []
        for w in range(W):
            local = np.flatnonzero(self.owner == w)
            self.local_pos[local] = np.arange(len(local))
            tables.append(StateTable(kernel, w, W, local))
        self.workers = [Worker(self, w, t) for w, t in enumerate(tables)]
        self.max_updates = config.max_updates if config.max_updates is not None else 10_000 * max(g.n, 1)
        term = config.terminator
        if term == "auto":
            term = "quiescence" if kernel.settles else "progress"
        self.terminator = term
        threshold = config.term_threshold
        if threshold is None:
            # a progress delta understates the remaining distance by the contraction
            # factor, so the delta test is held to a much tighter bound
            threshold = (0.001 if term == "reference" else 1e-6) * g.n
        self.threshold = threshold
        self._prev_progress = None
        self._base_updates = 0
        self._base_messages = 0
        if snapshot is not None:
            self._restore(snapshot)

    # snapshots ----------------------------------------------------------------

    def _restore(self, snap: ckpt.Snapshot) -> None:
        k = self.kernel
        meta = snap.meta
        if meta.get("kernel") != k.name or int(meta.get("vertices", -1)) != k.graph.n:
            raise ckpt.SnapshotError("snapshot was taken for a different kernel or graph")
        g = k.graph
        v = k.zeros(g.n)
        dv = k.zeros(g.n)
        seen = np.zeros(g.n, dtype=bool)
        for vids, vs, dvs in snap.states:
            if not vids:
                continue
            idx = g.indices_of(vids)
            v[idx] = vs
            dv[idx] = dvs
            seen[idx] = True
        if not seen.all():
            raise ckpt.SnapshotError("snapshot does not cover every vertex")
        for w in self.workers:
            t = w.table
            t.v = v[t.gidx].copy()
            t.dv = dv[t.gidx].copy()
            t.priority = np.asarray(k.priority(t.v, t.dv), dtype=float)
        for dests, vals in snap.pending:
            if not dests:
                continue
            idx = g.indices_of(dests)
            values = k.zeros(len(idx))
            values[...] = vals
            for w in self.workers:
                mine = self.owner[idx] == w.index
                if mine.any():
                    w.apply(self.local_pos[idx[mine]], values[mine])
        self._checkpoint_seq = snap.sequence
        self._base_updates = int(meta.get("updates", 0))
        self._base_messages = int(meta.get("messages", 0))

    def _snapshot_meta(self) -> dict:
        cfg = self.config
        params = {k: v for k, v in self.kernel.params.items() if isinstance(v, (int, float, str))}
        return {
            "kernel": self.kernel.name,
            "params": json.dumps(params, sort_keys=True),
            "vertices": self.kernel.graph.n,
            "mode": cfg.mode,
            "queue_fraction": cfg.queue_fraction,
            "epsilon": cfg.epsilon,
            "updates": self.total_updates(),
            "messages": self.total_messages(),
        }

    def _dump(self) -> None:
        """Write a snapshot; callers guarantee workers are quiesced."""
        g = self.kernel.graph
        states, pending = [], []
        for w in self.workers:
            t = w.table
            states.append((t.vids, t.v, t.dv))
            dests, vals = [], []
            for table in w.msg_tables.values():
                batch = table.entries()
                dests.extend(g.vids[batch.dests])
                vals.extend(batch.values)
            pending.append((dests, vals))
        seq = self._checkpoint_seq + 1
        try:
            ckpt.write_snapshot(self.config.checkpoint_dir, seq, self._snapshot_meta(), states, pending)
        except OSError as exc:
            log.warning("checkpoint %d failed: %s", seq, exc)
            return
        self._checkpoint_seq = seq
        self.stats.checkpoints += 1

    def _checkpoint_threaded(self) -> None:
        for w in self.workers:
            w.resume.clear()
            w.pause_request.set()
        for w in self.workers:
            while not w.paused.wait(0.05):
                if self.stop.is_set():
                    break
        # markers drain every channel: all earlier messages are applied first
        markers = []
        for w in self.workers:
            m = _Marker(self._checkpoint_seq + 1, threading.Event())
            w.inbox.put(m)
            markers.append(m)
        for m in markers:
            m.done.wait()
        self._dump()
        for w in self.workers:
            w.pause_request.clear()
            w.resume.set()

    # accounting ---------------------------------------------------------------

    def total_updates(self) -> int:
        return self._base_updates + sum(w.updates for w in self.workers)

    def total_messages(self) -> int:
        return self._base_messages + sum(w.messages for w in self.workers)

    def progress(self) -> float:
        return sum(w.progress() for w in self.workers)

    def values(self) -> np.ndarray:
        return collect([w.table for w in self.workers], self.kernel)

    def _sample(self, t0: float) -> float:
        p = self.progress()
        self.stats.samples.append((time.monotonic() - t0, self.total_updates(), self.total_messages(), p))
        return p

    def _decide(self, progress: float, quiet: bool) -> str | None:
        """Termination reason, or None to continue."""
        if not math.isfinite(progress):
            return "diverged"
        if quiet:
            return "converged"
        if self.terminator == "progress":
            prev, self._prev_progress = self._prev_progress, progress
            if check_termination([progress], prev, self.threshold):
                return "converged"
        elif self.terminator == "reference":
            if l1_distance(self.values(), self.config.reference) < self.threshold:
                return "converged"
        if self.total_updates() > self.max_updates:
            return "max_updates"
        return None

    # drivers ---------------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.config
        t0 = time.monotonic()
        self._t0 = t0
        if cfg.mode == "sync":
            reason = self._run_sync(t0)
        elif cfg.inline or cfg.workers == 1 and cfg.checkpoint_interval is None:
            reason = self._run_inline(t0)
        else:
            reason = self._run_threaded(t0)
        if self.failure is not None:
            raise EngineError(f"worker failed: {self.failure!r}") from self.failure
        if reason != "crashed":
            self._drain_all()
            self._sample(t0)
        s = self.stats
        s.wall_time = time.monotonic() - t0
        s.updates = self.total_updates()
        s.messages = self.total_messages()
        s.messages_aggregated_away = sum(w.aggregated_away for w in self.workers)
        s.messages_transferred = sum(w.transferred for w in self.workers)
        s.routing_errors = sum(w.routing_errors for w in self.workers)
        s.reason = reason
        s.converged = reason == "converged"
        s.crashed = reason == "crashed"
        log.info("%s %s: %s after %d updates", self.kernel.name, cfg.mode, reason, s.updates)
        return RunResult([w.table for w in self.workers], s)

    def _timed_out(self, t0: float) -> bool:
        return self.config.max_seconds is not None and time.monotonic() - t0 > self.config.max_seconds

    def _drain_all(self) -> None:
        for w in self.workers:
            w.flush(force=True)
        for w in self.workers:
            w.drain()

    def _ckpt_due(self, last: float) -> bool:
        iv = self.config.checkpoint_interval
        return iv is not None and time.monotonic() - last >= iv

    def _crash_due(self) -> bool:
        n = self.config.crash_after_checkpoints
        return n is not None and self.stats.checkpoints >= n

    def _run_sync(self, t0: float) -> str:
        workers = self.workers
        pool = ThreadPoolExecutor(len(workers)) if len(workers) > 1 and not self.config.inline else None

        def each(fn):
            if pool is None:
                for w in workers:
                    fn(w)
            else:
                list(pool.map(fn, workers))

        def snapshot(w):
            with w.lock:
                sel = np.flatnonzero(w._active())
                w._pending_snap = (sel, w.snapshot_batch(sel))

        def send(w):
            sel, snap = w._pending_snap
            w._pending_snap = None
            w.send(sel, snap)
            w.flush(force=True)

        last_ckpt = t0
        try:
            self._sample(t0)
            while True:
                active = sum(int(w._active().any()) for w in workers)
                if not active:
                    return "converged"
                each(snapshot)   # barrier: every dv is taken before any message lands
                each(send)
                each(Worker.drain)
                self.stats.supersteps += 1
                p = self._sample(t0)
                reason = self._decide(p, quiet=False)
                if reason:
                    return reason
                if self._ckpt_due(last_ckpt):
                    self._dump()
                    last_ckpt = time.monotonic()
                    if self._crash_due():
                        return "crashed"
                if self._timed_out(t0):
                    return "timeout"
        finally:
            if pool is not None:
                pool.shutdown()

    def _run_inline(self, t0: float) -> str:
        n = max(self.kernel.graph.n, 1)
        last_ckpt = t0
        next_check = n
        self._sample(t0)
        while True:
            did = 0
            for w in self.workers:
                w.drain()
                did += w.step()
                w.flush(force=True)
            quiet = did == 0 and all(w.quiet() for w in self.workers)
            # progress deltas are only meaningful over a sweep's worth of updates
            due = quiet or self.terminator == "reference" or self.total_updates() >= next_check
            if due:
                next_check = self.total_updates() + n
                reason = self._decide(self._sample(t0), quiet)
                if reason:
                    return reason
            elif self.total_updates() > self.max_updates:
                return "max_updates"
            if self._ckpt_due(last_ckpt):
                checkpoint(self)
                last_ckpt = time.monotonic()
                if self._crash_due():
                    return "crashed"
            if self._timed_out(t0):
                return "timeout"

    def _run_threaded(self, t0: float) -> str:
        cfg = self.config
        threads = []
        for w in self.workers:
            for target, role in ((w.receive_loop, "recv"), (w.update_loop, "update")):
                th = threading.Thread(target=target, name=f"worker{w.index}-{role}", daemon=True)
                th.start()
                threads.append(th)
        reason = None
        last_ckpt = t0
        crash_at = None
        self._sample(t0)
        try:
            while reason is None:
                self.stop.wait(cfg.term_check_interval)
                if self.failure is not None:
                    reason = "failed"
                    break
                if crash_at is not None and time.monotonic() >= crash_at:
                    reason = "crashed"
                    break
                quiet = self._quiescent()
                p = self._sample(t0)
                reason = self._decide(p, quiet)
                if reason is None and self._ckpt_due(last_ckpt):
                    self._checkpoint_threaded()
                    last_ckpt = time.monotonic()
                    if self._crash_due() and crash_at is None:
                        crash_at = time.monotonic() + cfg.term_check_interval
                if reason is None and self._timed_out(t0):
                    reason = "timeout"
        finally:
            self.stop.set()
            for w in self.workers:
                w.resume.set()
                w.wakeup.set()
                w.inbox.put(_STOP)
            for th in threads:
                th.join()
        return reason

    def _quiescent(self) -> bool:
        """No active entry, no buffered or in-flight message, stable across the scan."""
        def counters():
            return (sum(w.sent_batches for w in self.workers),
                    sum(w.applied_batches for w in self.workers))
        before = counters()
        if before[0] != before[1]:
            return False
        if not all(w.idle and w.quiet() for w in self.workers):
            return False
        return counters() == before


def check_termination(local_progresses, previous_global: float | None, threshold: float) -> bool:
    """Terminate iff the summed progress moved less than ``threshold`` since the last check."""
    total = float(sum(local_progresses))
    if previous_global is None:
        return False
    return abs(total - previous_global) < threshold


def run(graph: Graph | None, kernel: Kernel, config: EngineConfig | None = None) -> RunResult:
    if graph is not None and graph is not kernel.graph and graph != kernel.graph:
        raise EngineError("kernel was built for a different graph")
    return Engine(kernel, config or EngineConfig()).run()


def checkpoint(engine: Engine) -> None:
    """Snapshot a paused engine: channels are drained, msg tables dumped as pending."""
    for w in engine.workers:
        w.drain()
    engine._dump()


def recover(path, kernel: Kernel, config: EngineConfig | None = None) -> RunResult:
    """Resume from the latest valid snapshot under ``path``; fails loudly if none."""
    snap = ckpt.read_snapshot(path, kernel.value_shape, kernel.exact)
    config = config or EngineConfig(mode=snap.meta.get("mode", "async_pri"))
    return Engine(kernel, config, snapshot=snap).run()
