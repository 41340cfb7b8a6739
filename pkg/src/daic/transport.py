"""Inter-worker messages: routing and ⊕-aggregating msg tables."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any

import numpy as np

from .graph import partition

DEFAULT_FLUSH_CAP = 65_536


@dataclass(frozen=True)
class DeltaMessage:
    dest: int
    value: Any


@dataclass
class MessageBatch:
    """Flushed msg-table contents, in ascending destination order."""
    dests: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.dests)

    def messages(self) -> list[DeltaMessage]:
        return [DeltaMessage(int(d), v) for d, v in zip(self.dests, self.values)]


def route(msg: DeltaMessage, shards: int) -> int:
    return partition(msg.dest, shards)


class MsgTable:
    """Per-destination-worker buffer collapsing messages to one entry per dest.

    Destinations are integer keys in ``[0, capacity)``; the engine uses dense
    vertex indices. Values are folded with the kernel's ⊕ as they arrive.
    """

    def __init__(self, kernel, capacity: int, timeout: float = 0.005,
                 cap: int = DEFAULT_FLUSH_CAP, clock=time.monotonic):
        self.kernel = kernel
        self.timeout = timeout
        self.cap = cap
        self.clock = clock
        self._acc = kernel.zeros(capacity)
        self._present = np.zeros(capacity, dtype=bool)
        self._keys: list[np.ndarray] = []
        self.size = 0
        self.buffered = 0
        self.aggregated_away = 0
        self.last_flush = clock()

    def __len__(self) -> int:
        return self.size

    def buffer(self, msg: DeltaMessage) -> None:
        value = np.empty((1,) + self.kernel.value_shape, dtype=self.kernel.dtype)
        value[0] = msg.value
        self.buffer_many(np.array([msg.dest]), value)

    def buffer_many(self, dests: np.ndarray, values: np.ndarray) -> None:
        if not len(dests):
            return
        self.kernel.op.at(self._acc, dests, values)
        fresh = dests[~self._present[dests]]
        if len(fresh):
            fresh = np.unique(fresh)
            self._present[fresh] = True
            self._keys.append(fresh)
            self.size += len(fresh)
        self.buffered += len(dests)

    def entries(self) -> MessageBatch:
        keys = np.sort(np.concatenate(self._keys)) if self._keys else np.empty(0, np.int64)
        return MessageBatch(keys, self._acc[keys].copy())

    def due(self, now: float | None = None) -> bool:
        if self.size == 0:
            return False
        now = self.clock() if now is None else now
        return now - self.last_flush >= self.timeout or self.size >= self.cap

    def flush(self, now: float | None = None, force: bool = False) -> MessageBatch:
        """Emit and clear all entries if the timeout elapsed, the cap is hit, or forced."""
        now = self.clock() if now is None else now
        if not force and not self.due(now):
            return MessageBatch(np.empty(0, np.int64), self.kernel.zeros(0))
        batch = self.entries()
        self._acc[batch.dests] = self.kernel.zero
        self._present[batch.dests] = False
        self._keys.clear()
        self.aggregated_away += self.buffered - len(batch)
        self.buffered = 0
        self.size = 0
        self.last_flush = now
        return batch


def buffer(table: MsgTable, msg: DeltaMessage, kernel=None) -> None:
    table.buffer(msg)


def flush(table: MsgTable, now: float, timeout: float | None = None) -> list[DeltaMessage]:
    if timeout is not None:
        table.timeout = timeout
    return table.flush(now).messages()
