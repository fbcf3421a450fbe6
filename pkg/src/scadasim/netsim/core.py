"""Virtual-time event loop.

Time is kept in integer nanoseconds so that link arithmetic is exact and
replays are bit-identical.  Events at equal timestamps run in insertion
order.
"""
from __future__ import annotations

import hashlib
import heapq
import random

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S


def derive_rng(seed: int, stream: str) -> random.Random:
    """Independent, reproducible RNG stream for one component."""
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


class EventLoop:
    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._counter = 0

    def schedule_at(self, at_ns: int, fn, *args) -> list:
        if at_ns < self.now:
            raise ValueError("cannot schedule in the past")
        self._counter += 1
        entry = [at_ns, self._counter, fn, args]
        heapq.heappush(self._heap, entry)
        return entry

    def schedule(self, delay_ns: int, fn, *args) -> list:
        return self.schedule_at(self.now + delay_ns, fn, *args)

    @staticmethod
    def cancel(entry: list) -> None:
        entry[2] = None

    def pending(self) -> int:
        return sum(1 for e in self._heap if e[2] is not None)

    def run_until(self, until_ns: int) -> int:
        """Process every event with time <= ``until_ns``; return the count processed."""
        if until_ns < self.now:
            raise ValueError("cannot advance backwards")
        heap = self._heap
        pop = heapq.heappop
        processed = 0
        while heap and heap[0][0] <= until_ns:
            at, _, fn, args = pop(heap)
            if fn is None:
                continue
            self.now = at
            fn(*args)
            processed += 1
        self.now = until_ns
        return processed
