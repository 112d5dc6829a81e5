"""Virtual-clock event loop and the two process drivers.

Control-plane procedures are written as generators that yield the number of
seconds the step just performed costs. ``SimDriver`` turns those yields into
virtual time on a ``Simulator``; ``RealtimeDriver`` ignores them because on a
real clock the work takes whatever time it takes.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from enum import IntEnum
from typing import Callable, Generator

Process = Generator[float, None, None]

# Virtual timestamps are kept on a microsecond grid so that sums of
# millisecond costs compare exactly.
RESOLUTION = 6


def quantize(t: float) -> float:
    return round(t, RESOLUTION)


class Priority(IntEnum):
    """Order of events sharing one timestamp (lower runs first)."""

    ACTIVATE = 0
    EXPIRY = 1
    PROBE = 2
    FAILURE = 3
    REQUEST = 4
    ROUND = 5
    PROCESS = 6
    FLOW = 7
    SAMPLE = 9


class Simulator:
    def __init__(self, start: float = 0.0) -> None:
        self.now = quantize(start)
        self._heap: list = []
        self._seq = itertools.count()
        self.processed = 0

    def schedule(self, at: float, fn: Callable, *args, priority: int = Priority.PROCESS) -> None:
        at = quantize(at)
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._heap, (at, int(priority), next(self._seq), fn, args))

    def after(self, delay: float, fn: Callable, *args, priority: int = Priority.PROCESS) -> None:
        self.schedule(self.now + delay, fn, *args, priority=priority)

    def peek(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        if not self._heap:
            return False
        at, _, _, fn, args = heapq.heappop(self._heap)
        self.now = at
        fn(*args)
        self.processed += 1
        return True

    def run(self, until: float | None = None, stop: Callable[[], bool] | None = None) -> None:
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            if stop is not None and stop():
                break
            self.step()
        if until is not None and self.now < until and (stop is None or not stop()):
            self.now = quantize(until)


class SimDriver:
    virtual = True

    def __init__(self, sim: Simulator | None = None) -> None:
        self.sim = sim or Simulator()

    def now(self) -> float:
        return self.sim.now

    def spawn(self, process: Process, priority: int = Priority.PROCESS) -> None:
        self.sim.schedule(self.sim.now, self._advance, process, priority, priority=priority)

    def _advance(self, process: Process, priority: int) -> None:
        try:
            delay = next(process)
        except StopIteration:
            return
        self.sim.schedule(self.sim.now + max(0.0, delay), self._advance, process, priority, priority=priority)

    def call_at(self, at: float, fn: Callable, *args, priority: int = Priority.PROCESS) -> None:
        self.sim.schedule(max(at, self.sim.now), fn, *args, priority=priority)


class RealtimeDriver:
    """Runs processes to completion on the caller's thread; timers use threads."""

    virtual = False

    def __init__(self) -> None:
        self._timers: list[threading.Timer] = []

    def now(self) -> float:
        return time.time()

    def spawn(self, process: Process, priority: int = Priority.PROCESS) -> None:
        for _ in process:
            pass

    def call_at(self, at: float, fn: Callable, *args, priority: int = Priority.PROCESS) -> None:
        timer = threading.Timer(max(0.0, at - self.now()), fn, args)
        timer.daemon = True
        self._timers.append(timer)
        timer.start()

    def cancel_all(self) -> None:
        for t in self._timers:
            t.cancel()
        self._timers.clear()
