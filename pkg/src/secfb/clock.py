"""Virtual and wall clocks with a common timer interface (milliseconds)."""

from __future__ import annotations

import enum
import heapq
import itertools
import threading
import time
from typing import Callable, Optional

__all__ = ["ClockMode", "Clock", "VirtualClock", "RealClock", "TimerHandle"]


class ClockMode(enum.Enum):
    VIRTUAL = "virtual"
    REAL = "real"


class TimerHandle:
    __slots__ = ("due", "callback", "cancelled", "_timer")

    def __init__(self, due: float, callback: Callable[[], None]):
        self.due = due
        self.callback = callback
        self.cancelled = False
        self._timer: Optional[threading.Timer] = None

    def cancel(self) -> None:
        self.cancelled = True
        if self._timer is not None:
            self._timer.cancel()


class Clock:
    mode: ClockMode

    def now(self) -> float:
        raise NotImplementedError

    def call_at(self, due: float, callback: Callable[[], None]) -> TimerHandle:
        raise NotImplementedError

    def call_later(self, delay: float, callback: Callable[[], None]) -> TimerHandle:
        return self.call_at(self.now() + max(0.0, delay), callback)


class VirtualClock(Clock):
    """Simulated time starting at 0 ms; only the driver advances it."""

    mode = ClockMode.VIRTUAL

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._heap: list[tuple[float, int, TimerHandle]] = []
        self._seq = itertools.count()

    def now(self) -> float:
        return self._now

    def call_at(self, due: float, callback: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle(max(float(due), self._now), callback)
        heapq.heappush(self._heap, (handle.due, next(self._seq), handle))
        return handle

    def next_due(self) -> Optional[float]:
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"virtual clock cannot go back from {self._now} to {t}")
        self._now = float(t)

    def fire_due(self) -> int:
        """Run every timer due at or before now, in (due, scheduling) order."""
        fired = 0
        while self._heap and self._heap[0][0] <= self._now:
            _, _, handle = heapq.heappop(self._heap)
            if not handle.cancelled:
                handle.callback()
                fired += 1
        return fired


class RealClock(Clock):
    """Wall-clock milliseconds since the UNIX epoch, never decreasing."""

    mode = ClockMode.REAL

    def __init__(self):
        self._lock = threading.Lock()
        self._last = 0.0

    def now(self) -> float:
        with self._lock:
            self._last = max(self._last, time.time() * 1000.0)
            return self._last

    def call_at(self, due: float, callback: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle(due, callback)
        timer = threading.Timer(max(0.0, (due - self.now()) / 1000.0), lambda: handle.cancelled or callback())
        timer.daemon = True
        handle._timer = timer
        timer.start()
        return handle
