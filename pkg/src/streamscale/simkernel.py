"""Deterministic discrete-event simulation kernel.

Virtual time is integer microseconds, so event ordering and accumulated
clock arithmetic are bit-exact across runs and platforms.  Events dequeue
in (time, sequence) order; the sequence counter breaks ties in schedule
order.  Randomness, when a component wants it, comes from per-entity
Philox streams keyed by (master seed, entity id) so adding an entity never
perturbs another entity's draws.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SimEvent",
    "Simulator",
    "SharedResource",
    "PastEvent",
    "ZeroBandwidth",
    "entity_stream",
    "US_PER_S",
]

US_PER_S = 1_000_000

EVENT_KINDS = ("produce", "broker-arrive", "worker-start", "worker-end", "control")


class PastEvent(ValueError):
    """Attempt to schedule an event before the current virtual clock."""


class ZeroBandwidth(ValueError):
    """A shared resource was configured with non-positive bandwidth."""


def entity_stream(master_seed: int, entity_id: str) -> np.random.Generator:
    """Independent random stream for one entity.

    Philox4x64 keyed with SHA-256(master_seed ":" entity_id), so streams are
    reproducible and mutually independent regardless of creation order.
    """
    digest = hashlib.sha256(f"{master_seed}:{entity_id}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype="<u8")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(slots=True)
class SimEvent:
    time_us: int
    kind: str
    entity: str = ""
    action: Optional[Callable[["Simulator"], None]] = None
    sequence: int = -1  # assigned by Simulator.schedule


class Simulator:
    """Single-threaded event loop over a virtual microsecond clock."""

    def __init__(self, trace: Optional[Callable[[SimEvent], None]] = None):
        self.now_us: int = 0
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._trace = trace
        self.processed = 0

    @property
    def now_s(self) -> float:
        return self.now_us / US_PER_S

    def schedule(self, event: SimEvent) -> SimEvent:
        """Enqueue an event; rejects times before the current clock."""
        if event.time_us < self.now_us:
            raise PastEvent(
                f"event at t={event.time_us}us is before clock {self.now_us}us"
            )
        event.sequence = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.time_us, event.sequence, event))
        return event

    def schedule_at(
        self,
        time_us: int,
        kind: str,
        entity: str = "",
        action: Optional[Callable[["Simulator"], None]] = None,
    ) -> SimEvent:
        return self.schedule(SimEvent(time_us=time_us, kind=kind, entity=entity, action=action))

    def run_until(self, t_end_us: int) -> int:
        """Process every event with time <= t_end_us; clock ends at t_end_us."""
        if t_end_us < self.now_us:
            raise PastEvent(f"t_end {t_end_us}us is before clock {self.now_us}us")
        count = 0
        while self._heap and self._heap[0][0] <= t_end_us:
            _, _, ev = heapq.heappop(self._heap)
            self.now_us = ev.time_us
            if self._trace is not None:
                self._trace(ev)
            if ev.action is not None:
                ev.action(self)
            count += 1
        self.now_us = t_end_us
        self.processed += count
        return count

    def step(self) -> bool:
        """Process the single next event; False when the queue is empty."""
        if not self._heap:
            return False
        _, _, ev = heapq.heappop(self._heap)
        self.now_us = ev.time_us
        if self._trace is not None:
            self._trace(ev)
        if ev.action is not None:
            ev.action(self)
        self.processed += 1
        return True

    def run_all(self) -> int:
        """Drain the queue completely; clock ends at the last event time."""
        count = 0
        while self._heap:
            _, _, ev = heapq.heappop(self._heap)
            self.now_us = ev.time_us
            if self._trace is not None:
                self._trace(ev)
            if ev.action is not None:
                ev.action(self)
            count += 1
        self.processed += count
        return count

    def pending(self) -> int:
        return len(self._heap)


@dataclass
class SharedResource:
    """FIFO bandwidth-shared resource (network link, shared filesystem).

    A transfer occupies the full bandwidth for bytes/bandwidth seconds;
    concurrent requests serialize in grant order.  ``available_at_us``
    tracks when the resource next frees up.
    """

    name: str
    bandwidth: float  # bytes per second
    available_at_us: int = 0
    granted_bytes: int = 0
    busy_us: int = field(default=0)

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ZeroBandwidth(f"resource {self.name!r}: bandwidth must be > 0")

    def transfer_us(self, nbytes: int) -> int:
        return int(math.ceil(nbytes * US_PER_S / self.bandwidth))

    def acquire(self, sim: Simulator, nbytes: int, requester: str = "") -> int:
        """Reserve the resource for ``nbytes``; returns the completion time.

        FIFO: the transfer starts when all earlier grants have finished (or
        now, if idle) and runs for bytes/bandwidth of virtual time.
        """
        return self.acquire_at(sim.now_us, nbytes, requester)

    def acquire_at(self, t_us: int, nbytes: int, requester: str = "") -> int:
        """Reserve the resource for a request issued at ``t_us``.

        Callers must issue requests in nondecreasing ``t_us`` order to keep
        the FIFO discipline meaningful; the event loop guarantees this when
        acquire() is called from event handlers.
        """
        if nbytes <= 0:
            raise ValueError(f"nbytes must be > 0, got {nbytes}")
        start = max(t_us, self.available_at_us)
        dur = self.transfer_us(nbytes)
        self.available_at_us = start + dur
        self.granted_bytes += nbytes
        self.busy_us += dur
        return self.available_at_us

    def backlog_us(self, sim: Simulator) -> int:
        """Virtual time until the resource would be free of queued work."""
        return max(0, self.available_at_us - sim.now_us)
