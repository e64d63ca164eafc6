"""Pilot abstraction: declarative resource containers and task execution.

A pilot represents an allocated set of resources; compute units (CUs) are
self-contained tasks submitted onto a pilot.  Three backends:

* ``local``: a real thread pool sized nodes x partitions.
* ``simulated-serverless``: per-event containers on a virtual clock with a
  concurrency cap of min(partitions, 30), cold starts, dependency layers and
  a per-task walltime.
* ``simulated-broker``: a partitioned topic that stream bindings consume
  from, spawning one CU per message with per-partition ordering.

State machines are strict: pilots move NEW -> ACTIVE -> {DONE, FAILED,
CANCELED} (allocation failures jump NEW -> FAILED), compute units move
NEW -> RUNNING -> {DONE, FAILED}.  Every transition is recorded and can be
streamed to a run log.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from .pipeline import BrokerTopic, MessageRecord
from .simkernel import Simulator, US_PER_S

__all__ = [
    "PilotDescription",
    "Pilot",
    "ComputeUnit",
    "StreamBinding",
    "PilotManager",
    "PilotState",
    "CuState",
    "PilotNotActive",
    "AlreadyBound",
    "AlreadyTerminal",
    "IllegalTransition",
    "SERVERLESS_CU_CAP",
    "MAX_LOCAL_WORKERS",
]

SERVERLESS_CU_CAP = 30
MAX_LOCAL_WORKERS = 64
COLD_START_S = 0.4
LAYER_COST_S = 0.2


class PilotNotActive(RuntimeError):
    pass


class AlreadyBound(RuntimeError):
    pass


class AlreadyTerminal(RuntimeError):
    pass


class IllegalTransition(RuntimeError):
    pass


class PilotState(Enum):
    NEW = "NEW"
    ACTIVE = "ACTIVE"
    DONE = "DONE"
    FAILED = "FAILED"
    CANCELED = "CANCELED"


class CuState(Enum):
    NEW = "NEW"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"


_PILOT_EDGES = {
    PilotState.NEW: {PilotState.ACTIVE, PilotState.FAILED, PilotState.CANCELED},
    PilotState.ACTIVE: {PilotState.DONE, PilotState.FAILED, PilotState.CANCELED},
    PilotState.DONE: set(),
    PilotState.FAILED: set(),
    PilotState.CANCELED: set(),
}

_CU_EDGES = {
    CuState.NEW: {CuState.RUNNING, CuState.FAILED},
    CuState.RUNNING: {CuState.DONE, CuState.FAILED},
    CuState.DONE: set(),
    CuState.FAILED: set(),
}


@dataclass(frozen=True)
class PilotDescription:
    """Normative resource request; one backend, unified partition attribute."""

    backend: str  # local | simulated-serverless | simulated-broker
    partitions: int = 1
    nodes: int = 1
    memory_mb: int = 3008
    walltime_s: float = 900.0
    function_ref: Optional[str] = None
    layers: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.backend not in ("local", "simulated-serverless", "simulated-broker"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.walltime_s <= 0:
            raise ValueError("walltime_s must be > 0")


@dataclass
class Pilot:
    id: str
    description: PilotDescription
    state: PilotState = PilotState.NEW
    capacity: int = 0
    reason: Optional[str] = None
    topic: Optional[BrokerTopic] = None  # simulated-broker backend only
    published: int = 0

    @property
    def terminal(self) -> bool:
        return self.state in (PilotState.DONE, PilotState.FAILED, PilotState.CANCELED)


@dataclass
class ComputeUnit:
    id: str
    pilot_id: str
    kernel: Optional[Callable] = None
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)
    duration_s: float = 0.0
    depends_on: tuple[str, ...] = ()
    input_msg: Optional[MessageRecord] = None
    state: CuState = CuState.NEW
    start_us: Optional[int] = None
    end_us: Optional[int] = None
    result: Any = None
    error: Optional[str] = None
    cancel_requested: bool = False

    @property
    def terminal(self) -> bool:
        return self.state in (CuState.DONE, CuState.FAILED)


@dataclass
class StreamBinding:
    id: str
    pilot_id: str
    topic: BrokerTopic
    kernel: Optional[Callable] = None
    duration_s: float = 0.0
    spawned: list[ComputeUnit] = field(default_factory=list)


@dataclass(frozen=True)
class WaitSummary:
    done: int
    failed: int
    elapsed_s: float
    state: str


class PilotManager:
    """Owns pilots, compute units and the shared virtual clock.

    Thread-safe for concurrent submissions; simulated backends make all
    progress on the single-threaded event kernel, which ``wait`` drives.
    """

    def __init__(self, sim: Optional[Simulator] = None):
        self.sim = sim or Simulator()
        self._lock = threading.RLock()
        self._pilots: dict[str, Pilot] = {}
        self._cus: dict[str, ComputeUnit] = {}
        self._bindings: dict[str, StreamBinding] = {}
        self._queues: dict[str, list[str]] = {}  # pilot id -> FIFO of cu ids
        self._running: dict[str, set[str]] = {}
        self._warm_containers: dict[str, int] = {}
        self._pools: dict[str, _LocalPool] = {}
        self._bound_topics: dict[int, str] = {}  # id(topic) -> binding id
        self._partition_locks: dict[str, list[bool]] = {}  # binding id -> per-partition busy
        self._partition_queues: dict[str, list[list[str]]] = {}
        self._counter = 0
        self.transitions: list[dict] = []
        self.max_running_observed: dict[str, int] = {}
        self._wall_t0 = time.monotonic()

    # -- bookkeeping ----------------------------------------------------------

    def _next_id(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}-{self._counter}"

    def _now_ts(self, pilot: Pilot) -> float:
        if pilot.description.backend == "local":
            return time.monotonic() - self._wall_t0
        return self.sim.now_s

    def _record(self, pilot: Pilot, entity: str, eid: str, old: str, new: str) -> None:
        self.transitions.append(
            {
                "ts": self._now_ts(pilot),
                "entity": entity,
                "id": eid,
                "transition": f"{old}->{new}",
            }
        )

    def _set_pilot_state(self, pilot: Pilot, new: PilotState, reason: str = None) -> None:
        if new not in _PILOT_EDGES[pilot.state]:
            raise IllegalTransition(f"pilot {pilot.id}: {pilot.state} -> {new}")
        self._record(pilot, "pilot", pilot.id, pilot.state.value, new.value)
        pilot.state = new
        if reason:
            pilot.reason = reason

    def _set_cu_state(self, cu: ComputeUnit, new: CuState, error: str = None) -> None:
        if new not in _CU_EDGES[cu.state]:
            raise IllegalTransition(f"cu {cu.id}: {cu.state} -> {new}")
        pilot = self._pilots[cu.pilot_id]
        self._record(pilot, "cu", cu.id, cu.state.value, new.value)
        cu.state = new
        if error:
            cu.error = error
        if new == CuState.RUNNING:
            running = self._running.setdefault(cu.pilot_id, set())
            running.add(cu.id)
            prev = self.max_running_observed.get(cu.pilot_id, 0)
            self.max_running_observed[cu.pilot_id] = max(prev, len(running))
        elif cu.terminal:
            self._running.get(cu.pilot_id, set()).discard(cu.id)

    # -- pilots ----------------------------------------------------------------

    def submit_pilot(self, description: PilotDescription) -> Pilot:
        """Allocate resources; returns an ACTIVE pilot (FAILED on bad request)."""
        with self._lock:
            pilot = Pilot(id=self._next_id("pilot"), description=description)
            self._pilots[pilot.id] = pilot
            d = description
            if d.backend == "local":
                size = d.nodes * d.partitions
                if d.nodes < 1 or size > MAX_LOCAL_WORKERS:
                    self._set_pilot_state(
                        pilot, PilotState.FAILED,
                        reason=f"AllocationFailed: {d.nodes} nodes x "
                               f"{d.partitions} partitions unavailable",
                    )
                    return pilot
                pilot.capacity = size
                self._pools[pilot.id] = _LocalPool(self, pilot, size)
            elif d.backend == "simulated-serverless":
                if d.nodes < 1:
                    self._set_pilot_state(
                        pilot, PilotState.FAILED, reason="AllocationFailed: nodes < 1"
                    )
                    return pilot
                pilot.capacity = min(d.partitions, SERVERLESS_CU_CAP)
            else:  # simulated-broker
                pilot.capacity = d.partitions
                pilot.topic = BrokerTopic(d.partitions, per_partition_limit=1_000_000.0)
            self._queues[pilot.id] = []
            self._set_pilot_state(pilot, PilotState.ACTIVE)
            return pilot

    # -- compute units -----------------------------------------------------------

    def submit_cu(
        self,
        pilot: Pilot,
        kernel: Callable,
        args: tuple = (),
        kwargs: Optional[dict] = None,
        *,
        duration_s: float = 0.0,
        depends_on: Sequence[ComputeUnit] = (),
    ) -> ComputeUnit:
        """Queue one task on the pilot (FIFO; dependencies gate eligibility)."""
        with self._lock:
            if pilot.state is not PilotState.ACTIVE:
                raise PilotNotActive(f"pilot {pilot.id} is {pilot.state.value}")
            cu = ComputeUnit(
                id=self._next_id("cu"),
                pilot_id=pilot.id,
                kernel=kernel,
                args=tuple(args),
                kwargs=dict(kwargs or {}),
                duration_s=duration_s,
                depends_on=tuple(d.id for d in depends_on),
            )
            self._cus[cu.id] = cu
            self._queues[pilot.id].append(cu.id)
            if pilot.description.backend == "local":
                self._pools[pilot.id].kick()
            else:
                self.sim.schedule_at(
                    self.sim.now_us, "control", entity=pilot.id,
                    action=lambda s, pid=pilot.id: self._dispatch(pid),
                )
            return cu

    def _deps_status(self, cu: ComputeUnit) -> str:
        states = [self._cus[d].state for d in cu.depends_on]
        if any(s is CuState.FAILED for s in states):
            return "failed"
        if all(s is CuState.DONE for s in states):
            return "ready"
        return "waiting"

    # -- simulated dispatch --------------------------------------------------------

    def _dispatch(self, pilot_id: str) -> None:
        """Start queued CUs while slots are free (simulated backends)."""
        pilot = self._pilots[pilot_id]
        if pilot.state is not PilotState.ACTIVE:
            return
        queue = self._queues[pilot_id]
        running = self._running.setdefault(pilot_id, set())
        i = 0
        while i < len(queue) and len(running) < pilot.capacity:
            cu = self._cus[queue[i]]
            status = self._deps_status(cu)
            if status == "failed":
                queue.pop(i)
                self._set_cu_state(cu, CuState.FAILED, error="DependencyFailed")
                continue
            if status == "waiting":
                i += 1
                continue
            queue.pop(i)
            self._start_simulated(pilot, cu)
        # per-partition stream chains
        for bid, binding in self._bindings.items():
            if binding.pilot_id == pilot_id:
                self._pump_binding(binding)

    def _start_simulated(self, pilot: Pilot, cu: ComputeUnit) -> None:
        sim = self.sim
        cu.start_us = sim.now_us
        self._set_cu_state(cu, CuState.RUNNING)
        d = pilot.description
        dur = cu.duration_s
        warm = self._warm_containers.get(pilot.id, 0)
        cold_s = 0.0
        if warm < pilot.capacity:
            self._warm_containers[pilot.id] = warm + 1
            cold_s = COLD_START_S + LAYER_COST_S * len(d.layers)
        if dur > d.walltime_s:
            end = sim.now_us + int(round((d.walltime_s + cold_s) * US_PER_S))
            sim.schedule_at(
                end, "worker-end", entity=cu.id,
                action=lambda s, c=cu: self._finish_simulated(
                    c, None, "WalltimeExceeded"),
            )
            return
        if cu.kernel is not None:
            try:
                if cu.input_msg is not None:
                    result = cu.kernel(cu.input_msg, *cu.args, **cu.kwargs)
                else:
                    result = cu.kernel(*cu.args, **cu.kwargs)
                error = None
            except Exception as exc:
                result, error = None, f"{type(exc).__name__}: {exc}"
        else:
            result, error = None, None
        end = sim.now_us + int(round((dur + cold_s) * US_PER_S))
        sim.schedule_at(
            end, "worker-end", entity=cu.id,
            action=lambda s, c=cu, r=result, e=error: self._finish_simulated(c, r, e),
        )

    def _finish_simulated(self, cu: ComputeUnit, result, error) -> None:
        cu.end_us = self.sim.now_us
        if cu.cancel_requested and error is None:
            error = "Canceled"
        if error is None:
            cu.result = result
            self._set_cu_state(cu, CuState.DONE)
        else:
            self._set_cu_state(cu, CuState.FAILED, error=error)
        binding = self._binding_of(cu)
        if binding is not None:
            self._release_partition(binding, cu)
        self._dispatch(cu.pilot_id)

    # -- stream bindings ---------------------------------------------------------

    def bind_stream(
        self,
        pilot: Pilot,
        topic: BrokerTopic,
        kernel: Callable,
        *,
        duration_s: float = 0.0,
    ) -> StreamBinding:
        """Spawn one CU per message arriving on ``topic`` (per-partition order)."""
        with self._lock:
            if pilot.state is not PilotState.ACTIVE:
                raise PilotNotActive(f"pilot {pilot.id} is {pilot.state.value}")
            if pilot.description.backend != "simulated-serverless":
                raise ValueError("stream bindings require the simulated-serverless backend")
            key = id(topic)
            if key in self._bound_topics:
                raise AlreadyBound("topic already bound to a pilot")
            binding = StreamBinding(
                id=self._next_id("binding"), pilot_id=pilot.id, topic=topic,
                kernel=kernel, duration_s=duration_s,
            )
            self._bindings[binding.id] = binding
            self._bound_topics[key] = binding.id
            self._partition_locks[binding.id] = [False] * topic.partitions
            self._partition_queues[binding.id] = [[] for _ in range(topic.partitions)]
            return binding

    def publish(
        self,
        broker_pilot: Pilot,
        *,
        size_bytes: int = 1024,
        partition: Optional[int] = None,
    ) -> MessageRecord:
        """Produce one message onto a broker pilot's topic."""
        with self._lock:
            if broker_pilot.state is not PilotState.ACTIVE:
                raise PilotNotActive(f"pilot {broker_pilot.id} is {broker_pilot.state.value}")
            topic = broker_pilot.topic
            if topic is None:
                raise ValueError("publish() requires a simulated-broker pilot")
            seq = broker_pilot.published
            broker_pilot.published = seq + 1
            msg = MessageRecord(
                run_id=broker_pilot.id,
                msg_id=seq,
                partition=partition if partition is not None else seq % topic.partitions,
                size_bytes=size_bytes,
                produced_at_us=self.sim.now_us,
            )
            arrive = topic.ingest(self.sim, msg)
            self.sim.schedule_at(
                arrive, "broker-arrive", entity=f"{broker_pilot.id}-m{seq}",
                action=lambda s, m=msg, t=topic: self._on_message(t, m),
            )
            return msg

    def _on_message(self, topic: BrokerTopic, msg: MessageRecord) -> None:
        bid = self._bound_topics.get(id(topic))
        if bid is None:
            topic.queues[msg.partition].append(msg)
            return
        binding = self._bindings[bid]
        pilot = self._pilots[binding.pilot_id]
        cu = ComputeUnit(
            id=self._next_id("cu"),
            pilot_id=pilot.id,
            kernel=binding.kernel,
            duration_s=binding.duration_s,
            input_msg=msg,
        )
        self._cus[cu.id] = cu
        binding.spawned.append(cu)
        self._partition_queues[bid][msg.partition].append(cu.id)
        self._pump_binding(binding)

    def _binding_of(self, cu: ComputeUnit) -> Optional[StreamBinding]:
        if cu.input_msg is None:
            return None
        for binding in self._bindings.values():
            if binding.pilot_id == cu.pilot_id:
                return binding
        return None

    def _release_partition(self, binding: StreamBinding, cu: ComputeUnit) -> None:
        self._partition_locks[binding.id][cu.input_msg.partition] = False
        self._pump_binding(binding)

    def _pump_binding(self, binding: StreamBinding) -> None:
        pilot = self._pilots[binding.pilot_id]
        if pilot.state is not PilotState.ACTIVE:
            return
        running = self._running.setdefault(pilot.id, set())
        locks = self._partition_locks[binding.id]
        queues = self._partition_queues[binding.id]
        for p in range(len(queues)):
            while queues[p] and self._cus[queues[p][0]].terminal:
                queues[p].pop(0)  # canceled while queued
            if locks[p] or not queues[p]:
                continue
            if len(running) >= pilot.capacity:
                break
            cu = self._cus[queues[p].pop(0)]
            locks[p] = True
            self._start_simulated(pilot, cu)

    # -- wait / cancel -----------------------------------------------------------

    def _is_terminal(self, handle) -> bool:
        if isinstance(handle, Pilot):
            if handle.terminal:
                return True
            ids = [c.id for c in self._cus.values() if c.pilot_id == handle.id]
            return all(self._cus[i].terminal for i in ids)
        if isinstance(handle, ComputeUnit):
            return handle.terminal
        if isinstance(handle, StreamBinding):
            return all(c.terminal for c in handle.spawned)
        raise TypeError(f"cannot wait on {type(handle).__name__}")

    def _summary(self, handle) -> WaitSummary:
        if isinstance(handle, Pilot):
            cus = [c for c in self._cus.values() if c.pilot_id == handle.id]
            state = handle.state.value
        elif isinstance(handle, ComputeUnit):
            cus = [handle]
            state = handle.state.value
        else:
            cus = handle.spawned
            state = self._pilots[handle.pilot_id].state.value
        done = sum(1 for c in cus if c.state is CuState.DONE)
        failed = sum(1 for c in cus if c.state is CuState.FAILED)
        if self._backend_of(handle) == "local":
            elapsed = time.monotonic() - self._wall_t0
        else:
            elapsed = self.sim.now_s
        return WaitSummary(done=done, failed=failed, elapsed_s=elapsed, state=state)

    def wait(self, handle, timeout_s: float = 60.0) -> WaitSummary:
        """Block (or advance virtual time) until the handle is terminal."""
        backend = self._backend_of(handle)
        if backend == "local":
            deadline = time.monotonic() + timeout_s
            while not self._is_terminal(handle):
                if time.monotonic() > deadline:
                    raise TimeoutError("wait timed out")
                time.sleep(0.001)
            return self._summary(handle)
        if isinstance(handle, StreamBinding):
            # messages still in flight spawn more CUs; drain the clock
            while self.sim.step():
                pass
        else:
            while not self._is_terminal(handle):
                if not self.sim.step():
                    break
        return self._summary(handle)

    def _backend_of(self, handle) -> str:
        if isinstance(handle, Pilot):
            return handle.description.backend
        if isinstance(handle, ComputeUnit):
            return self._pilots[handle.pilot_id].description.backend
        if isinstance(handle, StreamBinding):
            return self._pilots[handle.pilot_id].description.backend
        raise TypeError(f"cannot wait on {type(handle).__name__}")

    def cancel(self, handle) -> None:
        """Cancel a pilot or CU; queued work is dropped, running work fails."""
        with self._lock:
            if isinstance(handle, Pilot):
                if handle.terminal:
                    raise AlreadyTerminal(f"pilot {handle.id} is {handle.state.value}")
                for cid in list(self._queues.get(handle.id, [])):
                    cu = self._cus[cid]
                    if not cu.terminal:
                        self._set_cu_state(cu, CuState.FAILED, error="PilotCanceled")
                self._queues[handle.id] = []
                for bid, binding in self._bindings.items():
                    if binding.pilot_id != handle.id:
                        continue
                    for q in self._partition_queues[bid]:
                        for cid in q:
                            self._set_cu_state(
                                self._cus[cid], CuState.FAILED, error="PilotCanceled"
                            )
                        q.clear()
                for cid in list(self._running.get(handle.id, set())):
                    self._cus[cid].cancel_requested = True
                    if handle.description.backend != "local":
                        self._set_cu_state(
                            self._cus[cid], CuState.FAILED, error="Canceled"
                        )
                self._set_pilot_state(handle, PilotState.CANCELED)
                if handle.description.backend == "local":
                    self._pools[handle.id].stop()
                return
            if isinstance(handle, ComputeUnit):
                if handle.terminal:
                    raise AlreadyTerminal(f"cu {handle.id} is {handle.state.value}")
                handle.cancel_requested = True
                if handle.state is CuState.NEW:
                    queue = self._queues[handle.pilot_id]
                    if handle.id in queue:
                        queue.remove(handle.id)
                    self._set_cu_state(handle, CuState.FAILED, error="Canceled")
                elif self._backend_of(handle) != "local":
                    self._set_cu_state(handle, CuState.FAILED, error="Canceled")
                return
            raise TypeError(f"cannot cancel {type(handle).__name__}")

    def close(self, pilot: Pilot) -> None:
        """Graceful shutdown: ACTIVE -> DONE once submitted work finished."""
        with self._lock:
            if pilot.terminal:
                raise AlreadyTerminal(f"pilot {pilot.id} is {pilot.state.value}")
            self._set_pilot_state(pilot, PilotState.DONE)
            if pilot.description.backend == "local":
                self._pools[pilot.id].stop()

    def write_runlog(self, fh) -> None:
        """Dump recorded transitions as JSON lines {ts, entity, id, transition}."""
        import json

        for row in self.transitions:
            fh.write(json.dumps(row) + "\n")


class _LocalPool:
    """Worker threads executing a pilot's CU queue with dependency gating."""

    def __init__(self, manager: PilotManager, pilot: Pilot, size: int):
        self._manager = manager
        self._pilot = pilot
        self._cond = threading.Condition(manager._lock)
        self._stopped = False
        self._threads = [
            threading.Thread(target=self._worker, daemon=True) for _ in range(size)
        ]
        for t in self._threads:
            t.start()

    def kick(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def stop(self) -> None:
        with self._cond:
            self._stopped = True
            self._cond.notify_all()

    def _take(self) -> Optional[ComputeUnit]:
        m = self._manager
        queue = m._queues[self._pilot.id]
        i = 0
        while i < len(queue):
            cu = m._cus[queue[i]]
            status = m._deps_status(cu)
            if status == "failed":
                queue.pop(i)
                m._set_cu_state(cu, CuState.FAILED, error="DependencyFailed")
                continue
            if status == "ready":
                queue.pop(i)
                return cu
            i += 1
        return None

    def _worker(self) -> None:
        m = self._manager
        while True:
            with self._cond:
                # drain any remaining eligible work even after stop()
                while (cu := self._take()) is None and not self._stopped:
                    self._cond.wait(timeout=0.05)
                if cu is None:
                    return
                cu.start_us = m.sim.now_us
                m._set_cu_state(cu, CuState.RUNNING)
            try:
                result = cu.kernel(*cu.args, **cu.kwargs)
                error = None
            except Exception as exc:
                result, error = None, f"{type(exc).__name__}: {exc}"
            with self._cond:
                cu.end_us = m.sim.now_us
                if cu.cancel_requested and error is None:
                    error = "Canceled"
                if error is None:
                    cu.result = result
                    m._set_cu_state(cu, CuState.DONE)
                else:
                    m._set_cu_state(cu, CuState.FAILED, error=error)
                self._cond.notify_all()
