"""Simulated streaming pipeline: producer, partitioned broker, worker pool.

Two infrastructure profiles drive the worker model:

* ``serverless``: one container per partition (capped), CPU speed proportional
  to container memory, per-partition broker ingest limits, cold starts and a
  per-message walltime.  Containers are isolated, so per-message processing
  latency does not depend on the partition count.
* ``hpc``: a worker pool over shared nodes.  Message payloads and model-sync
  traffic all pass through one FIFO shared-filesystem resource, and every
  model update is re-read by the other workers, which is what throttles and
  eventually degrades throughput as parallelism grows.

``find_mst`` searches for the maximum sustained throughput with an AIMD rate
controller driven by broker queue growth, and reports metrics over the best
stable measurement window.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from . import workload
from .simkernel import SharedResource, Simulator, US_PER_S, entity_stream

__all__ = [
    "InfraProfile",
    "serverless_profile",
    "hpc_profile",
    "BrokerTopic",
    "MessageRecord",
    "RunMetrics",
    "PipelineSim",
    "produce",
    "ingest",
    "process",
    "find_mst",
    "register_message_size",
    "message_size_bytes",
    "UnknownMessageSize",
    "NoStableRate",
    "METRICS_CSV_FIELDS",
    "metrics_to_csv",
    "metrics_from_csv",
    "FULL_SPEED_MEMORY_MB",
    "SERVERLESS_CONTAINER_CAP",
]

FULL_SPEED_MEMORY_MB = 3008
SERVERLESS_CONTAINER_CAP = 30

# MST search constants
MST_R0_PER_PARTITION = 1.0  # messages/s
MST_MIN_RATE = 0.05  # absolute floor; overload here means no stable rate exists
MST_WINDOW_S = 20.0
MST_BACKOFF = 0.7
MST_STOP_RATIO = 0.025
MST_P99_GROWTH_LIMIT = 0.10
MST_MAX_WINDOWS = 500
MST_DEPTH_SAMPLES = 10

_SIZE_PROBE_SEED = 12345


class UnknownMessageSize(ValueError):
    """No serializer registered for the requested points-per-message."""


class NoStableRate(RuntimeError):
    """Even the minimum production rate overloads the pipeline."""


_size_registry: dict[tuple[int, int], Optional[int]] = {
    (n, workload.DEFAULT_DIM): None for n in workload.DEFAULT_POINT_COUNTS
}


def register_message_size(points: int, d: int = workload.DEFAULT_DIM) -> int:
    """Register a message size; returns the serialized byte count."""
    key = (points, d)
    if _size_registry.get(key) is None:
        batch = workload.generate_batch(points, d, seed=_SIZE_PROBE_SEED)
        _size_registry[key] = len(workload.serialize_batch(batch))
    return _size_registry[key]


def message_size_bytes(points: int, d: int = workload.DEFAULT_DIM) -> int:
    if (points, d) not in _size_registry:
        raise UnknownMessageSize(
            f"no serializer registered for {points} points (d={d})"
        )
    return register_message_size(points, d)


@dataclass(frozen=True)
class InfraProfile:
    """Execution-substrate parameters for one pipeline run."""

    kind: str  # "serverless" | "hpc"
    container_memory_mb: int = FULL_SPEED_MEMORY_MB
    cpu_factor: float = 1.0
    max_concurrency: int = 1
    cold_start_s: float = 0.4
    shared_fs_bandwidth: float = 2_000_000.0  # bytes/s, hpc only
    per_partition_limit: float = 1_000_000.0  # bytes/s broker ingest cap
    cores_per_node: int = 12
    coherence_delay_s: float = 0.002  # hpc: extra delay per additional worker
    walltime_s: float = 900.0  # serverless per-message limit
    arrival_jitter: float = 0.0
    service_jitter: float = 0.0


def serverless_profile(
    partitions: int,
    memory_mb: int = FULL_SPEED_MEMORY_MB,
    hard_cap: int = SERVERLESS_CONTAINER_CAP,
    **overrides,
) -> InfraProfile:
    """Serverless profile: CPU scales with memory, containers capped."""
    return InfraProfile(
        kind="serverless",
        container_memory_mb=memory_mb,
        cpu_factor=min(1.0, memory_mb / FULL_SPEED_MEMORY_MB),
        max_concurrency=min(partitions, hard_cap),
        **overrides,
    )


def hpc_profile(
    partitions: int,
    nodes: int,
    cores_per_node: int = 12,
    per_partition_limit: float = 8_000_000.0,
    **overrides,
) -> InfraProfile:
    """HPC profile: worker pool bounded by cores, shared-filesystem I/O."""
    return InfraProfile(
        kind="hpc",
        max_concurrency=min(partitions, nodes * cores_per_node),
        cores_per_node=cores_per_node,
        per_partition_limit=per_partition_limit,
        **overrides,
    )


@dataclass(slots=True)
class MessageRecord:
    """Per-message trace with timestamps in virtual microseconds."""

    run_id: str
    msg_id: int
    partition: int
    size_bytes: int
    produced_at_us: int
    broker_arrive_at_us: int = -1
    worker_start_at_us: int = -1
    worker_end_at_us: int = -1
    failed: bool = False


class BrokerTopic:
    """Partitioned FIFO topic with a per-partition ingest limiter.

    When ``shared_fs`` is set (HPC), the broker's log write for each message
    passes through that resource before the partition limiter.
    """

    def __init__(
        self,
        partitions: int,
        per_partition_limit: float,
        shared_fs: Optional[SharedResource] = None,
    ):
        if partitions < 1:
            raise ValueError("partitions must be >= 1")
        if per_partition_limit <= 0:
            raise ValueError("per_partition_limit must be > 0")
        self.partitions = partitions
        self.per_partition_limit = per_partition_limit
        self.shared_fs = shared_fs
        self.queues: list[deque[MessageRecord]] = [deque() for _ in range(partitions)]
        self._avail_us = [0] * partitions
        self.arrivals_total = 0

    def ingest(self, sim: Simulator, msg: MessageRecord) -> int:
        """Admit one message; returns its broker arrival time (us)."""
        if not 0 <= msg.partition < self.partitions:
            raise ValueError(f"invalid partition {msg.partition}")
        t = sim.now_us
        if self.shared_fs is not None:
            t = self.shared_fs.acquire(sim, msg.size_bytes, f"broker-log-p{msg.partition}")
        start = max(t, self._avail_us[msg.partition])
        dur = int(math.ceil(msg.size_bytes * US_PER_S / self.per_partition_limit))
        arrive = start + dur
        self._avail_us[msg.partition] = arrive
        msg.broker_arrive_at_us = arrive
        return arrive

    def depth(self) -> int:
        return sum(len(q) for q in self.queues)


def ingest(msg: MessageRecord, topic: BrokerTopic, sim: Simulator) -> int:
    """Operation form of :meth:`BrokerTopic.ingest`."""
    return topic.ingest(sim, msg)


def produce(
    rate: float,
    message_size: int,
    duration_s: float,
    partitions: int,
    *,
    run_id: str = "run",
    d: int = workload.DEFAULT_DIM,
    seed: int = 0,
    jitter: float = 0.0,
    start_us: int = 0,
) -> list[MessageRecord]:
    """Deterministic synthetic message stream.

    Messages are spaced 1/rate apart (optionally jittered by a seeded
    uniform factor) and assigned round-robin across partitions.  Payload
    bytes for a record can be regenerated with :func:`message_payload`.
    """
    if rate <= 0:
        raise ValueError("rate must be > 0")
    size = message_size_bytes(message_size, d)
    rng = entity_stream(seed, "producer") if jitter else None
    msgs: list[MessageRecord] = []
    end_us = start_us + int(round(duration_s * US_PER_S))
    t = start_us
    i = 0
    interval = US_PER_S / rate
    while t < end_us:
        msgs.append(
            MessageRecord(
                run_id=run_id,
                msg_id=i,
                partition=i % partitions,
                size_bytes=size,
                produced_at_us=int(t),
            )
        )
        step = interval
        if rng is not None:
            step *= 1.0 + jitter * (2.0 * rng.random() - 1.0)
        t += max(1.0, step)
        i += 1
    return msgs


def message_payload(msg: MessageRecord, points: int, d: int = workload.DEFAULT_DIM) -> bytes:
    """Regenerate the serialized point payload a record stands for."""
    return workload.serialize_batch(
        workload.generate_batch(points, d, seed=_SIZE_PROBE_SEED)
    )


def _service_seconds(
    profile: InfraProfile,
    wc: int,
    ms_points: int,
    d: int,
    cost: workload.CostModel,
    mode: str,
) -> float:
    """Base per-message worker time, before shared-resource effects."""
    if profile.kind == "serverless":
        return workload.service_time(ms_points, wc, d, mode=mode, cost=cost) / profile.cpu_factor
    # hpc: model I/O goes through the shared filesystem instead of local disk
    no_io = replace(cost, t_io_per_byte=0.0)
    return workload.service_time(ms_points, wc, d, mode=mode, cost=no_io)


def process(
    msg: MessageRecord,
    profile: InfraProfile,
    *,
    wc: int,
    ms_points: int,
    d: int = workload.DEFAULT_DIM,
    cost: workload.CostModel = workload.DEFAULT_COST_MODEL,
    mode: str = "analytic",
    shared_fs: Optional[SharedResource] = None,
    active_workers: int = 1,
    cold_start: bool = False,
    start_us: Optional[int] = None,
) -> int:
    """Process one message on an idle worker; returns worker_end (us).

    Single-message analysis path mirroring the integrated simulator's
    service model; ``msg.broker_arrive_at_us`` must be set.
    """
    if msg.broker_arrive_at_us < 0:
        raise ValueError("message has not arrived at the broker")
    points = ms_points
    start = msg.broker_arrive_at_us if start_us is None else start_us
    msg.worker_start_at_us = start
    base_s = _service_seconds(profile, wc, points, d, cost, mode)
    if profile.kind == "serverless":
        dur_s = base_s
        if dur_s > profile.walltime_s:
            msg.failed = True
            dur_s = profile.walltime_s
        if cold_start:
            dur_s += profile.cold_start_s
        msg.worker_end_at_us = start + int(round(dur_s * US_PER_S))
        return msg.worker_end_at_us
    if shared_fs is None:
        raise ValueError("hpc processing requires the shared filesystem resource")
    t_read = shared_fs.acquire_at(start, msg.size_bytes, "worker-read")
    t_compute = t_read + int(round(base_s * US_PER_S))
    sync_bytes = workload.model_payload_bytes(wc, d) * active_workers
    t_sync = shared_fs.acquire_at(t_compute, sync_bytes, "model-sync")
    coh_us = int(round(profile.coherence_delay_s * (active_workers - 1) * US_PER_S))
    msg.worker_end_at_us = t_sync + coh_us
    return msg.worker_end_at_us


@dataclass
class _WindowStats:
    arrivals: int = 0
    completed: int = 0
    failed: int = 0
    completed_bytes: int = 0
    l_br_us: list[int] = field(default_factory=list)
    l_px_us: list[int] = field(default_factory=list)
    depth_samples: list[int] = field(default_factory=list)

    def p99_px_us(self) -> Optional[int]:
        if not self.l_px_us:
            return None
        return _nearest_rank(self.l_px_us, 99)


def _nearest_rank(values: list[int], pct: float) -> int:
    ordered = sorted(values)
    idx = max(0, math.ceil(pct / 100.0 * len(ordered)) - 1)
    return ordered[idx]


@dataclass(frozen=True)
class RunMetrics:
    """Measured observables for one run at its maximum sustained throughput."""

    run_id: str
    profile: str
    n_part_px: int
    n_nodes_px: int
    n_part_br: int
    n_nodes_br: int
    mem_mb: int
    wc_centroids: int
    ms_points: int
    t_px_msgs_s: float
    t_px_mb_s: float
    t_br_msgs_s: float
    l_br_ms_p50: float
    l_br_ms_p99: float
    l_px_ms_p50: float
    l_px_ms_p99: float
    messages_total: int
    failed_total: int
    duration_s: float
    config: Optional[Mapping] = None  # not part of the CSV schema


METRICS_CSV_FIELDS = (
    "run_id",
    "profile",
    "n_part_px",
    "n_nodes_px",
    "n_part_br",
    "n_nodes_br",
    "mem_mb",
    "wc_centroids",
    "ms_points",
    "t_px_msgs_s",
    "t_px_mb_s",
    "t_br_msgs_s",
    "l_br_ms_p50",
    "l_br_ms_p99",
    "l_px_ms_p50",
    "l_px_ms_p99",
    "messages_total",
    "failed_total",
    "duration_s",
)

_INT_FIELDS = {
    "n_part_px",
    "n_nodes_px",
    "n_part_br",
    "n_nodes_br",
    "mem_mb",
    "wc_centroids",
    "ms_points",
    "messages_total",
    "failed_total",
}
_STR_FIELDS = {"run_id", "profile"}


def metrics_to_csv(rows: list[RunMetrics]) -> str:
    """Render rows in the fixed CSV schema (lossless float round-trip)."""
    out = [",".join(METRICS_CSV_FIELDS)]
    for r in rows:
        cells = []
        for name in METRICS_CSV_FIELDS:
            v = getattr(r, name)
            cells.append(v if isinstance(v, str) else repr(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def metrics_from_csv(text: str) -> list[RunMetrics]:
    lines = [ln for ln in text.splitlines() if ln]
    header = tuple(lines[0].split(","))
    if header != METRICS_CSV_FIELDS:
        raise ValueError(f"unexpected metrics CSV header: {lines[0]!r}")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        kwargs = {}
        for name, cell in zip(METRICS_CSV_FIELDS, cells):
            if name in _STR_FIELDS:
                kwargs[name] = cell
            elif name in _INT_FIELDS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        rows.append(RunMetrics(**kwargs))
    return rows


class PipelineSim:
    """Event-driven producer/broker/worker simulation for one configuration."""

    def __init__(
        self,
        *,
        partitions: int,
        profile: InfraProfile,
        wc: int,
        ms_points: int,
        d: int = workload.DEFAULT_DIM,
        mode: str = "analytic",
        cost: workload.CostModel = workload.DEFAULT_COST_MODEL,
        seed: int = 0,
        run_id: str = "run",
        trace=None,
    ):
        register_message_size(ms_points, d)
        self.sim = Simulator(trace=trace)
        self.profile = profile
        self.partitions = partitions
        self.wc = wc
        self.ms_points = ms_points
        self.d = d
        self.run_id = run_id
        self.size_bytes = message_size_bytes(ms_points, d)
        self.shared_fs = (
            SharedResource("shared-fs", profile.shared_fs_bandwidth)
            if profile.kind == "hpc"
            else None
        )
        self.topic = BrokerTopic(
            partitions, profile.per_partition_limit, shared_fs=self.shared_fs
        )
        self.workers = max(1, profile.max_concurrency)
        self._busy = [False] * self.workers
        self._warm = [False] * self.workers
        self._base_service_s = _service_seconds(profile, wc, ms_points, d, cost, mode)
        self._model_bytes = workload.model_payload_bytes(wc, d)
        self._producer_rng = (
            entity_stream(seed, "producer") if profile.arrival_jitter > 0 else None
        )
        self._service_rngs = (
            [entity_stream(seed, f"worker-{w}") for w in range(self.workers)]
            if profile.service_jitter > 0
            else None
        )
        self._next_emit_us = 0.0
        self._next_msg_id = 0
        self.produced_total = 0
        self.completed_total = 0
        self.failed_total = 0
        self.window = _WindowStats()

    # -- conservation bookkeeping -------------------------------------------

    @property
    def in_flight(self) -> int:
        """Messages produced but neither completed nor failed."""
        return self.produced_total - self.completed_total - self.failed_total

    # -- event handlers ------------------------------------------------------

    def _emit(self, sim: Simulator) -> None:
        msg = MessageRecord(
            run_id=self.run_id,
            msg_id=self._next_msg_id,
            partition=self._next_msg_id % self.partitions,
            size_bytes=self.size_bytes,
            produced_at_us=sim.now_us,
        )
        self._next_msg_id += 1
        self.produced_total += 1
        arrive = self.topic.ingest(sim, msg)
        sim.schedule_at(
            arrive,
            "broker-arrive",
            entity=f"m{msg.msg_id}",
            action=lambda s, m=msg: self._on_arrive(s, m),
        )

    def _on_arrive(self, sim: Simulator, msg: MessageRecord) -> None:
        self.window.arrivals += 1
        self.topic.arrivals_total += 1
        self.window.l_br_us.append(msg.broker_arrive_at_us - msg.produced_at_us)
        self.topic.queues[msg.partition].append(msg)
        w = msg.partition % self.workers
        if not self._busy[w]:
            self._start_service(sim, w)

    def _next_message_for(self, w: int) -> Optional[MessageRecord]:
        best_p = -1
        best_key = None
        for p in range(w, self.partitions, self.workers):
            q = self.topic.queues[p]
            if q:
                head = q[0]
                key = (head.broker_arrive_at_us, head.msg_id)
                if best_key is None or key < best_key:
                    best_key, best_p = key, p
        if best_p < 0:
            return None
        return self.topic.queues[best_p].popleft()

    def _service_jitter_factor(self, w: int) -> float:
        if self._service_rngs is None:
            return 1.0
        u = self._service_rngs[w].random()
        return 1.0 + self.profile.service_jitter * (2.0 * u - 1.0)

    def _start_service(self, sim: Simulator, w: int) -> None:
        msg = self._next_message_for(w)
        if msg is None:
            return
        self._busy[w] = True
        msg.worker_start_at_us = sim.now_us
        if self.sim._trace is not None:
            sim.schedule_at(sim.now_us, "worker-start", entity=f"m{msg.msg_id}")
        cold_s = 0.0
        if not self._warm[w]:
            self._warm[w] = True
            if self.profile.kind == "serverless":
                cold_s = self.profile.cold_start_s
        dur_s = self._base_service_s * self._service_jitter_factor(w)
        if self.profile.kind == "serverless":
            failed = dur_s > self.profile.walltime_s
            occupy_s = min(dur_s, self.profile.walltime_s) + cold_s
            end = sim.now_us + max(1, int(round(occupy_s * US_PER_S)))
            sim.schedule_at(
                end,
                "worker-end",
                entity=f"m{msg.msg_id}",
                action=lambda s, m=msg, ww=w, f=failed: self._on_end(s, m, ww, f),
            )
        else:
            t_read = self.shared_fs.acquire(sim, msg.size_bytes, f"read-w{w}")
            t_compute = t_read + max(1, int(round(dur_s * US_PER_S)))
            sim.schedule_at(
                t_compute,
                "control",
                entity=f"m{msg.msg_id}",
                action=lambda s, m=msg, ww=w: self._on_compute_done(s, m, ww),
            )

    def _on_compute_done(self, sim: Simulator, msg: MessageRecord, w: int) -> None:
        # write own model update, read the other workers' updates
        sync_bytes = self._model_bytes * self.workers
        t_sync = self.shared_fs.acquire(sim, sync_bytes, f"sync-w{w}")
        coh_us = int(round(self.profile.coherence_delay_s * (self.workers - 1) * US_PER_S))
        sim.schedule_at(
            t_sync + coh_us,
            "worker-end",
            entity=f"m{msg.msg_id}",
            action=lambda s, m=msg, ww=w: self._on_end(s, m, ww, False),
        )

    def _on_end(self, sim: Simulator, msg: MessageRecord, w: int, failed: bool) -> None:
        msg.worker_end_at_us = sim.now_us
        msg.failed = failed
        self._busy[w] = False
        if failed:
            self.failed_total += 1
            self.window.failed += 1
        else:
            self.completed_total += 1
            self.window.completed += 1
            self.window.completed_bytes += msg.size_bytes
            self.window.l_px_us.append(msg.worker_end_at_us - msg.broker_arrive_at_us)
        self._start_service(sim, w)

    # -- window driver -------------------------------------------------------

    def run_window(
        self, rate: Optional[float], window_s: float = MST_WINDOW_S
    ) -> _WindowStats:
        """Run one window, producing at ``rate`` (None = production paused)."""
        sim = self.sim
        t0 = sim.now_us
        t_end = t0 + int(round(window_s * US_PER_S))
        if rate is not None:
            interval = US_PER_S / rate
            self._next_emit_us = max(self._next_emit_us, float(t0))
            while self._next_emit_us < t_end:
                sim.schedule_at(int(self._next_emit_us), "produce", entity="producer",
                                action=lambda s: self._emit(s))
                step = interval
                if self._producer_rng is not None:
                    step *= 1.0 + self.profile.arrival_jitter * (
                        2.0 * self._producer_rng.random() - 1.0
                    )
                self._next_emit_us += max(1.0, step)
        self.window = _WindowStats()
        self.window.depth_samples.append(self.in_flight)
        sample_step = (t_end - t0) // MST_DEPTH_SAMPLES
        for i in range(1, MST_DEPTH_SAMPLES + 1):
            sim.schedule_at(
                t0 + i * sample_step,
                "control",
                entity="monitor",
                action=lambda s: self.window.depth_samples.append(self.in_flight),
            )
        sim.run_until(t_end)
        return self.window


_STABLE, _OVERLOAD, _AMBIGUOUS, _DRAINING = "stable", "overload", "ambiguous", "draining"


def _classify(stats: _WindowStats, prev_p99_us: Optional[int]) -> str:
    depths = stats.depth_samples
    growing = all(b > a for a, b in zip(depths, depths[1:]))
    if growing:
        return _OVERLOAD
    if stats.completed == 0:
        return _AMBIGUOUS
    if stats.completed > stats.arrivals * 1.05 + 2 and depths[-1] < depths[0]:
        # backlog from an earlier overload is flushing out; measurements in
        # this window reflect the transient, not the offered rate
        return _DRAINING
    p99 = stats.p99_px_us()
    p99_ok = prev_p99_us is None or p99 < prev_p99_us * (1.0 + MST_P99_GROWTH_LIMIT)
    if depths[-1] <= depths[0] and p99_ok:
        return _STABLE
    return _AMBIGUOUS


def find_mst(
    pipe: PipelineSim,
    *,
    r0_per_partition: float = MST_R0_PER_PARTITION,
    window_s: float = MST_WINDOW_S,
    max_windows: int = MST_MAX_WINDOWS,
) -> RunMetrics:
    """AIMD search for the maximum sustained throughput of ``pipe``.

    Rate climbs geometrically until the first overload (queue depth growing
    monotonically through a window), then additively by ``delta``; each
    overload backs the rate off by 0.7x and halves ``delta``.  The search
    stops once delta/rate < 2.5% and reports the best stable window.
    """
    r0 = r0_per_partition * pipe.partitions
    rate = r0
    delta = r0
    overloaded_once = False
    ambiguous_streak = 0
    prev_p99: Optional[int] = None
    best: Optional[tuple[float, float, _WindowStats]] = None  # (t_px, rate, stats)

    windows_used = 0
    while windows_used < max_windows:
        stats = pipe.run_window(rate, window_s)
        windows_used += 1
        verdict = _classify(stats, prev_p99)
        if stats.p99_px_us() is not None:
            prev_p99 = stats.p99_px_us()
        if verdict == _AMBIGUOUS:
            ambiguous_streak += 1
            if ambiguous_streak >= 2:
                verdict = _OVERLOAD
        else:
            ambiguous_streak = 0

        if verdict == _DRAINING:
            continue  # hold the rate until the backlog clears
        if verdict == _STABLE:
            t_px = stats.completed / window_s
            if best is None or t_px > best[0]:
                best = (t_px, rate, stats)
            rate += delta
            if not overloaded_once:
                delta *= 2.0
        elif verdict == _OVERLOAD:
            if best is None and rate <= MST_MIN_RATE:
                raise NoStableRate(
                    f"pipeline overloads even at the minimum rate {rate} msg/s"
                )
            overloaded_once = True
            ambiguous_streak = 0
            rate = max(rate * MST_BACKOFF, MST_MIN_RATE)
            delta /= 2.0
            # production backoff: pause and flush the backlog so the next
            # measurement window starts from a clean steady state
            prev_in_flight = None
            while (
                windows_used < max_windows
                and pipe.in_flight > 2 * pipe.workers
                and pipe.in_flight != prev_in_flight
            ):
                prev_in_flight = pipe.in_flight
                pipe.run_window(None, window_s)
                windows_used += 1
        if overloaded_once and best is not None and delta / rate < MST_STOP_RATIO:
            break
    if best is None:
        raise NoStableRate("MST search found no stable window")

    _, _, stats = best
    return RunMetrics(
        run_id=pipe.run_id,
        profile=pipe.profile.kind,
        n_part_px=pipe.partitions,
        n_nodes_px=1,
        n_part_br=pipe.topic.partitions,
        n_nodes_br=1,
        mem_mb=pipe.profile.container_memory_mb,
        wc_centroids=pipe.wc,
        ms_points=pipe.ms_points,
        t_px_msgs_s=stats.completed / window_s,
        t_px_mb_s=stats.completed_bytes / window_s / 1e6,
        t_br_msgs_s=stats.arrivals / window_s,
        l_br_ms_p50=_nearest_rank(stats.l_br_us, 50) / 1000.0 if stats.l_br_us else 0.0,
        l_br_ms_p99=_nearest_rank(stats.l_br_us, 99) / 1000.0 if stats.l_br_us else 0.0,
        l_px_ms_p50=_nearest_rank(stats.l_px_us, 50) / 1000.0 if stats.l_px_us else 0.0,
        l_px_ms_p99=_nearest_rank(stats.l_px_us, 99) / 1000.0 if stats.l_px_us else 0.0,
        messages_total=pipe.produced_total,
        failed_total=pipe.failed_total,
        duration_s=pipe.sim.now_s,
    )
