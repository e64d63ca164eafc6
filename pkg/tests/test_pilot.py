from __future__ import annotations

import threading
import time

import pytest

from streamscale import pilot as pi
from streamscale.pilot import (
    AlreadyBound,
    AlreadyTerminal,
    ComputeUnit,
    CuState,
    PilotDescription,
    PilotManager,
    PilotNotActive,
    PilotState,
)

LEGAL_PILOT = {
    "NEW": {"ACTIVE", "FAILED", "CANCELED"},
    "ACTIVE": {"DONE", "FAILED", "CANCELED"},
}
LEGAL_CU = {
    "NEW": {"RUNNING", "FAILED"},
    "RUNNING": {"DONE", "FAILED"},
}


def assert_legal_transitions(manager: PilotManager):
    """Every recorded transition must be an edge of the declared graphs."""
    for row in manager.transitions:
        old, new = row["transition"].split("->")
        legal = LEGAL_PILOT if row["entity"] == "pilot" else LEGAL_CU
        assert new in legal.get(old, set()), f"illegal {row}"


class TestSubmitPilot:
    def test_local_pool_sizing(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="local", nodes=1, partitions=4))
        assert p.state is PilotState.ACTIVE
        assert p.capacity == 4
        m.close(p)
        assert_legal_transitions(m)

    def test_serverless_concurrency_capped_at_30(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=64)
        )
        assert p.capacity == 30

    def test_zero_nodes_allocation_failed(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="local", nodes=0, partitions=4))
        assert p.state is PilotState.FAILED
        assert "AllocationFailed" in p.reason
        assert_legal_transitions(m)

    def test_oversized_local_request_fails(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="local", nodes=16, partitions=16))
        assert p.state is PilotState.FAILED


class TestSubmitCu:
    def test_concurrency_cap_on_simulated_backend(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=4)
        )
        cus = [m.submit_cu(p, lambda: 1, duration_s=1.0) for _ in range(10)]
        m.wait(p)
        assert all(c.state is CuState.DONE for c in cus)
        assert m.max_running_observed[p.id] <= 4
        assert_legal_transitions(m)

    def test_concurrency_cap_on_local_backend(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="local", nodes=1, partitions=4))
        cus = [m.submit_cu(p, time.sleep, (0.02,)) for _ in range(10)]
        m.wait(p, timeout_s=10)
        assert all(c.state is CuState.DONE for c in cus)
        assert m.max_running_observed[p.id] <= 4
        assert_legal_transitions(m)

    def test_failing_kernel_captured_pilot_stays_active(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=2)
        )

        def boom():
            raise RuntimeError("kaput")

        cu = m.submit_cu(p, boom)
        m.wait(cu)
        assert cu.state is CuState.FAILED
        assert "kaput" in cu.error
        assert p.state is PilotState.ACTIVE
        assert_legal_transitions(m)

    def test_walltime_exceeded_on_serverless(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=1,
                             walltime_s=1.0)
        )
        cu = m.submit_cu(p, lambda: 1, duration_s=5.0)
        m.wait(cu)
        assert cu.state is CuState.FAILED
        assert cu.error == "WalltimeExceeded"

    def test_submit_to_inactive_pilot(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="local", nodes=0))
        with pytest.raises(PilotNotActive):
            m.submit_cu(p, lambda: 1)

    def test_dependencies_gate_execution(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=4)
        )
        order = []
        a = m.submit_cu(p, lambda: order.append("a"), duration_s=2.0)
        b = m.submit_cu(p, lambda: order.append("b"), duration_s=0.5, depends_on=[a])
        m.wait(p)
        assert b.start_us >= a.end_us
        assert a.state is CuState.DONE and b.state is CuState.DONE

    def test_failed_dependency_fails_dependent(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=2)
        )

        def boom():
            raise ValueError("x")

        a = m.submit_cu(p, boom)
        b = m.submit_cu(p, lambda: 2, depends_on=[a])
        m.wait(p)
        assert b.state is CuState.FAILED
        assert b.error == "DependencyFailed"

    def test_backend_interchangeability_results(self):
        def kernel(x, y):
            return x * 10 + y

        results = {}
        for backend in ("local", "simulated-serverless"):
            m = PilotManager()
            p = m.submit_pilot(PilotDescription(backend=backend, partitions=2))
            cus = [m.submit_cu(p, kernel, (i, 3)) for i in range(6)]
            m.wait(p, timeout_s=10)
            results[backend] = [c.result for c in cus]
        assert results["local"] == results["simulated-serverless"]


class TestBindStream:
    def make_bound(self, partitions=4, cap_partitions=4, duration_s=0.5):
        m = PilotManager()
        broker = m.submit_pilot(
            PilotDescription(backend="simulated-broker", partitions=partitions)
        )
        worker = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=cap_partitions)
        )
        seen = []
        binding = m.bind_stream(
            worker, broker.topic, lambda msg: seen.append(msg.msg_id),
            duration_s=duration_s,
        )
        return m, broker, worker, binding, seen

    def test_cu_per_message_and_partition_order(self):
        m, broker, worker, binding, seen = self.make_bound()
        for _ in range(20):
            m.publish(broker)
        summary = m.wait(binding)
        assert len(binding.spawned) == 20
        assert summary.done == 20
        # per-partition: start times of consecutive messages never reorder
        by_part = {}
        for cu in binding.spawned:
            by_part.setdefault(cu.input_msg.partition, []).append(cu)
        for cus in by_part.values():
            starts = [c.start_us for c in cus]
            assert starts == sorted(starts)
            ids = [c.input_msg.msg_id for c in cus]
            assert ids == sorted(ids)
        assert_legal_transitions(m)

    def test_binding_twice_rejected(self):
        m, broker, worker, binding, _ = self.make_bound()
        with pytest.raises(AlreadyBound):
            m.bind_stream(worker, broker.topic, lambda msg: None)

    def test_cap_one_serializes_total_time(self):
        m, broker, worker, binding, _ = self.make_bound(
            partitions=1, cap_partitions=1, duration_s=0.5
        )
        n = 6
        for _ in range(n):
            m.publish(broker, size_bytes=1000)
        m.wait(binding)
        cus = binding.spawned
        # total processing span = cold start + sum of service times
        span_s = (max(c.end_us for c in cus) - cus[0].start_us) / 1e6
        assert span_s == pytest.approx(pi.COLD_START_S + n * 0.5, rel=1e-6)

    def test_conservation_spawned_equals_delivered(self):
        m, broker, worker, binding, _ = self.make_bound()
        for _ in range(37):
            m.publish(broker)
        summary = m.wait(binding)
        assert len(binding.spawned) == 37
        assert summary.done + summary.failed == 37


class TestWaitCancel:
    def test_wait_on_done_cu_returns_immediately(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="simulated-serverless"))
        cu = m.submit_cu(p, lambda: 42)
        m.wait(cu)
        again = m.wait(cu)
        assert again.done == 1
        assert cu.result == 42

    def test_cancel_new_pilot(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="simulated-serverless"))
        m.cancel(p)
        assert p.state is PilotState.CANCELED
        assert_legal_transitions(m)

    def test_cancel_running_cu_fails_with_reason(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="simulated-serverless"))
        cu = m.submit_cu(p, lambda: 1, duration_s=10.0)
        # drive the sim just enough to start the CU
        while cu.state is CuState.NEW:
            m.sim.step()
        m.cancel(cu)
        assert cu.state is CuState.FAILED
        assert cu.error == "Canceled"
        assert p.state is PilotState.ACTIVE

    def test_cancel_done_cu_already_terminal(self):
        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="simulated-serverless"))
        cu = m.submit_cu(p, lambda: 1)
        m.wait(cu)
        with pytest.raises(AlreadyTerminal):
            m.cancel(cu)

    def test_cancel_pilot_drops_queued_with_reason(self):
        m = PilotManager()
        p = m.submit_pilot(
            PilotDescription(backend="simulated-serverless", partitions=1)
        )
        first = m.submit_cu(p, lambda: 1, duration_s=5.0)
        queued = [m.submit_cu(p, lambda: 1) for _ in range(3)]
        while first.state is CuState.NEW:
            m.sim.step()
        m.cancel(p)
        assert p.state is PilotState.CANCELED
        assert all(c.state is CuState.FAILED for c in queued)
        assert all(c.error == "PilotCanceled" for c in queued)
        summary = m.wait(p)
        assert summary.state == "CANCELED"
        assert_legal_transitions(m)

    def test_runlog_format(self, tmp_path):
        import json

        m = PilotManager()
        p = m.submit_pilot(PilotDescription(backend="simulated-serverless"))
        m.submit_cu(p, lambda: 1)
        m.wait(p)
        path = tmp_path / "runlog.jsonl"
        with open(path, "w") as fh:
            m.write_runlog(fh)
        rows = [json.loads(ln) for ln in path.read_text().splitlines()]
        assert all(set(r) == {"ts", "entity", "id", "transition"} for r in rows)


class TestLayers:
    def test_layers_add_cold_start_cost(self):
        def run(layers):
            m = PilotManager()
            p = m.submit_pilot(
                PilotDescription(
                    backend="simulated-serverless", partitions=1, layers=layers
                )
            )
            cu = m.submit_cu(p, lambda: 1, duration_s=1.0)
            m.wait(cu)
            return (cu.end_us - cu.start_us) / 1e6

        plain = run(())
        layered = run(("numpy-bundle", "model-bundle"))
        assert layered == pytest.approx(plain + 2 * pi.LAYER_COST_S, rel=1e-9)
