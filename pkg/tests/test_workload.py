from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamscale import workload as wl


def brute_force_labels(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Double-loop nearest-centroid oracle."""
    labels = np.empty(len(points), dtype=int)
    for i, p in enumerate(points):
        best, best_d = 0, float("inf")
        for j, c in enumerate(centroids):
            d = float(((p - c) ** 2).sum())
            if d < best_d:
                best, best_d = j, d
        labels[i] = best
    return labels


class TestGenerate:
    def test_message_sizes_match_reference(self):
        targets = {8000: 296_000, 16000: 592_000, 26000: 962_000}
        for n, target in targets.items():
            size = len(wl.serialize_batch(wl.generate_batch(n, 3, seed=0)))
            assert abs(size - target) <= 0.02 * target

    def test_same_seed_identical(self):
        a = wl.generate_batch(1000, 3, seed=11)
        b = wl.generate_batch(1000, 3, seed=11)
        assert np.array_equal(a.points, b.points)

    def test_different_seed_differs(self):
        a = wl.generate_batch(100, 3, seed=1)
        b = wl.generate_batch(100, 3, seed=2)
        assert not np.array_equal(a.points, b.points)

    def test_single_point_boundary(self):
        batch = wl.generate_batch(1, 3, seed=0)
        assert batch.n == 1 and batch.d == 3
        assert np.all(np.isfinite(batch.points))

    @given(n=st.integers(1, 200), seed=st.integers(0, 2**31))
    @settings(max_examples=30)
    def test_serialization_roundtrip_bit_exact(self, n, seed):
        batch = wl.generate_batch(n, 3, seed=seed)
        back = wl.parse_batch(wl.serialize_batch(batch))
        assert np.array_equal(batch.points, back.points)


class TestMinibatchUpdate:
    def test_hand_executed_running_mean(self):
        # fresh counts, points (2,0) then (0,2): first pulls the centroid to
        # (2,0) at rate 1, second to the midpoint (1,1) at rate 1/2
        m = wl.KMeansModel(centroids=np.zeros((1, 2)))
        wl.minibatch_update(m, wl.PointBatch(np.array([[2.0, 0.0], [0.0, 2.0]])))
        assert np.allclose(m.centroids[0], [1.0, 1.0])
        assert m.counts.tolist() == [2]

    def test_fixed_point_zero_inertia(self):
        cents = np.array([[1.0, 1.0], [5.0, 5.0]])
        m = wl.KMeansModel(centroids=cents.copy(), counts=np.array([4, 4]))
        pts = wl.PointBatch(np.array([[1.0, 1.0], [5.0, 5.0]]))
        inertia = wl.minibatch_update(m, pts)
        assert np.array_equal(m.centroids, cents)
        assert inertia == 0.0

    def test_single_blob_convergence(self):
        # Convergence oracle, fixed seed: the centroid-to-center distance
        # drops to the sampling-noise floor (~sigma/sqrt(points seen)) and
        # never climbs back toward its starting error.
        rng = np.random.default_rng(3)
        center = np.array([10.0, 10.0, 10.0])
        m = wl.KMeansModel(centroids=np.array([[40.0, 40.0, 40.0]]))
        dists = []
        for _ in range(50):
            pts = center + rng.standard_normal((8, 3))
            wl.minibatch_update(m, wl.PointBatch(pts))
            dists.append(float(np.linalg.norm(m.centroids[0] - center)))
        assert all(d <= dists[0] for d in dists[1:])
        assert np.mean(dists[-10:]) < np.mean(dists[:5])
        # 3 sigma / sqrt(400 points total)
        assert dists[-1] <= 0.15

    def test_assignment_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            npts = int(rng.integers(1, 100))
            ncent = int(rng.integers(1, 16))
            d = int(rng.integers(1, 5))
            pts = rng.normal(size=(npts, d))
            cents = rng.normal(size=(ncent, d))
            fast = wl.assign_labels(pts, cents)
            assert np.array_equal(fast, brute_force_labels(pts, cents))

    def test_dimension_mismatch(self):
        m = wl.KMeansModel(centroids=np.zeros((2, 3)))
        with pytest.raises(wl.DimensionMismatch):
            wl.minibatch_update(m, wl.PointBatch(np.zeros((4, 2))))

    def test_finite_output_on_finite_input(self):
        m = wl.KMeansModel(centroids=np.full((4, 3), 1e8))
        batch = wl.generate_batch(256, 3, seed=0)
        wl.minibatch_update(m, batch)
        assert np.all(np.isfinite(m.centroids))


class TestCostModel:
    def test_message_size_ratio_exact(self):
        cm = wl.CostModel()
        assert cm.compute_time(16000, 1024) / cm.compute_time(8000, 1024) == 2.0

    def test_centroid_ratio_exact(self):
        cm = wl.CostModel()
        assert cm.compute_time(8000, 8192) / cm.compute_time(8000, 1024) == 8.0

    def test_linear_in_n_and_c(self):
        cm = wl.CostModel(t_unit=3e-9, t_io_per_byte=0.0)
        base = cm.compute_time(1000, 100)
        assert cm.compute_time(3000, 100) == 3 * base
        assert cm.compute_time(1000, 500) == 5 * base

    def test_analytic_service_time_includes_io(self):
        mb = wl.model_payload_bytes(1024)
        t = wl.service_time(8000, 1024, mode="analytic")
        cm = wl.DEFAULT_COST_MODEL
        assert t == cm.compute_time(8000, 1024) + cm.t_io_per_byte * 2 * mb

    def test_model_payload_bytes(self):
        assert wl.model_payload_bytes(1024, 3) == 1024 * 3 * 8 + 1024 * 8

    @pytest.mark.slow
    def test_measured_mode_ratio_band(self):
        lo = wl.service_time(8000, 1024, mode="measured", cost=wl.CostModel(0, 0))
        hi = wl.service_time(8000, 2048, mode="measured", cost=wl.CostModel(0, 0))
        assert 1.5 <= hi / lo <= 3.0

    def test_measured_mode_cached(self):
        a = wl.service_time(500, 16, mode="measured")
        b = wl.service_time(500, 16, mode="measured")
        assert a == b


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = wl.KMeansModel(
            centroids=np.arange(12, dtype=float).reshape(4, 3),
            counts=np.array([1, 2, 3, 4]),
        )
        path = tmp_path / "model.bin"
        wl.save_checkpoint(m, str(path))
        back = wl.load_checkpoint(str(path))
        assert np.array_equal(back.centroids, m.centroids)
        assert np.array_equal(back.counts, m.counts)
