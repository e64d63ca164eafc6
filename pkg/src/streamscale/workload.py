"""Streaming K-Means workload: synthetic points, mini-batch updates, cost model.

Points are drawn from a seeded mixture of Gaussian blobs whose centers sit on
an integer lattice.  The wire format is one CSV line per point with each
coordinate printed as a fixed 8-decimal float; with the default 3-dimensional
layout that reproduces the reference message sizes (8,000 points -> ~296 kB,
16,000 -> ~592 kB, 26,000 -> ~962 kB, i.e. 37 bytes/point).
"""

from __future__ import annotations

import statistics
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .simkernel import entity_stream

__all__ = [
    "PointBatch",
    "KMeansModel",
    "CostModel",
    "DimensionMismatch",
    "generate_batch",
    "serialize_batch",
    "parse_batch",
    "minibatch_update",
    "model_payload_bytes",
    "service_time",
    "save_checkpoint",
    "load_checkpoint",
    "DEFAULT_DIM",
    "DEFAULT_POINT_COUNTS",
    "DEFAULT_COST_MODEL",
]

DEFAULT_DIM = 3
DEFAULT_POINT_COUNTS = (8000, 16000, 26000)
DEFAULT_BLOB_COUNT = 8

# Lattice bounds per coordinate: every dimension lives in [13, 87] except the
# last, which lives in [130, 870].  With unit-variance noise and 8-decimal
# formatting this fixes the serialized line width at 37 bytes/point for d=3.
_NARROW = (13, 87)
_WIDE = (130, 870)


class DimensionMismatch(ValueError):
    """Batch and model feature dimensions differ."""


@dataclass(frozen=True)
class PointBatch:
    """A block of points as produced by one streaming message."""

    points: np.ndarray  # shape (n, d)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PointBatch) and np.array_equal(
            self.points, other.points
        )


@dataclass
class KMeansModel:
    """Centroids plus per-centroid assignment counts for 1/count learning rates."""

    centroids: np.ndarray  # shape (c, d)
    counts: np.ndarray = field(default=None)  # shape (c,)

    def __post_init__(self) -> None:
        if self.counts is None:
            self.counts = np.zeros(self.centroids.shape[0], dtype=np.int64)
        if self.centroids.shape[0] < 1:
            raise ValueError("need at least one centroid")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")

    @property
    def c(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]


def _lattice_centers(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    centers = np.empty((k, d))
    for j in range(d):
        lo, hi = _WIDE if j == d - 1 else _NARROW
        centers[:, j] = rng.integers(lo, hi + 1, size=k)
    return centers


def generate_batch(
    n: int, d: int = DEFAULT_DIM, seed: int = 0, k_true: int = DEFAULT_BLOB_COUNT
) -> PointBatch:
    """Seeded synthetic batch: ``n`` points from ``k_true`` unit-variance blobs."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = entity_stream(seed, "pointgen")
    centers = _lattice_centers(rng, k_true, d)
    labels = rng.integers(0, k_true, size=n)
    pts = centers[labels] + rng.standard_normal((n, d))
    # quantize to the wire precision so serialization round-trips bit-exactly
    pts = np.round(pts, 8)
    return PointBatch(points=pts)


def serialize_batch(batch: PointBatch) -> bytes:
    """CSV wire format: one line per point, 8-decimal fixed formatting."""
    lines = []
    for row in batch.points:
        lines.append(",".join(f"{v:.8f}" for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_batch(data: bytes) -> PointBatch:
    """Inverse of :func:`serialize_batch`."""
    rows = [
        [float(tok) for tok in line.split(",")]
        for line in data.decode("ascii").splitlines()
        if line
    ]
    return PointBatch(points=np.array(rows))


def assign_labels(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per point (squared Euclidean, ties to lowest index)."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def minibatch_update(model: KMeansModel, batch: PointBatch) -> float:
    """One mini-batch pass: assign, then move centroids with 1/count rates.

    Mutates ``model`` in place and returns the post-update inertia of the
    batch (sum of squared distances to the nearest updated centroid).
    """
    if batch.d != model.d:
        raise DimensionMismatch(f"batch d={batch.d} but model d={model.d}")
    labels = assign_labels(batch.points, model.centroids)
    for x, c in zip(batch.points, labels):
        model.counts[c] += 1
        eta = 1.0 / model.counts[c]
        model.centroids[c] += eta * (x - model.centroids[c])
    post = assign_labels(batch.points, model.centroids)
    diff = batch.points - model.centroids[post]
    return float((diff * diff).sum())


def model_payload_bytes(c: int, d: int = DEFAULT_DIM) -> int:
    """Bytes moved when the model is shared: centroids plus counts, binary."""
    return c * d * 8 + c * 8


@dataclass(frozen=True)
class CostModel:
    """Analytic service-time model for one mini-batch update.

    compute = t_unit * n * c * d  (the O(n c) distance phase, per dimension)
    io      = t_io_per_byte * 2 * model_bytes  (model read + write)

    Defaults were calibrated from measured mode on the reference machine
    (median distance-phase unit cost ~1e-8 s; local model I/O ~100 MB/s).
    """

    t_unit: float = 1e-8
    t_io_per_byte: float = 1e-8

    def __post_init__(self) -> None:
        if self.t_unit < 0 or self.t_io_per_byte < 0:
            raise ValueError("cost coefficients must be >= 0")

    def compute_time(self, n: int, c: int, d: int = DEFAULT_DIM) -> float:
        return self.t_unit * n * c * d

    def io_time(self, model_bytes: int) -> float:
        return self.t_io_per_byte * 2 * model_bytes


DEFAULT_COST_MODEL = CostModel()

_measured_cache: dict[tuple[int, int, int], float] = {}


def _measure_update_seconds(n: int, c: int, d: int) -> float:
    """Median wall time of 5 real mini-batch updates at this shape."""
    batch = generate_batch(n, d, seed=1)
    times = []
    for rep in range(5):
        model = KMeansModel(centroids=generate_batch(c, d, seed=2 + rep).points.copy())
        t0 = time.perf_counter()
        minibatch_update(model, batch)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def service_time(
    n: int,
    c: int,
    d: int = DEFAULT_DIM,
    model_bytes: int | None = None,
    mode: str = "analytic",
    cost: CostModel = DEFAULT_COST_MODEL,
) -> float:
    """Seconds one worker spends updating the model for an ``n``-point message."""
    if n < 1 or c < 1 or d < 1:
        raise ValueError("n, c, d must be >= 1")
    if model_bytes is None:
        model_bytes = model_payload_bytes(c, d)
    if mode == "analytic":
        return cost.compute_time(n, c, d) + cost.io_time(model_bytes)
    if mode == "measured":
        key = (n, c, d)
        if key not in _measured_cache:
            _measured_cache[key] = _measure_update_seconds(n, c, d)
        return _measured_cache[key] + cost.io_time(model_bytes)
    raise ValueError(f"unknown mode {mode!r}")


def save_checkpoint(model: KMeansModel, path: str) -> None:
    """Binary checkpoint: little-endian (c, d) header, centroids, counts."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", model.c, model.d))
        fh.write(model.centroids.astype("<f8").tobytes())
        fh.write(model.counts.astype("<i8").tobytes())


def load_checkpoint(path: str) -> KMeansModel:
    with open(path, "rb") as fh:
        c, d = struct.unpack("<qq", fh.read(16))
        cent = np.frombuffer(fh.read(c * d * 8), dtype="<f8").reshape(c, d).copy()
        counts = np.frombuffer(fh.read(c * 8), dtype="<i8").copy()
    return KMeansModel(centroids=cent, counts=counts)
