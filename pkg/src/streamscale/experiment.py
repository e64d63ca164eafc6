"""Experiment automation: config grids, per-group fits, evaluation, sizing.

A grid is a set of :class:`ExperimentConfig` points.  Each point runs an
independent maximum-sustained-throughput search; rows merge in run-id order
so execution order never changes the output table.  Fitting and evaluation
group rows by (machine, workload complexity, message size) and model
throughput as a function of the processing-partition count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from . import pipeline, usl
from .pipeline import InfraProfile, RunMetrics
from .workload import CostModel, DEFAULT_COST_MODEL

__all__ = [
    "ExperimentConfig",
    "RunOutcome",
    "EvaluationReport",
    "run_config",
    "run_grid",
    "fit_group",
    "evaluate",
    "recommend",
    "InsufficientLevels",
    "Infeasible",
    "DEFAULT_GROUP_BY",
    "DEFAULT_X",
    "DEFAULT_Y",
]

DEFAULT_GROUP_BY = ("profile", "wc_centroids", "ms_points")
DEFAULT_X = "n_part_px"
DEFAULT_Y = "t_px_msgs_s"


class InsufficientLevels(ValueError):
    """A group lacks enough parallelism levels for the requested split."""


class Infeasible(ValueError):
    """The fitted curve can never reach the requested throughput."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One point in the control-variable grid."""

    machine_profile: str  # "serverless" | "hpc"
    n_part_px: int
    n_nodes_px: int = 1
    n_part_br: Optional[int] = None  # defaults to n_part_px
    n_nodes_br: Optional[int] = None  # defaults to n_nodes_px
    wc_centroids: int = 1024
    ms_points: int = 8000
    mem_mb: int = 3008
    seed: int = 0
    mode: str = "analytic"

    def __post_init__(self) -> None:
        if self.machine_profile not in ("serverless", "hpc"):
            raise ValueError(f"unknown machine profile {self.machine_profile!r}")
        if self.n_part_br is None:
            object.__setattr__(self, "n_part_br", self.n_part_px)
        if self.n_nodes_br is None:
            object.__setattr__(self, "n_nodes_br", self.n_nodes_px)
        for name in ("n_part_px", "n_nodes_px", "n_part_br", "n_nodes_br",
                     "wc_centroids", "ms_points", "mem_mb"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.mode not in ("analytic", "measured"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def run_id(self) -> str:
        """Deterministic id derived from every field plus the seed."""
        canon = "|".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class RunOutcome:
    """Result slot for one grid cell: metrics on success, error on failure."""

    run_id: str
    config: ExperimentConfig
    metrics: Optional[RunMetrics] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.metrics is None


def _build_profile(
    config: ExperimentConfig, overrides: Optional[Mapping] = None
) -> InfraProfile:
    kw = dict((overrides or {}).get(config.machine_profile, {}))
    if config.machine_profile == "serverless":
        return pipeline.serverless_profile(
            partitions=config.n_part_px, memory_mb=config.mem_mb, **kw
        )
    return pipeline.hpc_profile(
        partitions=config.n_part_px, nodes=config.n_nodes_px, **kw
    )


def run_config(
    config: ExperimentConfig,
    *,
    profile_overrides: Optional[Mapping] = None,
    cost: CostModel = DEFAULT_COST_MODEL,
) -> RunMetrics:
    """Execute one configuration's MST search and return its metrics row."""
    profile = _build_profile(config, profile_overrides)
    pipe = pipeline.PipelineSim(
        partitions=config.n_part_br,
        profile=profile,
        wc=config.wc_centroids,
        ms_points=config.ms_points,
        mode=config.mode,
        cost=cost,
        seed=config.seed,
        run_id=config.run_id,
    )
    metrics = pipeline.find_mst(pipe)
    return RunMetrics(
        **{
            **metrics.__dict__,
            "profile": config.machine_profile,
            "n_part_px": config.n_part_px,
            "n_nodes_px": config.n_nodes_px,
            "n_part_br": config.n_part_br,
            "n_nodes_br": config.n_nodes_br,
            "mem_mb": config.mem_mb,
            "config": None,
        }
    )


def _execute(args) -> RunOutcome:
    config, overrides, cost = args
    try:
        return RunOutcome(config.run_id, config, metrics=run_config(
            config, profile_overrides=overrides, cost=cost))
    except Exception as exc:  # run isolation: any failure flags its own row
        return RunOutcome(config.run_id, config, error=f"{type(exc).__name__}: {exc}")


def run_grid(
    grid: Iterable[ExperimentConfig],
    *,
    profile_overrides: Optional[Mapping] = None,
    cost: CostModel = DEFAULT_COST_MODEL,
    jobs: int = 1,
) -> list[RunOutcome]:
    """Run every grid cell; failures flag their row and the grid continues.

    Outcomes merge sorted by run id, so any execution order (including
    parallel) produces the same table.
    """
    configs = list(grid)
    if not configs:
        raise ValueError("empty grid")
    work = [(c, profile_overrides, cost) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_execute, work))
    else:
        outcomes = [_execute(w) for w in work]
    return sorted(outcomes, key=lambda o: o.run_id)


def metrics_rows(outcomes: Iterable[RunOutcome]) -> list[RunMetrics]:
    return [o.metrics for o in outcomes if o.metrics is not None]


def _group_key(row: RunMetrics, group_by: Sequence[str]) -> tuple:
    return tuple(getattr(row, g) for g in group_by)


def fit_group(
    rows: Iterable[RunMetrics],
    group_by: Sequence[str] = DEFAULT_GROUP_BY,
    x: str = DEFAULT_X,
    y: str = DEFAULT_Y,
) -> tuple[dict[tuple, usl.FitReport], list[tuple[tuple, str]]]:
    """Fit the scalability law per group; returns (fits, skipped groups)."""
    groups: dict[tuple, list[RunMetrics]] = {}
    for row in rows:
        groups.setdefault(_group_key(row, group_by), []).append(row)
    fits: dict[tuple, usl.FitReport] = {}
    skipped: list[tuple[tuple, str]] = []
    for key in sorted(groups):
        obs = [
            usl.ThroughputObservation(getattr(r, x), getattr(r, y))
            for r in groups[key]
        ]
        try:
            fits[key] = usl.fit(obs)
        except (usl.InsufficientData, usl.DegenerateData) as exc:
            skipped.append((key, f"{type(exc).__name__}: {exc}"))
    return fits, skipped


@dataclass(frozen=True)
class EvaluationReport:
    """Train/holdout sweep for one group: rmse and fit quality per size."""

    group: tuple
    training_sizes: tuple[int, ...]
    rmse: tuple[float, ...]
    r_squared: tuple[float, ...]
    params: tuple[usl.UslParams, ...]


def _evaluate_group(
    rows: list[RunMetrics],
    group: tuple,
    training_sizes: Sequence[int],
    x: str,
    y: str,
) -> EvaluationReport:
    levels = sorted({getattr(r, x) for r in rows})
    if len(levels) < max(training_sizes) + 1:
        raise InsufficientLevels(
            f"group {group}: {len(levels)} levels, need "
            f">= {max(training_sizes) + 1}"
        )
    rmses, r2s, params = [], [], []
    for k in training_sizes:
        if k < 2:
            raise ValueError("training size must be >= 2")
        train_levels = set(levels[:k])
        train = [
            usl.ThroughputObservation(getattr(r, x), getattr(r, y))
            for r in rows
            if getattr(r, x) in train_levels
        ]
        holdout = [
            usl.ThroughputObservation(getattr(r, x), getattr(r, y))
            for r in rows
            if getattr(r, x) not in train_levels
        ]
        rep = usl.fit(train)
        rmses.append(usl.rmse(rep, holdout))
        r2s.append(rep.r_squared)
        params.append(rep.params)
    return EvaluationReport(
        group=group,
        training_sizes=tuple(training_sizes),
        rmse=tuple(rmses),
        r_squared=tuple(r2s),
        params=tuple(params),
    )


def evaluate(
    rows: Iterable[RunMetrics],
    training_sizes: Sequence[int],
    group_by: Sequence[str] = DEFAULT_GROUP_BY,
    x: str = DEFAULT_X,
    y: str = DEFAULT_Y,
) -> tuple[list[EvaluationReport], list[tuple[tuple, str]]]:
    """Smallest-k-levels training split per group; rmse on the remainder."""
    groups: dict[tuple, list[RunMetrics]] = {}
    for row in rows:
        groups.setdefault(_group_key(row, group_by), []).append(row)
    reports, skipped = [], []
    for key in sorted(groups):
        try:
            reports.append(
                _evaluate_group(groups[key], key, training_sizes, x, y)
            )
        except (
            InsufficientLevels,
            usl.InsufficientData,
            usl.UnconvergedModel,
        ) as exc:
            skipped.append((key, f"{type(exc).__name__}: {exc}"))
    return reports, skipped


def recommend(report: usl.FitReport, target: float) -> int:
    """Smallest partition count whose predicted throughput meets ``target``.

    The fitted curve rises up to its peak (if any), so the answer is found by
    bisection on the rising flank; unbounded curves grow the bracket until
    the target is met or shown unreachable.
    """
    if not report.converged:
        raise usl.UnconvergedModel("fit did not converge")
    params = report.params
    pk = usl.peak_n(params)
    if pk is not None:
        if usl.usl_eval(params, pk) < target:
            raise Infeasible(
                f"peak throughput {usl.usl_eval(params, pk):.6g} < target {target:.6g}"
            )
        lo, hi = 1, pk
    else:
        # monotone curve: sup is lambda/sigma (or unbounded when sigma == 0)
        if params.sigma > 0 and target >= params.lambda_scale / params.sigma:
            raise Infeasible(
                f"asymptote {params.lambda_scale / params.sigma:.6g} "
                f"<= target {target:.6g}"
            )
        hi = 1
        while usl.usl_eval(params, hi) < target:
            hi *= 2
        lo = max(1, hi // 2)
    if usl.usl_eval(params, lo) >= target:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if usl.usl_eval(params, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi
