"""Universal Scalability Law throughput model: evaluation, fitting, prediction.

The model is ``T(n) = lambda * n / (1 + sigma*(n-1) + kappa*n*(n-1))`` where
``lambda`` is the single-unit throughput, ``sigma`` the contention coefficient
and ``kappa`` the coherence coefficient.  Fitting is a deterministic
multi-start damped Gauss-Newton (Levenberg-Marquardt) least-squares solve with
the parameters transformed so that sigma stays in [0, 1], kappa >= 0 and
lambda > 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "UslParams",
    "FitReport",
    "ThroughputObservation",
    "usl_eval",
    "peak_n",
    "fit",
    "predict",
    "rmse",
    "report_to_json",
    "report_from_json",
    "InsufficientData",
    "DegenerateData",
    "UnconvergedModel",
    "EmptyHoldout",
]

MAX_ITERATIONS = 200
SSE_RELATIVE_TOL = 1e-12
ZERO_SNAP = 1e-12  # fitted coefficients below this are reported as exactly 0

# Fixed multi-start grid over (sigma, kappa); lambda is seeded from the
# smallest-n observation.  Order matters for deterministic tie-breaking.
START_SIGMAS = (1e-4, 0.01, 0.1, 0.3, 0.7)
START_KAPPAS = (1e-7, 1e-5, 1e-3, 1e-2, 0.1)


class InsufficientData(ValueError):
    """Fewer than two distinct parallelism levels in the fit input."""


class DegenerateData(ValueError):
    """All observed throughputs are zero; no scale can be fitted."""


class UnconvergedModel(RuntimeError):
    """Prediction requested from a fit that did not converge."""


class EmptyHoldout(ValueError):
    """rmse() called with no holdout observations."""


@dataclass(frozen=True)
class UslParams:
    """Fitted or assumed scalability-law coefficients."""

    lambda_scale: float
    sigma: float
    kappa: float

    def __post_init__(self) -> None:
        if not self.lambda_scale > 0:
            raise ValueError(f"lambda_scale must be > 0, got {self.lambda_scale}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must be in [0, 1], got {self.sigma}")
        if not self.kappa >= 0.0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")


@dataclass(frozen=True)
class ThroughputObservation:
    """One measured point: parallelism level ``n`` and throughput at that level."""

    n: int
    throughput: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.throughput < 0:
            raise ValueError(f"throughput must be >= 0, got {self.throughput}")


@dataclass(frozen=True)
class FitReport:
    """Result of a least-squares fit plus goodness-of-fit bookkeeping.

    ``peak_n`` is None when the fitted curve has no interior maximum
    (kappa == 0, throughput monotone in n).
    """

    params: UslParams
    r_squared: float
    sse: float
    n_observations: int
    peak_n: int | None
    converged: bool
    iterations: int


def usl_eval(params: UslParams, n: int) -> float:
    """Throughput predicted at parallelism level ``n`` (n >= 1)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    denom = 1.0 + params.sigma * (n - 1) + params.kappa * n * (n - 1)
    return params.lambda_scale * n / denom


def peak_n(params: UslParams) -> int | None:
    """Integer parallelism maximizing throughput, or None if unbounded.

    With kappa == 0 the curve is monotone nondecreasing, so there is no
    finite peak.  Otherwise the real-valued maximizer is
    sqrt((1 - sigma) / kappa); the better of its two integer neighbours wins,
    ties going to the smaller n.
    """
    if params.kappa == 0.0:
        return None
    x = math.sqrt(max(0.0, (1.0 - params.sigma)) / params.kappa)
    lo = max(1, math.floor(x))
    hi = max(1, math.ceil(x))
    if usl_eval(params, lo) >= usl_eval(params, hi):
        return lo
    return hi


def _unpack(theta: np.ndarray) -> tuple[float, float, float]:
    """Transformed coordinates -> (lambda, sigma, kappa)."""
    a, b, c = theta
    sigma = 1.0 / (1.0 + math.exp(-a))
    kappa = math.exp(b)
    lam = math.exp(c)
    return lam, sigma, kappa


def _pack(lam: float, sigma: float, kappa: float) -> np.ndarray:
    sigma = min(max(sigma, 1e-12), 1.0 - 1e-12)
    a = math.log(sigma / (1.0 - sigma))
    b = math.log(max(kappa, 1e-300))
    c = math.log(max(lam, 1e-300))
    return np.array([a, b, c], dtype=float)


def _model_and_jacobian(
    theta: np.ndarray, ns: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    lam, sigma, kappa = _unpack(theta)
    with np.errstate(over="ignore", invalid="ignore"):
        d = 1.0 + sigma * (ns - 1.0) + kappa * ns * (ns - 1.0)
        f = lam * ns / d
        # Partials w.r.t. the natural parameters, chained through the transforms.
        df_dlam = ns / d
        df_dsigma = -lam * ns * (ns - 1.0) / (d * d)
        df_dkappa = -lam * ns * ns * (ns - 1.0) / (d * d)
        jac = np.empty((ns.size, 3))
        jac[:, 0] = df_dsigma * sigma * (1.0 - sigma)
        jac[:, 1] = df_dkappa * kappa
        jac[:, 2] = df_dlam * lam
    return f, jac


def _levenberg_marquardt(
    theta0: np.ndarray, ns: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, float, bool, int]:
    """Damped Gauss-Newton minimization of the squared residual sum.

    Returns (theta, sse, converged, iterations).  Converged means the
    relative SSE improvement dropped below tolerance, no improving step
    exists, or the residuals reached the data's float precision.
    """
    theta = theta0.copy()
    f, jac = _model_and_jacobian(theta, ns)
    resid = ys - f
    sse = float(resid @ resid)
    # interpolating fits push SSE to zero geometrically; stop at the point
    # where residuals are at float precision of the data scale
    sse_floor = (1e-12 * float(np.abs(ys).max())) ** 2 * ys.size
    mu = 1e-3
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        jtj = jac.T @ jac
        jtr = jac.T @ resid
        accepted = False
        for _ in range(30):
            damped = jtj + mu * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                step = np.linalg.solve(damped, jtr)
            except np.linalg.LinAlgError:
                mu *= 3.0
                continue
            trial = np.clip(theta + step, -700.0, 700.0)
            f_t, jac_t = _model_and_jacobian(trial, ns)
            resid_t = ys - f_t
            sse_t = float(resid_t @ resid_t)
            if np.isfinite(sse_t) and sse_t <= sse:
                improvement = sse - sse_t
                theta, f, jac, resid, sse = trial, f_t, jac_t, resid_t, sse_t
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                if (
                    improvement <= SSE_RELATIVE_TOL * max(sse, 1e-300)
                    or sse <= sse_floor
                ):
                    return theta, sse, True, iterations
                break
            mu *= 3.0
        if not accepted:
            # No improving step at any damping level: stationary point.
            return theta, sse, True, iterations
    return theta, sse, False, iterations


def fit(observations: Iterable[ThroughputObservation]) -> FitReport:
    """Least-squares fit of the scalability law to measured throughputs.

    Deterministic: observations are canonicalized by sorting, and the same
    fixed multi-start grid is always explored in the same order.  The start
    with the lowest SSE wins; exact ties go to the smaller sigma + kappa.
    """
    obs = sorted(observations, key=lambda o: (o.n, o.throughput))
    if len({o.n for o in obs}) < 2:
        raise InsufficientData("need observations at >= 2 distinct n values")
    if all(o.throughput == 0.0 for o in obs):
        raise DegenerateData("all observed throughputs are zero")

    ns = np.array([o.n for o in obs], dtype=float)
    ys = np.array([o.throughput for o in obs], dtype=float)

    n_min = obs[0].n
    y_at_n_min = next(o.throughput for o in obs if o.n == n_min)

    best: tuple[float, float, np.ndarray, bool, int] | None = None
    for sigma0 in START_SIGMAS:
        for kappa0 in START_KAPPAS:
            denom0 = 1.0 + sigma0 * (n_min - 1) + kappa0 * n_min * (n_min - 1)
            lam0 = max(y_at_n_min * denom0 / n_min, 1e-9)
            theta0 = _pack(lam0, sigma0, kappa0)
            theta, sse, converged, iters = _levenberg_marquardt(theta0, ns, ys)
            lam, sigma, kappa = _unpack(theta)
            key = (sse, sigma + kappa)
            if best is None or key < (best[0], best[1]):
                best = (sse, sigma + kappa, theta, converged, iters)

    assert best is not None
    sse, _, theta, converged, iterations = best
    lam, sigma, kappa = _unpack(theta)
    # the transform cannot reach the bounds exactly; coefficients driven to
    # the floor are zero in every meaningful sense
    if sigma < ZERO_SNAP:
        sigma = 0.0
    if kappa < ZERO_SNAP:
        kappa = 0.0
    params = UslParams(lambda_scale=lam, sigma=sigma, kappa=kappa)

    sst = float(np.sum((ys - ys.mean()) ** 2))
    if sst > 0.0:
        r_squared = 1.0 - sse / sst
    else:
        r_squared = 1.0 if sse == 0.0 else float("-inf")

    return FitReport(
        params=params,
        r_squared=r_squared,
        sse=sse,
        n_observations=len(obs),
        peak_n=peak_n(params),
        converged=converged,
        iterations=iterations,
    )


def predict(report: FitReport, n: int) -> float:
    """Throughput the fitted model expects at parallelism ``n``."""
    if not report.converged:
        raise UnconvergedModel("fit did not converge; refusing to predict")
    return usl_eval(report.params, n)


def rmse(report: FitReport, holdout: Sequence[ThroughputObservation]) -> float:
    """Root mean squared prediction error over a holdout set."""
    holdout = list(holdout)
    if not holdout:
        raise EmptyHoldout("holdout set is empty")
    errs = [(o.throughput - predict(report, o.n)) ** 2 for o in holdout]
    return math.sqrt(sum(errs) / len(errs))


def report_to_json(report: FitReport) -> str:
    """Serialize a fit report to the flat JSON wire format."""
    return json.dumps(
        {
            "lambda": report.params.lambda_scale,
            "sigma": report.params.sigma,
            "kappa": report.params.kappa,
            "r_squared": report.r_squared,
            "sse": report.sse,
            "n_observations": report.n_observations,
            "peak_n": report.peak_n,
            "converged": report.converged,
        }
    )


def report_from_json(text: str) -> FitReport:
    """Parse the flat JSON wire format back into a FitReport."""
    doc = json.loads(text)
    params = UslParams(
        lambda_scale=doc["lambda"], sigma=doc["sigma"], kappa=doc["kappa"]
    )
    return FitReport(
        params=params,
        r_squared=doc["r_squared"],
        sse=doc["sse"],
        n_observations=doc["n_observations"],
        peak_n=doc["peak_n"],
        converged=doc["converged"],
        iterations=0,
    )
