"""Monte Carlo measurement of sup-deviations and their tail behavior.

A deviation statistic compares ||Ax||_2 (optionally ||BAx||_2) against its
target scale over a finite index set: Frobenius norm of B times ||x|| for the
row model with a front matrix, sqrt(m) ||x|| for the bare row model, and
||x|| itself for the unit-column model.  Infinite index sets never appear
here; callers discretize and may pass the net resolution so the report can
carry the induced bias bound.

Reproducibility contract: trial i draws everything from
``stream.substream(i)``, aggregation is compensated (math.fsum) in trial
order, and the worker pool only changes who computes a chunk, never the
result.  Identical (seed, config) gives bit-identical outputs at any worker
count.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ensembles import EnsembleSpec, gen_matrix
from .set_geometry import complexity_bracket, finite_points
from .streams import RandomStream
from .tail_distributions import (
    PsiNormEstimate,
    TailLaw,
    psi_norm_bisection,
    psi_norm_closed_form,
    sample,
    variance,
)


class Model(enum.Enum):
    ROW_WITH_B = "row-with-b"
    ROW_IDENTITY = "row-identity"
    COLUMN = "column"


def deviation_target_scale(model: Model, m: int, b: np.ndarray | None = None) -> float:
    if model is Model.ROW_WITH_B:
        if b is None:
            raise ValueError("row-with-b needs the front matrix")
        return float(np.linalg.norm(b))
    if model is Model.ROW_IDENTITY:
        return math.sqrt(m)
    return 1.0


def sup_deviation(
    model: Model,
    a: np.ndarray,
    t_points: np.ndarray,
    b: np.ndarray | None = None,
) -> float:
    """Exact sup over the supplied points of |norm(map(x)) - scale * ||x|||.

    Points are processed one by one through ``np.linalg.norm(A @ x)`` so a
    straightforward per-point reimplementation reproduces the floats
    bit-for-bit.
    """
    pts = np.atleast_2d(np.asarray(t_points, dtype=float))
    if pts.shape[1] != a.shape[1]:
        raise ValueError(
            f"points live in R^{pts.shape[1]} but the matrix maps from R^{a.shape[1]}"
        )
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    scale = deviation_target_scale(model, a.shape[0], b)
    best = 0.0
    for x in pts:
        y = a @ x
        if model is Model.ROW_WITH_B:
            y = b @ y
        val = abs(float(np.linalg.norm(y)) - scale * float(np.linalg.norm(x)))
        if val > best:
            best = val
    return best


# -- parallel per-trial evaluation --------------------------------------------


def _deviation_trial(payload: dict, index: int) -> float:
    a = gen_matrix(payload["spec"], payload["stream"].substream(index))
    return sup_deviation(payload["model"], a, payload["t_points"], payload.get("b"))


def _quadform_trial(payload: dict, index: int) -> float:
    x = sample(payload["law"], payload["stream"].substream(index), size=payload["n"])
    m = payload["matrix"]
    return abs(float(x @ m @ x) - payload["trace"])


def _bxnorm_trial(payload: dict, index: int) -> float:
    x = sample(payload["law"], payload["stream"].substream(index), size=payload["n"])
    return abs(float(np.linalg.norm(payload["matrix"] @ x)) - payload["hs"])


def _column_single_trial(payload: dict, index: int) -> float:
    a = gen_matrix(payload["spec"], payload["stream"].substream(index))
    return float(np.linalg.norm(a @ payload["x"])) - float(np.linalg.norm(payload["x"]))


def _increment_trial(payload: dict, index: int) -> float:
    a = gen_matrix(payload["spec"], payload["stream"].substream(index))
    scale = payload["scale"]
    zx = float(np.linalg.norm(a @ payload["x"])) - scale * float(np.linalg.norm(payload["x"]))
    zy = float(np.linalg.norm(a @ payload["y"])) - scale * float(np.linalg.norm(payload["y"]))
    return (zx - zy) / payload["dist"]


_TRIAL_FNS: dict[str, Callable[[dict, int], float]] = {
    "deviation": _deviation_trial,
    "quadform": _quadform_trial,
    "bxnorm": _bxnorm_trial,
    "column-single": _column_single_trial,
    "increment": _increment_trial,
}


def _run_chunk(args) -> list[float]:
    kind, payload, start, stop = args
    fn = _TRIAL_FNS[kind]
    return [fn(payload, i) for i in range(start, stop)]


def trial_values(kind: str, payload: dict, trials: int, workers: int = 1) -> np.ndarray:
    """Per-trial statistic values, indexed by trial, independent of workers."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if workers <= 1:
        return np.array(_run_chunk((kind, payload, 0, trials)))
    chunk = max(1, math.ceil(trials / (workers * 4)))
    tasks = [
        (kind, payload, start, min(start + chunk, trials))
        for start in range(0, trials, chunk)
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, tasks))
    return np.array([v for part in parts for v in part])


def mc_deviation_values(
    spec: EnsembleSpec,
    model: Model,
    t_points,
    trials: int,
    stream: RandomStream,
    b: np.ndarray | None = None,
    workers: int = 1,
) -> np.ndarray:
    payload = {
        "spec": spec,
        "model": model,
        "t_points": np.atleast_2d(np.asarray(t_points, dtype=float)),
        "b": b,
        "stream": stream,
    }
    return trial_values("deviation", payload, trials, workers)


# -- expectation with CI --------------------------------------------------------


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    ci_low: float
    ci_high: float
    trials: int
    bound_ratio: float | None = None
    net_resolution: float | None = None
    net_bias_bound: float | None = None


def _fsum_mean_ci(values: np.ndarray) -> tuple[float, float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        half = 1.96 * math.sqrt(var / n)
    else:
        half = 0.0
    return mean, mean - half, mean + half


def mc_expectation(
    spec: EnsembleSpec,
    model: Model,
    t_points,
    trials: int,
    stream: RandomStream,
    b: np.ndarray | None = None,
    workers: int = 1,
    k_norm: float | None = None,
    gamma_upper: float | None = None,
    net_resolution: float | None = None,
) -> MeanEstimate:
    """Sample mean of the sup-deviation with a CLT 95% interval.

    When the ensemble's tail norm K is supplied, the estimate also carries
    the ratio of the mean to K^p * ||B||_op * (gamma_upper + rad(T)) with
    p = 4/alpha for row models and p = 1 for the column model; gamma_upper
    defaults to the complexity bracket of the point set.  When the points
    discretize an infinite set, pass net_resolution to get the a.s. bias
    bound (||BA||_op + scale) * resolution, operator norms by power
    iteration, averaged over the first 32 trial matrices.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful interval")
    pts = np.atleast_2d(np.asarray(t_points, dtype=float))
    values = mc_deviation_values(spec, model, pts, trials, stream, b, workers)
    mean, lo, hi = _fsum_mean_ci(values)

    ratio = None
    if k_norm is not None:
        if gamma_upper is None:
            gamma_upper = complexity_bracket(finite_points(pts), spec.alpha).gamma_upper
        rad = float(np.linalg.norm(pts, axis=1).max())
        op_b = float(np.linalg.norm(b, 2)) if model is Model.ROW_WITH_B else 1.0
        p = 4.0 / spec.alpha if model in (Model.ROW_WITH_B, Model.ROW_IDENTITY) else 1.0
        denom = k_norm**p * op_b * (gamma_upper + rad)
        ratio = mean / denom if denom > 0 else math.inf

    bias = None
    if net_resolution is not None:
        scale_term = deviation_target_scale(model, spec.m, b)
        probe = min(trials, 32)
        ops = []
        for i in range(probe):
            a = gen_matrix(spec, stream.substream(i))
            if model is Model.ROW_WITH_B:
                a = b @ a
            ops.append(power_iteration_norm(a))
        bias = (math.fsum(ops) / probe + scale_term) * net_resolution
    return MeanEstimate(mean, lo, hi, trials, ratio, net_resolution, bias)


# -- tail curves -----------------------------------------------------------------


@dataclass(frozen=True)
class TailCurve:
    thresholds: tuple
    survival: tuple
    ci_low: tuple
    ci_high: tuple
    trials: int
    location: float = 0.0
    fitted_exponent: float | None = None
    fit_r2: float | None = None
    envelope: tuple | None = None
    envelope_ok: bool | None = None

    def __post_init__(self):
        s = np.asarray(self.survival)
        if np.any(np.diff(s) > 1e-15):
            raise ValueError("survival must be non-increasing in the threshold")


def default_thresholds(values: np.ndarray, trials: int, count: int = 25) -> np.ndarray:
    """Thresholds at fixed survival levels, geometric from 0.5 down to the
    10-event floor; placement uses one pass over the finished sample and is
    therefore deterministic."""
    floor = max(10.0 / trials, 1e-9)
    levels = np.geomspace(0.5, floor, count)
    return np.unique(np.quantile(np.asarray(values, dtype=float), 1.0 - levels))


def build_tail_curve(
    values: np.ndarray,
    thresholds: Sequence[float],
    trials: int,
    location: float = 0.0,
    envelope_fn: Callable[[float], float] | None = None,
) -> TailCurve:
    values = np.asarray(values, dtype=float)
    thr = np.sort(np.asarray(thresholds, dtype=float))
    surv = np.array([(values > t).sum() for t in thr], dtype=float) / trials
    half = 1.96 * np.sqrt(surv * (1 - surv) / trials)
    fit = fit_tail_exponent(thr, surv, trials, location=location)
    env_vals = None
    env_ok = None
    if envelope_fn is not None:
        env_vals = tuple(min(1.0, envelope_fn(float(t))) for t in thr)
        slack = 4.0 * np.sqrt(np.array(env_vals) * (1 - np.array(env_vals)) / trials)
        env_ok = bool(np.all(surv <= np.array(env_vals) + slack))
    return TailCurve(
        thresholds=tuple(float(t) for t in thr),
        survival=tuple(float(s) for s in surv),
        ci_low=tuple(float(v) for v in np.clip(surv - half, 0.0, 1.0)),
        ci_high=tuple(float(v) for v in np.clip(surv + half, 0.0, 1.0)),
        trials=trials,
        location=float(location),
        fitted_exponent=None if fit is None else fit[0],
        fit_r2=None if fit is None else fit[1],
        envelope=env_vals,
        envelope_ok=env_ok,
    )


_BETA_GRID = np.arange(0.2, 3.5001, 0.01)


def fit_tail_exponent(
    thresholds,
    survival,
    trials: int,
    location: float = 0.0,
    beta_grid: np.ndarray = _BETA_GRID,
) -> tuple[float, float] | None:
    """Exponent of the best stretched-exponential fit to the tail.

    Ordinary least squares of log(survival) on -(u - location)**beta over the
    window survival in [10/trials, 0.5], scanning beta and keeping the
    R^2-maximizing value.  On data whose survival is exactly exp(-u^alpha)
    the regression is exactly linear at beta = alpha, so the true exponent is
    recovered up to grid resolution.  Returns (exponent, r2), or None when
    fewer than 3 window points survive (callers flag the curve instead)."""
    thr = np.asarray(thresholds, dtype=float)
    surv = np.asarray(survival, dtype=float)
    lo, hi = 10.0 / trials, 0.5
    mask = (surv >= lo) & (surv <= hi) & (thr > location)
    u = thr[mask] - location
    s = surv[mask]
    if len(u) < 3 or np.unique(u).size < 3:
        return None
    y = np.log(s)
    best_r2, best_beta = -math.inf, math.nan
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 0.0:
        return None
    for beta in beta_grid:
        x = -(u**beta)
        a = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        r2 = 1.0 - float(np.sum((y - a @ coef) ** 2)) / ss_tot
        if r2 > best_r2:
            best_r2, best_beta = r2, float(beta)
    return best_beta, best_r2


def mc_tail_curve(
    spec: EnsembleSpec,
    model: Model,
    t_points,
    trials: int,
    stream: RandomStream,
    b: np.ndarray | None = None,
    thresholds: Sequence[float] | None = None,
    workers: int = 1,
    envelope_fn: Callable[[float], float] | None = None,
) -> TailCurve:
    """Empirical survival of the sup-deviation at the given thresholds
    (defaults to fixed survival-level placement), with the exponent fitted
    around the sample median as the location parameter."""
    values = mc_deviation_values(spec, model, t_points, trials, stream, b, workers)
    if thresholds is None:
        thresholds = default_thresholds(values, trials)
    location = float(np.median(values))
    return build_tail_curve(values, thresholds, trials, location, envelope_fn)


# -- quadratic form and fixed-matrix checks --------------------------------------


def _require_standardized(law: TailLaw):
    if abs(variance(law) - 1.0) > 1e-9:
        raise ValueError("law must be standardized to unit variance first")


def hanson_wright_check(
    law: TailLaw,
    matrix: np.ndarray,
    trials: int,
    stream: RandomStream,
    thresholds: Sequence[float] | None = None,
    c_hat: float | None = None,
    k_norm: float | None = None,
    symmetrize: bool = False,
    workers: int = 1,
) -> TailCurve:
    """Tail curve of |X^T M X - E X^T M X| for independent standardized
    coordinates, with the optional calibrated two-regime envelope

        2 exp(-min(t^2 / (K^4 ||M||_HS^2), (t / (K^2 ||M||_op))^(alpha/2)) / c_hat).

    ||M||_HS is exact, ||M||_op comes from a symmetric eigensolve.  A
    non-symmetric M is rejected unless symmetrize=True replaces it with its
    symmetric part.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError("M must be square")
    if not np.array_equal(m, m.T):
        if not symmetrize:
            raise ValueError("M is not symmetric (pass symmetrize=True to use (M+M^T)/2)")
        m = 0.5 * (m + m.T)
    _require_standardized(law)
    payload = {
        "law": law,
        "matrix": m,
        "n": m.shape[0],
        "trace": float(np.trace(m)),
        "stream": stream,
    }
    values = trial_values("quadform", payload, trials, workers)
    if thresholds is None:
        thresholds = default_thresholds(values, trials)
    env = None
    if c_hat is not None:
        hs = float(np.linalg.norm(m))
        op = float(np.max(np.abs(np.linalg.eigvalsh(m)))) if hs > 0 else 0.0
        k = k_norm if k_norm is not None else psi_norm_closed_form(law).value
        alpha = law.alpha

        def env(t: float, _hs=hs, _op=op, _k=k, _a=alpha, _c=c_hat) -> float:
            if _hs == 0.0:
                return 1.0 if t <= 0 else 0.0
            reg = min((t / (_k**2 * _hs)) ** 2, (t / (_k**2 * _op)) ** (_a / 2.0))
            return 2.0 * math.exp(-reg / _c)

    return build_tail_curve(values, thresholds, trials, float(np.median(values)), env)


def bx_norm_check(
    law: TailLaw,
    b: np.ndarray,
    trials: int,
    stream: RandomStream,
    thresholds: Sequence[float] | None = None,
    c_hat: float | None = None,
    k_norm: float | None = None,
    workers: int = 1,
) -> TailCurve:
    """Tail curve of |  ||BX||_2 - ||B||_HS | / (K^2 ||B||_op) against the
    calibrated envelope 2 exp(-t^alpha / c_hat)."""
    _require_standardized(law)
    b = np.asarray(b, dtype=float)
    hs = float(np.linalg.norm(b))
    op = float(np.linalg.norm(b, 2)) if hs > 0 else 0.0
    k = k_norm if k_norm is not None else psi_norm_closed_form(law).value
    payload = {"law": law, "matrix": b, "n": b.shape[1], "hs": hs, "stream": stream}
    raw = trial_values("bxnorm", payload, trials, workers)
    denom = k**2 * op
    values = raw / denom if denom > 0 else np.zeros_like(raw)
    if thresholds is None:
        thresholds = default_thresholds(values, trials)
    env = None
    if c_hat is not None:
        alpha = law.alpha

        def env(t: float, _a=alpha, _c=c_hat) -> float:
            return 2.0 * math.exp(-(max(t, 0.0) ** _a) / _c)

    return build_tail_curve(values, thresholds, trials, float(np.median(values)), env)


def column_single_vector_check(
    spec: EnsembleSpec,
    x,
    trials: int,
    stream: RandomStream,
    workers: int = 1,
) -> PsiNormEstimate:
    """psi_alpha estimate of ||Ax||_2 - 1 for a unit vector x under the
    unit-column ensemble."""
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(x) - 1.0) > 1e-9:
        raise ValueError("x must be a unit vector")
    payload = {"spec": spec, "x": x, "stream": stream}
    values = trial_values("column-single", payload, trials, workers)
    return psi_norm_bisection(values, spec.alpha)


def increment_check(
    spec: EnsembleSpec,
    model: Model,
    x,
    y,
    trials: int,
    stream: RandomStream,
    workers: int = 1,
) -> PsiNormEstimate:
    """psi_alpha estimate of (Z_x - Z_y) / ||x - y||_2 where Z is the model's
    deviation process; exercises arbitrary pairs including antipodal ones.
    Supports the identity-row and column models (no front matrix here)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = float(np.linalg.norm(x - y))
    if dist == 0.0:
        raise ValueError("x and y must differ")
    scale = deviation_target_scale(model, spec.m)
    payload = {"spec": spec, "x": x, "y": y, "dist": dist, "scale": scale, "stream": stream}
    values = trial_values("increment", payload, trials, workers)
    return psi_norm_bisection(values, spec.alpha)


# -- operator norm ----------------------------------------------------------------


def power_iteration_norm(
    a: np.ndarray, rel_tol: float = 1e-6, max_iter: int = 5000
) -> float:
    """Largest singular value by power iteration on A^T A, relative tolerance
    1e-6 by default.  The start vector is a fixed Philox draw so results are
    reproducible and not axis-aligned."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    v = np.random.Generator(np.random.Philox(key=0x9E3779B97F4A7C15)).standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = a @ v
        new_sigma = float(np.linalg.norm(w))
        if new_sigma == 0.0:
            return 0.0
        v = a.T @ w
        v /= np.linalg.norm(v)
        if abs(new_sigma - sigma) <= rel_tol * new_sigma:
            return new_sigma
        sigma = new_sigma
    return sigma
