"""Dimension reduction and restricted isometry built on the two ensembles.

The embedding dimension formulas carry a calibrated leading constant: the
theory fixes the exponents (K**(8/alpha) for independent-row matrices, K**2
for unit-column matrices, both times eps**-2 (log 1/delta)**(2/alpha)) but
not the constant, so a one-time calibration run pins it and every formula
evaluation afterwards is deterministic.

Restricted isometry constants are computed exactly by support enumeration:
delta_s is the worst eigenvalue deviation of (1/m) A_S^T A_S over all
s-element supports.  Above the enumeration budget a randomized support scan
gives a certified lower bound, flagged as such.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .ensembles import EnsembleSpec, ModelKind, gen_matrix, nominal_psi_norm
from .streams import RandomStream


def _k_term(model: str, alpha: float, k_norm: float) -> float:
    if model == "row":
        return k_norm ** (8.0 / alpha)
    if model == "column":
        return k_norm**2
    raise ValueError(f"model must be 'row' or 'column', got {model!r}")


def formula_k(spec: EnsembleSpec, calibration=None) -> float:
    """The K entering dimension formulas: the entry norm for row models, and
    for unit-column models the norm of a sqrt(m)-rescaled column, which is
    sqrt(m) * (measured coordinate norm) and hence independent of m."""
    k = nominal_psi_norm(spec, calibration)
    if spec.kind is ModelKind.COLUMN:
        return k * math.sqrt(spec.m)
    return k


def jl_dim(
    eps: float,
    delta: float,
    alpha: float,
    k_norm: float,
    model: str,
    constant: float | None = None,
    calibration=None,
) -> int:
    """Embedding dimension ceil(C * K-term * eps^-2 * (log 1/delta)^(2/alpha)).

    C comes from the calibration fixtures keyed by model and alpha unless
    given explicitly.  Monotone: larger eps or delta can only shrink it.
    """
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if constant is None:
        if calibration is None:
            raise ValueError("need either an explicit constant or calibration fixtures")
        constant = calibration.get(f"jl_{model}_C", alpha=alpha)
    value = constant * _k_term(model, alpha, k_norm) * eps**-2
    value *= math.log(1.0 / delta) ** (2.0 / alpha)
    return max(1, math.ceil(value))


@dataclass(frozen=True)
class JLReport:
    eps: float
    delta: float
    alpha: float
    K: float
    m_required: int
    m_used: int
    pairwise_ok_fraction: float
    trials: int = 0
    pairs: int = 0
    skipped_pairs: int = 0


def _jl_trial_ok_count(payload: dict, index: int) -> int:
    a = gen_matrix(payload["spec"], payload["stream"].substream(index))
    scale = math.sqrt(payload["spec"].m) if payload["model"] == "row" else 1.0
    emb = (payload["pts"] @ a.T) / scale
    d_emb = pdist(emb)
    live = payload["live"]
    rel = np.abs(d_emb[live] - payload["base"][live]) / payload["base"][live]
    return int((rel <= payload["eps"]).sum())


def _jl_chunk(args) -> list[int]:
    payload, start, stop = args
    return [_jl_trial_ok_count(payload, i) for i in range(start, stop)]


def jl_embed_and_score(
    points,
    spec: EnsembleSpec,
    eps: float,
    delta: float,
    trials: int,
    stream: RandomStream,
    calibration=None,
    k_norm: float | None = None,
    workers: int = 1,
) -> JLReport:
    """Draw the ensemble `trials` times and score every point pair against
    the two-sided (1 +- eps) distance bound.

    Row-model draws are scaled by 1/sqrt(m); the unit-column model already
    has target scale 1, which is the lambda = sqrt(m) normalization after
    the same 1/sqrt(m).  Coincident pairs cannot be scored and are skipped
    with a count.  Trial i draws from substream(i) and per-trial counts are
    reduced in index order, so worker count never changes the result.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    if pts.shape[1] != spec.n:
        raise ValueError(f"points in R^{pts.shape[1]} but ensemble n={spec.n}")
    base = pdist(pts)
    live = base > 0.0
    skipped = int((~live).sum())
    if not live.any():
        raise ValueError("all point pairs coincide")
    k = k_norm if k_norm is not None else formula_k(spec, calibration)
    model = "row" if spec.kind is ModelKind.ROW else "column"
    m_req = jl_dim(eps, delta, spec.alpha, k, model, calibration=calibration)

    payload = {
        "spec": spec, "stream": stream, "pts": pts, "base": base,
        "live": live, "eps": eps, "model": model,
    }
    if workers <= 1:
        counts = _jl_chunk((payload, 0, trials))
    else:
        chunk = max(1, math.ceil(trials / (workers * 4)))
        tasks = [
            (payload, start, min(start + chunk, trials))
            for start in range(0, trials, chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = [c for part in pool.map(_jl_chunk, tasks) for c in part]
    per_trial = int(live.sum())
    total = per_trial * trials
    return JLReport(
        eps=eps,
        delta=delta,
        alpha=spec.alpha,
        K=k,
        m_required=m_req,
        m_used=spec.m,
        pairwise_ok_fraction=sum(counts) / total,
        trials=trials,
        pairs=total,
        skipped_pairs=skipped * trials,
    )


# -- restricted isometry -----------------------------------------------------


@dataclass(frozen=True)
class RIPReport:
    s: int
    delta_s: float
    method: str  # "exact-enumeration" | "randomized-supports"
    supports_checked: int
    m_formula: int | None = None
    delta_s_unsquared: float = 0.0  # max | sqrt(eigenvalue) - 1 |, reported alongside


def _support_deviations(a: np.ndarray, supports) -> tuple[float, float, int]:
    m = a.shape[0]
    worst_sq = 0.0
    worst_lin = 0.0
    checked = 0
    for sup in supports:
        sub = a[:, list(sup)]
        eig = np.linalg.eigvalsh(sub.T @ sub / m)
        lo, hi = float(eig[0]), float(eig[-1])
        worst_sq = max(worst_sq, hi - 1.0, 1.0 - lo)
        sqrt_lo = math.sqrt(max(lo, 0.0))
        worst_lin = max(worst_lin, abs(math.sqrt(hi) - 1.0), abs(sqrt_lo - 1.0))
        checked += 1
    return worst_sq, worst_lin, checked


def _rip_chunk(args) -> tuple[float, float, int]:
    a, s, start, stop = args
    supports = itertools.islice(itertools.combinations(range(a.shape[1]), s), start, stop)
    return _support_deviations(a, supports)


def rip_constant_exact(
    a: np.ndarray,
    s: int,
    budget: int = 10**6,
    stream: RandomStream | None = None,
    sampled_supports: int = 2000,
    workers: int = 1,
) -> RIPReport:
    """delta_s of A (with columns pre-scaled so (1/m) A_S^T A_S targets the
    identity) by exhaustive support enumeration.

    When C(n, s) exceeds the budget the scan falls back to randomized
    supports, which can only under-report; the method field says which one
    ran.  Eigenvalues come from a symmetric eigensolve and are exact to
    LAPACK tolerance.  The support scan may be spread over workers; the
    reduction is a max, so the result is worker-count-independent.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    if not (1 <= s <= n):
        raise ValueError(f"need 1 <= s <= n={n}, got s={s}")
    count = math.comb(n, s)
    if count <= budget:
        if workers <= 1 or count < 256:
            worst_sq, worst_lin, checked = _rip_chunk((a, s, 0, count))
        else:
            chunk = math.ceil(count / (workers * 4))
            tasks = [
                (a, s, start, min(start + chunk, count))
                for start in range(0, count, chunk)
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_rip_chunk, tasks))
            worst_sq = max(p[0] for p in parts)
            worst_lin = max(p[1] for p in parts)
            checked = sum(p[2] for p in parts)
        return RIPReport(s, worst_sq, "exact-enumeration", checked,
                         delta_s_unsquared=worst_lin)
    if stream is None:
        raise ValueError(
            f"C({n},{s}) exceeds the enumeration budget; pass a stream for "
            "the randomized-supports fallback"
        )
    return rip_randomized(a, s, sampled_supports, stream)


def rip_randomized(
    a: np.ndarray, s: int, n_supports: int, stream: RandomStream
) -> RIPReport:
    """Lower bound on delta_s from randomly sampled supports (duplicates
    possible and harmless)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    gen = stream.generator()
    # sorted so a support hit by both scans yields the identical submatrix
    # (and hence identical eigenvalues) as exhaustive enumeration
    supports = [
        tuple(sorted(int(v) for v in gen.choice(n, size=s, replace=False)))
        for _ in range(n_supports)
    ]
    worst_sq, worst_lin, checked = _support_deviations(a, supports)
    return RIPReport(s, worst_sq, "randomized-supports", checked,
                     delta_s_unsquared=worst_lin)


def rip_sample_size(
    delta: float,
    alpha: float,
    k_norm: float,
    s: int,
    n: int,
    u: float,
    model: str,
    constant: float | None = None,
    calibration=None,
) -> int:
    """Rows needed for delta_s <= delta with failure probability exp(-u^alpha):
    ceil(C * delta^-2 * K-term * ((s log(e n / s))^(1/alpha) + u)^2)."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if not (1 <= s <= n):
        raise ValueError(f"need 1 <= s <= n={n}, got s={s}")
    if u < 0:
        raise ValueError("u must be >= 0")
    if constant is None:
        if calibration is None:
            raise ValueError("need either an explicit constant or calibration fixtures")
        constant = calibration.get(f"rip_{model}_C", alpha=alpha)
    entropy = (s * math.log(math.e * n / s)) ** (1.0 / alpha)
    value = constant * delta**-2 * _k_term(model, alpha, k_norm) * (entropy + u) ** 2
    return max(1, math.ceil(value))
