"""Index sets, covering numbers, and complexity brackets for chaining bounds.

The central object is a two-sided bracket on the chaining functional

    gamma_alpha(T) = inf over admissible partition chains of
                     sup_t sum_k 2**(k/alpha) * diam(A_k(t)),

where an admissible chain has one block at level 0 and at most 2**(2**k)
blocks at level k.  On tiny finite sets the infimum is computed exactly by
enumerating partition chains.  Otherwise the bracket combines

  * a lower bound from entropy numbers: a level-k partition induces a
    2**(2**k)-ball covering, so gamma >= sup_k 2**(k/alpha) * e_k(T), and
  * an upper bound from the entropy integral int (log N(T, u))**(1/alpha) du,
    whose raw value is reported with constant 1 and converted into a true
    upper bound by a documented chaining constant.

Covering numbers N(T, u) count closed u-balls centered at points of T.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .streams import RandomStream

LOG2 = math.log(2.0)


class SetKind(enum.Enum):
    FINITE = "finite"
    SPHERE = "sphere"
    SPARSE_SPHERE = "sparse-sphere"
    BALL = "ball"


@dataclass(frozen=True)
class SetDescriptor:
    kind: SetKind
    n: int
    points: tuple = ()  # FINITE only: tuple of coordinate tuples
    s: int = 0  # SPARSE_SPHERE only
    r: float = 0.0  # BALL only


def finite_points(points) -> SetDescriptor:
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    if arr.size == 0:
        raise ValueError("finite set must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("finite set contains non-finite coordinates")
    return SetDescriptor(
        SetKind.FINITE, arr.shape[1], tuple(tuple(row) for row in arr)
    )


def unit_sphere(n: int) -> SetDescriptor:
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return SetDescriptor(SetKind.SPHERE, n)


def sparse_sphere(n: int, s: int) -> SetDescriptor:
    if not (1 <= s <= n):
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    return SetDescriptor(SetKind.SPARSE_SPHERE, n, s=s)


def ball(n: int, r: float) -> SetDescriptor:
    if r <= 0:
        raise ValueError("radius must be positive")
    return SetDescriptor(SetKind.BALL, n, r=r)


def points_array(t: SetDescriptor) -> np.ndarray:
    if t.kind is not SetKind.FINITE:
        raise ValueError("points_array only applies to finite descriptors")
    return np.asarray(t.points, dtype=float)


def radius(t: SetDescriptor) -> float:
    """sup of Euclidean norms over the set."""
    if t.kind is SetKind.FINITE:
        return float(np.linalg.norm(points_array(t), axis=1).max())
    if t.kind in (SetKind.SPHERE, SetKind.SPARSE_SPHERE):
        return 1.0
    return float(t.r)


def diameter(t: SetDescriptor) -> float:
    if t.kind is SetKind.FINITE:
        pts = points_array(t)
        if len(pts) == 1:
            return 0.0
        return float(_distance_matrix(pts).max())
    if t.kind in (SetKind.SPHERE, SetKind.SPARSE_SPHERE):
        return 2.0
    return 2.0 * float(t.r)


def _distance_matrix(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


# -- covering numbers ---------------------------------------------------------

EXHAUSTIVE_COVER_LIMIT = 16


@dataclass(frozen=True)
class CoveringCount:
    value: int
    exact: bool  # False: greedy net, correct only up to the usual 2x in scale


def covering_number_finite(points, u: float) -> CoveringCount:
    """Minimal number of closed u-balls centered at points of T covering T.

    Exhaustive search up to 16 points, with the center subsets held as
    bitmasks and the greedy net size capping how deep the subset scan must
    go; greedy farthest-point net beyond 16 points, flagged approximate.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    dist = _distance_matrix(pts)
    covered_by = dist <= u  # covered_by[c, i]: center c covers point i
    greedy = _greedy_cover_size(dist, covered_by)
    if n > EXHAUSTIVE_COVER_LIMIT:
        return CoveringCount(greedy, False)
    off_diag = dist[~np.eye(n, dtype=bool)]
    if n > 1 and u < off_diag.min():
        return CoveringCount(n, True)  # every ball covers only its own center
    masks = [int(sum(1 << i for i in np.flatnonzero(covered_by[c]))) for c in range(n)]
    full = (1 << n) - 1
    for k in range(1, greedy):
        for centers in itertools.combinations(range(n), k):
            acc = 0
            for c in centers:
                acc |= masks[c]
            if acc == full:
                return CoveringCount(k, True)
    return CoveringCount(greedy, True)


def _greedy_cover_size(dist: np.ndarray, covered_by: np.ndarray) -> int:
    order = _farthest_first_order(dist)[0]
    count = 0
    uncovered = np.ones(len(dist), dtype=bool)
    for idx in order:
        if not uncovered.any():
            break
        if uncovered[idx]:
            count += 1
            uncovered &= ~covered_by[idx]
    return count


def _farthest_first_order(dist: np.ndarray):
    """Greedy farthest-first traversal: visit order plus insertion radii.

    The first M visited points are pairwise >= radii[M-1] apart, which makes
    every prefix a packing witness.
    """
    n = dist.shape[0]
    order = [0]
    radii = [math.inf]
    mind = dist[0].copy()
    for _ in range(n - 1):
        idx = int(np.argmax(mind))
        order.append(idx)
        radii.append(float(mind[idx]))
        np.minimum(mind, dist[idx], out=mind)
    return order, radii


@dataclass(frozen=True)
class LogCount:
    """A covering-number bound carried in log space to dodge overflow."""

    log_value: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value < 700 else math.inf


def covering_bound_sparse(n: int, s: int, u: float) -> LogCount:
    """Volumetric bound (2 e n / s)**s * (1 + 2/u)**s for the set of s-sparse
    unit vectors, written against ambient dimension 2n on purpose: the
    sparse-recovery argument covers differences of s-sparse vectors."""
    if not (1 <= s <= n):
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if u <= 0:
        raise ValueError("u must be positive")
    return LogCount(s * (math.log(2.0 * math.e * n / s) + math.log1p(2.0 / u)))


def log_covering_number(t: SetDescriptor, u: float) -> float:
    """log N(T, u): exact for finite sets (greedy above 16 points, which
    over-counts and therefore keeps upper bounds valid), volumetric bounds
    for spheres and balls, and 0 once one ball suffices."""
    if u <= 0:
        raise ValueError("u must be positive")
    if t.kind is SetKind.FINITE:
        return math.log(covering_number_finite(t.points, u).value)
    if t.kind is SetKind.SPHERE:
        return t.n * math.log1p(2.0 / u) if u < 2.0 else 0.0
    if t.kind is SetKind.BALL:
        # centered at the origin, so a single r-ball covers once u >= r
        return t.n * math.log1p(2.0 * t.r / u) if u < t.r else 0.0
    if u >= 2.0:
        return 0.0
    return covering_bound_sparse(t.n, t.s, u).log_value


# -- entropy integral upper bound ---------------------------------------------

_DYADIC_LEVELS = 60


def dudley_gamma_upper(t: SetDescriptor, alpha: float) -> float:
    """Entropy integral int_0^diam (log N(T, u))**(1/alpha) du, trapezoid rule
    on the dyadic grid u_j = diam * 2**-j.

    The absolute constant of the chaining comparison is deliberately taken as
    1 here; callers needing a guaranteed upper bound on the partition
    functional multiply by chain_upper_factor(alpha) (see complexity_bracket).
    60 dyadic levels leave a tail below 1e-15 of the total for every
    descriptor kind.
    """
    _check_alpha(alpha)
    d = diameter(t)
    if d == 0.0:
        return 0.0
    us = d * 2.0 ** -np.arange(_DYADIC_LEVELS + 1)
    f = np.array([max(log_covering_number(t, u), 0.0) ** (1.0 / alpha) for u in us])
    widths = us[:-1] - us[1:]
    total = float(np.sum(widths * 0.5 * (f[:-1] + f[1:])))
    # closing rectangle for (0, u_J]; negligible at 60 levels but keeps the
    # quadrature an honest account of the full half-line
    total += float(us[-1] * f[-1])
    return total


def _check_alpha(alpha: float):
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")


# -- entropy-number lower bound -----------------------------------------------

_ENTROPY_LEVELS = 6


def entropy_scale(t: SetDescriptor, k: int) -> float:
    """e_k(T) = inf{u : N(T, u) <= 2**(2**k)}, or a certified lower bound.

    Finite sets up to 16 points use exact covering numbers over the grid of
    pairwise distances.  Larger finite sets and the infinite descriptors fall
    back to packing witnesses: M points pairwise >= r apart force
    N(T, u) > M - 1 for every u < r/2, hence e_k >= r/2 once M > 2**(2**k).
    """
    budget = 2 ** (2**k)
    if t.kind is SetKind.FINITE:
        pts = points_array(t)
        if len(pts) <= budget:
            return 0.0
        dist = _distance_matrix(pts)
        if len(pts) <= EXHAUSTIVE_COVER_LIMIT:
            candidates = np.unique(dist[dist > 0])
            for u in candidates:
                if covering_number_finite(t.points, float(u)).value <= budget:
                    return float(u)
            return float(candidates[-1])
        _, radii = _farthest_first_order(dist)
        return radii[budget] / 2.0 if budget < len(radii) else 0.0
    # {+-r e_i}: 2n points pairwise >= sqrt(2) r, all inside the descriptor
    scale = t.r if t.kind is SetKind.BALL else 1.0
    return scale * math.sqrt(2.0) / 2.0 if budget < 2 * t.n else 0.0


def entropy_lower_bound(t: SetDescriptor, alpha: float) -> float:
    """Certified lower bound sup_k 2**(k/alpha) * e_k(T); a sanity floor for
    the bracket rather than a sharp estimate."""
    _check_alpha(alpha)
    return max(
        2.0 ** (k / alpha) * entropy_scale(t, k) for k in range(_ENTROPY_LEVELS)
    )


# -- exact functional on tiny finite sets ---------------------------------------

EXACT_PARTITION_LIMIT = 8


def _partitions_up_to(n: int, max_blocks: int):
    """All set partitions of range(n) with at most max_blocks blocks, as
    restricted-growth assignment arrays."""
    assign = [0] * n

    def rec(i: int, used: int):
        if i == n:
            yield tuple(assign)
            return
        for b in range(min(used + 1, max_blocks)):
            assign[i] = b
            yield from rec(i + 1, used + 1 if b == used else used)

    yield from rec(0, 0)


def gamma_exact_small(points, alpha: float, convention: str = "diameter"):
    """Exact chaining functional on a finite set of at most 8 points.

    Chains start with the whole set, may split into at most 4 blocks at
    level 1 and at most 16 at level 2; with |T| <= 8 <= 16 the optimum makes
    level 2 all singletons (later refinements only add nonnegative terms),
    so only the level-1 partition is searched, exhaustively.

    convention="diameter" scores a block by sup_{s,t in A} d(s,t); "radius"
    scores the block of t by sup_{s in A} d(t, s) and takes the sup over t of
    the whole chain sum.  The two differ by at most a factor 2.
    """
    _check_alpha(alpha)
    if convention not in ("diameter", "radius"):
        raise ValueError(f"unknown convention {convention!r}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if n > EXACT_PARTITION_LIMIT:
        raise ValueError(f"exact enumeration limited to {EXACT_PARTITION_LIMIT} points")
    if n == 1:
        return ComplexityBracket(0.0, 0.0, alpha, "exact-partition", "exact-partition")
    dist = _distance_matrix(pts)
    w1 = 2.0 ** (1.0 / alpha)
    best = math.inf
    for assign in _partitions_up_to(n, 4):
        labels = np.asarray(assign)
        if convention == "diameter":
            worst_block = 0.0
            for b in range(labels.max() + 1):
                idx = np.flatnonzero(labels == b)
                if len(idx) > 1:
                    worst_block = max(worst_block, float(dist[np.ix_(idx, idx)].max()))
            value = float(dist.max()) + w1 * worst_block
        else:
            per_point = np.empty(n)
            for i in range(n):
                block = np.flatnonzero(labels == labels[i])
                per_point[i] = dist[i].max() + w1 * dist[i, block].max()
            value = float(per_point.max())
        best = min(best, value)
    return ComplexityBracket(best, best, alpha, "exact-partition", "exact-partition")


# -- brackets -------------------------------------------------------------------


@dataclass(frozen=True)
class ComplexityBracket:
    gamma_lower: float
    gamma_upper: float
    alpha: float
    method_lower: str  # "entropy-number" | "exact-partition"
    method_upper: str  # "dudley-integral" | "exact-partition"
    upper_constant: float = 1.0  # factor already folded into gamma_upper

    def __post_init__(self):
        if not (0.0 <= self.gamma_lower <= self.gamma_upper):
            raise ValueError(
                f"bracket out of order: [{self.gamma_lower}, {self.gamma_upper}]"
            )


def chain_upper_factor(alpha: float) -> float:
    """Constant C(alpha) such that the partition functional is at most
    C(alpha) times the entropy integral.

    From covers at scales e_k: joining them gives an admissible chain with
    diam(A_(k+1)(t)) <= 2 e_k, so gamma <= diam(T) + 2**(1+1/alpha) *
    sum_k 2**(k/alpha) e_k; Abel summation against
    int >= (log 2)**(1/alpha) (1 - 2**(-1/alpha)) sum_k 2**(k/alpha) e_k and
    diam(T) <= 2 (log 2)**(-1/alpha) * int give the stated constant.
    Values: ~30.5 at alpha=0.5, ~14.4 at alpha=1, ~14.0 at alpha=2.
    """
    _check_alpha(alpha)
    ia = 1.0 / alpha
    return LOG2 ** (-ia) * (2.0 + 2.0 ** (1.0 + ia) / (1.0 - 2.0 ** (-ia)))


def small_set_chain_factor(alpha: float) -> float:
    """Sharper version of chain_upper_factor for sets of at most 8 points,
    where only the covering scales at 1 and 4 balls matter.  Between 4.2
    (alpha=0.5) and 5.8 (alpha=2)."""
    _check_alpha(alpha)
    ia = 1.0 / alpha
    log5 = math.log(5.0)
    bound_a = 2.0 * (1.0 + 2.0**ia) / LOG2**ia
    bound_b = max(2.0 / LOG2**ia, 2.0 ** (1.0 + ia) / (log5**ia - LOG2**ia))
    return min(bound_a, bound_b)


def complexity_bracket(t: SetDescriptor, alpha: float) -> ComplexityBracket:
    """Two-sided bracket on the chaining functional of a descriptor.

    Tiny finite sets get the exact value on both sides.  Everything else
    pairs the entropy-number floor with the entropy integral scaled by
    chain_upper_factor, so the bracket genuinely contains the functional.
    """
    _check_alpha(alpha)
    if t.kind is SetKind.FINITE and len(t.points) <= EXACT_PARTITION_LIMIT:
        return gamma_exact_small(t.points, alpha)
    factor = chain_upper_factor(alpha)
    return ComplexityBracket(
        entropy_lower_bound(t, alpha),
        factor * dudley_gamma_upper(t, alpha),
        alpha,
        "entropy-number",
        "dudley-integral",
        upper_constant=factor,
    )


# -- misc -----------------------------------------------------------------------


def sphere_net(n: int, count: int, stream: RandomStream) -> np.ndarray:
    """count random points on the unit sphere of R^n (a stand-in net for the
    sphere; callers record the count, and any resolution claim is theirs)."""
    gen = stream.generator()
    pts = gen.standard_normal((count, n))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def descriptor_to_json(t: SetDescriptor) -> dict:
    out: dict = {"kind": t.kind.value, "n": t.n}
    if t.kind is SetKind.FINITE:
        out["points"] = [list(p) for p in t.points]
    elif t.kind is SetKind.SPARSE_SPHERE:
        out["s"] = t.s
    elif t.kind is SetKind.BALL:
        out["r"] = t.r
    return out


def descriptor_from_json(obj: dict) -> SetDescriptor:
    kind = SetKind(obj["kind"])
    if kind is SetKind.FINITE:
        return finite_points(obj["points"])
    if kind is SetKind.SPHERE:
        return unit_sphere(int(obj["n"]))
    if kind is SetKind.SPARSE_SPHERE:
        return sparse_sphere(int(obj["n"]), int(obj["s"]))
    return ball(int(obj["n"]), float(obj["r"]))


def bracket_to_json(b: ComplexityBracket) -> dict:
    return {
        "gamma_lower": b.gamma_lower,
        "gamma_upper": b.gamma_upper,
        "alpha": b.alpha,
        "method_lower": b.method_lower,
        "method_upper": b.method_upper,
        "upper_constant": b.upper_constant,
    }
