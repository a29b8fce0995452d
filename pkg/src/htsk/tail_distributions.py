"""Scalar laws with stretched-exponential tails and their Orlicz-type norms.

The workhorse family is the symmetric Weibull law ``sign * E**(1/alpha)``
(E standard exponential), whose survival function is exactly
``P(|X| > t) = exp(-(t/scale)**alpha)``.  Having an exact tail makes it the
reference oracle for everything downstream: samplers are checked against the
closed-form survival, and the psi-norm estimators are checked against the
closed-form norm values.

For a law X and index alpha, the psi_alpha norm used throughout is

    inf{ t > 0 : E exp(|X/t|**alpha) <= 2 }.

It is a genuine norm for alpha >= 1 and only a quasi-norm below; helpers at
the bottom of the module expose the bookkeeping constants that quasi-norm
arithmetic needs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .streams import RandomStream

LOG2 = math.log(2.0)


class Family(enum.Enum):
    SYMMETRIC_WEIBULL = "symmetric-weibull"
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    EMPIRICAL = "empirical"


class NoClosedFormError(ValueError):
    """Raised when a closed-form psi-norm is requested for a law without one."""


class NormAboveBracketError(RuntimeError):
    """Raised when the empirical MGF never drops to 2 inside the search bracket."""

    def __init__(self, t_lo: float, t_hi: float):
        super().__init__(
            f"norm above bracket: empirical MGF stays above 2 on [{t_lo:g}, {t_hi:g}]"
        )
        self.bracket = (t_lo, t_hi)


@dataclass(frozen=True)
class TailLaw:
    """A symmetric scalar law: family, tail index alpha, and scale.

    ``alpha`` must lie in (0, 2]; ``scale`` multiplies the canonical member
    of the family.  ``data`` is only used by the empirical family.
    """

    family: Family
    alpha: float
    scale: float = 1.0
    data: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must be in (0, 2], got {self.alpha}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.family is Family.EMPIRICAL and len(self.data) == 0:
            raise ValueError("empirical law needs a nonempty data tuple")


def symmetric_weibull(alpha: float, scale: float = 1.0) -> TailLaw:
    return TailLaw(Family.SYMMETRIC_WEIBULL, alpha, scale)


def gaussian(scale: float = 1.0) -> TailLaw:
    return TailLaw(Family.GAUSSIAN, 2.0, scale)


def rademacher(alpha: float = 1.0) -> TailLaw:
    return TailLaw(Family.RADEMACHER, alpha, 1.0)


def uniform(half_width: float, alpha: float = 2.0) -> TailLaw:
    """Uniform on [-half_width, half_width]; scale stores the half-width."""
    return TailLaw(Family.UNIFORM, alpha, half_width)


def empirical(samples: Sequence[float], alpha: float) -> TailLaw:
    return TailLaw(Family.EMPIRICAL, alpha, 1.0, tuple(float(v) for v in samples))


def variance(law: TailLaw) -> float:
    """Exact variance where the family admits one, sample variance otherwise."""
    if law.family is Family.SYMMETRIC_WEIBULL:
        return law.scale**2 * math.gamma(2.0 / law.alpha + 1.0)
    if law.family is Family.GAUSSIAN:
        return law.scale**2
    if law.family is Family.RADEMACHER:
        return law.scale**2
    if law.family is Family.UNIFORM:
        return law.scale**2 / 3.0
    return float(np.var(np.asarray(law.data)))


def standardize(law: TailLaw) -> TailLaw:
    """Rescale the law to unit variance (symmetry keeps it mean zero)."""
    v = variance(law)
    if not (v > 0.0 and math.isfinite(v)):
        raise ValueError(f"cannot standardize a law with variance {v}")
    if law.family is Family.EMPIRICAL:
        s = 1.0 / math.sqrt(v)
        return empirical(tuple(x * s for x in law.data), law.alpha)
    return TailLaw(law.family, law.alpha, law.scale / math.sqrt(v), law.data)


def exact_survival(law: TailLaw, t: float) -> float:
    """P(|X| > t) where the family has a closed form (Weibull, Gaussian,
    Rademacher, Uniform)."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    z = t / law.scale
    if law.family is Family.SYMMETRIC_WEIBULL:
        return math.exp(-(z**law.alpha))
    if law.family is Family.GAUSSIAN:
        return math.erfc(z / math.sqrt(2.0))
    if law.family is Family.RADEMACHER:
        return 1.0 if t < law.scale else 0.0
    if law.family is Family.UNIFORM:
        return max(0.0, 1.0 - z)
    raise NoClosedFormError(f"no closed-form survival for {law.family.value}")


def sample(law: TailLaw, stream: RandomStream, size: int | None = None):
    """Draw from the law.  Scalar when size is None, ndarray otherwise.

    The symmetric Weibull draw is the inverse transform sign * E**(1/alpha),
    so its survival function is exact, not approximate.
    """
    n = 1 if size is None else int(size)
    gen = stream.generator()
    if law.family is Family.SYMMETRIC_WEIBULL:
        e = gen.standard_exponential(n)
        sign = gen.integers(0, 2, size=n) * 2 - 1
        out = law.scale * sign * e ** (1.0 / law.alpha)
    elif law.family is Family.GAUSSIAN:
        out = law.scale * gen.standard_normal(n)
    elif law.family is Family.RADEMACHER:
        out = law.scale * (gen.integers(0, 2, size=n) * 2 - 1).astype(float)
    elif law.family is Family.UNIFORM:
        out = gen.uniform(-law.scale, law.scale, size=n)
    else:
        out = gen.choice(np.asarray(law.data, dtype=float), size=n, replace=True)
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class PsiNormEstimate:
    value: float
    method: str  # "bisection-MGF" | "moment-ratio" | "closed-form"
    sample_count: int
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not (self.ci_low <= self.value <= self.ci_high):
            raise ValueError(
                f"inconsistent estimate: {self.ci_low} <= {self.value} <= {self.ci_high}"
            )


def psi_norm_closed_form(law: TailLaw, alpha: float | None = None) -> PsiNormEstimate:
    """Exact psi-norm for the two families that admit one.

    Symmetric Weibull measured at its own index: |X/t|^alpha is Exp(1) scaled
    by (scale/t)^alpha, so E exp(|X/t|^alpha) = 1/(1 - (scale/t)^alpha) and the
    level-2 crossing sits at scale * 2**(1/alpha).  A Gaussian measured at
    alpha = 2: E exp(X^2/t^2) = (1 - 2 scale^2/t^2)^(-1/2), crossing at
    scale * sqrt(8/3).
    """
    alpha = law.alpha if alpha is None else alpha
    if law.family is Family.SYMMETRIC_WEIBULL and alpha == law.alpha:
        value = law.scale * 2.0 ** (1.0 / alpha)
    elif law.family is Family.GAUSSIAN and alpha == 2.0:
        value = law.scale * math.sqrt(8.0 / 3.0)
    else:
        raise NoClosedFormError(
            f"no closed form for family={law.family.value} at alpha={alpha}"
        )
    return PsiNormEstimate(value, "closed-form", 0, value, value)


def _log_empirical_mgf(abs_x: np.ndarray, t: float, alpha: float) -> float:
    # log of mean(exp(|x/t|^alpha)), evaluated with log-sum-exp so that small
    # t cannot overflow.
    return float(logsumexp((abs_x / t) ** alpha) - math.log(abs_x.size))


def psi_norm_moment_ratio(samples: Sequence[float], alpha: float) -> PsiNormEstimate:
    """Cheap scale proxy max_p ||x||_p / p**(1/alpha) over p in {1, 2, 4, 8}.

    Correct up to an absolute constant only; used to seed the bisection
    bracket.  The interval (0, inf) records that no sharper guarantee holds.
    """
    x = np.abs(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("samples empty")
    value = max(float(np.mean(x**p)) ** (1.0 / p) / p ** (1.0 / alpha) for p in (1, 2, 4, 8))
    return PsiNormEstimate(value, "moment-ratio", x.size, 0.0, math.inf)


def psi_norm_bisection(
    samples: Sequence[float], alpha: float, rel_tol: float = 1e-4
) -> PsiNormEstimate:
    """Empirical psi-norm by bisection on the level-2 crossing of the MGF.

    The empirical mean of exp(|x_i/t|^alpha) is strictly decreasing in t, so
    the crossing is unique.  The initial bracket is
    [max|x| / (N ln 2)**(1/alpha), 8 * moment-ratio proxy]: at the lower end
    the single largest sample already pushes the mean above 2, and the upper
    end is doubled until the mean drops below 2 (failure to do so raises
    NormAboveBracketError with the bracket bounds).

    Meant for samples of 10^4 and up; smaller inputs still bisect fine but
    the MGF summands are heavy-tailed, so expect a wide interval.
    """
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")
    x = np.abs(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("samples empty")
    n = x.size
    amax = float(x.max())
    if amax == 0.0:
        # Degenerate sample: every t satisfies the constraint; infimum is 0.
        return PsiNormEstimate(0.0, "bisection-MGF", n, 0.0, 0.0)

    t_lo = amax / (LOG2 * n) ** (1.0 / alpha)
    t_hi = 8.0 * max(psi_norm_moment_ratio(x, alpha).value, t_lo)
    doublings = 0
    while _log_empirical_mgf(x, t_hi, alpha) > LOG2:
        t_hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise NormAboveBracketError(t_lo, t_hi)

    lo, hi = t_lo, t_hi
    while hi - lo >= rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if _log_empirical_mgf(x, mid, alpha) > LOG2:
            lo = mid
        else:
            hi = mid
    value = 0.5 * (lo + hi)

    # CI by delta method: CLT band on the empirical MGF at the crossing,
    # pushed through the local slope dM/dt.  The MGF summands can be very
    # heavy-tailed, in which case the band is honestly wide.
    w = np.exp(np.minimum((x / value) ** alpha, 700.0))
    se = float(np.std(w)) / math.sqrt(n)
    h = 1e-3 * value
    m_plus = math.exp(_log_empirical_mgf(x, value + h, alpha))
    m_minus = math.exp(_log_empirical_mgf(x, value - h, alpha))
    slope = abs(m_plus - m_minus) / (2.0 * h)
    delta = 1.96 * se / slope if slope > 0 else math.inf
    return PsiNormEstimate(
        value, "bisection-MGF", n, max(0.0, value - delta), value + delta
    )


def lp_norm_analytic(law: TailLaw, p: float) -> float:
    """||X||_p in closed form; only the symmetric Weibull family supports it."""
    if law.family is not Family.SYMMETRIC_WEIBULL:
        raise NoClosedFormError(f"no analytic L^p norm for {law.family.value}")
    return law.scale * math.exp(gammaln(p / law.alpha + 1.0) / p)


@dataclass(frozen=True)
class MomentGrowthReport:
    """Ratios ||X||_p / (p**(1/alpha) * psi_alpha(X)) and their maximum."""

    entries: tuple  # of (p, lp_norm, ratio)
    max_ratio: float
    bound: float = 4.0

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.bound


def moment_growth_check(
    law: TailLaw,
    p_list: Sequence[int],
    stream: RandomStream | None = None,
    mc_samples: int = 200_000,
) -> MomentGrowthReport:
    """Check that L^p norms grow no faster than 4 * p**(1/alpha) * psi_alpha.

    Symmetric Weibull moments come from the Gamma closed form; any other
    family falls back to Monte Carlo, which then also estimates the psi-norm
    by bisection (so a stream is required).
    """
    if any(p < 1 for p in p_list):
        raise ValueError("all p must be >= 1")
    analytic = law.family is Family.SYMMETRIC_WEIBULL
    if analytic:
        psi = psi_norm_closed_form(law).value
        draws = None
    else:
        if stream is None:
            raise ValueError("Monte Carlo moment check needs a stream")
        draws = sample(law, stream, size=mc_samples)
        psi = psi_norm_bisection(draws, law.alpha).value
    entries = []
    for p in p_list:
        if analytic:
            lp = lp_norm_analytic(law, p)
        else:
            lp = float(np.mean(np.abs(draws) ** p)) ** (1.0 / p)
        if not math.isfinite(lp):
            raise FloatingPointError(f"non-finite L^{p} moment estimate")
        entries.append((int(p), lp, lp / (p ** (1.0 / law.alpha) * psi)))
    return MomentGrowthReport(tuple(entries), max(e[2] for e in entries))


# -- quasi-norm arithmetic ---------------------------------------------------
# Documented bookkeeping helpers; they rewrite norm bounds, nothing is
# estimated here.


def quasi_triangle_constant(alpha: float) -> float:
    """Constant C with ||X + Y|| <= C (||X|| + ||Y||): 1 for alpha >= 1,
    2**(1/alpha - 1) below, where the functional is only a quasi-norm."""
    return 1.0 if alpha >= 1.0 else 2.0 ** (1.0 / alpha - 1.0)


def power_norm_index(alpha: float, p: float) -> float:
    """|X|^p measured at index alpha has the norm of X at index p * alpha,
    raised to the p-th power; this returns the shifted index."""
    return p * alpha


def product_norm_bound(k1: float, k2: float) -> float:
    """Holder-type bound for a product of two norms at conjugate indices."""
    return k1 * k2


def centering_inflation(alpha: float) -> float:
    """Centering X - EX inflates the norm by at most 1 + C(alpha), via the
    quasi-triangle constant and |EX| <= ||X||_1 <= 4 * psi."""
    return quasi_triangle_constant(alpha) * 5.0


def law_to_json(law: TailLaw) -> dict:
    return {"family": law.family.value, "alpha": law.alpha, "scale": law.scale}


def law_from_json(obj: dict) -> TailLaw:
    fam = Family(obj["family"])
    if fam is Family.EMPIRICAL:
        raise ValueError("empirical laws are not JSON round-trippable")
    return TailLaw(fam, float(obj["alpha"]), float(obj["scale"]))
