"""Figure rendering for the CLI report path.

Figures are rendered in-process with the Agg backend and written as SVG next
to the CSV/JSON artifacts.  Determinism knobs: a fixed svg.hashsalt so
element ids do not vary run to run, and no Date metadata in the output.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "htsk"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def render_tail_curve(curve, alpha: float, path, title: str = "") -> None:
    """Log-survival against (threshold - location)**alpha; linear means the
    tail matches the stretched-exponential shape at this alpha."""
    thr = np.asarray(curve.thresholds)
    surv = np.asarray(curve.survival)
    keep = surv > 0
    x = np.clip(thr[keep] - curve.location, 0.0, None) ** alpha
    y = np.log10(surv[keep])

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, y, "o-", ms=3.5, lw=1.0, label="empirical survival")
    if curve.envelope is not None:
        env = np.asarray(curve.envelope)[keep]
        pos = env > 0
        ax.plot(x[pos], np.log10(env[pos]), "--", lw=1.0, label="calibrated envelope")
    if curve.fitted_exponent is not None:
        ax.set_xlabel(
            f"(threshold - {curve.location:.3g})^{alpha:g}"
            f"   [fitted exponent {curve.fitted_exponent:.3g}]"
        )
    else:
        ax.set_xlabel(f"(threshold - {curve.location:.3g})^{alpha:g}")
    ax.set_ylabel("log10 survival")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_norm_histogram(norms, floor: float, path, title: str = "") -> None:
    """Histogram of minimum column norms with the event threshold marked."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(np.asarray(norms, dtype=float), bins=50)
    ax.axvline(floor, color="k", ls="--", lw=1.0, label="event threshold")
    ax.set_xlabel("minimum column norm")
    ax.set_ylabel("trials")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_jl_distortions(base, embedded, eps: float, path, title: str = "") -> None:
    """Histogram of relative pairwise distortions for one embedding trial."""
    base = np.asarray(base)
    embedded = np.asarray(embedded)
    keep = base > 0
    rel = (embedded[keep] - base[keep]) / base[keep]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(rel, bins=60)
    ax.axvline(-eps, color="k", ls="--", lw=1.0)
    ax.axvline(eps, color="k", ls="--", lw=1.0)
    ax.set_xlabel("relative pairwise distortion")
    ax.set_ylabel("pairs")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def log_survival_points(curve, alpha: float):
    """The (x, y) pairs the tail chart draws; exposed for tests."""
    thr = np.asarray(curve.thresholds)
    surv = np.asarray(curve.survival)
    keep = surv > 0
    x = np.clip(thr[keep] - curve.location, 0.0, None) ** alpha
    return x, np.array([math.log10(s) for s in surv[keep]])
