"""Random matrix ensembles: independent isotropic rows, exactly unit columns,
and the Bernoulli-masked counterexample that breaks column normalization.

All generators are pure functions of (spec, stream).  Column j of every
ensemble is drawn from ``stream.substream(j)``, so fills can be parallelized
per column and the output never depends on scheduling.

Matrices persist to a little-endian binary format: magic ``HTSK``, u32
version, u64 rows, u64 cols, 4-byte dtype tag (``f64``), then a column-major
float64 payload.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

from .streams import RandomStream
from .tail_distributions import (
    Family,
    TailLaw,
    psi_norm_closed_form,
    sample,
    standardize,
)

MAX_ELEMENTS = 10**8


class ModelKind(enum.Enum):
    ROW = "row"
    COLUMN = "column"
    COUNTEREXAMPLE = "counterexample"
    CUSTOM = "custom"


class ColumnLaw(enum.Enum):
    UNIFORM_SPHERE = "uniform-sphere"
    NORMALIZED_WEIBULL = "normalized-weibull"


@dataclass(frozen=True)
class EnsembleSpec:
    kind: ModelKind
    m: int
    n: int
    alpha: float
    entry_law: TailLaw | None = None  # row model
    column_law: ColumnLaw | None = None  # column model
    nominal_K: float | None = None  # resolved via nominal_psi_norm when None

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if self.m * self.n > MAX_ELEMENTS:
            raise ValueError(
                f"matrix would have {self.m * self.n} elements, cap is {MAX_ELEMENTS}"
            )
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must be in (0, 2], got {self.alpha}")
        if self.kind is ModelKind.ROW and self.entry_law is None:
            raise ValueError("row model needs an entry_law")
        if self.kind is ModelKind.COLUMN and self.column_law is None:
            raise ValueError("column model needs a column_law")


def row_model(m: int, n: int, entry_law: TailLaw, nominal_K: float | None = None) -> EnsembleSpec:
    return EnsembleSpec(ModelKind.ROW, m, n, entry_law.alpha, entry_law=entry_law, nominal_K=nominal_K)


def column_model(
    m: int, n: int, column_law: ColumnLaw, alpha: float, nominal_K: float | None = None
) -> EnsembleSpec:
    return EnsembleSpec(ModelKind.COLUMN, m, n, alpha, column_law=column_law, nominal_K=nominal_K)


def counterexample_model(m: int, count: int) -> EnsembleSpec:
    # columns are subgaussian (a masked sphere point), tail index 2
    return EnsembleSpec(ModelKind.COUNTEREXAMPLE, m, count, 2.0)


def gen_row_model(spec: EnsembleSpec, stream: RandomStream) -> np.ndarray:
    """m x n matrix with i.i.d. entries from the standardized entry law, so
    the rows are isotropic by construction."""
    if spec.kind is not ModelKind.ROW:
        raise ValueError("spec is not a row model")
    law = standardize(spec.entry_law)
    cols = [sample(law, stream.substream(j), size=spec.m) for j in range(spec.n)]
    return np.column_stack(cols)


def gen_column_model(
    spec: EnsembleSpec, stream: RandomStream, retry_stats: dict | None = None
) -> np.ndarray:
    """Independent columns of exactly unit Euclidean norm.

    Mean zero comes from the symmetry of the raw draws, never from explicit
    centering, which would break the exact normalization.  A zero-norm draw
    (probability zero) triggers a regenerate from a deeper substream; retries
    are counted into retry_stats when given.
    """
    if spec.kind is not ModelKind.COLUMN:
        raise ValueError("spec is not a column model")
    out = np.empty((spec.m, spec.n))
    for j in range(spec.n):
        sub = stream.substream(j)
        for attempt in range(100):
            col = _raw_column(spec, sub if attempt == 0 else sub.substream(attempt))
            norm = float(np.linalg.norm(col))
            if norm > 0.0:
                break
            if retry_stats is not None:
                retry_stats["retries"] = retry_stats.get("retries", 0) + 1
        else:
            raise RuntimeError("100 zero-norm draws in a row; broken generator")
        out[:, j] = col / norm
    return out


def _raw_column(spec: EnsembleSpec, stream: RandomStream) -> np.ndarray:
    if spec.column_law is ColumnLaw.UNIFORM_SPHERE:
        return stream.generator().standard_normal(spec.m)
    law = TailLaw(Family.SYMMETRIC_WEIBULL, spec.alpha, 1.0)
    return sample(law, stream, size=spec.m)


def gen_counterexample(m: int, count: int, stream: RandomStream) -> np.ndarray:
    """Columns are b * X with b Bernoulli(1/2) and X uniform on the sphere of
    radius sqrt(m): isotropic, subgaussian, yet column norms are 0 or sqrt(m),
    so no single recentering value can be within sqrt(m)/2 of both."""
    out = np.empty((m, count))
    root = math.sqrt(m)
    for j in range(count):
        gen = stream.substream(j).generator()
        b = int(gen.integers(0, 2))
        g = gen.standard_normal(m)
        out[:, j] = (root * b / np.linalg.norm(g)) * g
    return out


def gen_matrix(spec: EnsembleSpec, stream: RandomStream) -> np.ndarray:
    if spec.kind is ModelKind.ROW:
        return gen_row_model(spec, stream)
    if spec.kind is ModelKind.COLUMN:
        return gen_column_model(spec, stream)
    if spec.kind is ModelKind.COUNTEREXAMPLE:
        return gen_counterexample(spec.m, spec.n, stream)
    raise ValueError(f"cannot generate {spec.kind}")


@dataclass(frozen=True)
class NormalizationOutcome:
    matrix: np.ndarray
    event_F: bool
    min_column_norm: float


def normalize_columns(a: np.ndarray) -> NormalizationOutcome:
    """Rescale columns to norm sqrt(m) when every column norm clears
    sqrt(m)/2; otherwise hand the matrix back untouched with the event flag
    down so the caller can discard the trial (rejection, not reweighting)."""
    m = a.shape[0]
    norms = np.linalg.norm(a, axis=0)
    min_norm = float(norms.min())
    event = min_norm >= math.sqrt(m) / 2.0
    if not event:
        return NormalizationOutcome(a, False, min_norm)
    assert min_norm > 0.0, "event_F with a zero column is impossible"
    return NormalizationOutcome(a * (math.sqrt(m) / norms), True, min_norm)


def nominal_psi_norm(spec: EnsembleSpec, calibration=None) -> float:
    """The K recorded for an ensemble: a tail-norm closed form where one
    exists, otherwise a measured value from the calibration fixtures.

    Row models use the standardized entry law's norm (the sup over unit
    directions differs from it only by an alpha-dependent constant, which the
    calibrated test constants absorb).  Column models are measured: the
    fixtures store c with K = c / sqrt(m).
    """
    if spec.nominal_K is not None:
        return spec.nominal_K
    if spec.kind is ModelKind.ROW:
        law = standardize(spec.entry_law)
        if law.family is Family.RADEMACHER:
            # E exp(|1/t|^alpha) = 2 exactly at t = (ln 2)^(-1/alpha)
            return law.scale * math.log(2.0) ** (-1.0 / spec.alpha)
        return psi_norm_closed_form(law, spec.alpha).value
    if spec.kind is ModelKind.COLUMN:
        if calibration is None:
            raise ValueError("column-model K needs calibration fixtures")
        c = calibration.get(
            "column_coord_psi_c", law=spec.column_law.value, alpha=spec.alpha
        )
        return c / math.sqrt(spec.m)
    if spec.kind is ModelKind.COUNTEREXAMPLE:
        if calibration is None:
            raise ValueError("counterexample K needs calibration fixtures")
        return calibration.get("counterexample_coord_psi")
    raise ValueError(f"no nominal K rule for {spec.kind}")


# -- persistence ---------------------------------------------------------------

_MAGIC = b"HTSK"
_VERSION = 1
_DTYPE_TAG = b"f64\x00"
_HEADER = struct.Struct("<4sI QQ 4s")


def save_matrix(path, a: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, a.shape[0], a.shape[1], _DTYPE_TAG))
        fh.write(a.tobytes(order="F"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, m, n, dtype_tag = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        if dtype_tag != _DTYPE_TAG:
            raise ValueError(f"unsupported dtype tag {dtype_tag!r}")
        payload = fh.read(8 * m * n)
    return np.frombuffer(payload, dtype="<f8").reshape((m, n), order="F").copy()


def matrix_to_csv(path, a: np.ndarray) -> None:
    """Plain CSV export for small instances; one row per matrix row."""
    with open(path, "w", newline="") as fh:
        for row in np.asarray(a, dtype=float):
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")
