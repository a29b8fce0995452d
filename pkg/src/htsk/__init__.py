"""htsk: heavy-tailed sketching lab.

Random matrices with stretched-exponential tail behavior acting on bounded
sets: ensemble generators, tail-norm estimation, complexity brackets for
chaining bounds, Monte Carlo deviation measurement, and the dimension
reduction / restricted isometry applications built on top.
"""

__version__ = "0.1.0"

from .streams import RandomStream
from .tail_distributions import (
    Family,
    TailLaw,
    PsiNormEstimate,
    symmetric_weibull,
    gaussian,
    rademacher,
    uniform,
    sample,
    standardize,
    psi_norm_closed_form,
    psi_norm_bisection,
    moment_growth_check,
)
from .ensembles import (
    ColumnLaw,
    EnsembleSpec,
    ModelKind,
    NormalizationOutcome,
    column_model,
    counterexample_model,
    gen_matrix,
    nominal_psi_norm,
    normalize_columns,
    row_model,
    save_matrix,
    load_matrix,
)
from .set_geometry import (
    ComplexityBracket,
    SetDescriptor,
    SetKind,
    ball,
    complexity_bracket,
    covering_number_finite,
    covering_bound_sparse,
    dudley_gamma_upper,
    entropy_lower_bound,
    finite_points,
    gamma_exact_small,
    radius,
    sparse_sphere,
    sphere_net,
    unit_sphere,
)
from .concentration_lab import (
    MeanEstimate,
    Model,
    TailCurve,
    fit_tail_exponent,
    hanson_wright_check,
    bx_norm_check,
    column_single_vector_check,
    increment_check,
    mc_expectation,
    mc_tail_curve,
    power_iteration_norm,
    sup_deviation,
)
from .applications import (
    JLReport,
    RIPReport,
    formula_k,
    jl_dim,
    jl_embed_and_score,
    rip_constant_exact,
    rip_randomized,
    rip_sample_size,
)
from .calibration import Calibration, load_calibration, run_calibration

__all__ = [name for name in dir() if not name.startswith("_")]
