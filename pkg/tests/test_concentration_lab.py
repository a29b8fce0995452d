"""Deviation statistics, tail curves, exponent fitting, and envelope checks.

Wherever a closed-form law exists (chi for Gaussian norms, chi-square for
Gaussian quadratic forms, the exact scalar Weibull) the Monte Carlo output is
compared against it through scipy's distribution functions, which share no
code with the samplers under test.
"""

import math

import numpy as np
import pytest
from scipy import stats

from htsk.calibration import deviation_envelope
from htsk.concentration_lab import (
    Model,
    TailCurve,
    bx_norm_check,
    build_tail_curve,
    column_single_vector_check,
    default_thresholds,
    fit_tail_exponent,
    hanson_wright_check,
    increment_check,
    mc_deviation_values,
    mc_expectation,
    mc_tail_curve,
    power_iteration_norm,
    sup_deviation,
)
from htsk.ensembles import ColumnLaw, column_model, gen_matrix, nominal_psi_norm, row_model
from htsk.set_geometry import sphere_net
from htsk.streams import RandomStream
from htsk.tail_distributions import gaussian, standardize, symmetric_weibull


def binom_slack(p: float, n: int, sigmas: float = 4.0) -> float:
    return sigmas * math.sqrt(p * (1.0 - p) / n)


class TestSupDeviation:
    def test_zero_point_gives_zero(self, stream):
        a = gen_matrix(row_model(20, 4, symmetric_weibull(1.0)), stream)
        for model in (Model.ROW_IDENTITY, Model.COLUMN):
            assert sup_deviation(model, a, np.zeros((1, 4))) == 0.0
        b = np.eye(20)
        assert sup_deviation(Model.ROW_WITH_B, a, np.zeros((1, 4)), b) == 0.0

    def test_column_basis_vector_exact_zero(self, stream):
        a = gen_matrix(column_model(30, 6, ColumnLaw.UNIFORM_SPHERE, 2.0), stream)
        assert sup_deviation(Model.COLUMN, a, np.eye(6)[:1]) == 0.0

    def test_dimension_mismatch_rejected(self, stream):
        a = gen_matrix(row_model(5, 3, symmetric_weibull(1.0)), stream)
        with pytest.raises(ValueError, match="R\\^"):
            sup_deviation(Model.ROW_IDENTITY, a, np.zeros((1, 4)))

    def test_matches_naive_reimplementation_bitwise(self, stream):
        """100 shared-seed trials against a from-scratch per-point loop:
        heavy-entry rows, 64-point net of the sphere in R^10."""
        spec = row_model(100, 10, symmetric_weibull(1.0))
        pts = sphere_net(10, 64, stream.substream(999))
        root_m = math.sqrt(100)
        for i in range(100):
            a = gen_matrix(spec, stream.substream(i))
            got = sup_deviation(Model.ROW_IDENTITY, a, pts)
            naive = max(
                abs(float(np.linalg.norm(a @ x)) - root_m * float(np.linalg.norm(x)))
                for x in pts
            )
            assert got == naive

    def test_front_matrix_variant_matches_naive(self, stream):
        spec = row_model(40, 6, symmetric_weibull(1.0))
        pts = sphere_net(6, 12, stream.substream(999))
        b = stream.substream(998).generator().standard_normal((8, 40))
        hs = float(np.linalg.norm(b))
        for i in range(40):
            a = gen_matrix(spec, stream.substream(i))
            got = sup_deviation(Model.ROW_WITH_B, a, pts, b)
            naive = max(
                abs(float(np.linalg.norm(b @ (a @ x))) - hs * float(np.linalg.norm(x)))
                for x in pts
            )
            assert got == naive


class TestMcExpectation:
    def test_zero_set(self, stream):
        spec = row_model(10, 3, symmetric_weibull(1.0))
        est = mc_expectation(spec, Model.ROW_IDENTITY, np.zeros((1, 3)), 120, stream)
        assert est.mean == 0.0 and est.ci_low == 0.0 and est.ci_high == 0.0

    def test_bound_ratio_reported(self, stream, calibration):
        spec = row_model(32, 6, symmetric_weibull(1.0))
        net = sphere_net(6, 12, stream.substream(7))
        est = mc_expectation(
            spec, Model.ROW_IDENTITY, net, 150, stream,
            k_norm=nominal_psi_norm(spec),
        )
        assert est.bound_ratio is not None
        assert est.bound_ratio <= calibration.get("row_mean_C", alpha=1.0)

    def test_net_bias_bound_present(self, stream):
        spec = row_model(16, 4, symmetric_weibull(2.0))
        net = sphere_net(4, 8, stream.substream(3))
        est = mc_expectation(
            spec, Model.ROW_IDENTITY, net, 120, stream, net_resolution=0.1
        )
        assert est.net_resolution == 0.1
        assert est.net_bias_bound is not None and est.net_bias_bound > 0

    def test_too_few_trials_rejected(self, stream):
        spec = row_model(8, 2, symmetric_weibull(1.0))
        with pytest.raises(ValueError, match="100"):
            mc_expectation(spec, Model.ROW_IDENTITY, np.eye(2), 50, stream)

    def test_column_ratio_flat_in_m(self, stream, calibration):
        """The frozen constant bounds the column-model mean-to-rate ratio
        uniformly over an 8x range of m: the m-independence of the bound is
        the testable content."""
        n, alpha = 20, 2.0
        net = sphere_net(n, 24, stream.substream(50))
        c = calibration.get("column_mean_C", alpha=alpha)
        coord_c = calibration.get("column_coord_psi_c", law="uniform-sphere", alpha=alpha)
        from htsk.set_geometry import complexity_bracket, finite_points

        gamma_upper = complexity_bracket(finite_points(net), alpha).gamma_upper
        for m in (50, 100, 200, 400):
            spec = column_model(m, n, ColumnLaw.UNIFORM_SPHERE, alpha)
            est = mc_expectation(
                spec, Model.COLUMN, net, 150, stream.substream(m),
                k_norm=coord_c / math.sqrt(m), gamma_upper=gamma_upper,
            )
            assert est.bound_ratio <= c, (m, est.bound_ratio)

    def test_row_mean_tracks_complexity_across_grid(self, stream, calibration):
        """Growing n at a fixed aspect ratio, the mean deviation stays below
        the frozen constant times the complexity rate."""
        alpha = 1.0
        c = calibration.get("row_mean_C", alpha=alpha)
        from htsk.set_geometry import complexity_bracket, finite_points

        for gi, n in enumerate((4, 8, 16)):
            m = 4 * n
            net = sphere_net(n, 24, stream.substream(60 + gi))
            spec = row_model(m, n, symmetric_weibull(alpha))
            est = mc_expectation(
                spec, Model.ROW_IDENTITY, net, 150, stream.substream(70 + gi),
                k_norm=nominal_psi_norm(spec),
                gamma_upper=complexity_bracket(finite_points(net), alpha).gamma_upper,
            )
            assert est.bound_ratio <= c, (n, est.bound_ratio)


class TestTailCurveBasics:
    def test_survival_monotone_and_below_min(self, stream):
        values = np.abs(stream.generator().standard_normal(5000))
        thr = np.concatenate([[-1.0, 0.0], np.linspace(0.1, 4.0, 20)])
        curve = build_tail_curve(values, thr, 5000)
        surv = np.asarray(curve.survival)
        assert np.all(np.diff(surv) <= 1e-15)
        assert surv[0] == 1.0  # threshold below the minimum observed value
        assert all(lo <= s <= hi for lo, s, hi in
                   zip(curve.ci_low, curve.survival, curve.ci_high))

    def test_validation_rejects_increasing_survival(self):
        with pytest.raises(ValueError, match="non-increasing"):
            TailCurve((0.0, 1.0), (0.4, 0.6), (0.0, 0.0), (1.0, 1.0), 10)

    def test_default_thresholds_inside_window(self, stream):
        values = np.abs(stream.generator().standard_normal(20_000))
        thr = default_thresholds(values, 20_000)
        surv = np.array([(values > t).mean() for t in thr])
        assert surv.max() <= 0.5 + 0.01
        assert surv.min() >= 10.0 / 20_000 * 0.5


class TestExponentFitter:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
    def test_exact_curve_recovered_to_grid_step(self, alpha):
        """On noise-free stretched-exponential survival the regression is
        exactly linear at the true exponent."""
        u = np.linspace(0.3, (math.log(1e5)) ** (1 / alpha), 30)
        surv = np.exp(-(u**alpha))
        beta, r2 = fit_tail_exponent(u, surv, trials=10**6, location=0.0)
        assert abs(beta - alpha) <= 0.011
        assert r2 > 0.999999

    def test_too_few_points_flagged(self):
        assert fit_tail_exponent([1.0, 2.0], [0.3, 0.1], trials=1000) is None

    def test_location_shift_recenters(self):
        u = np.linspace(1.5, 6.0, 25)
        surv = 0.5 * np.exp(-((u - 1.0) ** 2))
        beta, _ = fit_tail_exponent(u, surv, trials=10**6, location=1.0)
        assert abs(beta - 2.0) <= 0.011


class TestChiOracle:
    def test_row_gaussian_singleton_matches_chi(self, stream):
        """||Ax|| for a Gaussian matrix and unit x is a chi variable."""
        m, trials = 100, 30_000
        spec = row_model(m, 1, gaussian())
        values = mc_deviation_values(spec, Model.ROW_IDENTITY, np.eye(1), trials, stream)
        for u in (0.1, 0.3, 0.6, 1.0, 1.5):
            hi = 1.0 - stats.chi2.cdf((math.sqrt(m) + u) ** 2, m)
            lo = stats.chi2.cdf(max(math.sqrt(m) - u, 0.0) ** 2, m)
            p = hi + lo
            assert abs((values > u).mean() - p) <= binom_slack(p, trials)

    def test_tail_curve_has_median_location(self, stream):
        spec = row_model(25, 1, gaussian())
        curve = mc_tail_curve(spec, Model.ROW_IDENTITY, np.eye(1), 2000, stream)
        values = mc_deviation_values(spec, Model.ROW_IDENTITY, np.eye(1), 2000, stream)
        assert curve.location == float(np.median(values))

    def test_alpha1_singleton_window_is_nearly_linear(self, stream):
        """Heavy-entry row model, singleton set: log-survival is close to
        linear in the shifted threshold on the fitted window."""
        spec = row_model(100, 1, symmetric_weibull(1.0))
        curve = mc_tail_curve(spec, Model.ROW_IDENTITY, np.eye(1), 20_000, stream)
        assert curve.fit_r2 >= 0.95


class TestHansonWright:
    def test_zero_matrix_degenerate(self, stream):
        law = standardize(symmetric_weibull(1.0))
        curve = hanson_wright_check(law, np.zeros((4, 4)), 500, stream)
        assert max(curve.survival) == 0.0 or len(curve.thresholds) == 1

    def test_gaussian_identity_matches_chi_square(self, stream):
        n, trials = 10, 30_000
        law = standardize(gaussian())
        curve = hanson_wright_check(law, np.eye(n), trials, stream)
        for t, s in zip(curve.thresholds, curve.survival):
            p = (1.0 - stats.chi2.cdf(n + t, n)) + stats.chi2.cdf(n - t, n)
            assert abs(s - p) <= binom_slack(p, trials) + 1e-9

    def test_non_symmetric_rejected_unless_symmetrized(self, stream):
        law = standardize(gaussian())
        m = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            hanson_wright_check(law, m, 100, stream)
        curve = hanson_wright_check(law, m, 500, stream, symmetrize=True)
        assert curve.trials == 500

    def test_unstandardized_law_rejected(self, stream):
        with pytest.raises(ValueError, match="standardized"):
            hanson_wright_check(symmetric_weibull(1.0), np.eye(3), 100, stream)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_two_regime_envelope_dominates(self, alpha, stream, calibration):
        law = standardize(symmetric_weibull(alpha))
        mat = np.diag([1.0, -1.0] * 4)
        curve = hanson_wright_check(
            law, mat, 20_000, stream,
            c_hat=calibration.get("hanson_wright_C", alpha=alpha),
        )
        assert curve.envelope_ok is True


class TestBxNorm:
    def test_zero_matrix(self, stream):
        law = standardize(symmetric_weibull(1.0))
        curve = bx_norm_check(law, np.zeros((3, 3)), 300, stream)
        assert max(curve.survival) == 0.0 or len(curve.thresholds) == 1

    def test_gaussian_identity_matches_chi(self, stream):
        n, trials = 16, 30_000
        law = standardize(gaussian())
        k = math.sqrt(8.0 / 3.0)
        curve = bx_norm_check(law, np.eye(n), trials, stream)
        for t, s in zip(curve.thresholds, curve.survival):
            raw = t * k**2  # statistic is normalized by K^2 ||B||_op
            hi = 1.0 - stats.chi2.cdf((math.sqrt(n) + raw) ** 2, n)
            lo = stats.chi2.cdf(max(math.sqrt(n) - raw, 0.0) ** 2, n)
            p = hi + lo
            assert abs(s - p) <= binom_slack(p, trials) + 1e-9

    def test_rank_one_reduces_to_scalar(self, stream):
        """B = u u^T: ||BX|| = |<u, X>|, so the curve matches the scalar law."""
        n, trials = 6, 30_000
        gen = stream.substream(77).generator()
        u = gen.standard_normal(n)
        u /= np.linalg.norm(u)
        b = np.outer(u, u)
        law = standardize(gaussian())
        k = math.sqrt(8.0 / 3.0)
        curve = bx_norm_check(law, b, trials, stream)
        for t, s in zip(curve.thresholds, curve.survival):
            raw = t * k**2
            # | |Z| - 1 | > raw for Z standard normal
            p = (1.0 - stats.norm.cdf(1.0 + raw)) + (
                stats.norm.cdf(1.0 - raw) - stats.norm.cdf(-(1.0 - raw))
                if raw < 1.0 else 0.0
            ) + stats.norm.cdf(-(1.0 + raw))
            assert abs(s - p) <= binom_slack(p, trials) + 1e-9

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_envelope_dominates(self, alpha, stream, calibration):
        law = standardize(symmetric_weibull(alpha))
        b = stream.substream(5).generator().standard_normal((12, 8))
        curve = bx_norm_check(
            law, b, 20_000, stream, c_hat=calibration.get("bx_norm_C", alpha=alpha)
        )
        assert curve.envelope_ok is True


class TestColumnChecks:
    def test_basis_vector_statistic_vanishes(self, stream):
        spec = column_model(20, 5, ColumnLaw.UNIFORM_SPHERE, 1.0)
        est = column_single_vector_check(spec, np.eye(5)[0], 300, stream)
        assert est.value <= 1e-12

    def test_non_unit_vector_rejected(self, stream):
        spec = column_model(20, 5, ColumnLaw.UNIFORM_SPHERE, 1.0)
        with pytest.raises(ValueError, match="unit"):
            column_single_vector_check(spec, 2.0 * np.eye(5)[0], 10, stream)

    def test_statistic_scales_linearly_with_the_vector(self, stream):
        # ||A(cx)|| = c ||Ax|| exactly, so the c-target deviation is c times
        # the unit-target one
        spec = column_model(24, 5, ColumnLaw.UNIFORM_SPHERE, 1.0)
        a = gen_matrix(spec, stream)
        x = np.eye(5)[1]
        for c in (0.5, 2.0, 7.0):
            assert np.linalg.norm(a @ (c * x)) == pytest.approx(
                c * np.linalg.norm(a @ x), rel=1e-14
            )

    @pytest.mark.parametrize("law", [ColumnLaw.UNIFORM_SPHERE, ColumnLaw.NORMALIZED_WEIBULL])
    def test_mixed_vector_bounded_by_frozen_constant(self, law, stream, calibration):
        m, n, alpha = 100, 8, 1.0
        spec = column_model(m, n, law, alpha)
        x = np.zeros(n)
        x[:2] = 1.0 / math.sqrt(2.0)
        est = column_single_vector_check(spec, x, 4000, stream)
        k = calibration.get("column_coord_psi_c", law=law.value, alpha=alpha) / math.sqrt(m)
        c = calibration.get("column_lemma_C", law=law.value, alpha=alpha)
        assert est.value <= c * k


class TestIncrementChecks:
    def test_equal_points_rejected(self, stream):
        spec = column_model(10, 3, ColumnLaw.UNIFORM_SPHERE, 1.0)
        x = np.eye(3)[0]
        with pytest.raises(ValueError, match="differ"):
            increment_check(spec, Model.COLUMN, x, x, 10, stream)

    def test_collinear_pair_finite(self, stream):
        spec = column_model(20, 4, ColumnLaw.UNIFORM_SPHERE, 1.0)
        x = np.eye(4)[0]
        est = increment_check(spec, Model.COLUMN, x, 2.0 * x, 400, stream)
        assert math.isfinite(est.value)

    @pytest.mark.parametrize(
        "pair",
        [("e1", "e2"), ("e1", "-e1"), ("e1", "near")],
        ids=["orthogonal", "antipodal", "near-collinear"],
    )
    def test_column_increments_bounded(self, pair, stream, calibration):
        m, n, alpha = 64, 6, 1.0
        spec = column_model(m, n, ColumnLaw.UNIFORM_SPHERE, alpha)
        e1, e2 = np.eye(n)[0], np.eye(n)[1]
        near = e1 + 1e-3 * e2
        near /= np.linalg.norm(near)
        x, y = {"e1": e1, "e2": e2, "-e1": -e1, "near": near}[pair[0]], \
               {"e1": e1, "e2": e2, "-e1": -e1, "near": near}[pair[1]]
        est = increment_check(spec, Model.COLUMN, x, y, 3000, stream)
        k = calibration.get("column_coord_psi_c", law="uniform-sphere", alpha=alpha)
        bound = calibration.get("increment_column_C", alpha=alpha) * k / math.sqrt(m)
        assert est.value <= bound

    def test_row_increments_bounded(self, stream, calibration):
        alpha = 1.0
        spec = row_model(32, 4, symmetric_weibull(alpha))
        est = increment_check(
            spec, Model.ROW_IDENTITY, np.eye(4)[0], np.eye(4)[1], 3000, stream
        )
        k = nominal_psi_norm(spec)
        bound = calibration.get("increment_row_C", alpha=alpha) * k ** (4.0 / alpha)
        assert est.value <= bound


class TestDeviationEnvelopes:
    """Calibrated survival envelopes dominate fresh runs at new scales."""

    def test_row_tail_envelope(self, stream, calibration):
        alpha = 1.0
        spec = row_model(64, 4, symmetric_weibull(alpha))
        k = nominal_psi_norm(spec)
        env = deviation_envelope(
            alpha, k ** (4.0 / alpha), 0.0, 1.0,
            calibration.get("row_tail_C", alpha=alpha),
        )
        curve = mc_tail_curve(
            spec, Model.ROW_IDENTITY, np.eye(4)[:1], 20_000, stream, envelope_fn=env
        )
        assert curve.envelope_ok is True

    def test_column_tail_envelope(self, stream, calibration):
        alpha = 2.0
        m = 64
        spec = column_model(m, 4, ColumnLaw.UNIFORM_SPHERE, alpha)
        k = calibration.get("column_coord_psi_c", law="uniform-sphere", alpha=alpha)
        env = deviation_envelope(
            alpha, k / math.sqrt(m), 0.0, 1.0,
            calibration.get("column_tail_C", alpha=alpha),
        )
        curve = mc_tail_curve(
            spec, Model.COLUMN, np.eye(4)[:1], 20_000, stream, envelope_fn=env
        )
        assert curve.envelope_ok is True


class TestReproducibility:
    def test_worker_counts_agree_bitwise(self, stream):
        spec = row_model(30, 5, symmetric_weibull(0.5))
        pts = sphere_net(5, 6, stream.substream(1))
        one = mc_tail_curve(spec, Model.ROW_IDENTITY, pts, 200, stream, workers=1)
        four = mc_tail_curve(spec, Model.ROW_IDENTITY, pts, 200, stream, workers=4)
        assert one == four

    def test_same_seed_same_values(self):
        spec = row_model(12, 3, symmetric_weibull(1.0))
        a = mc_deviation_values(
            spec, Model.ROW_IDENTITY, np.eye(3), 50, RandomStream.from_seed(5)
        )
        b = mc_deviation_values(
            spec, Model.ROW_IDENTITY, np.eye(3), 50, RandomStream.from_seed(5)
        )
        assert np.array_equal(a, b)


class TestPowerIteration:
    def test_matches_exact_norm(self, stream):
        a = stream.generator().standard_normal((30, 12))
        assert power_iteration_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-4)

    def test_zero_matrix(self):
        assert power_iteration_norm(np.zeros((4, 4))) == 0.0
