import math

import numpy as np
import pytest

from heatpencil.model import HeatProblem, SampleTrace, sample
from heatpencil.pipeline import (
    AlphaUnrecoverableError,
    AmbiguousIndicesError,
    IdentificationError,
    NoModesError,
    PipelineConfig,
    alpha_from_step_window,
    assign_mode_indices,
    build_design_matrix,
    free_window_spectrum,
    gcv_select,
    identify,
    numerical_rank,
    transform_step_window,
    tsvd_solve,
)

PI_SQ = math.pi**2


def traces_for(problem, cfg=None):
    cfg = cfg or PipelineConfig()
    period_free = (problem.t2 - problem.t1) / cfg.n1
    period_step = (problem.t3 - problem.t2) / cfg.n2
    period_rec = (problem.t2 - cfg.t0) / cfg.n_rec
    return (
        sample(problem, problem.t1, period_free, cfg.n1),
        sample(problem, problem.t2, period_step, cfg.n2),
        sample(problem, cfg.t0, period_rec, cfg.n_rec),
    )


class TestFreeWindowSpectrum:
    def test_single_cosine_mode(self):
        problem = HeatProblem(1.0, {1: 1.0}, 0.3, 0.8, 1.3)
        trace, _, _ = traces_for(problem)
        free = free_window_spectrum(trace)
        assert len(free) == 1
        assert free.rates[0] == pytest.approx(PI_SQ, rel=1e-6)
        assert free.coefficients[0] == pytest.approx(1.0, rel=1e-6)

    def test_zero_profile_has_no_modes(self):
        problem = HeatProblem(1.0, {}, 0.3, 0.8, 1.3)
        trace, _, _ = traces_for(problem)
        with pytest.raises(NoModesError):
            free_window_spectrum(trace)

    def test_constant_mode_keeps_coefficient(self):
        problem = HeatProblem(4.0, {0: 0.5, 1: -2.0}, 0.3, 0.8, 1.3)
        trace, _, _ = traces_for(problem)
        free = free_window_spectrum(trace)
        assert free.rates[0] == 0.0
        assert free.coefficients[0] == pytest.approx(0.5, abs=1e-9)


class TestTransformStepWindow:
    def test_matches_closed_form_sum(self):
        # oracle: the transformed series must equal the closed-form drift
        # spectrum: constant -1/(3 alpha), then 2/lambda_n at rate lambda_n * period
        alpha = 4.0
        problem = HeatProblem(alpha, {0: 0.5, 1: -9.4053}, 0.3, 0.8, 1.3)
        trace_free, trace_step, _ = traces_for(problem)
        free = free_window_spectrum(trace_free)
        transformed = transform_step_window(trace_step, free, problem.t2)
        i = np.arange(len(transformed), dtype=float)
        expected = np.full_like(i, -1.0 / (3 * alpha))
        for n in range(1, 400):
            lam = alpha * n * n * PI_SQ
            expected += 2.0 / lam * np.exp(-lam * trace_step.period * i)
        # at i = 0 every term counts; the n > 400 remainder follows from the
        # identity sum 2/lambda_n = 1/(3 alpha)
        expected[0] += 1.0 / (3 * alpha) - sum(
            2.0 / (alpha * n * n * PI_SQ) for n in range(1, 400)
        )
        np.testing.assert_allclose(transformed.values, expected, atol=1e-9)

    def test_zero_modes_zero_profile(self):
        problem = HeatProblem(4.0, {}, 0.3, 0.8, 1.3)
        _, trace_step, _ = traces_for(problem)
        transformed = transform_step_window(trace_step, None, problem.t2)
        i = np.arange(len(transformed))
        np.testing.assert_array_equal(
            transformed.values, trace_step.values + trace_step.period * i
        )

    def test_window_mismatch_rejected(self):
        problem = HeatProblem(4.0, {0: 1.0}, 0.3, 0.8, 1.3)
        _, trace_step, _ = traces_for(problem)
        with pytest.raises(IdentificationError, match="expected t2"):
            transform_step_window(trace_step, None, 0.75)


class TestAlphaFromStepWindow:
    def test_exact_synthetic_unit_alpha(self):
        problem = HeatProblem(1.0, {0: 1.0, 1: 0.5}, 0.3, 0.8, 1.3)
        trace_free, trace_step, _ = traces_for(problem)
        free = free_window_spectrum(trace_free)
        step = alpha_from_step_window(trace_step, free, problem.t2)
        assert step.alpha == pytest.approx(1.0, abs=1e-6)
        # slow decay at alpha=1 makes many modes detectable; the weakest that
        # still pass the credibility filter carry errors near 1e-4
        for estimate in step.alpha_by_index.values():
            assert estimate == pytest.approx(1.0, abs=2e-4)
        assert step.alpha_from_constant == pytest.approx(1.0, abs=1e-6)

    def test_no_credible_pair_no_constant(self):
        # after the drift correction this leaves a single fast mode whose
        # pair product is far from the target, and no constant term
        i = np.arange(50)
        values = 5.0 * 0.3**i - 0.01 * i
        trace = SampleTrace(t_start=0.8, period=0.01, values=values)
        with pytest.raises(AlphaUnrecoverableError):
            alpha_from_step_window(trace, None, 0.8)


class TestAssignModeIndices:
    def test_reference_assignment(self):
        indices, by_index, alpha_hat = assign_mode_indices(
            np.array([0.0, 39.4784]), 4.0
        )
        np.testing.assert_array_equal(indices, [0, 1])
        assert by_index[1] == pytest.approx(39.4784 / PI_SQ, rel=1e-12)
        assert alpha_hat == pytest.approx(4.0, abs=1e-4)

    def test_exact_rate_maps_back(self):
        alpha = 2.7
        rate = alpha * 9 * PI_SQ
        indices, by_index, _ = assign_mode_indices(np.array([rate]), alpha)
        assert indices.tolist() == [3]
        assert by_index[3] == pytest.approx(alpha, rel=1e-15)

    def test_perturbed_rate(self):
        alpha, delta = 3.0, 1e-3
        rate = alpha * PI_SQ * (1 + delta)
        indices, by_index, _ = assign_mode_indices(np.array([rate]), alpha)
        assert indices.tolist() == [1]
        assert by_index[1] == pytest.approx(alpha * (1 + delta), rel=1e-14)

    def test_duplicate_indices_rejected(self):
        rates = np.array([3.0 * PI_SQ, 3.0 * PI_SQ * 1.001])
        with pytest.raises(AmbiguousIndicesError):
            assign_mode_indices(rates, 3.0)

    def test_robustness_radius_by_enumeration(self):
        # the index survives an alpha error delta as long as
        # n * |1/sqrt(1 + delta) - 1| < 1/2; the underestimate side is the
        # binding one, giving a safe radius of about min(0.15, 0.8/n)
        for n in range(1, 51):
            for sign in (-1.0, 1.0):
                delta = sign * min(0.15, 0.8 / n)
                rate = 5.0 * n * n * PI_SQ
                indices, _, _ = assign_mode_indices(
                    np.array([rate]), 5.0 * (1 + delta)
                )
                assert indices.tolist() == [n]

    def test_requires_positive_alpha(self):
        with pytest.raises(ValueError):
            assign_mode_indices(np.array([1.0]), 0.0)


class TestDesignMatrix:
    def test_first_column_is_ones(self):
        times = np.linspace(0.01, 0.79, 40)
        matrix = build_design_matrix(4.0, times, 6)
        np.testing.assert_array_equal(matrix[:, 0], np.ones(40))

    def test_reference_entry(self):
        matrix = build_design_matrix(4.0, np.array([0.01]), 3)
        assert matrix[0, 1] == pytest.approx(0.6738, abs=5e-5)

    def test_against_elementwise_loop(self):
        times = np.array([0.01, 0.05, 0.2])
        matrix = build_design_matrix(2.5, times, 5)
        for i, t in enumerate(times):
            for j in range(5):
                assert matrix[i, j] == pytest.approx(
                    math.exp(-2.5 * j * j * PI_SQ * t), rel=1e-15
                )

    def test_times_validated(self):
        with pytest.raises(ValueError):
            build_design_matrix(1.0, np.array([0.2, 0.1]), 3)
        with pytest.raises(ValueError):
            build_design_matrix(1.0, np.array([0.0, 0.1]), 3)


class TestTsvdSolve:
    def test_orthogonal_full_rank_is_transpose(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        b = rng.standard_normal(6)
        solution = tsvd_solve(q, b, 6)
        np.testing.assert_allclose(solution, q.T @ b, atol=1e-12)

    def test_full_rank_matches_pseudoinverse(self):
        # oracle: independent pseudoinverse via numpy.linalg.pinv
        rng = np.random.default_rng(3)
        matrix = rng.standard_normal((12, 5))
        b = rng.standard_normal(12)
        solution = tsvd_solve(matrix, b, numerical_rank(matrix))
        np.testing.assert_allclose(solution, np.linalg.pinv(matrix) @ b, atol=1e-10)

    def test_truncation_zeroes_small_direction(self):
        matrix = np.diag([3.0, 1e-12])
        solution = tsvd_solve(matrix, np.array([6.0, 1.0]), 1)
        np.testing.assert_allclose(solution, [2.0, 0.0], atol=1e-15)

    def test_rank_bound_enforced(self):
        matrix = np.diag([3.0, 2.0])
        with pytest.raises(ValueError):
            tsvd_solve(matrix, np.ones(2), 3)
        with pytest.raises(ValueError):
            tsvd_solve(matrix, np.ones(2), 0)

    def test_linear_in_rhs(self):
        rng = np.random.default_rng(4)
        matrix = rng.standard_normal((10, 4))
        b1, b2 = rng.standard_normal(10), rng.standard_normal(10)
        left = tsvd_solve(matrix, 2.0 * b1 - 3.0 * b2, 3)
        right = 2.0 * tsvd_solve(matrix, b1, 3) - 3.0 * tsvd_solve(matrix, b2, 3)
        np.testing.assert_allclose(left, right, atol=1e-12)


class TestGcvSelect:
    def test_rhs_in_first_singular_direction(self):
        # a residual floor outside the range keeps the criterion flat in the
        # numerator, so the shrinking denominator makes rank 1 the minimum
        rng = np.random.default_rng(5)
        matrix = rng.standard_normal((10, 4))
        u, s, vt = np.linalg.svd(matrix, full_matrices=False)
        noise = rng.standard_normal(10)
        noise -= u @ (u.T @ noise)
        k, curve = gcv_select(matrix, u[:, 0] + 0.05 * noise)
        assert k == 1

    def test_consistent_system_selects_full_rank(self):
        rng = np.random.default_rng(6)
        matrix = rng.standard_normal((10, 4))
        b = matrix @ rng.standard_normal(4)
        k, curve = gcv_select(matrix, b)
        assert k == numerical_rank(matrix) == 4
        assert curve.size == 4

    def test_residual_nonincreasing_in_rank(self):
        rng = np.random.default_rng(7)
        matrix = rng.standard_normal((15, 6))
        b = rng.standard_normal(15)
        rank = numerical_rank(matrix)
        residuals = [
            float(np.sum((matrix @ tsvd_solve(matrix, b, k) - b) ** 2))
            for k in range(1, rank + 1)
        ]
        assert all(b2 <= a2 + 1e-12 for a2, b2 in zip(residuals, residuals[1:]))

    def test_tie_breaks_toward_smaller_rank(self):
        matrix = np.vstack([np.diag([3.0, 2.0, 1.0]), np.zeros((2, 3))])
        k, curve = gcv_select(matrix, np.zeros(5))
        assert k == 1
        np.testing.assert_array_equal(curve, np.zeros(3))


class TestIdentify:
    def test_non_generic_profile_single_even_mode(self):
        # only mode 2 is excited; the pipeline must label it correctly
        problem = HeatProblem(4.0, {2: 1.0}, 0.3, 0.8, 1.3)
        result = identify(*traces_for(problem))
        assert [m[0] for m in result.free_modes] == [2]
        assert result.alpha_hat == pytest.approx(4.0, rel=1e-6)
        assert result.u0_coeffs_hat[2] == pytest.approx(1.0, abs=1e-4)
        others = np.delete(result.u0_coeffs_hat, 2)
        assert np.max(np.abs(others)) < 1e-4

    def test_zero_profile_still_yields_alpha(self):
        problem = HeatProblem(4.0, {}, 0.3, 0.8, 1.3)
        result = identify(*traces_for(problem))
        assert result.free_modes == ()
        assert result.alpha_hat == pytest.approx(4.0, abs=1e-6)
        assert np.max(np.abs(result.u0_coeffs_hat)) < 1e-12
        assert result.certificate is None

    def test_certificate_only_with_priors(self):
        problem = HeatProblem(4.0, {0: 0.5, 1: -2.0}, 0.3, 0.8, 1.3)
        traces = traces_for(problem)
        assert identify(*traces).certificate is None
        result = identify(*traces, priors=(15.0, 3.0))
        cert = result.certificate
        assert cert is not None
        lo, hi = cert.alpha_interval
        assert lo < problem.alpha < hi

    def test_rec_window_must_precede_switch(self):
        problem = HeatProblem(4.0, {0: 1.0}, 0.3, 0.8, 1.3)
        tf, ts, _ = traces_for(problem)
        bad_rec = SampleTrace(0.9, 0.01, np.ones(20))
        with pytest.raises(IdentificationError, match="reconstruction window"):
            identify(tf, ts, bad_rec)

    def test_result_serializes_with_declared_fields(self):
        problem = HeatProblem(4.0, {0: 0.5, 1: -2.0}, 0.3, 0.8, 1.3)
        result = identify(*traces_for(problem), priors=(15.0, 3.0))
        payload = result.to_dict()
        assert set(payload) == {
            "alpha_hat", "alpha_candidates", "free_modes", "u0_cosine_hat",
            "gcv_k", "gcv_curve", "certificate",
        }
        assert len(payload["u0_cosine_hat"]) == 20
        assert payload["certificate"]["alpha_interval"] is not None

    def test_round_trip_sample(self):
        # a focused version of the acceptance round-trip property
        rng = np.random.default_rng(23)
        for _ in range(3):
            alpha = rng.uniform(3.0, 8.0)
            coeffs = {
                n: rng.uniform(0.1, 10.0) * rng.choice([-1.0, 1.0])
                for n in range(4)
            }
            problem = HeatProblem(alpha, coeffs, 0.3, 0.8, 1.3)
            result = identify(*traces_for(problem))
            assert abs(result.alpha_hat - alpha) / alpha <= 1e-3
            for n in range(20):
                assert abs(result.u0_coeffs_hat[n] - coeffs.get(n, 0.0)) <= 0.1
