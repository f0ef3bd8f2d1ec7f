import math

import numpy as np
import pytest

from heatpencil.bounds import (
    BoundInputs,
    CertificateUnavailableError,
    DefectiveEigenbasisError,
    alpha_error_bound,
    build_certificate,
    condition_number,
    decay_envelope,
    frobenius_bounds,
    pole_error_bound,
    rho,
    tail_bound,
)

PI_SQ = math.pi**2
GOLDEN = (1 + math.sqrt(5)) / 2


def reference_inputs(**overrides):
    # the published error-analysis row: priors (15, 3), order 2, 50 samples,
    # split 17, window start 0.3, period 0.01, plus its spectral diagnostics
    values = dict(
        m0=15.0, alpha0=3.0, m=2, n=50, l=17, t1=0.3, ts=0.01,
        sigma_m=9.5089e-5, y1_norm=11.8427, y0_trunc_gap=2.2494e-15,
        kappa_xm=17.9467,
    )
    values.update(overrides)
    return BoundInputs(**values)


class TestTailBound:
    def test_reference_magnitude(self):
        # (sqrt(2) + 1/(4*2*pi^2*3*0.3)) * 15 * exp(-3*4*pi^2*0.3) ~ 7.9e-15
        value = tail_bound(15.0, 3.0, 2, 0.3)
        expected = (math.sqrt(2) + 1 / (4 * 2 * PI_SQ * 3 * 0.3)) * 15 * math.exp(
            -3 * 4 * PI_SQ * 0.3
        )
        assert value == expected
        assert value == pytest.approx(7.9e-15, rel=0.01)

    def test_dominates_actual_tail(self):
        # oracle: direct summation of the discarded modes
        rng = np.random.default_rng(8)
        for _ in range(30):
            alpha0 = rng.uniform(0.5, 4.0)
            alpha = alpha0 * rng.uniform(1.0, 2.0)
            coeffs = {n: rng.uniform(-1, 1) for n in range(0, 15)}
            m0 = math.sqrt(
                sum(c * c * (1.0 if n == 0 else 0.5) for n, c in coeffs.items())
            )
            m = int(rng.integers(1, 5))
            for _ in range(5):
                t = rng.uniform(0.05, 1.0)
                tail = sum(
                    c * math.exp(-alpha * n * n * PI_SQ * t)
                    for n, c in coeffs.items()
                    if n >= m
                )
                assert abs(tail) <= tail_bound(m0, alpha0, m, t)

    def test_strictly_decreasing_in_each_argument(self):
        base = tail_bound(10.0, 2.0, 3, 0.4)
        assert tail_bound(10.0, 2.0, 4, 0.4) < base
        assert tail_bound(10.0, 2.0, 3, 0.5) < base
        assert tail_bound(10.0, 2.5, 3, 0.4) < base

    def test_vanishes_as_order_grows(self):
        values = [tail_bound(10.0, 2.0, m, 0.3) for m in (1, 2, 4, 8)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-160

    def test_validation(self):
        with pytest.raises(ValueError):
            tail_bound(-1.0, 2.0, 3, 0.4)
        with pytest.raises(ValueError):
            tail_bound(1.0, 2.0, 0, 0.4)
        with pytest.raises(ValueError):
            tail_bound(1.0, 2.0, 3, 0.0)


class TestDecayEnvelope:
    def test_reference_value(self):
        assert decay_envelope(2.3687, 17) == pytest.approx(0.0936, abs=5e-5)

    def test_branch_boundaries(self):
        assert decay_envelope(1.0, 17) == math.exp(-1.0)  # first branch at theta=1
        with pytest.warns(UserWarning, match="breakpoint"):
            assert decay_envelope(0.25, 5) == 4 * math.exp(-1.0)  # theta = 1/(l-1)

    def test_jump_at_breakpoint_is_a_formula_property(self):
        # just above 1/(l-1) the middle branch gives twice the third branch
        l = 5
        theta = 0.25
        with pytest.warns(UserWarning, match="breakpoint"):
            lower = decay_envelope(theta, l)
            upper = decay_envelope(theta * 1.001, l)
        assert upper == pytest.approx(2 * lower, rel=5e-3)

    def test_validation(self):
        with pytest.raises(ValueError):
            decay_envelope(0.0, 5)
        with pytest.raises(ValueError):
            decay_envelope(1.0, 1)


class TestFrobeniusBounds:
    def test_reference_theta(self):
        inputs = reference_inputs()
        assert inputs.theta == pytest.approx(2.3687, abs=1e-4)

    def test_dominates_explicit_hankel_difference(self):
        # oracle: build both Hankels from a finite model plus explicit tail
        rng = np.random.default_rng(12)
        for _ in range(10):
            alpha0 = rng.uniform(1.0, 3.0)
            alpha = alpha0 * rng.uniform(1.0, 1.5)
            coeffs = {n: rng.uniform(-1.5, 1.5) for n in range(0, 12)}
            m0 = math.sqrt(
                sum(c * c * (1.0 if n == 0 else 0.5) for n, c in coeffs.items())
            )
            m, n_samples, t1, ts = 2, 50, 0.25, 0.01
            length = 17
            t = t1 + ts * np.arange(n_samples)
            full = sum(c * np.exp(-alpha * k * k * PI_SQ * t) for k, c in coeffs.items())
            kept_modes = sorted(coeffs)[:m]
            kept = sum(
                coeffs[k] * np.exp(-alpha * k * k * PI_SQ * t) for k in kept_modes
            )
            rows = np.arange(n_samples - length)[:, None]
            cols = (length - 1 - np.arange(length))[None, :]
            diff = (full - kept)[cols + rows]
            inputs = BoundInputs(
                m0=m0, alpha0=alpha0, m=m, n=n_samples, l=length, t1=t1, ts=ts,
                sigma_m=1.0, y1_norm=1.0, y0_trunc_gap=0.0, kappa_xm=1.0,
            )
            frob_y0, frob_y1 = frobenius_bounds(inputs)
            assert np.linalg.norm(diff, "fro") <= frob_y0
            cols1 = (length - np.arange(length))[None, :]
            diff1 = (full - kept)[cols1 + rows]
            assert np.linalg.norm(diff1, "fro") <= frob_y1

    def test_large_theta_asymptote(self):
        inputs = reference_inputs(ts=1.0)  # theta ~ 237
        frob_y0, _ = frobenius_bounds(inputs)
        prefactor = tail_bound(15.0, 3.0, 2, 0.3)
        assert frob_y0 == pytest.approx(prefactor, rel=1e-2)

    def test_sample_count_hypothesis(self):
        with pytest.raises(ValueError, match="9"):
            reference_inputs(n=9)


class TestRho:
    def test_reference_value_from_published_row(self):
        # with the published gap and sigma_M the level lands on 1.4522e-10
        assert rho(reference_inputs()) == pytest.approx(1.4522e-10, rel=5e-3)

    def test_zero_when_gap_and_prior_vanish(self):
        inputs = reference_inputs(m0=0.0, y0_trunc_gap=0.0)
        assert rho(inputs) == 0.0

    def test_scales_inversely_with_sigma(self):
        a = rho(reference_inputs(sigma_m=1e-4))
        b = rho(reference_inputs(sigma_m=2e-4))
        assert a == pytest.approx(2 * b, rel=1e-12)


class TestPoleErrorBound:
    def test_reference_value(self):
        bound = pole_error_bound(reference_inputs())
        assert bound.branch == "special"
        assert bound.applicable == pytest.approx(5.2521e-4, rel=1e-3)
        assert bound.general > 0

    def test_vanishes_with_rho(self):
        small = pole_error_bound(reference_inputs(m0=1e-6, y0_trunc_gap=0.0))
        tiny = pole_error_bound(reference_inputs(m0=1e-9, y0_trunc_gap=0.0))
        assert tiny.applicable < small.applicable < 1e-10

    def test_unavailable_when_rho_reaches_one(self):
        with pytest.raises(CertificateUnavailableError, match="rho"):
            pole_error_bound(reference_inputs(sigma_m=1e-15))

    def test_general_branch_when_theta_small(self):
        inputs = reference_inputs(ts=1e-4, sigma_m=1.0)  # theta ~ 0.024 < 1/16
        bound = pole_error_bound(inputs)
        assert bound.branch == "general"
        assert bound.special is None


class TestAlphaErrorBound:
    def test_published_numbers(self):
        eig_bound, a_bound = alpha_error_bound(5.2521e-4, 0.6738, 0.01, 1)
        assert a_bound == pytest.approx(7.8974e-3, abs=5e-7)
        assert eig_bound == pytest.approx(a_bound * PI_SQ, rel=1e-12)

    def test_zero_bound_zero_width(self):
        eig_bound, a_bound = alpha_error_bound(0.0, 0.5, 0.01, 2)
        assert eig_bound == 0.0 and a_bound == 0.0

    def test_halves_when_period_doubles(self):
        _, a1 = alpha_error_bound(1e-4, 0.5, 0.01, 1)
        _, a2 = alpha_error_bound(1e-4, 0.5, 0.02, 1)
        assert a2 == pytest.approx(a1 / 2, rel=1e-12)

    def test_constant_mode_rejected(self):
        with pytest.raises(ValueError, match="constant mode"):
            alpha_error_bound(1e-4, 0.9, 0.01, 0)

    def test_large_bound_warns(self):
        with pytest.warns(UserWarning, match="unjustified"):
            alpha_error_bound(0.2, 0.5, 0.01, 1)


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(4)) == pytest.approx(1.0, rel=1e-14)

    def test_unit_shear_by_hand(self):
        # singular values of [[1,1],[0,1]] are the golden ratio and its
        # inverse, so the condition number is the golden ratio squared
        shear = np.array([[1.0, 1.0], [0.0, 1.0]])
        assert condition_number(shear) == pytest.approx(GOLDEN**2, rel=1e-12)

    def test_rotation_conjugation_keeps_orthogonality(self):
        angle = 0.7
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        assert condition_number(rot) == pytest.approx(1.0, rel=1e-12)

    def test_defective_matrix_rejected(self):
        with pytest.raises(DefectiveEigenbasisError):
            condition_number(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_requires_square(self):
        with pytest.raises(ValueError):
            condition_number(np.ones((3, 2)))


class TestPerturbationLemmas:
    """Random-matrix sanity checks of the inequalities the certificate rests on."""

    @staticmethod
    def _well_conditioned(rng, rows, cols):
        a = rng.standard_normal((rows, cols))
        u, _, vt = np.linalg.svd(a, full_matrices=False)
        s = rng.uniform(0.5, 2.0, min(rows, cols))
        return u @ np.diag(s) @ vt

    def test_pseudoinverse_difference_inequality(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            rows, cols = int(rng.integers(3, 8)), int(rng.integers(2, 6))
            a = self._well_conditioned(rng, rows, cols)
            e = 0.05 * rng.standard_normal((rows, cols))
            b = a + e
            assert np.linalg.matrix_rank(b) == np.linalg.matrix_rank(a)
            lhs = np.linalg.norm(np.linalg.pinv(b) - np.linalg.pinv(a), 2)
            rhs = (
                GOLDEN
                * np.linalg.norm(np.linalg.pinv(a), 2)
                * np.linalg.norm(np.linalg.pinv(b), 2)
                * np.linalg.norm(e, 2)
            )
            assert lhs <= rhs

    def test_perturbed_pseudoinverse_norm_inequality(self):
        rng = np.random.default_rng(32)
        for _ in range(30):
            rows, cols = int(rng.integers(3, 8)), int(rng.integers(2, 6))
            a = self._well_conditioned(rng, rows, cols)
            pinv_norm = np.linalg.norm(np.linalg.pinv(a), 2)
            e = rng.standard_normal((rows, cols))
            e *= 0.5 / (pinv_norm * np.linalg.norm(e, 2))
            assert np.linalg.norm(e, 2) < 1.0 / pinv_norm
            assert np.linalg.matrix_rank(a + e) == np.linalg.matrix_rank(a)
            lhs = np.linalg.norm(np.linalg.pinv(a + e), 2)
            rhs = pinv_norm / (1 - pinv_norm * np.linalg.norm(e, 2))
            assert lhs <= rhs + 1e-12

    def test_eigenvalue_perturbation_inequality(self):
        rng = np.random.default_rng(33)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            x = rng.standard_normal((n, n)) + n * np.eye(n)
            eigs = rng.uniform(-2, 2, n)
            a = x @ np.diag(eigs) @ np.linalg.inv(x)
            e = 0.01 * rng.standard_normal((n, n))
            kappa = condition_number(x)
            for mu in np.linalg.eigvals(a + e):
                dist = np.min(np.abs(mu - eigs))
                assert dist <= kappa * np.linalg.norm(e, 2) + 1e-10


class TestCertificate:
    def test_reference_interval(self):
        cert = build_certificate(
            reference_inputs(), alpha_hat=4.0, z_tilde=0.6738, mode_index=1
        )
        lo, hi = cert.alpha_interval
        assert lo == pytest.approx(3.9921, abs=2e-4)
        assert hi == pytest.approx(4.0079, abs=2e-4)
        assert cert.branch == "special"
        assert lo < 4.0 < hi

    def test_serialization_field_names(self):
        cert = build_certificate(
            reference_inputs(), alpha_hat=4.0, z_tilde=0.6738, mode_index=1
        )
        payload = cert.to_dict()
        for key in (
            "M0", "alpha0", "M", "N", "L", "T1", "Ts", "theta", "M_theta_L",
            "Y1_norm_2", "sigma_M", "Y0M_gap_2", "kappa_XM", "rho",
            "pole_bound", "alpha_bound", "alpha_interval",
        ):
            assert key in payload
        assert payload["alpha_interval"] == list(cert.alpha_interval)

    def test_without_mode_index_no_interval(self):
        cert = build_certificate(reference_inputs(), alpha_hat=4.0)
        assert cert.alpha_interval is None
        assert cert.pole_bound > 0

    def test_bitwise_reproducible(self):
        a = build_certificate(reference_inputs(), 4.0, 0.6738, 1)
        b = build_certificate(reference_inputs(), 4.0, 0.6738, 1)
        assert a.to_dict() == b.to_dict()
