"""Dissimilarity and gradient contracts, validated against independent
oracles: explicit restricted computations for masked values and central
finite differences for every analytic gradient."""

import math

import numpy as np
import pytest
from conftest import fd_gradient, random_instance

from lvqkit import geometry
from lvqkit.errors import DegenerateVector, EmptyMask, MissingNotSupported

E = math.e


class TestGBeta:
    def test_endpoints_exact(self):
        for beta in (0.1, 1.0, 5.0, 10.0, 100.0):
            assert geometry.g_beta(1.0, beta) == 0.0
            assert abs(geometry.g_beta(-1.0, beta) - 1.0) <= 1e-12

    def test_direct_value(self):
        # (e - 1) / (e^2 - 1)
        assert abs(geometry.g_beta(0.0, 1.0) - 0.26894) < 1e-5

    def test_strictly_decreasing_and_bounded(self):
        grid = np.linspace(-1.0, 1.0, 2001)  # 1e-3 spacing, endpoints exact
        for beta in (0.1, 1.0, 10.0, 100.0):
            vals = geometry.g_beta(grid, beta)
            assert np.all(np.diff(vals) < 0)
            assert vals.min() >= 0.0 and vals.max() <= 1.0 + 1e-12

    def test_derivative_values(self):
        assert abs(geometry.g_beta_derivative(1.0, 1.0) - (-1.0 / (E**2 - 1))) < 1e-12
        assert abs(geometry.g_beta_derivative(0.0, 1.0) - (-E / (E**2 - 1))) < 1e-12

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            b = rng.uniform(-0.99, 0.99)
            beta = rng.choice([0.5, 1.0, 5.0, 20.0])
            fd = (geometry.g_beta(b + 1e-7, beta) - geometry.g_beta(b - 1e-7, beta)) / 2e-7
            np.testing.assert_allclose(geometry.g_beta_derivative(b, beta), fd, rtol=1e-6)
            assert geometry.g_beta_derivative(b, beta) < 0


class TestCosineAvailable:
    def test_identical_direction(self):
        assert geometry.cosine_available([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert geometry.cosine_available([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_masked_equals_restricted_subvectors(self):
        x = np.array([1.0, np.nan, 0.0])
        w = np.array([1.0, 5.0, 0.0])
        present = np.array([True, False, True])
        got = geometry.cosine_available(x, w, present=present)
        assert got == 1.0
        # independent restricted computation, exact equality
        xs, ws = x[present], w[present]
        oracle = float(np.dot(xs, ws) / (np.linalg.norm(xs) * np.linalg.norm(ws)))
        assert got == min(oracle, 1.0)

    def test_random_masked_restriction_is_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, present, w, _ = random_instance(rng, 6, 3, masked=True)
            got = geometry.cosine_available(x, w, present=present)
            xs, ws = x[present], w[present]
            oracle = np.dot(xs, ws) / (np.linalg.norm(xs) * np.linalg.norm(ws))
            assert got == float(np.clip(oracle, -1.0, 1.0))

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            geometry.cosine_available([1.0, 2.0], [1.0, 1.0], present=[False, False])

    def test_degenerate_norm(self):
        with pytest.raises(DegenerateVector):
            geometry.cosine_available([0.0, 0.0], [1.0, 1.0])
        # w zero only on the observed dims
        with pytest.raises(DegenerateVector):
            geometry.cosine_available([1.0, 1.0], [0.0, 5.0], present=[True, False])


def masked_angle_oracle(x, present, w, transform):
    """Independent value: transform columns restricted to observed dims for
    the numerator and sample norm; full transform for the prototype norm."""
    cols = transform[:, present]
    hx = cols @ x[present]
    hwm = cols @ w[present]
    den = np.linalg.norm(hx) * np.linalg.norm(transform @ w)
    return float(np.clip(np.dot(hx, hwm) / den, -1.0, 1.0))


class TestAngleGlobal:
    def test_identity_reduces_to_cosine(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x, _, w, _ = random_instance(rng, 5, 5)
            got = geometry.angle_global(x, w, np.eye(5))
            assert abs(got - geometry.cosine_available(x, w)) < 1e-12

    def test_row_selector_equals_projected_cosine(self):
        omega = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        got = geometry.angle_global([1.0, 0.0, 9.0], [1.0, 0.0, -9.0], omega)
        assert got == 1.0

    def test_self_angle(self):
        rng = np.random.default_rng(5)
        x, _, _, omega = random_instance(rng, 4, 3)
        assert geometry.angle_global(x, x, omega) == 1.0

    def test_masked_matches_restricted_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            x, present, w, omega = random_instance(rng, 6, 3, masked=True)
            got = geometry.angle_global(x, w, omega, present=present)
            assert got == masked_angle_oracle(x, present, w, omega)

    def test_scale_invariance(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            x, present, w, omega = random_instance(rng, 5, 3, masked=True)
            b1 = geometry.angle_global(x, w, omega, present=present)
            b2 = geometry.angle_global(2.0 * x, w, omega, present=present)
            assert abs(b1 - b2) < 1e-12


class TestAngleGlobalGrads:
    def test_parallel_gives_zero_prototype_gradient(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=4)
        gw, _ = geometry.angle_global_grads(x, 3.0 * x, np.eye(4), beta=5.0)
        np.testing.assert_allclose(gw, 0.0, atol=1e-9)

    def test_finite_difference_full(self):
        rng = np.random.default_rng(29)
        for _ in range(30):
            x, _, w, omega = random_instance(rng, 4, 2)
            beta = 5.0
            gw, gm = geometry.angle_global_grads(x, w, omega, beta)

            def dval_w(wv):
                return geometry.g_beta(geometry.angle_global(x, wv, omega), beta)

            def dval_m(mv):
                return geometry.g_beta(geometry.angle_global(x, w, mv), beta)

            np.testing.assert_allclose(gw, fd_gradient(dval_w, w), rtol=1e-4, atol=1e-7)
            np.testing.assert_allclose(gm, fd_gradient(dval_m, omega), rtol=1e-4, atol=1e-7)

    def test_finite_difference_masked(self):
        """Missing dims keep only the prototype-norm contribution; the full
        gradient must match finite differences on the restricted problem."""
        rng = np.random.default_rng(31)
        for _ in range(30):
            x, present, w, omega = random_instance(rng, 5, 3, masked=True)
            beta = 2.0
            gw, gm = geometry.angle_global_grads(x, w, omega, beta, present=present)

            def dval_w(wv):
                return geometry.g_beta(masked_angle_oracle(x, present, wv, omega), beta)

            def dval_m(mv):
                return geometry.g_beta(masked_angle_oracle(x, present, w, mv), beta)

            np.testing.assert_allclose(gw, fd_gradient(dval_w, w), rtol=1e-4, atol=1e-7)
            np.testing.assert_allclose(gm, fd_gradient(dval_m, omega), rtol=1e-4, atol=1e-7)

    def test_missing_dim_gradient_is_prototype_norm_term_only(self):
        rng = np.random.default_rng(37)
        x, _, w, omega = random_instance(rng, 4, 2)
        present = np.array([True, True, False, True])
        beta = 5.0
        gw, _ = geometry.angle_global_grads(x, w, omega, beta, present=present)
        # reconstruct the analytic norm-term value at the missing dim
        xt = np.where(present, x, 0.0)
        wt = np.where(present, w, 0.0)
        hx, hw = omega @ xt, omega @ w
        a, om = np.linalg.norm(hx), np.linalg.norm(hw)
        b = float(hx @ (omega @ wt)) / (a * om)
        expect = geometry.g_beta_derivative(b, beta) * (-b) * (omega.T @ hw)[2] / om**2
        np.testing.assert_allclose(gw[2], expect, rtol=1e-12)


class TestAngleLocal:
    def test_identity_reduces_to_cosine(self):
        rng = np.random.default_rng(41)
        psi = np.stack([np.eye(4), np.eye(4)])
        for _ in range(10):
            x, _, w, _ = random_instance(rng, 4, 4)
            got = geometry.angle_local(x, w, psi, 1)
            assert abs(got - geometry.cosine_available(x, w)) < 1e-12

    def test_classwise_matrices_differ_and_match_dense_oracle(self):
        rng = np.random.default_rng(43)
        psi = rng.normal(size=(2, 3, 5))
        x, _, w, _ = random_instance(rng, 5, 3)
        vals = []
        for c in range(2):
            got = geometry.angle_local(x, w, psi, c)
            lam = psi[c].T @ psi[c]
            oracle = (x @ lam @ w) / np.sqrt((x @ lam @ x) * (w @ lam @ w))
            np.testing.assert_allclose(got, np.clip(oracle, -1, 1), rtol=1e-12)
            vals.append(got)
        assert abs(vals[0] - vals[1]) > 1e-6

    def test_self_angle(self):
        rng = np.random.default_rng(47)
        x, _, _, _ = random_instance(rng, 5, 3)
        psi = rng.normal(size=(1, 3, 5))
        assert abs(geometry.angle_local(x, x, psi, 0) - 1.0) < 1e-12

    def test_grads_finite_difference(self):
        rng = np.random.default_rng(53)
        for masked in (False, True):
            for _ in range(20):
                x, present, w, _ = random_instance(rng, 5, 3, masked=masked)
                psi = rng.normal(size=(2, 3, 5))
                beta = 5.0
                pr = present if masked else None
                gw, gp = geometry.angle_local_grads(x, w, psi, 0, beta, present=pr)

                def dval_w(wv):
                    return geometry.g_beta(
                        geometry.angle_local(x, wv, psi, 0, present=pr), beta
                    )

                def dval_p(pv):
                    stack = psi.copy()
                    stack[0] = pv
                    return geometry.g_beta(
                        geometry.angle_local(x, w, stack, 0, present=pr), beta
                    )

                np.testing.assert_allclose(gw, fd_gradient(dval_w, w), rtol=1e-4, atol=1e-7)
                np.testing.assert_allclose(
                    gp, fd_gradient(dval_p, psi[0]), rtol=1e-4, atol=1e-7
                )

    def test_parallel_identity_zero_gradient(self):
        rng = np.random.default_rng(59)
        x = rng.normal(size=4)
        psi = np.stack([np.eye(4)])
        gw, _ = geometry.angle_local_grads(x, 2.0 * x, psi, 0, beta=5.0)
        np.testing.assert_allclose(gw, 0.0, atol=1e-9)


class TestAngleTwoMatrix:
    def test_identity_reduces_to_cosine(self):
        rng = np.random.default_rng(61)
        psi = np.stack([np.eye(4)])
        for _ in range(10):
            x, _, w, _ = random_instance(rng, 4, 4)
            got = geometry.angle_twomatrix(x, w, np.eye(4), psi, 0)
            assert abs(got - geometry.cosine_available(x, w)) < 1e-12

    def test_composition_oracle(self):
        """Equals the local angle applied to the projected vectors."""
        rng = np.random.default_rng(67)
        for _ in range(30):
            x, _, w, omega = random_instance(rng, 5, 3)
            psi = rng.normal(size=(2, 3, 3))
            got = geometry.angle_twomatrix(x, w, omega, psi, 1)
            projected = geometry.angle_local(omega @ x, omega @ w, psi, 1)
            np.testing.assert_allclose(got, projected, rtol=1e-12)

    def test_self_angle(self):
        rng = np.random.default_rng(71)
        x, _, _, omega = random_instance(rng, 4, 2)
        psi = rng.normal(size=(1, 2, 2))
        assert abs(geometry.angle_twomatrix(x, x, omega, psi, 0) - 1.0) < 1e-12

    def test_masked_matches_restricted_oracle(self):
        rng = np.random.default_rng(73)
        for _ in range(100):
            x, present, w, omega = random_instance(rng, 6, 3, masked=True)
            psi = rng.normal(size=(2, 3, 3))
            got = geometry.angle_twomatrix(x, w, omega, psi, 0, present=present)
            assert got == masked_angle_oracle(x, present, w, psi[0] @ omega)

    def test_grads_finite_difference(self):
        rng = np.random.default_rng(79)
        for masked in (False, True):
            for _ in range(20):
                x, present, w, omega = random_instance(rng, 4, 2, masked=masked)
                psi = rng.normal(size=(3, 2, 2))
                beta = 5.0
                pr = present if masked else None
                gw, go, gp = geometry.angle_twomatrix_grads(
                    x, w, omega, psi, 2, beta, present=pr
                )

                def dval(wv=w, ov=omega, pv=None):
                    stack = psi if pv is None else np.concatenate([psi[:2], pv[None]])
                    return geometry.g_beta(
                        geometry.angle_twomatrix(x, wv, ov, stack, 2, present=pr), beta
                    )

                np.testing.assert_allclose(
                    gw, fd_gradient(lambda v: dval(wv=v), w), rtol=1e-4, atol=1e-7
                )
                np.testing.assert_allclose(
                    go, fd_gradient(lambda v: dval(ov=v), omega), rtol=1e-4, atol=1e-7
                )
                np.testing.assert_allclose(
                    gp, fd_gradient(lambda v: dval(pv=v), psi[2]), rtol=1e-4, atol=1e-7
                )

    def test_identity_parallel_zero_gradients(self):
        rng = np.random.default_rng(83)
        x = rng.normal(size=3)
        psi = np.stack([np.eye(3)])
        gw, go, gp = geometry.angle_twomatrix_grads(x, 2.0 * x, np.eye(3), psi, 0, beta=5.0)
        np.testing.assert_allclose(gw, 0.0, atol=1e-9)
        np.testing.assert_allclose(go, 0.0, atol=1e-9)
        np.testing.assert_allclose(gp, 0.0, atol=1e-9)

    def test_sample_scaling_leaves_b_unchanged(self):
        rng = np.random.default_rng(89)
        x, present, w, omega = random_instance(rng, 4, 2, masked=True)
        psi = rng.normal(size=(1, 2, 2))
        b1 = geometry.angle_twomatrix(x, w, omega, psi, 0, present=present)
        b2 = geometry.angle_twomatrix(2.0 * x, w, omega, psi, 0, present=present)
        assert abs(b1 - b2) < 1e-12


class TestEuclidQuadform:
    def test_identity_is_squared_euclidean(self):
        rng = np.random.default_rng(97)
        x, _, w, _ = random_instance(rng, 4, 4)
        got = geometry.euclid_quadform(x, w, omega=np.eye(4))
        np.testing.assert_allclose(got, np.sum((x - w) ** 2), rtol=1e-12)

    def test_zero_at_equal_points(self):
        assert geometry.euclid_quadform([1.0, 2.0], [1.0, 2.0], omega=np.eye(2)) == 0.0

    def test_direct_value(self):
        got = geometry.euclid_quadform(
            [1.0, 0.0], [0.0, 0.0], omega=np.array([[2.0, 0.0], [0.0, 1.0]])
        )
        assert got == 4.0

    def test_rejects_missing(self):
        with pytest.raises(MissingNotSupported):
            geometry.euclid_quadform(
                [1.0, 2.0], [0.0, 0.0], omega=np.eye(2), present=[True, False]
            )
        with pytest.raises(MissingNotSupported):
            geometry.euclid_quadform_grads(
                [1.0, 2.0], [0.0, 0.0], omega=np.eye(2), present=[True, False]
            )

    def test_grads_zero_at_equal_points(self):
        gw, _ = geometry.euclid_quadform_grads([1.0, 2.0], [1.0, 2.0], omega=np.eye(2))
        np.testing.assert_allclose(gw, 0.0, atol=1e-12)

    def test_identity_gradient_is_textbook(self):
        rng = np.random.default_rng(101)
        x, _, w, _ = random_instance(rng, 3, 3)
        gw, _ = geometry.euclid_quadform_grads(x, w, omega=np.eye(3))
        np.testing.assert_allclose(gw, -2.0 * (x - w), rtol=1e-12)

    def test_grads_finite_difference(self):
        rng = np.random.default_rng(103)
        for _ in range(20):
            x, _, w, omega = random_instance(rng, 4, 2)
            gw, gm = geometry.euclid_quadform_grads(x, w, omega=omega)
            np.testing.assert_allclose(
                gw,
                fd_gradient(lambda v: geometry.euclid_quadform(x, v, omega=omega), w),
                rtol=1e-6,
                atol=1e-8,
            )
            np.testing.assert_allclose(
                gm,
                fd_gradient(lambda v: geometry.euclid_quadform(x, w, omega=v), omega),
                rtol=1e-6,
                atol=1e-8,
            )

    def test_local_and_twomatrix_grads_finite_difference(self):
        rng = np.random.default_rng(107)
        for _ in range(20):
            x, _, w, omega = random_instance(rng, 4, 2)
            psi_local = rng.normal(size=(2, 2, 4))
            gw, gm = geometry.euclid_quadform_grads(x, w, psi=psi_local, idx=1)
            np.testing.assert_allclose(
                gw,
                fd_gradient(
                    lambda v: geometry.euclid_quadform(x, v, psi=psi_local, idx=1), w
                ),
                rtol=1e-6,
                atol=1e-8,
            )

            def quad_psi(pv):
                stack = psi_local.copy()
                stack[1] = pv
                return geometry.euclid_quadform(x, w, psi=stack, idx=1)

            np.testing.assert_allclose(
                gm, fd_gradient(quad_psi, psi_local[1]), rtol=1e-6, atol=1e-8
            )

            psi_sq = rng.normal(size=(2, 2, 2))
            gw, go, gp = geometry.euclid_twomatrix_grads(x, w, omega, psi_sq, 0)
            np.testing.assert_allclose(
                gw,
                fd_gradient(
                    lambda v: geometry.euclid_quadform(x, v, omega=omega, psi=psi_sq, idx=0),
                    w,
                ),
                rtol=1e-6,
                atol=1e-8,
            )
            np.testing.assert_allclose(
                go,
                fd_gradient(
                    lambda v: geometry.euclid_quadform(x, w, omega=v, psi=psi_sq, idx=0),
                    omega,
                ),
                rtol=1e-6,
                atol=1e-8,
            )

            def quad_sq(pv):
                stack = psi_sq.copy()
                stack[0] = pv
                return geometry.euclid_quadform(x, w, omega=omega, psi=stack, idx=0)

            np.testing.assert_allclose(
                gp, fd_gradient(quad_sq, psi_sq[0]), rtol=1e-6, atol=1e-8
            )


class TestCrossVariantProperties:
    def test_all_angles_stay_clamped(self):
        rng = np.random.default_rng(109)
        psi_rect = rng.normal(size=(2, 3, 6))
        psi_sq = rng.normal(size=(2, 3, 3))
        for _ in range(100):
            x, present, w, omega = random_instance(rng, 6, 3, masked=True)
            values = [
                geometry.cosine_available(x, w, present=present),
                geometry.angle_global(x, w, omega, present=present),
                geometry.angle_local(x, w, psi_rect, 0, present=present),
                geometry.angle_twomatrix(x, w, omega, psi_sq, 1, present=present),
            ]
            assert all(-1.0 <= v <= 1.0 for v in values)

    def test_scale_invariance_all_variants(self):
        rng = np.random.default_rng(113)
        psi_rect = rng.normal(size=(2, 3, 6))
        psi_sq = rng.normal(size=(2, 3, 3))
        for _ in range(50):
            x, present, w, omega = random_instance(rng, 6, 3, masked=True)
            alpha = float(rng.uniform(0.1, 10.0))
            pairs = [
                (
                    geometry.cosine_available(x, w, present=present),
                    geometry.cosine_available(alpha * x, w, present=present),
                ),
                (
                    geometry.angle_global(x, w, omega, present=present),
                    geometry.angle_global(alpha * x, w, omega, present=present),
                ),
                (
                    geometry.angle_local(x, w, psi_rect, 1, present=present),
                    geometry.angle_local(alpha * x, w, psi_rect, 1, present=present),
                ),
                (
                    geometry.angle_twomatrix(x, w, omega, psi_sq, 0, present=present),
                    geometry.angle_twomatrix(alpha * x, w, omega, psi_sq, 0, present=present),
                ),
            ]
            for v1, v2 in pairs:
                assert abs(v1 - v2) < 1e-12
