"""Tests for the conjugate multi-output Bayesian linear regression."""

import numpy as np
import pytest

from metabayes.blr import (
    BlrPosterior,
    BlrPrior,
    PriorHyper,
    init_prior_hyper,
    posterior_update,
    predict,
    rank1_update,
    transform_prior,
)
from metabayes.exceptions import ShapeMismatch, SingularTransform
from metabayes.numerics import gaussian_condition


def _random_prior(rng, n_phi, n_y):
    k0 = rng.normal(size=(n_phi, n_y))
    a = rng.normal(size=(n_phi, n_phi))
    lam = a @ a.T + n_phi * np.eye(n_phi)
    sigma = np.diag(rng.uniform(0.3, 1.5, size=n_y) ** 2)
    return BlrPrior(k0, np.linalg.cholesky(lam), sigma)


def _scalar_prior():
    return BlrPrior(np.zeros((1, 1)), np.eye(1), np.eye(1))


class TestBlrPrior:
    def test_dimensions(self):
        prior = _random_prior(np.random.default_rng(0), 4, 2)
        assert prior.n_features == 4
        assert prior.n_outputs == 2
        np.testing.assert_allclose(
            prior.lambda0(), prior.Lambda0_chol @ prior.Lambda0_chol.T
        )

    def test_upper_triangle_dropped(self):
        chol = np.array([[1.0, 9.0], [0.5, 2.0]])
        prior = BlrPrior(np.zeros((2, 1)), chol, np.eye(1))
        np.testing.assert_array_equal(prior.Lambda0_chol, np.tril(chol))

    def test_nonpositive_chol_diagonal_rejected(self):
        with pytest.raises(ShapeMismatch):
            BlrPrior(np.zeros((2, 1)), np.diag([1.0, -1.0]), np.eye(1))

    def test_sigma_eps_must_be_diagonal_positive(self):
        with pytest.raises(ShapeMismatch):
            BlrPrior(np.zeros((1, 2)), np.eye(1), np.array([[1.0, 0.1], [0.1, 1.0]]))
        with pytest.raises(ShapeMismatch):
            BlrPrior(np.zeros((1, 1)), np.eye(1), np.array([[0.0]]))

    def test_k0_shape_checked(self):
        with pytest.raises(ShapeMismatch):
            BlrPrior(np.zeros((3, 1)), np.eye(2), np.eye(1))


class TestPosteriorUpdate:
    def test_scalar_hand_trace(self):
        post = posterior_update(_scalar_prior(), np.array([[1.0]]), np.array([[1.0]]))
        assert post.n_context == 1
        assert post.lambda_tau()[0, 0] == pytest.approx(2.0, rel=1e-12)
        assert post.Ktau[0, 0] == pytest.approx(0.5, rel=1e-12)

    def test_empty_context_restates_prior(self):
        prior = _random_prior(np.random.default_rng(1), 3, 2)
        post = posterior_update(prior, np.zeros((0, 3)), np.zeros((0, 2)))
        assert post.n_context == 0
        np.testing.assert_array_equal(post.Ktau, prior.K0)
        np.testing.assert_array_equal(post.LambdaTau_chol, prior.Lambda0_chol)
        np.testing.assert_array_equal(post.SigmaEps, prior.SigmaEps)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            n_phi = int(rng.integers(1, 6))
            n_y = int(rng.integers(1, 4))
            n_c = int(rng.integers(1, 12))
            prior = _random_prior(rng, n_phi, n_y)
            phi = rng.normal(size=(n_c, n_phi))
            y = rng.normal(size=(n_c, n_y))
            post = posterior_update(prior, phi, y)
            lam_tau = phi.T @ phi + prior.lambda0()
            k_tau = np.linalg.solve(lam_tau, phi.T @ y + prior.lambda0() @ prior.K0)
            np.testing.assert_allclose(post.lambda_tau(), lam_tau, rtol=1e-9, atol=1e-11)
            np.testing.assert_allclose(post.Ktau, k_tau, rtol=1e-9, atol=1e-11)

    def test_precision_never_shrinks(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n_phi = int(rng.integers(1, 6))
            prior = _random_prior(rng, n_phi, 1)
            phi = rng.normal(size=(int(rng.integers(1, 8)), n_phi))
            y = rng.normal(size=(phi.shape[0], 1))
            post = posterior_update(prior, phi, y)
            v = rng.normal(size=n_phi)
            q_prior = v @ prior.lambda0() @ v
            q_post = v @ post.lambda_tau() @ v
            assert q_post >= q_prior - 1e-10 * abs(q_prior)

    def test_shape_mismatches_rejected(self):
        prior = _scalar_prior()
        with pytest.raises(ShapeMismatch):
            posterior_update(prior, np.zeros((2, 2)), np.zeros((2, 1)))
        with pytest.raises(ShapeMismatch):
            posterior_update(prior, np.zeros((2, 1)), np.zeros((3, 1)))


class TestPredict:
    def test_scalar_posterior_prediction(self):
        post = posterior_update(_scalar_prior(), np.array([[1.0]]), np.array([[1.0]]))
        dist = predict(post, np.array([[2.0]]))
        assert dist.mean[0, 0] == pytest.approx(1.0, rel=1e-12)
        assert dist.row_cov[0, 0] == pytest.approx(3.0, rel=1e-12)
        np.testing.assert_array_equal(dist.col_cov, np.eye(1))

    def test_scalar_prior_prediction(self):
        post = posterior_update(_scalar_prior(), np.zeros((0, 1)), np.zeros((0, 1)))
        dist = predict(post, np.array([[2.0]]))
        assert dist.mean[0, 0] == pytest.approx(0.0, abs=1e-14)
        assert dist.row_cov[0, 0] == pytest.approx(5.0, rel=1e-12)

    def test_row_cov_diagonal_at_least_one(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n_phi = int(rng.integers(1, 6))
            prior = _random_prior(rng, n_phi, 2)
            phi_c = rng.normal(size=(int(rng.integers(0, 10)), n_phi))
            y_c = rng.normal(size=(phi_c.shape[0], 2))
            phi_t = rng.normal(size=(int(rng.integers(1, 6)), n_phi))
            dist = predict(posterior_update(prior, phi_c, y_c), phi_t)
            assert np.all(np.diag(dist.row_cov) >= 1.0 - 1e-12)
            np.testing.assert_array_equal(dist.row_cov, dist.row_cov.T)

    def test_more_context_never_widens(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n_phi = int(rng.integers(1, 5))
            prior = _random_prior(rng, n_phi, 1)
            phi = rng.normal(size=(10, n_phi))
            y = rng.normal(size=(10, 1))
            phi_t = rng.normal(size=(4, n_phi))
            few = predict(posterior_update(prior, phi[:3], y[:3]), phi_t)
            many = predict(posterior_update(prior, phi, y), phi_t)
            assert np.all(
                np.diag(many.row_cov) <= np.diag(few.row_cov) + 1e-10
            )

    def test_test_point_exchangeability_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n_phi, n_t = int(rng.integers(1, 6)), int(rng.integers(2, 8))
            prior = _random_prior(rng, n_phi, 2)
            phi_c = rng.normal(size=(5, n_phi))
            y_c = rng.normal(size=(5, 2))
            post = posterior_update(prior, phi_c, y_c)
            phi_t = rng.normal(size=(n_t, n_phi))
            base = predict(post, phi_t)
            perm = rng.permutation(n_t)
            other = predict(post, phi_t[perm])
            np.testing.assert_array_equal(other.mean, base.mean[perm])
            np.testing.assert_array_equal(
                other.row_cov, base.row_cov[np.ix_(perm, perm)]
            )

    def test_matches_dense_conditioning_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            n_phi = int(rng.integers(1, 5))
            n_y = int(rng.integers(1, 3))
            n_c = int(rng.integers(0, 6))
            n_t = int(rng.integers(1, 5))
            prior = _random_prior(rng, n_phi, n_y)
            phi_c = rng.normal(size=(n_c, n_phi))
            y_c = rng.normal(size=(n_c, n_y))
            phi_t = rng.normal(size=(n_t, n_phi))
            dist = predict(posterior_update(prior, phi_c, y_c), phi_t)

            # Joint prior over stacked context and test rows.
            phi_all = np.vstack([phi_c, phi_t])
            mean_all = (phi_all @ prior.K0).reshape(-1)
            row_all = phi_all @ np.linalg.solve(prior.lambda0(), phi_all.T)
            row_all += np.eye(phi_all.shape[0])
            cov_all = np.kron(row_all, prior.SigmaEps)
            idx = np.arange(n_c * n_y)
            want_mean, want_cov = gaussian_condition(
                mean_all, cov_all, idx, y_c.reshape(-1)
            )
            got_mean, got_cov = dist.to_dense()
            scale = max(1.0, np.abs(want_cov).max())
            assert np.abs(got_mean - want_mean).max() < 1e-9 * max(
                1.0, np.abs(want_mean).max()
            )
            assert np.abs(got_cov - want_cov).max() < 1e-9 * scale

    def test_empty_test_rejected(self):
        post = posterior_update(_scalar_prior(), np.zeros((0, 1)), np.zeros((0, 1)))
        with pytest.raises(ShapeMismatch):
            predict(post, np.zeros((0, 1)))

    def test_feature_width_checked(self):
        post = posterior_update(_scalar_prior(), np.zeros((0, 1)), np.zeros((0, 1)))
        with pytest.raises(ShapeMismatch):
            predict(post, np.zeros((1, 2)))


class TestRank1Update:
    def test_matches_batch(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n_phi = int(rng.integers(1, 6))
            n_y = int(rng.integers(1, 3))
            n = int(rng.integers(1, 10))
            prior = _random_prior(rng, n_phi, n_y)
            phi = rng.normal(size=(n, n_phi))
            y = rng.normal(size=(n, n_y))
            post = posterior_update(prior, np.zeros((0, n_phi)), np.zeros((0, n_y)))
            for r in range(n):
                post = rank1_update(post, phi[r], y[r])
            batch = posterior_update(prior, phi, y)
            assert post.n_context == n
            np.testing.assert_allclose(
                post.lambda_tau(), batch.lambda_tau(), rtol=1e-10, atol=1e-10
            )
            np.testing.assert_allclose(post.Ktau, batch.Ktau, rtol=1e-10, atol=1e-10)

    def test_predictions_agree_with_batch(self):
        rng = np.random.default_rng(9)
        prior = _random_prior(rng, 4, 2)
        phi = rng.normal(size=(6, 4))
        y = rng.normal(size=(6, 2))
        seq = posterior_update(prior, phi[:5], y[:5])
        seq = rank1_update(seq, phi[5], y[5])
        batch = posterior_update(prior, phi, y)
        phi_t = rng.normal(size=(3, 4))
        a, b = predict(seq, phi_t), predict(batch, phi_t)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(a.row_cov, b.row_cov, rtol=1e-10, atol=1e-12)

    def test_shape_checks(self):
        prior = _random_prior(np.random.default_rng(10), 3, 2)
        post = posterior_update(prior, np.zeros((0, 3)), np.zeros((0, 2)))
        with pytest.raises(ShapeMismatch):
            rank1_update(post, np.zeros(2), np.zeros(2))
        with pytest.raises(ShapeMismatch):
            rank1_update(post, np.zeros(3), np.zeros(3))


class TestTransformPrior:
    def test_identity_transform_is_noop(self):
        prior = _random_prior(np.random.default_rng(11), 4, 2)
        new_prior, wrap = transform_prior(prior, np.eye(4))
        np.testing.assert_allclose(new_prior.K0, prior.K0, atol=1e-14)
        np.testing.assert_allclose(
            new_prior.Lambda0_chol, prior.Lambda0_chol, rtol=1e-12, atol=1e-14
        )
        phi = np.random.default_rng(12).normal(size=(3, 4))
        np.testing.assert_allclose(wrap(phi), phi, atol=1e-14)

    def test_wrap_solves_against_transform(self):
        rng = np.random.default_rng(13)
        prior = _random_prior(rng, 3, 1)
        lp = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        _, wrap = transform_prior(prior, lp)
        phi = rng.normal(size=(5, 3))
        np.testing.assert_allclose(wrap(phi) @ lp.T, phi, rtol=1e-10, atol=1e-12)

    def test_predictive_invariant(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            n_phi = int(rng.integers(1, 6))
            n_y = int(rng.integers(1, 3))
            prior = _random_prior(rng, n_phi, n_y)
            phi_c = rng.normal(size=(int(rng.integers(0, 8)), n_phi))
            y_c = rng.normal(size=(phi_c.shape[0], n_y))
            phi_t = rng.normal(size=(int(rng.integers(1, 5)), n_phi))
            lp = rng.normal(size=(n_phi, n_phi)) + n_phi * np.eye(n_phi)

            base = predict(posterior_update(prior, phi_c, y_c), phi_t)
            prior2, wrap = transform_prior(prior, lp)
            other = predict(
                posterior_update(prior2, wrap(phi_c), y_c), wrap(phi_t)
            )
            np.testing.assert_allclose(other.mean, base.mean, rtol=1e-9, atol=1e-10)
            np.testing.assert_allclose(
                other.row_cov, base.row_cov, rtol=1e-9, atol=1e-10
            )
            np.testing.assert_array_equal(other.col_cov, base.col_cov)

    def test_transformed_precision_consistent(self):
        rng = np.random.default_rng(15)
        prior = _random_prior(rng, 4, 1)
        lp = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        new_prior, _ = transform_prior(prior, lp)
        want = np.linalg.solve(lp, np.linalg.solve(lp, prior.lambda0()).T).T
        np.testing.assert_allclose(new_prior.lambda0(), want, rtol=1e-9, atol=1e-11)

    def test_ill_conditioned_rejected(self):
        prior = _random_prior(np.random.default_rng(16), 2, 1)
        with pytest.raises(SingularTransform):
            transform_prior(prior, np.diag([1.0, 1e-9]))

    def test_non_finite_rejected(self):
        prior = _random_prior(np.random.default_rng(17), 2, 1)
        with pytest.raises(SingularTransform):
            transform_prior(prior, np.array([[1.0, 0.0], [0.0, np.nan]]))

    def test_wrong_shape_rejected(self):
        prior = _random_prior(np.random.default_rng(18), 2, 1)
        with pytest.raises(ShapeMismatch):
            transform_prior(prior, np.eye(3))


class TestPriorHyper:
    def test_init_defaults(self):
        hyper = init_prior_hyper(3, 2, np.random.default_rng(19))
        assert hyper.lambda0_name is None
        np.testing.assert_array_equal(hyper.params["prior/k0"], np.zeros((3, 2)))
        np.testing.assert_array_equal(
            hyper.params["noise/log_sigma"], np.zeros((1, 2))
        )
        prior = hyper.materialize()
        np.testing.assert_array_equal(prior.Lambda0_chol, np.eye(3))
        np.testing.assert_array_equal(prior.SigmaEps, np.eye(2))
        assert prior.fixed_lambda0

    def test_identity_features_check_width(self):
        hyper = init_prior_hyper(3, 1, np.random.default_rng(20))
        x = np.zeros((4, 3))
        np.testing.assert_array_equal(hyper.features(x), x)
        with pytest.raises(ShapeMismatch):
            hyper.features(np.zeros((4, 2)))

    def test_learned_lambda0_parametrization(self):
        hyper = init_prior_hyper(2, 1, np.random.default_rng(21), learn_lambda0=True)
        assert hyper.lambda0_name == "prior/lambda0_raw"
        raw = np.array([[0.3, 7.0], [-0.4, -0.2]])
        hyper.params[hyper.lambda0_name] = raw
        prior = hyper.materialize()
        want = np.array([[np.exp(0.3), 0.0], [-0.4, np.exp(-0.2)]])
        np.testing.assert_allclose(prior.Lambda0_chol, want, atol=1e-14)
        assert not prior.fixed_lambda0

    def test_noise_parametrization(self):
        hyper = init_prior_hyper(1, 2, np.random.default_rng(22))
        hyper.params["noise/log_sigma"] = np.array([[np.log(0.5), np.log(2.0)]])
        np.testing.assert_allclose(
            hyper.sigma_eps(), np.diag([0.25, 4.0]), rtol=1e-12
        )

    def test_frozen_names(self):
        learn = init_prior_hyper(1, 1, np.random.default_rng(23), learn_noise=True)
        fixed = init_prior_hyper(1, 1, np.random.default_rng(23), learn_noise=False)
        assert learn.frozen_names() == []
        assert fixed.frozen_names() == ["noise/log_sigma"]

    def test_net_output_width_checked(self):
        from metabayes.autodiff import FeatureNetSpec

        net = FeatureNetSpec(1, (4,), 5, "tanh", name="phi")
        with pytest.raises(ShapeMismatch):
            init_prior_hyper(3, 1, np.random.default_rng(24), feature_net=net)
