"""Tests for the five meta-training losses and the chain-rule identity."""

import numpy as np
import pytest

from metabayes.autodiff import FeatureNetSpec, backward, finite_diff_check
from metabayes.blr import BlrPrior, init_prior_hyper
from metabayes.exceptions import (
    EmptyBatch,
    IncompatibleModelLoss,
    InvalidConfig,
    ShapeMismatch,
)
from metabayes.models import build_model
from metabayes.gpr import joint_prior
from metabayes.objectives import (
    LOSS_KINDS,
    LossSpec,
    TaskBatch,
    TaskDraw,
    chain_rule_identity,
    evaluate_loss,
)
from metabayes.trainer import OptimHyper, adamw_step, init_opt_state

# The worked 1-D instance: identity features, K0 = 0, Lambda0 = 1,
# Sigma_eps = 1, points (x, y) = (1, 1) and (2, 0).
X2 = np.array([[1.0], [2.0]])
Y2 = np.array([[1.0], [0.0]])

PR_FC_PER_POINT = 1.5752117338450198
POO_T1 = 1.6349113442053942
CHAIN_T0 = -1.5155121234846454
JOINT_2PT = -3.1504234676900396


def _scalar_prior() -> BlrPrior:
    return BlrPrior(np.zeros((1, 1)), np.eye(1), np.eye(1))


def _loss_value(kind: str, model, X, Y, t: int) -> float:
    node = evaluate_loss(LossSpec(kind), model, TaskBatch((TaskDraw(X, Y, t),)))
    assert node.value.shape == (1, 1)
    return float(node.value[0, 0])


def _gauss_nll(y: float, var: float) -> float:
    return 0.5 * (y * y / var + np.log(var) + np.log(2.0 * np.pi))


class TestSpecsAndBatches:
    def test_loss_kinds(self):
        assert LOSS_KINDS == ("PR_FC", "PR_DC", "POO", "POM_FC", "POM_DC")

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidConfig):
            LossSpec("MLE")

    def test_non_uniform_sampling_rejected(self):
        with pytest.raises(InvalidConfig):
            LossSpec("PR_FC", horizon_sampling="geometric")

    def test_draw_split_point_bounds(self):
        with pytest.raises(InvalidConfig):
            TaskDraw(X2, Y2, 2)
        with pytest.raises(InvalidConfig):
            TaskDraw(X2, Y2, -1)

    def test_draw_row_mismatch(self):
        with pytest.raises(ShapeMismatch):
            TaskDraw(X2, Y2[:1], 0)

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptyBatch):
            evaluate_loss(LossSpec("PR_FC"), _scalar_prior(), TaskBatch(()))


class TestKnownValues:
    def test_pr_fc_worked_instance(self):
        value = _loss_value("PR_FC", _scalar_prior(), X2, Y2, 0)
        assert value == pytest.approx(PR_FC_PER_POINT, abs=1e-12)

    def test_poo_worked_instance(self):
        value = _loss_value("POO", _scalar_prior(), X2, Y2, 1)
        assert value == pytest.approx(POO_T1, abs=1e-12)

    def test_poo_at_t0_scores_first_point(self):
        value = _loss_value("POO", _scalar_prior(), X2, Y2, 0)
        assert value == pytest.approx(-CHAIN_T0, abs=1e-12)

    def test_pr_dc_is_mean_of_marginals(self):
        # Marginal prior variances at phi = 1 and phi = 2 are 2 and 5.
        want = 0.5 * (_gauss_nll(1.0, 2.0) + _gauss_nll(0.0, 5.0))
        value = _loss_value("PR_DC", _scalar_prior(), X2, Y2, 0)
        assert value == pytest.approx(want, abs=1e-12)

    def test_pom_fc_at_t0_equals_pr_fc(self):
        a = _loss_value("POM_FC", _scalar_prior(), X2, Y2, 0)
        b = _loss_value("PR_FC", _scalar_prior(), X2, Y2, 0)
        assert a == b

    def test_pom_fc_with_one_remaining_point_equals_poo(self):
        a = _loss_value("POM_FC", _scalar_prior(), X2, Y2, 1)
        b = _loss_value("POO", _scalar_prior(), X2, Y2, 1)
        assert a == pytest.approx(b, abs=1e-12)

    def test_pom_dc_at_t0_equals_pr_dc(self):
        a = _loss_value("POM_DC", _scalar_prior(), X2, Y2, 0)
        b = _loss_value("PR_DC", _scalar_prior(), X2, Y2, 0)
        assert a == pytest.approx(b, abs=1e-12)

    def test_single_sample_collapses_all_kinds(self):
        x1, y1 = X2[:1], Y2[:1]
        values = {
            kind: _loss_value(kind, _scalar_prior(), x1, y1, 0)
            for kind in LOSS_KINDS
        }
        assert values["PR_FC"] == pytest.approx(values["PR_DC"], abs=1e-12)
        assert values["POM_FC"] == pytest.approx(values["POO"], abs=1e-12)
        assert values["POM_DC"] == pytest.approx(values["POO"], abs=1e-12)

    def test_pr_dc_equals_pr_fc_for_diagonal_row_cov(self):
        # Orthogonal feature rows keep the prior row covariance diagonal.
        prior = BlrPrior(np.zeros((2, 1)), np.eye(2), np.eye(1))
        x = np.array([[2.0, 0.0], [0.0, 3.0]])
        y = np.array([[0.7], [-0.4]])
        a = _loss_value("PR_FC", prior, x, y, 0)
        b = _loss_value("PR_DC", prior, x, y, 0)
        assert a == pytest.approx(b, abs=1e-12)


class TestModelPaths:
    def test_trainable_prior_matches_concrete_prior(self):
        hyper = init_prior_hyper(1, 1, np.random.default_rng(0))
        for kind, t in (("PR_FC", 0), ("PR_DC", 0), ("POO", 1),
                        ("POM_FC", 1), ("POM_DC", 1)):
            a = _loss_value(kind, hyper, X2, Y2, t)
            b = _loss_value(kind, _scalar_prior(), X2, Y2, t)
            assert a == pytest.approx(b, abs=1e-12), kind

    def test_learned_lambda0_pom_fc_close_to_pr_fc_at_t0(self):
        rng = np.random.default_rng(1)
        hyper = init_prior_hyper(2, 1, rng, learn_lambda0=True)
        hyper.params["prior/lambda0_raw"] = rng.normal(0.0, 0.3, (2, 2))
        x = rng.normal(size=(4, 2))
        y = rng.normal(size=(4, 1))
        a = _loss_value("POM_FC", hyper, x, y, 0)
        b = _loss_value("PR_FC", hyper, x, y, 0)
        assert a == pytest.approx(b, abs=1e-10)

    def test_gpr_accepts_pr_fc_only(self):
        rng = np.random.default_rng(2)
        model = build_model("GPR-SE-IN", 1, 1, rng, hidden=(3,), n_latent=2)
        batch = TaskBatch((TaskDraw(X2, Y2, 0),))
        value = float(evaluate_loss(LossSpec("PR_FC"), model, batch).value[0, 0])
        want = -joint_prior(model, X2).log_density(Y2) / 2.0
        assert value == pytest.approx(want, rel=1e-10)
        for kind in ("PR_DC", "POO", "POM_FC", "POM_DC"):
            with pytest.raises(IncompatibleModelLoss):
                evaluate_loss(LossSpec(kind), model, batch)

    def test_unsupported_model_type(self):
        with pytest.raises(InvalidConfig):
            evaluate_loss(LossSpec("PR_FC"), object(), TaskBatch((TaskDraw(X2, Y2, 0),)))

    def test_batch_mean_over_tasks(self):
        rng = np.random.default_rng(3)
        hyper = init_prior_hyper(1, 1, rng)
        draws = []
        singles = []
        for _ in range(5):
            x = rng.normal(size=(3, 1))
            y = rng.normal(size=(3, 1))
            t = int(rng.integers(0, 3))
            draws.append(TaskDraw(x, y, t))
            singles.append(_loss_value("POM_DC", hyper, x, y, t))
        batch_value = float(
            evaluate_loss(LossSpec("POM_DC"), hyper, TaskBatch(tuple(draws))).value[0, 0]
        )
        assert batch_value == pytest.approx(np.mean(singles), abs=1e-12)

    def test_batch_order_stable_reduction(self):
        rng = np.random.default_rng(4)
        hyper = init_prior_hyper(1, 1, rng)
        draws = [
            TaskDraw(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), 1)
            for _ in range(6)
        ]
        a = float(evaluate_loss(LossSpec("PR_FC"), hyper, TaskBatch(tuple(draws))).value[0, 0])
        b = float(
            evaluate_loss(
                LossSpec("PR_FC"), hyper, TaskBatch(tuple(reversed(draws)))
            ).value[0, 0]
        )
        assert a == pytest.approx(b, abs=1e-12)


class TestGradients:
    def test_all_losses_pass_finite_differences(self):
        rng = np.random.default_rng(5)
        for kind in LOSS_KINDS:
            for _ in range(3):
                net = FeatureNetSpec(1, (3,), 2, "tanh", name="phi")
                hyper = init_prior_hyper(
                    2, 1, rng, feature_net=net, learn_lambda0=True
                )
                for name in hyper.params.names():
                    hyper.params[name] = hyper.params[name] + rng.normal(
                        0.0, 0.2, hyper.params[name].shape
                    )
                n = int(rng.integers(2, 5))
                x = rng.normal(size=(n, 1))
                y = rng.normal(size=(n, 1))
                t = int(rng.integers(0, n))
                batch = TaskBatch((TaskDraw(x, y, t),))

                def loss_fn(params):
                    hyper.params = params
                    return evaluate_loss(LossSpec(kind), hyper, batch)

                assert finite_diff_check(loss_fn, hyper.params) < 1e-4, kind

    def test_gpr_loss_gradient(self):
        rng = np.random.default_rng(6)
        model = build_model("GPR-DSE-IN", 1, 1, rng, hidden=(3,), n_latent=2)
        for name in model.params.names():
            model.params[name] = model.params[name] + rng.normal(
                0.0, 0.2, model.params[name].shape
            )
        x = rng.normal(size=(4, 1))
        y = rng.normal(size=(4, 1))
        batch = TaskBatch((TaskDraw(x, y, 0),))

        def loss_fn(params):
            model.params = params
            return evaluate_loss(LossSpec("PR_FC"), model, batch)

        assert finite_diff_check(loss_fn, model.params) < 1e-4


class TestDescent:
    def test_all_losses_decrease_on_fixed_batch(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-2.0, 2.0, size=(6, 1))
        y = np.sin(1.5 * x) + 0.05 * rng.normal(size=(6, 1))
        batch = TaskBatch((TaskDraw(x, y, 2), TaskDraw(x, y, 4)))
        hyper_opt = OptimHyper(learning_rate=5e-3, weight_decay=0.0)
        for kind in LOSS_KINDS:
            net = FeatureNetSpec(1, (8,), 4, "tanh", name="phi")
            model = init_prior_hyper(4, 1, np.random.default_rng(8), feature_net=net)
            state = init_opt_state(model.params)
            first = None
            last = None
            for _ in range(60):
                model.params = state.params
                node = evaluate_loss(LossSpec(kind), model, batch)
                value = float(node.value[0, 0])
                first = value if first is None else first
                last = value
                grads = backward(node, state.params)
                state = adamw_step(state, grads, hyper_opt)
            assert last < first, kind


class TestChainRule:
    def test_worked_two_point_instance(self):
        lhs, rhs = chain_rule_identity(_scalar_prior(), (X2, Y2))
        assert lhs == pytest.approx(CHAIN_T0 - POO_T1, abs=1e-12)
        assert rhs == pytest.approx(JOINT_2PT, abs=1e-12)
        assert lhs == pytest.approx(rhs, abs=1e-8)

    def test_single_point_trivial(self):
        lhs, rhs = chain_rule_identity(_scalar_prior(), (X2[:1], Y2[:1]))
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_identity_over_models_and_orderings(self):
        rng = np.random.default_rng(9)
        methods = ("BLR-PR-FC", "GPR-SE-IN", "GPR-DSE-IN", "GPR-DL-IN", "GPR-DL-SN")
        for method in methods:
            model = build_model(method, 1, 2, rng, hidden=(3,), n_latent=2)
            for name in model.params.names():
                model.params[name] = model.params[name] + rng.normal(
                    0.0, 0.3, model.params[name].shape
                )
            n = 6
            x = rng.uniform(-2.0, 2.0, size=(n, 1))
            y = rng.normal(size=(n, 2))
            ordering = rng.permutation(n)
            lhs, rhs = chain_rule_identity(model, (x, y), ordering=ordering)
            scale = max(1.0, abs(rhs))
            assert abs(lhs - rhs) / scale < 1e-8, method

    def test_bad_ordering_rejected(self):
        with pytest.raises(InvalidConfig):
            chain_rule_identity(_scalar_prior(), (X2, Y2), ordering=[0, 0])
