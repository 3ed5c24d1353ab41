"""Meta-training losses.

Five negative mean log-likelihood objectives over task batches, all
returning scalar graph nodes:

* ``PR_FC``  joint density of the whole task under the prior
* ``PR_DC``  per-sample marginal prior densities, averaged
* ``POO``    condition on the first t samples, score the next one
* ``POM_FC`` condition on the first t samples, joint over the rest
* ``POM_DC`` condition on the first t samples, marginals over the rest

Every loss divides by the number of scored points within a task, then
averages over tasks, so kinds are comparable in magnitude. GP models
define the prior-joint kind only; the posterior kinds rely on the
conjugate readout posterior that only the BLR family has.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Node
from .blr import BlrPrior, PriorHyper
from .exceptions import (
    EmptyBatch,
    IncompatibleModelLoss,
    InvalidConfig,
    ShapeMismatch,
)
from .gpr import GprModel
from .kernels import gram, mean_eval
from .numerics import LOG_2PI, mvn_logpdf

PR_FC = "PR_FC"
PR_DC = "PR_DC"
POO = "POO"
POM_FC = "POM_FC"
POM_DC = "POM_DC"
LOSS_KINDS = (PR_FC, PR_DC, POO, POM_FC, POM_DC)
POSTERIOR_KINDS = (POO, POM_FC, POM_DC)


@dataclass(frozen=True)
class LossSpec:
    """Which objective to optimize. Split points t are drawn uniformly
    over {0..T−1}, one per task per step; prior kinds ignore them."""

    kind: str
    horizon_sampling: str = "uniform"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidConfig(f"unknown loss kind {self.kind!r}")
        if self.horizon_sampling != "uniform":
            raise InvalidConfig(
                f"unsupported horizon sampling {self.horizon_sampling!r}")


@dataclass(frozen=True)
class TaskDraw:
    """One task's samples plus its sampled split point."""

    X: np.ndarray
    Y: np.ndarray
    t: int

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float)
        y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "Y", y)
        if x.ndim != 2 or y.ndim != 2:
            raise ShapeMismatch("task samples must be 2-D arrays")
        if x.shape[0] != y.shape[0]:
            raise ShapeMismatch(
                f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
        if not 0 <= self.t < x.shape[0]:
            raise InvalidConfig(
                f"split point t={self.t} outside [0, {x.shape[0]})")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class TaskBatch:
    draws: tuple

    def __post_init__(self):
        object.__setattr__(self, "draws", tuple(self.draws))


# ---------------------------------------------------------------------------
# density building blocks on graph nodes


def _matnorm_node(Y: np.ndarray, mean: Node, row_cov: Node,
                  sigma_sq: Node, log_det_sigma: Node) -> Node:
    """Joint log-density of Y under N(mean, row_cov ⊗ diag(sigma_sq))."""
    n, n_y = Y.shape
    lc = ad.cholesky(row_cov)
    resid = ad.sub(ad.constant(Y), mean)
    white = ad.triangular_solve(lc, resid)
    denom = ad.matmul(ad.constant(np.ones((n, 1))), sigma_sq)
    quad = ad.sum_all(ad.div(ad.mul(white, white), denom))
    log_det_row = ad.scale(ad.sum_all(ad.log(ad.diag_part(lc))), 2.0)
    total = ad.add(
        ad.add(quad, ad.scale(log_det_row, float(n_y))),
        ad.add(ad.scale(log_det_sigma, float(n)),
               ad.constant([[n * n_y * LOG_2PI]])))
    return ad.scale(total, -0.5)


def _diag_marginals_node(Y: np.ndarray, mean: Node, row_var: Node,
                         sigma_sq: Node, log_det_sigma: Node) -> Node:
    """Sum over rows of each row's marginal log-density.

    Row i is scored under N(mean_i, row_var_i · diag(sigma_sq)).
    """
    n, n_y = Y.shape
    resid = ad.sub(ad.constant(Y), mean)
    denom = ad.matmul(row_var, sigma_sq)
    quad = ad.sum_all(ad.div(ad.mul(resid, resid), denom))
    log_var_term = ad.scale(ad.sum_all(ad.log(row_var)), float(n_y))
    total = ad.add(
        ad.add(quad, log_var_term),
        ad.add(ad.scale(log_det_sigma, float(n)),
               ad.constant([[n * n_y * LOG_2PI]])))
    return ad.scale(total, -0.5)


@dataclass
class _BlrPieces:
    """Graph handles for one BLR loss evaluation."""

    phi: Node                 # n × n_φ features
    k0: Node                  # n_φ × n_y
    l0: Node | None           # lower factor of Λ₀, None when Λ₀ = I
    sigma_sq: Node            # 1 × n_y output variances
    log_det_sigma: Node       # scalar ln|Σ_ε|


def _blr_pieces(model, X: np.ndarray) -> _BlrPieces:
    if isinstance(model, PriorHyper):
        if model.feature_net is None:
            phi = ad.constant(X)
            if X.shape[1] != model.n_features:
                raise ShapeMismatch(
                    f"identity features need {model.n_features} columns, "
                    f"got {X.shape[1]}")
        else:
            phi = ad.forward(model.feature_net, model.params, X)
        k0 = ad.leaf(model.params, model.k0_name)
        l0 = None
        if model.lambda0_name is not None:
            l0 = ad.lower_tri_exp_diag(ad.leaf(model.params, model.lambda0_name))
        log_sigma = ad.leaf(model.params, model.noise_name)
        sigma_sq = ad.exp(ad.scale(log_sigma, 2.0))
        log_det_sigma = ad.scale(ad.sum_all(log_sigma), 2.0)
        return _BlrPieces(phi, k0, l0, sigma_sq, log_det_sigma)
    # concrete prior: constants, raw inputs as features
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(
            f"identity features need {model.n_features} columns, got {X.shape[1]}")
    sigma_diag = np.diag(model.SigmaEps).reshape(1, -1)
    return _BlrPieces(
        phi=ad.constant(X),
        k0=ad.constant(model.K0),
        l0=ad.constant(model.Lambda0_chol),
        sigma_sq=ad.constant(sigma_diag),
        log_det_sigma=ad.constant([[float(np.sum(np.log(sigma_diag)))]]),
    )


def _prior_row_structure(pieces: _BlrPieces, full: bool):
    """Row covariance of the prior predictive over the feature rows.

    Returns the full matrix ΦΛ₀⁻¹Φᵀ + I when ``full``, otherwise its
    diagonal as a column.
    """
    phi = pieces.phi
    n = phi.shape[0]
    if pieces.l0 is None:
        signal = ad.matmul(phi, ad.transpose(phi))
        if full:
            return ad.add(signal, ad.constant(np.eye(n)))
        row_sum = ad.matmul(ad.mul(phi, phi),
                            ad.constant(np.ones((phi.shape[1], 1))))
        return ad.add(row_sum, ad.constant(np.ones((n, 1))))
    v = ad.triangular_solve(pieces.l0, ad.transpose(phi))
    if full:
        return ad.add(ad.matmul(ad.transpose(v), v), ad.constant(np.eye(n)))
    col_sum = ad.matmul(ad.constant(np.ones((1, v.shape[0]))), ad.mul(v, v))
    return ad.add(ad.transpose(col_sum), ad.constant(np.ones((n, 1))))


def _blr_posterior_nodes(pieces: _BlrPieces, Y: np.ndarray, t: int,
                         eval_idx: np.ndarray):
    """Predictive mean and whitened cross term after conditioning on the
    first t rows. Returns (mean_e, s) with s = L_τ⁻¹Φ_eᵀ."""
    phi_c = ad.take_rows(pieces.phi, np.arange(t))
    phi_e = ad.take_rows(pieces.phi, eval_idx)
    n_phi = pieces.phi.shape[1]
    if pieces.l0 is None:
        lam0 = ad.constant(np.eye(n_phi))
        lam0_k0 = pieces.k0
    else:
        lam0 = ad.matmul(pieces.l0, ad.transpose(pieces.l0))
        lam0_k0 = ad.matmul(lam0, pieces.k0)
    lam_tau = ad.add(ad.matmul(ad.transpose(phi_c), phi_c), lam0)
    l_tau = ad.cholesky(lam_tau)
    rhs = ad.add(ad.matmul(ad.transpose(phi_c), ad.constant(Y[:t])), lam0_k0)
    k_tau = ad.triangular_solve(l_tau, ad.triangular_solve(l_tau, rhs),
                                trans=True)
    mean_e = ad.matmul(phi_e, k_tau)
    s = ad.triangular_solve(l_tau, ad.transpose(phi_e))
    return mean_e, s


def _task_loss_blr(spec: LossSpec, model, draw: TaskDraw) -> Node:
    pieces = _blr_pieces(model, draw.X)
    n = draw.n

    if spec.kind == PR_FC:
        mean = ad.matmul(pieces.phi, pieces.k0)
        row_cov = _prior_row_structure(pieces, full=True)
        joint = _matnorm_node(draw.Y, mean, row_cov,
                              pieces.sigma_sq, pieces.log_det_sigma)
        return ad.scale(joint, -1.0 / n)

    if spec.kind == PR_DC:
        mean = ad.matmul(pieces.phi, pieces.k0)
        row_var = _prior_row_structure(pieces, full=False)
        marg = _diag_marginals_node(draw.Y, mean, row_var,
                                    pieces.sigma_sq, pieces.log_det_sigma)
        return ad.scale(marg, -1.0 / n)

    t = draw.t
    if spec.kind == POO:
        eval_idx = np.array([t])
    else:
        eval_idx = np.arange(t, n)
    mean_e, s = _blr_posterior_nodes(pieces, draw.Y, t, eval_idx)
    y_e = draw.Y[eval_idx]
    n_e = eval_idx.size

    if spec.kind == POM_FC:
        row_cov = ad.add(ad.matmul(ad.transpose(s), s),
                         ad.constant(np.eye(n_e)))
        joint = _matnorm_node(y_e, mean_e, row_cov,
                              pieces.sigma_sq, pieces.log_det_sigma)
        return ad.scale(joint, -1.0 / n_e)

    col_sum = ad.matmul(ad.constant(np.ones((1, s.shape[0]))), ad.mul(s, s))
    row_var = ad.add(ad.transpose(col_sum), ad.constant(np.ones((n_e, 1))))
    marg = _diag_marginals_node(y_e, mean_e, row_var,
                                pieces.sigma_sq, pieces.log_det_sigma)
    return ad.scale(marg, -1.0 / n_e)


def _task_loss_gpr(model: GprModel, draw: TaskDraw) -> Node:
    n = draw.n
    g = gram(model.kernel, model.params, draw.X)
    mean = mean_eval(model.mean, model.params, draw.X)
    row_cov = ad.add(g, ad.constant(np.eye(n)))
    log_sigma = ad.leaf(model.params, model.noise_name)
    sigma_sq = ad.exp(ad.scale(log_sigma, 2.0))
    log_det_sigma = ad.scale(ad.sum_all(log_sigma), 2.0)
    joint = _matnorm_node(draw.Y, mean, row_cov, sigma_sq, log_det_sigma)
    return ad.scale(joint, -1.0 / n)


def evaluate_loss(spec: LossSpec, model, batch: TaskBatch) -> Node:
    """Negative mean log-likelihood of a task batch as a scalar node.

    Per-task values average the scored points; the batch averages the
    tasks in their given order (deterministic reduction).
    """
    if not batch.draws:
        raise EmptyBatch("loss evaluation needs at least one task")
    if isinstance(model, GprModel):
        if spec.kind != PR_FC:
            raise IncompatibleModelLoss(
                f"GP models support PR_FC only, got {spec.kind}")
        task_losses = [_task_loss_gpr(model, d) for d in batch.draws]
    elif isinstance(model, (PriorHyper, BlrPrior)):
        task_losses = [_task_loss_blr(spec, model, d) for d in batch.draws]
    else:
        raise InvalidConfig(f"unsupported model type {type(model).__name__}")
    total = task_losses[0]
    for node in task_losses[1:]:
        total = ad.add(total, node)
    return ad.scale(total, 1.0 / len(task_losses))


def chain_rule_identity(model, task, ordering=None) -> tuple[float, float]:
    """Sequential one-step predictive densities versus the joint prior.

    Returns (lhs, rhs): lhs sums log q(y_{t+1} | x_{t+1}, D_t) over the
    task in the given ordering; rhs is the log joint prior density of all
    samples. The two agree for every model kind and ordering.
    """
    if hasattr(task, "X"):
        x_all, y_all = np.asarray(task.X, float), np.asarray(task.Y, float)
    else:
        x_raw, y_raw = task
        x_all, y_all = np.asarray(x_raw, float), np.asarray(y_raw, float)
    if ordering is not None:
        order = np.asarray(ordering, dtype=int)
        if sorted(order.tolist()) != list(range(x_all.shape[0])):
            raise InvalidConfig("ordering must be a permutation of the rows")
        x_all, y_all = x_all[order], y_all[order]

    lhs = 0.0
    for t in range(x_all.shape[0]):
        pred = models.predictive(model, x_all[:t], y_all[:t], x_all[t:t + 1])
        point_cov = pred.row_cov[0, 0] * pred.col_cov
        lhs += mvn_logpdf(y_all[t], pred.mean[0], point_cov)
    rhs = models.joint_prior_density(model, x_all, y_all)
    return lhs, rhs
