"""Bayesian linear regression in a learned feature space.

A matrix-normal prior over the readout weights, conjugate batch and
streaming rank-1 posterior updates, the Kronecker-structured predictive,
and the prior reparametrization that leaves predictions invariant.

Row convention throughout: a feature matrix has one sample per row, so
the precision update reads Λ_τ = Φ_cᵀΦ_c + Λ₀.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from .autodiff import FeatureNetSpec, ParamStore
from .exceptions import ShapeMismatch, SingularTransform
from .numerics import CholFactor, KroneckerGaussian, chol_psd
from .validation import as_float_matrix, as_float_vector


@dataclass(frozen=True)
class BlrPrior:
    """Concrete prior: readout K ~ MN(K0, Λ₀⁻¹, Σ_ε), noise Σ_ε.

    ``Lambda0_chol`` is the lower factor of the prior precision Λ₀.
    ``fixed_lambda0`` marks Λ₀ as frozen during meta-training.
    """

    K0: np.ndarray
    Lambda0_chol: np.ndarray
    SigmaEps: np.ndarray
    fixed_lambda0: bool = False

    def __post_init__(self):
        k0 = as_float_matrix(self.K0, "K0")
        l0 = as_float_matrix(self.Lambda0_chol, "Lambda0_chol")
        se = as_float_matrix(self.SigmaEps, "SigmaEps")
        object.__setattr__(self, "K0", k0)
        object.__setattr__(self, "Lambda0_chol", np.tril(l0))
        object.__setattr__(self, "SigmaEps", se)
        n_phi, n_y = k0.shape
        if l0.shape != (n_phi, n_phi):
            raise ShapeMismatch(
                f"Lambda0_chol shape {l0.shape} does not match n_phi={n_phi}")
        if se.shape != (n_y, n_y):
            raise ShapeMismatch(
                f"SigmaEps shape {se.shape} does not match n_y={n_y}")
        if np.any(np.diag(self.Lambda0_chol) <= 0):
            raise ShapeMismatch("Lambda0_chol needs a positive diagonal")
        offdiag = se - np.diag(np.diag(se))
        if np.any(offdiag != 0.0) or np.any(np.diag(se) <= 0):
            raise ShapeMismatch("SigmaEps must be diagonal with positive entries")

    @property
    def n_features(self) -> int:
        return self.K0.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.K0.shape[1]

    def lambda0(self) -> np.ndarray:
        return self.Lambda0_chol @ self.Lambda0_chol.T


@dataclass(frozen=True)
class BlrPosterior:
    """Posterior after conditioning on some context rows."""

    Ktau: np.ndarray
    LambdaTau_chol: np.ndarray
    SigmaEps: np.ndarray
    n_context: int = 0

    @property
    def n_features(self) -> int:
        return self.Ktau.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.Ktau.shape[1]

    def lambda_tau(self) -> np.ndarray:
        return self.LambdaTau_chol @ self.LambdaTau_chol.T


def posterior_update(prior: BlrPrior, Phi_c, Y_c) -> BlrPosterior:
    """Batch conjugate update on a block of context rows.

    An empty context is allowed and returns the prior restated as a
    posterior.
    """
    phi = as_float_matrix(Phi_c, "Phi_c")
    y = as_float_matrix(Y_c, "Y_c")
    if phi.shape[1] != prior.n_features:
        raise ShapeMismatch(
            f"Phi_c has {phi.shape[1]} columns, prior has {prior.n_features} features")
    if y.shape != (phi.shape[0], prior.n_outputs):
        raise ShapeMismatch(
            f"Y_c shape {y.shape} does not match ({phi.shape[0]}, {prior.n_outputs})")
    if phi.shape[0] == 0:
        return BlrPosterior(Ktau=prior.K0.copy(),
                            LambdaTau_chol=prior.Lambda0_chol.copy(),
                            SigmaEps=prior.SigmaEps, n_context=0)
    # Λ_τ = Φ_cᵀΦ_c + Λ₀ factored directly from the stacked matrix
    # [Φ_c; L₀ᵀ]: its R factor satisfies RᵀR = Λ_τ, which avoids the
    # conditioning loss of forming the normal equations.
    stacked = np.vstack([phi, prior.Lambda0_chol.T])
    _, r = np.linalg.qr(stacked)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    lower = (r * signs[:, None]).T
    factor = CholFactor(lower=lower, jitter=0.0)
    # K_τ = Λ_τ⁻¹(Φ_cᵀY_c + Λ₀K₀) evaluated in update form
    # K₀ + Λ_τ⁻¹Φ_cᵀ(Y_c - Φ_cK₀), whose intermediates stay at the
    # scale of the data regardless of the feature parametrization.
    k_tau = prior.K0 + factor.solve(phi.T @ (y - phi @ prior.K0))
    return BlrPosterior(Ktau=k_tau, LambdaTau_chol=factor.lower,
                        SigmaEps=prior.SigmaEps, n_context=phi.shape[0])


def _chol_rank1_update(lower: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cholesky factor of L·Lᵀ + x·xᵀ in O(n²) via Givens-style sweeps."""
    l = lower.copy()
    x = x.copy()
    n = l.shape[0]
    for k in range(n):
        r = np.hypot(l[k, k], x[k])
        c = r / l[k, k]
        s = x[k] / l[k, k]
        l[k, k] = r
        if k + 1 < n:
            l[k + 1:, k] = (l[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * l[k + 1:, k]
    return l


def rank1_update(post: BlrPosterior, phi, y) -> BlrPosterior:
    """Fold one extra sample into the posterior in O(n_φ²·n_y).

    Matches a fresh batch update with the sample appended; the precision
    factor is updated in place rather than refactorized.
    """
    phi = as_float_vector(phi, "phi")
    y = as_float_vector(y, "y")
    if phi.shape[0] != post.n_features:
        raise ShapeMismatch(
            f"phi has {phi.shape[0]} entries, posterior has {post.n_features} features")
    if y.shape[0] != post.n_outputs:
        raise ShapeMismatch(
            f"y has {y.shape[0]} entries, posterior has {post.n_outputs} outputs")
    old_l = post.LambdaTau_chol
    # Information-form right-hand side carried by the old posterior.
    rhs = old_l @ (old_l.T @ post.Ktau) + np.outer(phi, y)
    new_l = _chol_rank1_update(old_l, phi)
    z = solve_triangular(new_l, rhs, lower=True)
    k_tau = solve_triangular(new_l, z, lower=True, trans="T")
    return BlrPosterior(Ktau=k_tau, LambdaTau_chol=new_l,
                        SigmaEps=post.SigmaEps, n_context=post.n_context + 1)


def predict(post: BlrPosterior, Phi_t) -> KroneckerGaussian:
    """Predictive over test rows: N(Φ_t K_τ, (I + Φ_t Λ_τ⁻¹ Φ_tᵀ) ⊗ Σ_ε)."""
    phi = as_float_matrix(Phi_t, "Phi_t")
    if phi.shape[0] < 1:
        raise ShapeMismatch("predict needs at least one test row")
    if phi.shape[1] != post.n_features:
        raise ShapeMismatch(
            f"Phi_t has {phi.shape[1]} columns, posterior has {post.n_features} features")
    mean = phi @ post.Ktau
    half = solve_triangular(post.LambdaTau_chol, phi.T, lower=True)
    row_cov = half.T @ half + np.eye(phi.shape[0])
    row_cov = 0.5 * (row_cov + row_cov.T)
    return KroneckerGaussian(mean=mean, row_cov=row_cov, col_cov=post.SigmaEps)


def transform_prior(prior: BlrPrior, Lp) -> tuple[BlrPrior, Callable]:
    """Reparametrize the prior by an invertible feature-space map.

    Returns the transformed prior (K₀' = LpᵀK₀, Λ₀'⁻¹ = LpᵀΛ₀⁻¹Lp) and a
    wrapper that maps feature matrices into the new coordinates, rows
    transforming as φ'(x) = Lp⁻¹φ(x). Predictions are invariant under the
    pair.
    """
    lp = as_float_matrix(Lp, "Lp")
    n_phi = prior.n_features
    if lp.shape != (n_phi, n_phi):
        raise ShapeMismatch(f"Lp shape {lp.shape} does not match n_phi={n_phi}")
    if not np.all(np.isfinite(lp)):
        raise SingularTransform("Lp contains non-finite entries")
    cond = np.linalg.cond(lp)
    if not np.isfinite(cond) or cond >= 1e8:
        raise SingularTransform(f"Lp condition number {cond:.3e} exceeds 1e8")

    k0_new = lp.T @ prior.K0
    # Λ₀' = Lp⁻¹ Λ₀ Lp⁻ᵀ = M Mᵀ with M = Lp⁻¹ L₀. A triangular factor of
    # M Mᵀ is read off a QR decomposition of Mᵀ without forming the
    # product, which would square the conditioning.
    m = np.linalg.solve(lp, prior.Lambda0_chol)
    _, r = np.linalg.qr(m.T)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    lower = (r * signs[:, None]).T
    new_prior = BlrPrior(K0=k0_new, Lambda0_chol=lower,
                         SigmaEps=prior.SigmaEps,
                         fixed_lambda0=prior.fixed_lambda0)

    def wrap(Phi):
        """Map a feature matrix (rows = samples) into the new coordinates."""
        phi = as_float_matrix(Phi, "Phi")
        return np.linalg.solve(lp, phi.T).T

    return new_prior, wrap


@dataclass
class PriorHyper:
    """Trainable meta-prior: feature net, readout prior, and noise.

    Bundles everything gradient descent touches: the feature-net weights,
    the prior mean head K₀, optionally an unconstrained parametrization
    of Λ₀'s Cholesky factor, and per-output log noise scales. When
    ``lambda0_name`` is None, Λ₀ is frozen at the identity (the linear-
    kernel reduction); when ``feature_net`` is None the features are the
    raw inputs.
    """

    n_features: int
    n_outputs: int
    params: ParamStore
    feature_net: FeatureNetSpec | None = None
    k0_name: str = "prior/k0"
    lambda0_name: str | None = None
    noise_name: str = "noise/log_sigma"
    learn_noise: bool = True

    def features(self, X) -> np.ndarray:
        """Concrete feature matrix for inference paths."""
        x = as_float_matrix(X, "X")
        if self.feature_net is None:
            if x.shape[1] != self.n_features:
                raise ShapeMismatch(
                    f"identity features need {self.n_features} input columns, "
                    f"got {x.shape[1]}")
            return x
        return ad.forward(self.feature_net, self.params, x).value

    def sigma_eps(self) -> np.ndarray:
        log_sigma = self.params[self.noise_name].reshape(-1)
        return np.diag(np.exp(2.0 * log_sigma))

    def materialize(self) -> BlrPrior:
        """Freeze the current parameters into a concrete prior."""
        if self.lambda0_name is None:
            l0 = np.eye(self.n_features)
        else:
            raw = self.params[self.lambda0_name]
            l0 = np.tril(raw, -1) + np.diag(np.exp(np.diag(raw)))
        return BlrPrior(K0=self.params[self.k0_name], Lambda0_chol=l0,
                        SigmaEps=self.sigma_eps(),
                        fixed_lambda0=self.lambda0_name is None)

    def frozen_names(self) -> list[str]:
        return [] if self.learn_noise else [self.noise_name]


def init_prior_hyper(n_features: int, n_outputs: int,
                     rng: np.random.Generator,
                     feature_net: FeatureNetSpec | None = None,
                     learn_lambda0: bool = False,
                     learn_noise: bool = True,
                     store: ParamStore | None = None) -> PriorHyper:
    """Fresh trainable prior: zero K₀, Λ₀ = I, unit noise scales."""
    store = store if store is not None else ParamStore()
    if feature_net is not None:
        if feature_net.output_dim != n_features:
            raise ShapeMismatch(
                f"feature net emits {feature_net.output_dim} features, "
                f"prior expects {n_features}")
        ad.init_net_params(feature_net, rng, store)
    store.add("prior/k0", np.zeros((n_features, n_outputs)))
    lambda0_name = None
    if learn_lambda0:
        lambda0_name = "prior/lambda0_raw"
        store.add(lambda0_name, np.zeros((n_features, n_features)))
    store.add("noise/log_sigma", np.zeros((1, n_outputs)))
    return PriorHyper(n_features=n_features, n_outputs=n_outputs,
                      params=store, feature_net=feature_net,
                      lambda0_name=lambda0_name, learn_noise=learn_noise)
