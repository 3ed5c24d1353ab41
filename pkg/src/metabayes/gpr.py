"""Multi-output Gaussian process regression with separable covariance.

The joint over n outputs-per-point targets has covariance
(row factor) ⊗ Σ_ε, where the row factor is the kernel gram plus
identity observation noise. Conditioning therefore happens on the row
factor alone; the output covariance rides along unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore
from .exceptions import ShapeMismatch
from .kernels import KernelSpec, MeanSpec, gram, mean_eval
from .numerics import KroneckerGaussian, chol_psd
from .validation import as_float_matrix


@dataclass
class GprModel:
    """A GP regressor: kernel, mean, noise, and their parameters.

    Noise is exp-parametrized per output dimension under
    ``noise_name`` in the store, so it can be trained like any other
    parameter; ``learn_noise=False`` freezes it.
    """

    kernel: KernelSpec
    mean: MeanSpec
    params: ParamStore
    noise_name: str = "noise/log_sigma"
    learn_noise: bool = True

    @property
    def n_outputs(self) -> int:
        return self.params[self.noise_name].size

    @property
    def SigmaEps(self) -> np.ndarray:
        log_sigma = self.params[self.noise_name].reshape(-1)
        return np.diag(np.exp(2.0 * log_sigma))

    def frozen_names(self) -> list[str]:
        return [] if self.learn_noise else [self.noise_name]


def joint_prior(model: GprModel, X) -> KroneckerGaussian:
    """Prior over the targets at the given inputs, including noise."""
    x = as_float_matrix(X, "X")
    if x.shape[0] < 1:
        raise ShapeMismatch("joint_prior needs at least one input row")
    g = gram(model.kernel, model.params, x).value
    m = mean_eval(model.mean, model.params, x).value
    row_cov = g + np.eye(x.shape[0])
    return KroneckerGaussian(mean=m, row_cov=row_cov, col_cov=model.SigmaEps)


def posterior_predict(model: GprModel, X_c, Y_c, X_t) -> KroneckerGaussian:
    """Exact conditioning on context observations.

    Blocks come from one gram over the concatenated inputs; noise sits on
    the context and test diagonal blocks but never on the cross block.
    An empty context returns the prior over the test inputs.
    """
    x_c = as_float_matrix(X_c, "X_c")
    y_c = as_float_matrix(Y_c, "Y_c")
    x_t = as_float_matrix(X_t, "X_t")
    if x_t.shape[0] < 1:
        raise ShapeMismatch("posterior_predict needs at least one test row")
    n_c = x_c.shape[0]
    if y_c.shape[0] != n_c:
        raise ShapeMismatch(f"X_c has {n_c} rows but Y_c has {y_c.shape[0]}")
    if n_c == 0:
        return joint_prior(model, x_t)
    if x_c.shape[1] != x_t.shape[1]:
        raise ShapeMismatch(
            f"X_c has {x_c.shape[1]} input columns, X_t has {x_t.shape[1]}")
    if y_c.shape[1] != model.n_outputs:
        raise ShapeMismatch(
            f"Y_c has {y_c.shape[1]} outputs, model has {model.n_outputs}")

    x_all = np.vstack([x_c, x_t])
    g = gram(model.kernel, model.params, x_all).value
    m = mean_eval(model.mean, model.params, x_all).value
    s11 = g[:n_c, :n_c] + np.eye(n_c)
    s21 = g[n_c:, :n_c]
    s22 = g[n_c:, n_c:] + np.eye(x_t.shape[0])

    factor = chol_psd(s11)
    gain = factor.solve(s21.T).T
    mean_t = m[n_c:] + gain @ (y_c - m[:n_c])
    row_cov = s22 - gain @ s21.T
    row_cov = 0.5 * (row_cov + row_cov.T)
    return KroneckerGaussian(mean=mean_t, row_cov=row_cov, col_cov=model.SigmaEps)
