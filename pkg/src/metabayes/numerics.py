"""Dense Gaussian numerics: Cholesky with a jitter ladder, Gaussian and
matrix-normal log-densities, and exact conditioning of a dense joint.

All covariances here are plain float64 matrices. Kronecker-structured
covariances are kept factored as (row_cov, col_cov) in
:class:`KroneckerGaussian` and are only expanded densely inside
:func:`gaussian_condition`, which serves as the reference path the fast
model-specific predictives are tested against.

Vectorization convention, used everywhere in the package: ``vec(Y)`` of an
``n x n_y`` matrix is row-major (C order), matching a dense covariance of
``np.kron(row_cov, col_cov)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    IndexOutOfRange,
    NotPositiveDefinite,
    ShapeMismatch,
)
from .validation import as_float_matrix, as_float_vector, check_square, check_symmetric

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative jitter ladder: multiples of mean(diag(m)) tried in order until
# the factorization succeeds.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular Cholesky factor of ``m + jitter * I``."""

    lower: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def log_det(self) -> float:
        """log-determinant of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (L Lᵀ) x = b."""
        y = solve_triangular(self.lower, b, lower=True)
        return solve_triangular(self.lower, y, lower=True, trans="T")

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve L x = b. Useful for whitening: ‖L⁻¹r‖² = rᵀ(LLᵀ)⁻¹r."""
        return solve_triangular(self.lower, b, lower=True)


def chol_psd(m, max_jitter: float = 1e-4) -> CholFactor:
    """Cholesky factorization robust to semidefinite inputs.

    Tries ``m + jitter * I`` for each rung of a fixed relative ladder
    (multiples of ``mean(diag(m))``) and returns the first factorization
    that succeeds with ``jitter <= max_jitter * mean(diag(m))``.

    Parameters
    ----------
    m : array-like
        Square symmetric matrix.
    max_jitter : float
        Largest allowed relative jitter.

    Returns
    -------
    CholFactor
        Factor of ``m + jitter * I`` and the absolute jitter used.

    Raises
    ------
    NotSquare, NotSymmetric
        On shape violations.
    NotPositiveDefinite
        If every allowed rung fails.
    """
    m = as_float_matrix(m, "m")
    check_square(m, "m")
    check_symmetric(m, "m", rtol=1e-9)
    if m.shape[0] == 0:
        return CholFactor(lower=np.zeros((0, 0)), jitter=0.0)
    scale = float(np.mean(np.diag(m)))
    for rel in JITTER_LADDER:
        if rel > max_jitter:
            break
        jitter = rel * scale
        try:
            lower = np.linalg.cholesky(m + jitter * np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            continue
        return CholFactor(lower=lower, jitter=jitter)
    raise NotPositiveDefinite(
        f"matrix of shape {m.shape} not positive definite within jitter "
        f"{max_jitter} * mean(diag)")


@dataclass(frozen=True)
class KroneckerGaussian:
    """Matrix-variate Gaussian with separable covariance.

    The distribution of an ``n x n_y`` matrix ``Y`` with
    ``vec(Y) ~ N(vec(mean), row_cov ⊗ col_cov)`` under row-major vec.
    """

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        mean = as_float_matrix(self.mean, "mean")
        row_cov = as_float_matrix(self.row_cov, "row_cov")
        col_cov = as_float_matrix(self.col_cov, "col_cov")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "row_cov", row_cov)
        object.__setattr__(self, "col_cov", col_cov)
        n, n_y = mean.shape
        if row_cov.shape != (n, n):
            raise ShapeMismatch(
                f"row_cov shape {row_cov.shape} does not match mean rows {n}")
        if col_cov.shape != (n_y, n_y):
            raise ShapeMismatch(
                f"col_cov shape {col_cov.shape} does not match mean cols {n_y}")
        # SPD contract: both factors must admit a Cholesky factorization.
        chol_psd(row_cov)
        chol_psd(col_cov)

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def n_y(self) -> int:
        return self.mean.shape[1]

    def to_dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Expand to (vec mean, dense covariance). Row-major vec."""
        return self.mean.reshape(-1).copy(), np.kron(self.row_cov, self.col_cov)

    def marginal_variances(self) -> np.ndarray:
        """Per-entry variances as an ``n x n_y`` matrix."""
        return np.outer(np.diag(self.row_cov), np.diag(self.col_cov))

    def log_density(self, Y) -> float:
        """Log-density of one observed matrix."""
        return matnorm_logpdf(Y, self.mean, self.row_cov, self.col_cov)


def mvn_logpdf(y, mean, cov) -> float:
    """Multivariate normal log-density via a Cholesky solve.

    Returns −½[(y−μ)ᵀΣ⁻¹(y−μ) + ln|Σ| + n ln 2π].
    """
    y = as_float_vector(y, "y")
    mean = as_float_vector(mean, "mean")
    cov = as_float_matrix(cov, "cov")
    n = y.shape[0]
    if mean.shape[0] != n:
        raise ShapeMismatch(f"y has {n} entries but mean has {mean.shape[0]}")
    if cov.shape != (n, n):
        raise ShapeMismatch(f"cov shape {cov.shape} does not match n={n}")
    factor = chol_psd(cov)
    z = factor.half_solve(y - mean)
    quad = float(z @ z)
    return -0.5 * (quad + factor.log_det() + n * LOG_2PI)


def matnorm_logpdf(Y, M, row_cov, col_cov) -> float:
    """Matrix-normal log-density with separable covariance.

    Equals ``mvn_logpdf(vec(Y), vec(M), row_cov ⊗ col_cov)`` but costs
    O(n³ + n_y³) instead of O((n·n_y)³), using
    |A ⊗ B| = |A|^{n_y}·|B|^{n} and a double whitening of the residual.
    """
    Y = as_float_matrix(Y, "Y")
    M = as_float_matrix(M, "M")
    row_cov = as_float_matrix(row_cov, "row_cov")
    col_cov = as_float_matrix(col_cov, "col_cov")
    n, n_y = Y.shape
    if M.shape != (n, n_y):
        raise ShapeMismatch(f"M shape {M.shape} does not match Y shape {Y.shape}")
    if row_cov.shape != (n, n):
        raise ShapeMismatch(f"row_cov shape {row_cov.shape} does not match n={n}")
    if col_cov.shape != (n_y, n_y):
        raise ShapeMismatch(f"col_cov shape {col_cov.shape} does not match n_y={n_y}")
    row_factor = chol_psd(row_cov)
    col_factor = chol_psd(col_cov)
    # tr(V⁻¹ Rᵀ U⁻¹ R) = ‖L_V⁻¹ (L_U⁻¹ R)ᵀ‖_F²
    half = row_factor.half_solve(Y - M)
    white = col_factor.half_solve(half.T)
    quad = float(np.sum(white * white))
    log_det = n_y * row_factor.log_det() + n * col_factor.log_det()
    return -0.5 * (quad + log_det + n * n_y * LOG_2PI)


def gaussian_condition(mean, cov, observed_indices, observed_values
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Condition a dense joint Gaussian on exact observations.

    This is the reference conditioning path: the model-specific
    predictives must agree with it after densifying their joints.

    Parameters
    ----------
    mean : array-like, shape (d,)
        Joint mean.
    cov : array-like, shape (d, d)
        Joint covariance, SPD.
    observed_indices : sequence of int
        Distinct coordinates that are observed.
    observed_values : array-like
        Values at those coordinates, same length.

    Returns
    -------
    (mean, cov)
        Posterior mean vector and covariance of the unobserved block, in
        the original coordinate order. Observing nothing returns the
        joint unchanged; observing everything returns empty arrays.
    """
    mean = as_float_vector(mean, "mean")
    cov = as_float_matrix(cov, "cov")
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise ShapeMismatch(f"cov shape {cov.shape} does not match mean length {d}")
    idx = np.asarray(list(observed_indices), dtype=int)
    values = as_float_vector(observed_values, "observed_values") if len(idx) else np.zeros(0)
    if idx.shape[0] != values.shape[0]:
        raise ShapeMismatch(
            f"{idx.shape[0]} observed indices but {values.shape[0]} values")
    if idx.size == 0:
        return mean.copy(), cov.copy()
    if np.any(idx < 0) or np.any(idx >= d):
        raise IndexOutOfRange(f"observed indices must lie in [0, {d})")
    if np.unique(idx).shape[0] != idx.shape[0]:
        raise IndexOutOfRange("observed indices must be distinct")

    free = np.setdiff1d(np.arange(d), idx)
    s11 = cov[np.ix_(idx, idx)]
    factor = chol_psd(s11)
    resid = values - mean[idx]
    if free.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    s21 = cov[np.ix_(free, idx)]
    gain = factor.solve(s21.T).T          # Σ₂₁ Σ₁₁⁻¹
    post_mean = mean[free] + gain @ resid
    post_cov = cov[np.ix_(free, free)] - gain @ s21.T
    post_cov = 0.5 * (post_cov + post_cov.T)
    return post_mean, post_cov
