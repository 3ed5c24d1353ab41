"""Scikit-learn style estimators wrapping the meta-learning models.

Both estimators follow the usual contract: constructor arguments are
stored verbatim, all work happens in ``fit``, and fitted attributes
carry a trailing underscore.  ``fit`` consumes a collection of tasks (a
:class:`~metabayes.data.TaskSet` or an iterable of ``(X, Y)`` pairs)
rather than a flat design matrix, since meta-learning trains across
tasks.  After fitting, ``adapt`` conditions on context points and
``predict`` returns posterior predictive means (optionally with
marginal standard deviations).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import models as _models
from .autodiff import FeatureNetSpec, ParamStore
from .data import TaskSet
from .exceptions import InvalidConfig
from .gpr import GprModel
from .kernels import (
    DEEP_INDEPENDENT,
    DEEP_LINEAR,
    DEEP_SE,
    SE_RAW,
    SHARED_HEAD,
    ZERO,
    KernelSpec,
    MeanSpec,
    init_kernel_params,
    init_mean_params,
)
from .objectives import LOSS_KINDS, LossSpec
from .trainer import OptimHyper, train

__all__ = ["MetaBLRRegressor", "MetaGPRegressor"]

_INIT_KEY = 2000001


def _as_taskset(tasks) -> TaskSet:
    if isinstance(tasks, TaskSet):
        return tasks
    return TaskSet.from_pairs(tasks)


class _MetaRegressorMixin:
    """Shared fitted-model behaviour of the two estimators."""

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; "
                "call fit before using it"
            )

    def _hyper(self) -> OptimHyper:
        return OptimHyper(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            tasks_per_batch=self.tasks_per_batch,
            max_steps=self.max_steps,
            eval_every=self.eval_every,
            patience=self.patience,
        )

    def adapt(self, X_context, Y_context):
        """Store context points for subsequent ``predict`` calls."""
        self._check_fitted()
        x = np.asarray(X_context, dtype=float)
        y = np.asarray(Y_context, dtype=float)
        dist = self.predict_dist(x, y, np.zeros((1, self.n_inputs_)))
        del dist  # shape/compatibility check only
        self.context_ = (x, y)
        return self

    def predict_dist(self, X_context, Y_context, X_test):
        """Posterior predictive distribution for ``X_test``.

        Returns a :class:`~metabayes.numerics.KroneckerGaussian`.
        """
        self._check_fitted()
        return _models.predictive(self.model_, X_context, Y_context, X_test)

    def predict(self, X, return_std: bool = False):
        """Predictive means at ``X`` given the adapted context.

        With ``return_std=True`` also returns the per-dimension
        marginal standard deviations.  Without a prior ``adapt`` call
        the prediction comes from the task prior.
        """
        self._check_fitted()
        x = np.asarray(X, dtype=float)
        ctx = getattr(self, "context_", None)
        if ctx is None:
            x_c = np.zeros((0, self.n_inputs_))
            y_c = np.zeros((0, self.n_outputs_))
        else:
            x_c, y_c = ctx
        dist = self.predict_dist(x_c, y_c, x)
        mean = np.asarray(dist.mean, dtype=float)
        if not return_std:
            return mean
        return mean, np.sqrt(dist.marginal_variances())


class MetaBLRRegressor(_MetaRegressorMixin, BaseEstimator):
    """Bayesian linear regression on learned features, meta-trained.

    Parameters
    ----------
    loss : str
        Training objective, one of ``{"PR_FC", "PR_DC", "POO",
        "POM_FC", "POM_DC"}``.
    hidden : tuple of int
        Hidden layer widths of the feature network.
    n_latent : int
        Feature dimension (network output width).
    activation : str
        ``"tanh"`` or ``"relu"``.
    learn_lambda0 : bool
        Learn the prior precision factor (default keeps it identity).
    learn_noise : bool
        Learn the observation noise scales.
    learning_rate, weight_decay, tasks_per_batch, max_steps,
    eval_every, patience :
        Optimizer schedule, see :class:`~metabayes.trainer.OptimHyper`.
    seed : int
        Seed for initialization and training streams.
    """

    def __init__(self, loss: str = "PR_FC", hidden=(32, 32), n_latent: int = 32,
                 activation: str = "tanh", learn_lambda0: bool = False,
                 learn_noise: bool = True, learning_rate: float = 1e-3,
                 weight_decay: float = 1e-4, tasks_per_batch: int = 4,
                 max_steps: int = 2000, eval_every: int = 250,
                 patience: int = 12, seed: int = 0):
        self.loss = loss
        self.hidden = hidden
        self.n_latent = n_latent
        self.activation = activation
        self.learn_lambda0 = learn_lambda0
        self.learn_noise = learn_noise
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.tasks_per_batch = tasks_per_batch
        self.max_steps = max_steps
        self.eval_every = eval_every
        self.patience = patience
        self.seed = seed

    def fit(self, X, y=None):
        """Meta-train on a collection of tasks.

        Parameters
        ----------
        X : TaskSet or iterable of (array, array)
            Training tasks.
        y : ignored
            Present for interface compatibility.
        """
        if self.loss not in LOSS_KINDS:
            raise InvalidConfig(
                f"unknown loss {self.loss!r}; expected one of {sorted(LOSS_KINDS)}"
            )
        tasks = _as_taskset(X)
        method = f"BLR-{self.loss.replace('_', '-')}"
        if self.loss == "POO":
            method = "BLR-POO-D/FC"
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(_INIT_KEY,))
        )
        model = _models.build_model(
            method, tasks.n_x, tasks.n_y, rng,
            hidden=tuple(self.hidden), n_latent=self.n_latent,
            activation=self.activation, learn_lambda0=self.learn_lambda0,
            learn_noise=self.learn_noise,
        )
        params, history = train(
            model, LossSpec(self.loss), tasks, self._hyper(), self.seed
        )
        self.model_ = model
        self.params_ = params
        self.history_ = history
        self.n_inputs_ = tasks.n_x
        self.n_outputs_ = tasks.n_y
        self.context_ = None
        return self


_KERNEL_NAMES = {"se": SE_RAW, "deep-se": DEEP_SE, "deep-linear": DEEP_LINEAR}
_MEAN_NAMES = {"zero": ZERO, "independent": DEEP_INDEPENDENT, "shared": SHARED_HEAD}


class MetaGPRegressor(_MetaRegressorMixin, BaseEstimator):
    """Multi-output GP regression with learned kernels, meta-trained.

    Parameters
    ----------
    kernel : str
        ``"se"`` (squared exponential on raw inputs), ``"deep-se"``
        (squared exponential on network features), or ``"deep-linear"``
        (linear kernel on network features).
    mean : str
        ``"zero"``, ``"independent"`` (its own network), or ``"shared"``
        (linear head on the deep kernel's features; requires a deep
        kernel).
    """

    def __init__(self, kernel: str = "se", mean: str = "independent",
                 hidden=(32, 32), n_latent: int = 32, activation: str = "tanh",
                 learn_noise: bool = True, learning_rate: float = 1e-3,
                 weight_decay: float = 1e-4, tasks_per_batch: int = 4,
                 max_steps: int = 2000, eval_every: int = 250,
                 patience: int = 12, seed: int = 0):
        self.kernel = kernel
        self.mean = mean
        self.hidden = hidden
        self.n_latent = n_latent
        self.activation = activation
        self.learn_noise = learn_noise
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.tasks_per_batch = tasks_per_batch
        self.max_steps = max_steps
        self.eval_every = eval_every
        self.patience = patience
        self.seed = seed

    def _build(self, n_x: int, n_y: int, rng) -> GprModel:
        if self.kernel not in _KERNEL_NAMES:
            raise InvalidConfig(
                f"unknown kernel {self.kernel!r}; expected one of "
                f"{sorted(_KERNEL_NAMES)}"
            )
        if self.mean not in _MEAN_NAMES:
            raise InvalidConfig(
                f"unknown mean {self.mean!r}; expected one of {sorted(_MEAN_NAMES)}"
            )
        kernel_kind = _KERNEL_NAMES[self.kernel]
        mean_kind = _MEAN_NAMES[self.mean]
        if mean_kind == SHARED_HEAD and kernel_kind == SE_RAW:
            raise InvalidConfig("a shared-head mean requires a deep kernel")
        store = ParamStore()
        kernel_net = None
        if kernel_kind != SE_RAW:
            kernel_net = FeatureNetSpec(
                n_x, tuple(self.hidden), self.n_latent, self.activation, name="phi"
            )
        kernel_spec = KernelSpec(kernel_kind, feature_net=kernel_net)
        init_kernel_params(kernel_spec, rng, store)
        if mean_kind == ZERO:
            mean_spec = MeanSpec(ZERO, n_outputs=n_y)
        elif mean_kind == DEEP_INDEPENDENT:
            mean_net = FeatureNetSpec(
                n_x, tuple(self.hidden), n_y, self.activation, name="mean"
            )
            mean_spec = MeanSpec(DEEP_INDEPENDENT, feature_net=mean_net)
        else:
            mean_spec = MeanSpec(
                SHARED_HEAD, feature_net=kernel_net, n_outputs=n_y
            )
        init_mean_params(mean_spec, rng, store)
        store.add("noise/log_sigma", np.zeros((1, n_y)))
        return GprModel(kernel_spec, mean_spec, store, learn_noise=self.learn_noise)

    def fit(self, X, y=None):
        """Meta-train on a collection of tasks (joint prior likelihood)."""
        tasks = _as_taskset(X)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(_INIT_KEY,))
        )
        model = self._build(tasks.n_x, tasks.n_y, rng)
        params, history = train(
            model, LossSpec("PR_FC"), tasks, self._hyper(), self.seed
        )
        self.model_ = model
        self.params_ = params
        self.history_ = history
        self.n_inputs_ = tasks.n_x
        self.n_outputs_ = tasks.n_y
        self.context_ = None
        return self
