"""Model construction and the shared predictive surface.

Benchmark methods are named by short strings (e.g. ``BLR-PR-FC``,
``GPR-SE-IN``). The registry below maps each name to an architecture
family plus its training loss kind; :func:`build_model` turns a name
into a ready-to-train model, and :func:`predictive` gives every model
kind one conditioning interface.
"""

from __future__ import annotations

import numpy as np

from . import blr as blr_mod
from . import gpr as gpr_mod
from . import kernels
from .autodiff import FeatureNetSpec, ParamStore
from .blr import BlrPrior, PriorHyper, init_prior_hyper
from .exceptions import InvalidConfig, ShapeMismatch
from .gpr import GprModel
from .kernels import KernelSpec, MeanSpec
from .numerics import KroneckerGaussian

# method name -> (family, kernel kind or None, mean kind or None, loss kind)
METHODS: dict[str, dict] = {
    "GPR-SE-IN": {"family": "GPR", "kernel": kernels.SE_RAW,
                  "mean": kernels.DEEP_INDEPENDENT, "loss": "PR_FC"},
    "GPR-DSE-IN": {"family": "GPR", "kernel": kernels.DEEP_SE,
                   "mean": kernels.DEEP_INDEPENDENT, "loss": "PR_FC"},
    "GPR-DL-IN": {"family": "GPR", "kernel": kernels.DEEP_LINEAR,
                  "mean": kernels.DEEP_INDEPENDENT, "loss": "PR_FC"},
    "GPR-DL-SN": {"family": "GPR", "kernel": kernels.DEEP_LINEAR,
                  "mean": kernels.SHARED_HEAD, "loss": "PR_FC"},
    "BLR-PR-FC": {"family": "BLR", "loss": "PR_FC"},
    "BLR-PR-DC": {"family": "BLR", "loss": "PR_DC"},
    "BLR-POO-D/FC": {"family": "BLR", "loss": "POO"},
    "BLR-POM-FC": {"family": "BLR", "loss": "POM_FC"},
    "BLR-POM-DC": {"family": "BLR", "loss": "POM_DC"},
}


def loss_kind_for(method: str) -> str:
    if method not in METHODS:
        raise InvalidConfig(
            f"unknown method {method!r}; known: {sorted(METHODS)}")
    return METHODS[method]["loss"]


def build_model(method: str, n_inputs: int, n_outputs: int,
                rng: np.random.Generator,
                hidden: tuple = (32, 32), n_latent: int = 32,
                activation: str = "tanh",
                learn_lambda0: bool = False,
                learn_noise: bool = True):
    """Construct a freshly initialized model for a benchmark method."""
    if method not in METHODS:
        raise InvalidConfig(
            f"unknown method {method!r}; known: {sorted(METHODS)}")
    entry = METHODS[method]
    hidden = tuple(int(h) for h in hidden)

    if entry["family"] == "BLR":
        net = FeatureNetSpec(input_dim=n_inputs, hidden=hidden,
                             output_dim=int(n_latent), activation=activation,
                             name="phi")
        return init_prior_hyper(n_features=int(n_latent), n_outputs=n_outputs,
                                rng=rng, feature_net=net,
                                learn_lambda0=learn_lambda0,
                                learn_noise=learn_noise)

    kernel_kind = entry["kernel"]
    mean_kind = entry["mean"]
    store = ParamStore()
    if kernel_kind == kernels.SE_RAW:
        kernel = KernelSpec(kind=kernel_kind)
    else:
        net = FeatureNetSpec(input_dim=n_inputs, hidden=hidden,
                             output_dim=int(n_latent), activation=activation,
                             name="phi")
        kernel = KernelSpec(kind=kernel_kind, feature_net=net)
    kernels.init_kernel_params(kernel, rng, store)

    if mean_kind == kernels.SHARED_HEAD:
        mean = MeanSpec(kind=mean_kind, feature_net=kernel.feature_net,
                        n_outputs=n_outputs)
    else:
        mean_net = FeatureNetSpec(input_dim=n_inputs, hidden=hidden,
                                  output_dim=n_outputs, activation=activation,
                                  name="mean")
        mean = MeanSpec(kind=mean_kind, feature_net=mean_net,
                        n_outputs=n_outputs)
    kernels.init_mean_params(mean, rng, store)

    store.add("noise/log_sigma", np.zeros((1, n_outputs)))
    return GprModel(kernel=kernel, mean=mean, params=store,
                    learn_noise=learn_noise)


def predictive(model, X_c, Y_c, X_t) -> KroneckerGaussian:
    """Condition any model kind on context data and predict test rows.

    Accepts a trainable BLR bundle, a concrete BLR prior (raw inputs as
    features), or a GP model. Context may be empty.
    """
    if isinstance(model, PriorHyper):
        prior = model.materialize()
        x_c = np.asarray(X_c, dtype=float)
        if x_c.size == 0:
            phi_c = np.zeros((0, model.n_features))
        else:
            phi_c = model.features(X_c)
        post = blr_mod.posterior_update(prior, phi_c, Y_c)
        return blr_mod.predict(post, model.features(X_t))
    if isinstance(model, BlrPrior):
        x_c = np.asarray(X_c, dtype=float)
        phi_c = np.zeros((0, model.n_features)) if x_c.size == 0 else x_c
        post = blr_mod.posterior_update(model, phi_c, Y_c)
        return blr_mod.predict(post, X_t)
    if isinstance(model, GprModel):
        return gpr_mod.posterior_predict(model, X_c, Y_c, X_t)
    raise InvalidConfig(f"unsupported model type {type(model).__name__}")


def joint_prior_density(model, X, Y) -> float:
    """Log-density of a whole task under the model's joint prior."""
    x = np.asarray(X, dtype=float)
    empty_c = np.zeros((0, x.shape[1]))
    empty_y = np.zeros((0, np.asarray(Y).shape[1]))
    return predictive(model, empty_c, empty_y, x).log_density(Y)


def n_outputs_of(model) -> int:
    if isinstance(model, (PriorHyper, BlrPrior, GprModel)):
        return model.n_outputs
    raise InvalidConfig(f"unsupported model type {type(model).__name__}")


def frozen_names(model) -> list[str]:
    if isinstance(model, (PriorHyper, GprModel)):
        return model.frozen_names()
    return []


def replace_params(model, params: ParamStore) -> None:
    """Swap in loaded parameters after checking shapes match."""
    if not isinstance(model, (PriorHyper, GprModel)):
        raise InvalidConfig(
            f"model type {type(model).__name__} has no parameters")
    if model.params.shapes() != params.shapes():
        raise ShapeMismatch(
            "loaded parameters do not match the model architecture: "
            f"{params.shapes()} vs {model.params.shapes()}")
    model.params = params.copy()
