"""Scalar row-kernels and mean functions.

Three kernel kinds (squared-exponential on raw inputs, on learned latent
features, and the linear kernel on learned features) and three mean kinds
(zero, an independent net, and a linear head on the kernel's features).
Multi-output structure is separable throughout: these functions produce
the row factor; the output covariance is owned by the model.

Both :func:`gram` and :func:`mean_eval` return graph nodes so losses can
differentiate through them; inference paths take ``.value``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import FeatureNetSpec, Node, ParamStore
from .exceptions import InvalidConfig, ShapeMismatch

SE_RAW = "SE_RAW"
DEEP_SE = "DEEP_SE"
DEEP_LINEAR = "DEEP_LINEAR"
KERNEL_KINDS = (SE_RAW, DEEP_SE, DEEP_LINEAR)

ZERO = "ZERO"
DEEP_INDEPENDENT = "DEEP_INDEPENDENT"
SHARED_HEAD = "SHARED_HEAD"
MEAN_KINDS = (ZERO, DEEP_INDEPENDENT, SHARED_HEAD)


@dataclass(frozen=True)
class KernelSpec:
    """One row-kernel: kind plus the parameter names it reads."""

    kind: str
    feature_net: FeatureNetSpec | None = None
    log_lengthscale: str = "kernel/log_lengthscale"
    log_outputscale: str = "kernel/log_outputscale"

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidConfig(f"unknown kernel kind {self.kind!r}")
        if self.kind == SE_RAW and self.feature_net is not None:
            raise InvalidConfig("SE_RAW operates on raw inputs and takes no feature net")
        if self.kind in (DEEP_SE, DEEP_LINEAR) and self.feature_net is None:
            raise InvalidConfig(f"{self.kind} requires a feature net")


@dataclass(frozen=True)
class MeanSpec:
    """One mean function: kind plus the parameter names it reads.

    ``n_outputs`` fixes the output width where it cannot be inferred
    (ZERO always; SHARED_HEAD for sizing its head at init time).
    """

    kind: str
    feature_net: FeatureNetSpec | None = None
    head: str = "mean/k0"
    n_outputs: int | None = None

    def __post_init__(self):
        if self.kind not in MEAN_KINDS:
            raise InvalidConfig(f"unknown mean kind {self.kind!r}")
        if self.kind == ZERO and self.n_outputs is None:
            raise InvalidConfig("ZERO mean needs n_outputs")
        if self.kind == DEEP_INDEPENDENT and self.feature_net is None:
            raise InvalidConfig("DEEP_INDEPENDENT mean owns a net; none given")
        if self.kind == SHARED_HEAD:
            if self.feature_net is None:
                raise InvalidConfig("SHARED_HEAD reuses the kernel net; none given")
            if self.n_outputs is None:
                raise InvalidConfig("SHARED_HEAD needs n_outputs to size its head")


def gram(spec: KernelSpec, params: ParamStore, X) -> Node:
    """Gram matrix of the row-kernel at the given inputs.

    Entry (i, j) is k(x_i, x_j). SE kinds evaluate
    s² exp(−‖u−u'‖²/(2ℓ²)) on raw or latent coordinates; the linear kind
    is Φ(X)Φ(X)ᵀ.
    """
    x = ad._as_node(X)
    if x.shape[0] < 1:
        raise ShapeMismatch("gram needs at least one input row")
    if spec.kind == DEEP_LINEAR:
        phi = ad.forward(spec.feature_net, params, x)
        return ad.matmul(phi, ad.transpose(phi))
    if spec.kind == DEEP_SE:
        u = ad.forward(spec.feature_net, params, x)
    else:
        u = x
    sqdist = ad.pairwise_sqdist(u)
    log_ls = ad.leaf(params, spec.log_lengthscale)
    log_os = ad.leaf(params, spec.log_outputscale)
    # s²·exp(−d²/(2ℓ²)) = exp(2 log s − d²·e^{−2 log ℓ}/2)
    expo = ad.scale(ad.mul(sqdist, ad.exp(ad.scale(log_ls, -2.0))), -0.5)
    return ad.exp(ad.add(expo, ad.scale(log_os, 2.0)))


def mean_eval(spec: MeanSpec, params: ParamStore, X) -> Node:
    """Mean matrix at the given inputs, one row per input row."""
    x = ad._as_node(X)
    if spec.kind == ZERO:
        return ad.constant(np.zeros((x.shape[0], spec.n_outputs)))
    if spec.kind == DEEP_INDEPENDENT:
        return ad.forward(spec.feature_net, params, x)
    phi = ad.forward(spec.feature_net, params, x)
    head = ad.leaf(params, spec.head)
    if head.shape[0] != phi.shape[1]:
        raise ShapeMismatch(
            f"head {spec.head!r} has {head.shape[0]} rows, "
            f"features have {phi.shape[1]} columns")
    return ad.matmul(phi, head)


def init_kernel_params(spec: KernelSpec, rng: np.random.Generator,
                       store: ParamStore | None = None) -> ParamStore:
    """Add this kernel's parameters to the store.

    Net weights are Glorot-initialized; log length-scale and log
    output-scale start at zero (both scales 1).
    """
    store = store if store is not None else ParamStore()
    if spec.feature_net is not None:
        ad.init_net_params(spec.feature_net, rng, store)
    if spec.kind in (SE_RAW, DEEP_SE):
        store.add(spec.log_lengthscale, np.zeros((1, 1)))
        store.add(spec.log_outputscale, np.zeros((1, 1)))
    return store


def init_mean_params(spec: MeanSpec, rng: np.random.Generator,
                     store: ParamStore | None = None) -> ParamStore:
    """Add this mean's parameters to the store.

    SHARED_HEAD assumes the shared net is already present (added by the
    kernel) and only contributes its head, initialized to zero.
    """
    store = store if store is not None else ParamStore()
    if spec.kind == ZERO:
        return store
    if spec.kind == DEEP_INDEPENDENT:
        ad.init_net_params(spec.feature_net, rng, store)
        return store
    store.add(spec.head, np.zeros((spec.feature_net.output_dim, spec.n_outputs)))
    return store
