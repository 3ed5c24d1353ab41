"""Numerical certification suites for the model equivalences.

Three randomized suites certify, to stated tolerances:

1. ``blr_vs_gpr``: Bayesian linear regression and the matched
   linear-kernel GP (features whitened by the prior precision factor,
   shared-head mean) produce identical posterior predictives.
2. ``transform_invariance``: an invertible re-parametrization of the
   feature space, with the prior transformed accordingly, leaves the
   posterior predictive unchanged.
3. ``chain_rule``: the accumulated one-step-ahead predictive log
   density equals the joint prior log density, for every model family
   and any scoring order.

Each suite reports its maximum relative error and wall time per side.
``corrupt_lambda0=True`` deliberately mismatches the prior precision in
suite 1 and must make it fail; it is a negative control for the
harness itself.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import models as _models
from .autodiff import FeatureNetSpec, ParamStore, forward, init_net_params
from .blr import BlrPrior, posterior_update, predict, transform_prior
from .gpr import GprModel, posterior_predict
from .kernels import (
    DEEP_LINEAR,
    SHARED_HEAD,
    KernelSpec,
    MeanSpec,
)
from .objectives import chain_rule_identity

__all__ = ["SizeCaps", "run_verification"]

TOLERANCE = 1e-8


@dataclass(frozen=True)
class SizeCaps:
    """Upper bounds on randomized instance sizes."""

    n_phi: int = 8
    n_c: int = 20
    n_t: int = 10
    n_y: int = 3

    def to_dict(self) -> dict:
        return {
            "n_phi": self.n_phi,
            "n_c": self.n_c,
            "n_t": self.n_t,
            "n_y": self.n_y,
        }


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference relative to the scale of ``b`` (floored at 1)."""
    if a.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def _dist_err(p, q) -> float:
    return max(
        _rel_err(p.mean, q.mean),
        _rel_err(p.row_cov, q.row_cov),
        _rel_err(p.col_cov, q.col_cov),
    )


def _random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random well-conditioned symmetric positive definite matrix."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = rng.uniform(0.5, 2.0, size=n)
    return (q * eigs) @ q.T


def _random_prior(rng: np.random.Generator, n_phi: int, n_y: int) -> BlrPrior:
    k0 = rng.normal(size=(n_phi, n_y)) / np.sqrt(n_phi)
    lam0 = _random_spd(rng, n_phi)
    sigma = np.diag(rng.uniform(0.3, 1.5, size=n_y) ** 2)
    return BlrPrior(k0, np.linalg.cholesky(lam0), sigma)


def _suite_blr_vs_gpr(seed, n_instances: int, caps: SizeCaps,
                      corrupt_lambda0: bool) -> dict:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(1,))
    )
    max_err = 0.0
    t_blr = 0.0
    t_gpr = 0.0
    for _ in range(n_instances):
        n_phi = int(rng.integers(1, caps.n_phi + 1))
        n_c = int(rng.integers(0, caps.n_c + 1))
        n_t = int(rng.integers(1, caps.n_t + 1))
        n_y = int(rng.integers(1, caps.n_y + 1))
        n_x = int(rng.integers(1, 4))
        spec = FeatureNetSpec(
            n_x, (int(rng.integers(2, 6)),), n_phi, "tanh", name="phi"
        )
        params = init_net_params(spec, rng)
        for name in params.names():
            params[name] = params[name] + rng.normal(0.0, 0.5, params[name].shape)
        prior = _random_prior(rng, n_phi, n_y)
        x_c = rng.uniform(-2.0, 2.0, size=(n_c, n_x))
        x_t = rng.uniform(-2.0, 2.0, size=(n_t, n_x))
        y_c = rng.normal(size=(n_c, n_y))

        phi_c = forward(spec, params, x_c).value
        phi_t = forward(spec, params, x_t).value
        start = time.perf_counter()
        blr_dist = predict(posterior_update(prior, phi_c, y_c), phi_t)
        t_blr += time.perf_counter() - start

        lower = prior.Lambda0_chol
        if corrupt_lambda0:
            lower = lower * 1.02
        k = len(spec.hidden)
        matched = params.copy()
        w_last = matched[f"{spec.name}/W{k}"]
        b_last = matched[f"{spec.name}/b{k}"]
        matched[f"{spec.name}/W{k}"] = np.linalg.solve(lower, w_last.T).T
        matched[f"{spec.name}/b{k}"] = np.linalg.solve(lower, b_last.T).T
        store = ParamStore()
        for name, value in matched.items():
            store.add(name, value)
        store.add("mean/k0", lower.T @ prior.K0)
        store.add(
            "noise/log_sigma",
            0.5 * np.log(np.diag(prior.SigmaEps)).reshape(1, n_y),
        )
        model = GprModel(
            KernelSpec(DEEP_LINEAR, feature_net=spec),
            MeanSpec(SHARED_HEAD, feature_net=spec, n_outputs=n_y),
            store,
        )
        start = time.perf_counter()
        gpr_dist = posterior_predict(model, x_c, y_c, x_t)
        t_gpr += time.perf_counter() - start
        max_err = max(max_err, _dist_err(blr_dist, gpr_dist))
    return {
        "instances": n_instances,
        "max_rel_err": max_err,
        "tolerance": TOLERANCE,
        "blr_time_s": t_blr,
        "gpr_time_s": t_gpr,
        "pass": bool(max_err <= TOLERANCE),
    }


def _suite_transform(seed, n_instances: int, caps: SizeCaps) -> dict:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(2,))
    )
    max_err = 0.0
    elapsed = 0.0
    for _ in range(n_instances):
        n_phi = int(rng.integers(1, caps.n_phi + 1))
        n_c = int(rng.integers(0, caps.n_c + 1))
        n_t = int(rng.integers(1, caps.n_t + 1))
        n_y = int(rng.integers(1, caps.n_y + 1))
        prior = _random_prior(rng, n_phi, n_y)
        phi_c = rng.normal(size=(n_c, n_phi))
        phi_t = rng.normal(size=(n_t, n_phi))
        y_c = rng.normal(size=(n_c, n_y))
        # Invertible transform with log-uniform condition number < 1e6.
        u, _, vt = np.linalg.svd(rng.normal(size=(n_phi, n_phi)))
        cond = 10.0 ** rng.uniform(0.0, 5.95)
        if n_phi == 1:
            sv = np.ones(1)
        else:
            sv = np.geomspace(1.0, 1.0 / cond, n_phi)
        lp = (u * sv) @ vt

        base = predict(posterior_update(prior, phi_c, y_c), phi_t)
        start = time.perf_counter()
        prior2, wrap = transform_prior(prior, lp)
        other = predict(posterior_update(prior2, wrap(phi_c), y_c), wrap(phi_t))
        elapsed += time.perf_counter() - start
        max_err = max(max_err, _dist_err(other, base))
    return {
        "instances": n_instances,
        "max_rel_err": max_err,
        "tolerance": TOLERANCE,
        "transform_time_s": elapsed,
        "pass": bool(max_err <= TOLERANCE),
    }


_CHAIN_VARIANTS = (
    "blr-net",
    "blr-prior",
    "GPR-SE-IN",
    "GPR-DSE-IN",
    "GPR-DL-IN",
    "GPR-DL-SN",
)


def _jitter_params(params: ParamStore, rng: np.random.Generator,
                   scale: float = 0.3) -> None:
    for name in params.names():
        params[name] = params[name] + rng.normal(0.0, scale, params[name].shape)


def _chain_model(variant: str, n_x: int, n_y: int, rng: np.random.Generator):
    if variant == "blr-prior":
        return _random_prior(rng, n_x, n_y)
    if variant == "blr-net":
        model = _models.build_model(
            "BLR-PR-FC", n_x, n_y, rng, hidden=(3,), n_latent=3,
            learn_lambda0=True,
        )
    else:
        model = _models.build_model(
            variant, n_x, n_y, rng, hidden=(3,), n_latent=3
        )
    _jitter_params(model.params, rng)
    return model


def _suite_chain_rule(seed, n_instances: int, caps: SizeCaps) -> dict:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(3,))
    )
    max_err = 0.0
    elapsed = 0.0
    for i in range(n_instances):
        variant = _CHAIN_VARIANTS[i % len(_CHAIN_VARIANTS)]
        n_points = int(rng.integers(1, 9))
        n_x = int(rng.integers(1, 4))
        n_y = int(rng.integers(1, caps.n_y + 1))
        model = _chain_model(variant, n_x, n_y, rng)
        x = rng.uniform(-2.0, 2.0, size=(n_points, n_x))
        y = rng.normal(size=(n_points, n_y))
        ordering = rng.permutation(n_points)
        start = time.perf_counter()
        lhs, rhs = chain_rule_identity(model, (x, y), ordering)
        elapsed += time.perf_counter() - start
        max_err = max(max_err, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return {
        "instances": n_instances,
        "max_rel_err": max_err,
        "tolerance": TOLERANCE,
        "chain_time_s": elapsed,
        "pass": bool(max_err <= TOLERANCE),
    }


def run_verification(seed=0, n_instances: int = 200, chain_instances: int = 500,
                     caps: SizeCaps | None = None,
                     corrupt_lambda0: bool = False) -> dict:
    """Run all three certification suites and collect a report.

    Parameters
    ----------
    seed : int
        Master seed; each suite uses an independent derived stream.
    n_instances : int
        Instances for the posterior-equivalence and transform suites.
    chain_instances : int
        Instances for the chain-rule suite.
    caps : SizeCaps, optional
        Size caps for randomized instances.
    corrupt_lambda0 : bool
        Negative control: corrupt the prior precision used to match the
        GP in suite 1, which must break the equivalence.

    Returns
    -------
    dict
        Per-suite results plus an ``all_pass`` flag.
    """
    caps = caps or SizeCaps()
    suites = {
        "blr_vs_gpr": _suite_blr_vs_gpr(seed, n_instances, caps, corrupt_lambda0),
        "transform_invariance": _suite_transform(seed, n_instances, caps),
        "chain_rule": _suite_chain_rule(seed, chain_instances, caps),
    }
    return {
        "seed": int(seed),
        "caps": caps.to_dict(),
        "corrupt_lambda0": bool(corrupt_lambda0),
        "suites": suites,
        "all_pass": bool(all(s["pass"] for s in suites.values())),
    }
