"""Meta-training loop: decoupled AdamW, early stopping, checkpoints.

Training minimizes a task-averaged loss from
:mod:`metabayes.objectives` over the parameters of a model built by
:mod:`metabayes.models`.  Each step samples a batch of tasks with
replacement and one conditioning horizon per task.  Validation runs on
a held-out fraction of the training tasks; the returned parameters are
the checkpoint with the best validation log likelihood.

The loop is deterministic: the same seed, tasks, and hyperparameters
reproduce the same parameter trajectory bit for bit (wall times in the
history records differ, nothing else).
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import models as _models
from .autodiff import ParamStore, backward
from .data import TaskSet
from .exceptions import DivergedLoss, InvalidConfig, NonFiniteGradient
from .metrics import mean_point_log_likelihood
from .objectives import LossSpec, TaskBatch, TaskDraw, evaluate_loss
from .serialize import atomic_write_text

__all__ = [
    "OptimHyper",
    "OptState",
    "EvalRecord",
    "TrainHistory",
    "init_opt_state",
    "adamw_step",
    "train",
    "save_history_csv",
]

# Spawn keys for the trainer's RNG streams, distinct from the per-task
# keys used by the data generators.
_VAL_KEY = 1000001
_BATCH_KEY = 1000002


@dataclass(frozen=True)
class OptimHyper:
    """Optimizer and schedule hyperparameters.

    ``weight_decay`` is decoupled: it shrinks parameters directly
    instead of entering the gradient moments.
    """

    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_steps: int = 20000
    tasks_per_batch: int = 4
    eval_every: int = 250
    patience: int = 12

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise InvalidConfig("learning_rate and weight_decay must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidConfig("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise InvalidConfig("epsilon must be positive")
        for name in ("max_steps", "tasks_per_batch", "eval_every", "patience"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be at least 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "max_steps": self.max_steps,
            "tasks_per_batch": self.tasks_per_batch,
            "eval_every": self.eval_every,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimHyper":
        base = cls().to_dict()
        unknown = set(d) - set(base)
        if unknown:
            raise InvalidConfig(f"unknown trainer keys {sorted(unknown)}")
        base.update(d)
        ints = {"max_steps", "tasks_per_batch", "eval_every", "patience"}
        kwargs = {
            k: int(v) if k in ints else float(v) for k, v in base.items()
        }
        return cls(**kwargs)


@dataclass
class OptState:
    """Optimizer state: parameters plus first/second moment estimates."""

    params: ParamStore
    m: dict
    v: dict
    step: int = 0
    frozen: frozenset = frozenset()


def init_opt_state(params: ParamStore, frozen=()) -> OptState:
    """Fresh optimizer state with zero moments.

    Parameters listed in ``frozen`` are never updated or decayed.
    """
    frozen = frozenset(frozen)
    for name in frozen:
        if name not in params:
            raise InvalidConfig(f"frozen parameter {name!r} not in store")
    m = {name: np.zeros_like(value) for name, value in params.items()}
    v = {name: np.zeros_like(value) for name, value in params.items()}
    return OptState(params.copy(), m, v, step=0, frozen=frozen)


def adamw_step(state: OptState, grads: ParamStore, hyper: OptimHyper) -> OptState:
    """One decoupled-AdamW update; returns a new state.

    Raises
    ------
    NonFiniteGradient
        If any gradient entry of an updatable parameter is not finite.
    """
    t = state.step + 1
    params = state.params.copy()
    m = dict(state.m)
    v = dict(state.v)
    lr = hyper.learning_rate
    for name, theta in state.params.items():
        if name in state.frozen:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient of {name!r} is not finite")
        m_new = hyper.beta1 * m[name] + (1.0 - hyper.beta1) * g
        v_new = hyper.beta2 * v[name] + (1.0 - hyper.beta2) * g * g
        m_hat = m_new / (1.0 - hyper.beta1**t)
        v_hat = v_new / (1.0 - hyper.beta2**t)
        update = m_hat / (np.sqrt(v_hat) + hyper.epsilon)
        params[name] = theta - lr * update - lr * hyper.weight_decay * theta
        m[name] = m_new
        v[name] = v_new
    return OptState(params, m, v, step=t, frozen=state.frozen)


@dataclass(frozen=True)
class EvalRecord:
    """One validation evaluation during training."""

    step: int
    train_loss: float
    val_ll: float
    wall_time: float


@dataclass
class TrainHistory:
    """Evaluation trace of one training run.

    ``signature()`` drops wall times, giving the part of the history
    that is reproducible across runs with the same seed.
    """

    records: list = field(default_factory=list)
    best_step: int = 0
    best_val_ll: float = -np.inf
    n_steps: int = 0

    def signature(self) -> tuple:
        rows = tuple(
            (r.step, r.train_loss, r.val_ll) for r in self.records
        )
        return (rows, self.best_step, self.best_val_ll, self.n_steps)


def save_history_csv(path, history: TrainHistory) -> None:
    """Write the evaluation trace as CSV (step, train_loss, val_ll, wall_time)."""
    buf = io.StringIO()
    buf.write("step,train_loss,val_ll,wall_time\n")
    for r in history.records:
        buf.write(f"{r.step},{r.train_loss!r},{r.val_ll!r},{r.wall_time!r}\n")
    atomic_write_text(path, buf.getvalue())


def _validation_ll(model, tasks) -> float:
    """Mean per-point predictive log likelihood on validation tasks.

    Each task conditions on its first half (floor division) and scores
    the remainder, deterministically.
    """
    values = []
    for task in tasks:
        n_ctx = task.n // 2
        dist = _models.predictive(
            model, task.X[:n_ctx], task.Y[:n_ctx], task.X[n_ctx:]
        )
        values.append(mean_point_log_likelihood(dist, task.Y[n_ctx:]))
    return float(np.mean(values))


def train(model, loss_spec: LossSpec, taskset: TaskSet, hyper: OptimHyper,
          seed, frozen=(), shuffle_within_tasks=None, quiet: bool = True):
    """Meta-train ``model`` on ``taskset``.

    Each step draws ``tasks_per_batch`` tasks with replacement and one
    conditioning horizon ``t`` uniform over each drawn task's points.
    Every ``eval_every`` steps (and at the final step) the validation
    log likelihood is recorded; training stops early after ``patience``
    evaluations without improvement.  On return the model holds the
    parameters of the best evaluation.

    Parameters
    ----------
    model : object
        A model from :func:`metabayes.models.build_model` (or any
        object those helpers accept) whose ``params`` attribute is a
        ParamStore.
    loss_spec : LossSpec
    taskset : TaskSet
        Training tasks.  When there are at least 3 tasks, 20% (at least
        2) are held out for validation; otherwise validation reuses the
        training tasks.
    hyper : OptimHyper
    seed : int
        Drives batch sampling and validation task selection.
    frozen : iterable of str, optional
        Extra parameter names to keep fixed, in addition to those the
        model itself marks as not learnable.
    shuffle_within_tasks : bool, optional
        Re-permute each drawn task's points per draw, so conditioning
        prefixes are random subsets.  Defaults to True except for tasks
        loaded from CSV, whose file order is preserved.
    quiet : bool, optional
        Suppress progress lines (default True).

    Returns
    -------
    (ParamStore, TrainHistory)
        Best parameters and the evaluation trace.

    Raises
    ------
    DivergedLoss
        After 3 consecutive non-finite batch losses.
    NonFiniteGradient
        If a finite loss produces a non-finite gradient.
    """
    t0 = time.perf_counter()
    if shuffle_within_tasks is None:
        shuffle_within_tasks = taskset.provenance.get("generator") != "csv"
    frozen_names = set(_models.frozen_names(model)) | set(frozen)

    tasks = list(taskset)
    rng_val = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_VAL_KEY,))
    )
    if len(tasks) >= 3:
        n_val = min(max(2, round(0.2 * len(tasks))), len(tasks) - 1)
        order = rng_val.permutation(len(tasks))
        val_idx = set(int(i) for i in order[:n_val])
        val_tasks = [tasks[i] for i in sorted(val_idx)]
        train_tasks = [t for i, t in enumerate(tasks) if i not in val_idx]
    else:
        val_tasks = tasks
        train_tasks = tasks

    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_BATCH_KEY,))
    )
    state = init_opt_state(model.params, frozen=frozen_names)
    history = TrainHistory()
    best_params = None
    evals_since_best = 0
    consecutive_bad = 0
    loss_value = np.nan

    step = 0
    for step in range(1, hyper.max_steps + 1):
        draws = []
        idx = rng.integers(0, len(train_tasks), size=hyper.tasks_per_batch)
        for j in idx:
            task = train_tasks[int(j)]
            t = int(rng.integers(0, task.n))
            if shuffle_within_tasks:
                perm = rng.permutation(task.n)
                draws.append(TaskDraw(task.X[perm], task.Y[perm], t))
            else:
                draws.append(TaskDraw(task.X, task.Y, t))
        model.params = state.params
        loss_node = evaluate_loss(loss_spec, model, TaskBatch(tuple(draws)))
        loss_value = float(loss_node.value[0, 0])
        if not np.isfinite(loss_value):
            consecutive_bad += 1
            if consecutive_bad >= 3:
                raise DivergedLoss(
                    f"loss non-finite for {consecutive_bad} consecutive steps "
                    f"at step {step}"
                )
        else:
            consecutive_bad = 0
            grads = backward(loss_node, state.params)
            state = adamw_step(state, grads, hyper)

        if step % hyper.eval_every == 0 or step == hyper.max_steps:
            model.params = state.params
            val_ll = _validation_ll(model, val_tasks)
            history.records.append(
                EvalRecord(step, loss_value, val_ll, time.perf_counter() - t0)
            )
            if not quiet:
                print(
                    f"step {step}: loss {loss_value:.6f} val_ll {val_ll:.6f}",
                    flush=True,
                )
            if val_ll > history.best_val_ll:
                history.best_val_ll = val_ll
                history.best_step = step
                best_params = state.params.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
            if evals_since_best >= hyper.patience:
                break

    history.n_steps = step
    if best_params is None:
        best_params = state.params.copy()
        history.best_step = step
    model.params = best_params
    return best_params, history
