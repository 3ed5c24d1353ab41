"""Experiment configuration: JSON parsing, grid expansion, run rows.

An experiment config is a JSON object with blocks::

    {
      "dataset": {"name": "sinusoid-easy" | [...names],
                  "config": {...generator overrides},
                  "split": {...sample size plan overrides}},
      "model":   {"method": "BLR-PR-FC" | [...methods],
                  "hidden": [32, 32], "n_latent": 32,
                  "activation": "tanh",
                  "learn_lambda0": false, "learn_noise": true},
      "trainer": {...OptimHyper fields},
      "seeds":   [0, 1, 2],
      "output_dir": "runs"
    }

Every block is optional; omitted fields take the documented defaults.
The grid of a benchmark run is the product of dataset names, methods,
and seeds.  Each grid cell resolves to a fully explicit
:class:`CellConfig` whose canonical hash identifies the cell's
configuration (everything except the seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .data import (
    DATASET_CONFIGS,
    SPLIT_PLANS,
    CauchyConfig,
    SinusoidConfig,
    SplitPlan,
)
from .exceptions import InvalidConfig
from .models import METHODS
from .serialize import canonical_hash
from .trainer import OptimHyper

__all__ = [
    "SEED_ENV_VAR",
    "ModelSettings",
    "CellConfig",
    "ExperimentConfig",
    "load_config",
    "parse_experiment",
    "resolve_seeds",
]

SEED_ENV_VAR = "METABAYES_SEED"

_DEFAULT_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class ModelSettings:
    """Architecture settings shared by every method in a run."""

    hidden: tuple = (32, 32)
    n_latent: int = 32
    activation: str = "tanh"
    learn_lambda0: bool = False
    learn_noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden) or self.n_latent < 1:
            raise InvalidConfig("network widths must be at least 1")
        if self.activation not in ("tanh", "relu"):
            raise InvalidConfig(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "n_latent": self.n_latent,
            "activation": self.activation,
            "learn_lambda0": self.learn_lambda0,
            "learn_noise": self.learn_noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSettings":
        base = cls().to_dict()
        unknown = set(d) - set(base) - {"method"}
        if unknown:
            raise InvalidConfig(f"unknown model keys {sorted(unknown)}")
        base.update({k: v for k, v in d.items() if k != "method"})
        return cls(
            hidden=tuple(base["hidden"]),
            n_latent=int(base["n_latent"]),
            activation=str(base["activation"]),
            learn_lambda0=bool(base["learn_lambda0"]),
            learn_noise=bool(base["learn_noise"]),
        )

    def build_kwargs(self) -> dict:
        return {
            "hidden": self.hidden,
            "n_latent": self.n_latent,
            "activation": self.activation,
            "learn_lambda0": self.learn_lambda0,
            "learn_noise": self.learn_noise,
        }


@dataclass(frozen=True)
class CellConfig:
    """One fully resolved grid cell: dataset x method x seed."""

    dataset: str
    dataset_config: object
    split: SplitPlan
    method: str
    model: ModelSettings
    trainer: OptimHyper
    seed: int

    def to_dict(self) -> dict:
        return {
            "dataset": {
                "name": self.dataset,
                "config": self.dataset_config.to_dict(),
                "split": self.split.to_dict(),
            },
            "method": self.method,
            "model": self.model.to_dict(),
            "trainer": self.trainer.to_dict(),
        }

    @property
    def config_hash(self) -> str:
        """Hash of the cell configuration (the seed is not included)."""
        return canonical_hash(self.to_dict())


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed experiment: dataset/method grid plus shared settings."""

    datasets: tuple
    dataset_configs: dict
    splits: dict
    methods: tuple
    model: ModelSettings
    trainer: OptimHyper
    seeds: tuple
    output_dir: str

    def cells(self, seeds=None) -> list:
        """Expand the grid into CellConfig rows (method-major order)."""
        seeds = tuple(int(s) for s in (self.seeds if seeds is None else seeds))
        out = []
        for method in self.methods:
            for dataset in self.datasets:
                for seed in seeds:
                    out.append(
                        CellConfig(
                            dataset=dataset,
                            dataset_config=self.dataset_configs[dataset],
                            split=self.splits[dataset],
                            method=method,
                            model=self.model,
                            trainer=self.trainer,
                            seed=seed,
                        )
                    )
        return out


def load_config(path) -> dict:
    """Load a JSON config file into a dict.

    Raises
    ------
    InvalidConfig
        If the file cannot be parsed or is not a JSON object.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            cfg = json.load(handle)
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidConfig("config root must be a JSON object")
    return cfg


def _as_name_list(value, what: str) -> tuple:
    if isinstance(value, str):
        return (value,)
    if isinstance(value, (list, tuple)) and value and all(
        isinstance(v, str) for v in value
    ):
        return tuple(value)
    raise InvalidConfig(f"{what} must be a name or a nonempty list of names")


def parse_experiment(cfg: dict) -> ExperimentConfig:
    """Validate a raw config dict and resolve all defaults.

    Dataset ``config`` overrides apply to every dataset in the list
    (keys unknown to a family raise).  The ``split`` block overrides
    the per-dataset sample size plan.
    """
    known = {"dataset", "model", "trainer", "seeds", "output_dir"}
    unknown = set(cfg) - known
    if unknown:
        raise InvalidConfig(f"unknown config blocks {sorted(unknown)}")

    dataset_block = cfg.get("dataset", {})
    if not isinstance(dataset_block, dict):
        raise InvalidConfig("dataset block must be an object")
    unknown = set(dataset_block) - {"name", "config", "split"}
    if unknown:
        raise InvalidConfig(f"unknown dataset keys {sorted(unknown)}")
    names = _as_name_list(dataset_block.get("name", "sinusoid-easy"), "dataset name")
    for name in names:
        if name not in DATASET_CONFIGS:
            raise InvalidConfig(
                f"unknown dataset {name!r}; expected one of {sorted(DATASET_CONFIGS)}"
            )
    overrides = dataset_block.get("config", {})
    if not isinstance(overrides, dict):
        raise InvalidConfig("dataset config must be an object")
    dataset_configs = {}
    splits = {}
    for name in names:
        if name.startswith("sinusoid"):
            base = DATASET_CONFIGS[name].to_dict()
            base.update(overrides)
            base.pop("family", None)
            dataset_configs[name] = SinusoidConfig.from_dict(base)
        else:
            base = DATASET_CONFIGS[name].to_dict()
            base.update(overrides)
            base.pop("family", None)
            dataset_configs[name] = CauchyConfig.from_dict(base)
        plan = SPLIT_PLANS[name].to_dict()
        split_overrides = dataset_block.get("split", {})
        if not isinstance(split_overrides, dict):
            raise InvalidConfig("dataset split must be an object")
        plan.update(split_overrides)
        splits[name] = SplitPlan.from_dict(plan)

    model_block = cfg.get("model", {})
    if not isinstance(model_block, dict):
        raise InvalidConfig("model block must be an object")
    methods = _as_name_list(model_block.get("method", "BLR-PR-FC"), "method")
    for method in methods:
        if method not in METHODS:
            raise InvalidConfig(
                f"unknown method {method!r}; expected one of {sorted(METHODS)}"
            )
    model = ModelSettings.from_dict(model_block)

    trainer_block = cfg.get("trainer", {})
    if not isinstance(trainer_block, dict):
        raise InvalidConfig("trainer block must be an object")
    trainer = OptimHyper.from_dict(trainer_block)

    seeds = cfg.get("seeds", list(_DEFAULT_SEEDS))
    if isinstance(seeds, int):
        seeds = [seeds]
    if (
        not isinstance(seeds, (list, tuple))
        or not seeds
        or not all(isinstance(s, int) for s in seeds)
    ):
        raise InvalidConfig("seeds must be an int or a nonempty list of ints")

    output_dir = cfg.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        raise InvalidConfig("output_dir must be a string")

    return ExperimentConfig(
        datasets=names,
        dataset_configs=dataset_configs,
        splits=splits,
        methods=methods,
        model=model,
        trainer=trainer,
        seeds=tuple(seeds),
        output_dir=output_dir,
    )


def resolve_seeds(experiment: ExperimentConfig, flag_seeds=None,
                  env: dict | None = None) -> tuple:
    """Final seed list: environment beats the flag, flag beats config."""
    env = os.environ if env is None else env
    value = env.get(SEED_ENV_VAR)
    if value is not None:
        try:
            return (int(value),)
        except ValueError:
            raise InvalidConfig(
                f"{SEED_ENV_VAR} must be an integer, got {value!r}"
            ) from None
    if flag_seeds is not None:
        return tuple(int(s) for s in flag_seeds)
    return experiment.seeds
