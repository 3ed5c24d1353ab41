"""Command line interface.

Subcommands::

    generate     write a synthetic task set to CSV
    train        meta-train one method on one dataset, per seed
    eval         evaluate a saved checkpoint on a fresh test set
    verify       run the numerical certification suites
    benchmark    run the method x dataset x seed grid
    sweep-width  latent width sweep for BLR-PR-FC

Exit codes: 0 success, 1 configuration error, 2 certification failure,
3 training failure.  The environment variable ``METABAYES_SEED``
overrides all configured seeds with a single seed.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import models as _models
from .autodiff import load_checkpoint, save_checkpoint
from .certify import SizeCaps, run_verification
from .config import (
    SEED_ENV_VAR,
    CellConfig,
    ExperimentConfig,
    load_config,
    parse_experiment,
    resolve_seeds,
)
from .data import generate_dataset, save_tasks_csv
from .exceptions import DivergedLoss, InvalidConfig, MetaBayesError
from .metrics import evaluate_model
from .objectives import LossSpec
from .serialize import atomic_write_text, canonical_json
from .trainer import save_history_csv, train

__all__ = ["main", "run_cell"]

# Seed derivation keys for one grid cell: training data, test data, and
# model initialization use independent streams.
_TRAIN_DATA_KEY = 0
_TEST_DATA_KEY = 1
_INIT_KEY = 2

RESULT_COLUMNS = ("method", "dataset", "seed", "ll", "rmse", "calib",
                  "runtime_s", "config_hash")


@dataclass
class RunReport:
    """Result row of one benchmark cell."""

    method: str
    dataset: str
    seed: int
    ll: float
    rmse: float
    calib: float
    runtime_s: float
    config_hash: str
    error: str | None = None
    checkpoint: str | None = None

    def csv_row(self) -> str:
        cells = [self.method, self.dataset, str(self.seed)]
        for value in (self.ll, self.rmse, self.calib, self.runtime_s):
            cells.append(repr(float(value)))
        cells.append(self.config_hash)
        return ",".join(cells)

    def to_dict(self) -> dict:
        def _jsonable(value: float):
            # Failed cells carry NaN metrics; canonical JSON forbids
            # non-finite floats, so those become null.
            return float(value) if np.isfinite(value) else None

        d = {
            "method": self.method,
            "dataset": self.dataset,
            "seed": self.seed,
            "ll": _jsonable(self.ll),
            "rmse": _jsonable(self.rmse),
            "calib": _jsonable(self.calib),
            "runtime_s": self.runtime_s,
            "config_hash": self.config_hash,
        }
        if self.error is not None:
            d["error"] = self.error
        if self.checkpoint is not None:
            d["checkpoint"] = self.checkpoint
        return d


def _slug(cell: CellConfig) -> str:
    method = cell.method.replace("/", "-").lower()
    return f"{method}_{cell.dataset}_seed{cell.seed}"


def _cell_datasets(cell: CellConfig):
    plan = cell.split
    train_set = generate_dataset(
        cell.dataset, plan.n_train_tasks, plan.train_samples,
        (cell.seed, _TRAIN_DATA_KEY), cell.dataset_config,
    )
    test_set = generate_dataset(
        cell.dataset, plan.n_test_tasks, plan.test_task_samples,
        (cell.seed, _TEST_DATA_KEY), cell.dataset_config,
    )
    return train_set, test_set


def _cell_model(cell: CellConfig, n_x: int, n_y: int):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(cell.seed, _INIT_KEY))
    )
    return _models.build_model(
        cell.method, n_x, n_y, rng, **cell.model.build_kwargs()
    )


def _curve_csv(curve: np.ndarray) -> str:
    lines = ["level,coverage"]
    for level, coverage in curve:
        lines.append(f"{float(level)!r},{float(coverage)!r}")
    return "\n".join(lines) + "\n"


def run_cell(cell: CellConfig, output_dir: str | None = None,
             quiet: bool = True) -> RunReport:
    """Run one grid cell: generate data, train, evaluate, save artifacts.

    Rerunning a cell with the same configuration and seed reproduces
    the data, the training trajectory, and therefore the metrics.
    """
    start = time.perf_counter()
    train_set, test_set = _cell_datasets(cell)
    model = _cell_model(cell, train_set.n_x, train_set.n_y)
    loss = LossSpec(_models.loss_kind_for(cell.method))
    params, history = train(
        model, loss, train_set, cell.trainer, cell.seed, quiet=quiet
    )
    report, curve = evaluate_model(model, test_set, cell.split, cell.seed)
    checkpoint_path = None
    if output_dir:
        slug = _slug(cell)
        checkpoint_path = os.path.join(output_dir, "checkpoints", f"{slug}.json")
        os.makedirs(os.path.dirname(checkpoint_path), exist_ok=True)
        save_checkpoint(
            checkpoint_path, params, cell.seed,
            meta={
                "method": cell.method,
                "dataset": cell.dataset,
                "config_hash": cell.config_hash,
                "best_step": history.best_step,
                "best_val_ll": history.best_val_ll,
            },
        )
        save_history_csv(
            os.path.join(output_dir, "history", f"{slug}.csv"), history
        )
        atomic_write_text(
            os.path.join(output_dir, "calibration", f"{slug}.csv"),
            _curve_csv(curve),
        )
    return RunReport(
        method=cell.method,
        dataset=cell.dataset,
        seed=cell.seed,
        ll=report.log_likelihood,
        rmse=report.rmse,
        calib=report.calibration_error,
        runtime_s=time.perf_counter() - start,
        config_hash=cell.config_hash,
        checkpoint=checkpoint_path,
    )


def _failed_report(cell: CellConfig, exc: Exception,
                   elapsed: float) -> RunReport:
    return RunReport(
        method=cell.method,
        dataset=cell.dataset,
        seed=cell.seed,
        ll=float("nan"),
        rmse=float("nan"),
        calib=float("nan"),
        runtime_s=elapsed,
        config_hash=cell.config_hash,
        error=f"{type(exc).__name__}: {exc}",
    )


def _run_cells(cells, output_dir, threads: int, quiet: bool):
    """Run grid cells, up to ``threads`` at a time; failures are recorded."""

    def work(cell: CellConfig) -> RunReport:
        start = time.perf_counter()
        try:
            return run_cell(cell, output_dir, quiet=quiet)
        except MetaBayesError as exc:
            return _failed_report(cell, exc, time.perf_counter() - start)
        except np.linalg.LinAlgError as exc:
            return _failed_report(cell, exc, time.perf_counter() - start)

    if threads <= 1:
        return [work(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, cells))


def _write_results(output_dir: str, reports) -> None:
    buf = io.StringIO()
    buf.write(",".join(RESULT_COLUMNS) + "\n")
    for report in reports:
        buf.write(report.csv_row() + "\n")
    atomic_write_text(os.path.join(output_dir, "results.csv"), buf.getvalue())
    doc = {"rows": [r.to_dict() for r in reports]}
    atomic_write_text(
        os.path.join(output_dir, "results.json"),
        canonical_json(doc) + "\n",
    )


def _print_summary(reports) -> None:
    cells = {}
    for r in reports:
        if r.error is None:
            cells.setdefault((r.method, r.dataset), []).append(r.ll)
    datasets = sorted({d for _, d in cells})
    methods = sorted({m for m, _ in cells})
    if not methods:
        print("no successful cells")
        return
    width = max(len(m) for m in methods) + 2
    header = "mean test LL".ljust(width) + "".join(
        d.rjust(16) for d in datasets
    )
    print(header)
    for method in methods:
        line = method.ljust(width)
        for dataset in datasets:
            values = cells.get((method, dataset))
            if values:
                line += f"{np.mean(values):16.4f}"
            else:
                line += " " * 16
        print(line)
    failures = [r for r in reports if r.error is not None]
    for r in failures:
        print(f"FAILED {r.method} on {r.dataset} seed {r.seed}: {r.error}")


def _cmd_generate(args) -> int:
    overrides = {}
    if args.config:
        obj = load_config(args.config)
        if "dataset" in obj and isinstance(obj["dataset"], dict):
            overrides = obj["dataset"].get("config", {})
        else:
            overrides = obj
    seed = args.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise InvalidConfig(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from None
    from .data import DATASET_CONFIGS, CauchyConfig, SinusoidConfig

    if args.dataset not in DATASET_CONFIGS:
        raise InvalidConfig(
            f"unknown dataset {args.dataset!r}; expected one of "
            f"{sorted(DATASET_CONFIGS)}"
        )
    base = DATASET_CONFIGS[args.dataset].to_dict()
    base.update(overrides)
    base.pop("family", None)
    if args.dataset.startswith("sinusoid"):
        cfg = SinusoidConfig.from_dict(base)
    else:
        cfg = CauchyConfig.from_dict(base)
    taskset = generate_dataset(args.dataset, args.tasks, args.samples, seed, cfg)
    save_tasks_csv(args.out, taskset)
    if not args.quiet:
        print(
            f"wrote {len(taskset)} tasks x {args.samples} samples to {args.out} "
            f"(config {taskset.provenance['config_hash']})"
        )
    return 0


def _experiment(args) -> ExperimentConfig:
    if args.config:
        return parse_experiment(load_config(args.config))
    return parse_experiment({})


def _cmd_train(args) -> int:
    exp = _experiment(args)
    seeds = resolve_seeds(exp, args.seeds)
    out_dir = args.out or exp.output_dir
    method = exp.methods[0]
    dataset = exp.datasets[0]
    for seed in seeds:
        cell = CellConfig(
            dataset=dataset,
            dataset_config=exp.dataset_configs[dataset],
            split=exp.splits[dataset],
            method=method,
            model=exp.model,
            trainer=exp.trainer,
            seed=seed,
        )
        train_set, _ = _cell_datasets(cell)
        model = _cell_model(cell, train_set.n_x, train_set.n_y)
        loss = LossSpec(_models.loss_kind_for(method))
        params, history = train(
            model, loss, train_set, cell.trainer, seed, quiet=args.quiet
        )
        slug = _slug(cell)
        path = os.path.join(out_dir, "checkpoints", f"{slug}.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_checkpoint(
            path, params, seed,
            meta={
                "method": method,
                "dataset": dataset,
                "config_hash": cell.config_hash,
                "best_step": history.best_step,
                "best_val_ll": history.best_val_ll,
            },
        )
        save_history_csv(os.path.join(out_dir, "history", f"{slug}.csv"), history)
        if not args.quiet:
            print(
                f"{method} on {dataset} seed {seed}: best val LL "
                f"{history.best_val_ll:.4f} at step {history.best_step}; "
                f"checkpoint {path}"
            )
    return 0


def _cmd_eval(args) -> int:
    exp = _experiment(args)
    params, seed, meta = load_checkpoint(args.checkpoint)
    method = meta.get("method", exp.methods[0])
    dataset = meta.get("dataset", exp.datasets[0])
    if dataset not in exp.dataset_configs:
        raise InvalidConfig(
            f"checkpoint dataset {dataset!r} is not in the config"
        )
    cell = CellConfig(
        dataset=dataset,
        dataset_config=exp.dataset_configs[dataset],
        split=exp.splits[dataset],
        method=method,
        model=exp.model,
        trainer=exp.trainer,
        seed=seed,
    )
    _, test_set = _cell_datasets(cell)
    model = _cell_model(cell, test_set.n_x, test_set.n_y)
    _models.replace_params(model, params)
    report, curve = evaluate_model(model, test_set, cell.split, seed)
    print(
        f"{method} on {dataset} seed {seed}: "
        f"ll {report.log_likelihood:.4f} rmse {report.rmse:.4f} "
        f"calib {report.calibration_error:.4f} "
        f"({report.n_tasks} tasks, {report.n_points} points)"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        doc = dict(report.to_dict())
        doc.update({"method": method, "dataset": dataset, "seed": seed,
                    "config_hash": cell.config_hash})
        atomic_write_text(
            os.path.join(args.out, "metrics.json"), canonical_json(doc) + "\n"
        )
        atomic_write_text(
            os.path.join(args.out, f"calibration_{_slug(cell)}.csv"),
            _curve_csv(curve),
        )
    return 0


def _cmd_verify(args) -> int:
    caps = SizeCaps(
        n_phi=args.max_features,
        n_c=args.max_context,
        n_t=args.max_test,
        n_y=args.max_outputs,
    )
    report = run_verification(
        seed=args.seed,
        n_instances=args.instances,
        chain_instances=args.chain_instances,
        caps=caps,
        corrupt_lambda0=args.corrupt_lambda0,
    )
    for name, suite in report["suites"].items():
        status = "PASS" if suite["pass"] else "FAIL"
        times = ", ".join(
            f"{k[:-7]} {suite[k]:.3f}s" for k in suite if k.endswith("_time_s")
        )
        print(
            f"{name}: max_rel_err {suite['max_rel_err']:.3e} "
            f"(tol {suite['tolerance']:.0e}, {suite['instances']} instances, "
            f"{times}) {status}"
        )
    if args.out:
        atomic_write_text(args.out, canonical_json(report) + "\n")
    if report["all_pass"]:
        print("certification PASSED")
        return 0
    print("certification FAILED", file=sys.stderr)
    return 2


def _cmd_benchmark(args) -> int:
    exp = _experiment(args)
    seeds = resolve_seeds(exp, args.seeds)
    out_dir = args.out or exp.output_dir
    cells = exp.cells(seeds)
    reports = _run_cells(cells, out_dir, args.threads, args.quiet)
    _write_results(out_dir, reports)
    _print_summary(reports)
    if any(r.error is not None for r in reports):
        return 3
    return 0


def _cmd_sweep_width(args) -> int:
    if args.config:
        exp = parse_experiment(load_config(args.config))
    else:
        exp = parse_experiment({"dataset": {"name": "sinusoid-hard"}})
    seeds = resolve_seeds(exp, args.seeds)
    out_dir = args.out or exp.output_dir
    widths = args.widths
    dataset = exp.datasets[0]
    cells = []
    for width in widths:
        model = replace(exp.model, n_latent=width)
        for seed in seeds:
            cells.append(
                CellConfig(
                    dataset=dataset,
                    dataset_config=exp.dataset_configs[dataset],
                    split=exp.splits[dataset],
                    method="BLR-PR-FC",
                    model=model,
                    trainer=exp.trainer,
                    seed=seed,
                )
            )
    reports = _run_cells(cells, out_dir, args.threads, args.quiet)
    lines = ["width,seed,nll"]
    by_width = {}
    for cell, report in zip(cells, reports):
        width = cell.model.n_latent
        nll = -report.ll
        lines.append(f"{width},{report.seed},{nll!r}")
        if report.error is None:
            by_width.setdefault(width, []).append(nll)
    atomic_write_text(
        os.path.join(out_dir, "width_sweep.csv"), "\n".join(lines) + "\n"
    )
    for width in widths:
        values = by_width.get(width)
        if values:
            print(f"width {width}: mean NLL {np.mean(values):.4f}")
        else:
            print(f"width {width}: all seeds failed")
    if any(r.error is not None for r in reports):
        return 3
    return 0


def _parse_int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metabayes",
        description="Meta-learned Bayesian regression: training, "
        "evaluation, and numerical certification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic task set to CSV")
    p.add_argument("--dataset", default="sinusoid-easy")
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON file with generator parameter overrides")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="meta-train one method on one dataset")
    p.add_argument("--config", default=None, help="experiment JSON config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seeds", type=_parse_int_list, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a fresh test set")
    p.add_argument("--config", default=None, help="experiment JSON config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("verify", help="run the numerical certification suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--chain-instances", type=int, default=500)
    p.add_argument("--max-features", type=int, default=8)
    p.add_argument("--max-context", type=int, default=20)
    p.add_argument("--max-test", type=int, default=10)
    p.add_argument("--max-outputs", type=int, default=3)
    p.add_argument("--corrupt-lambda0", action="store_true",
                   help="negative control: corrupt the matched prior and "
                   "expect the first suite to fail")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("benchmark", help="run the method x dataset x seed grid")
    p.add_argument("--config", default=None, help="experiment JSON config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seeds", type=_parse_int_list, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("sweep-width",
                       help="latent width sweep for BLR-PR-FC")
    p.add_argument("--config", default=None, help="experiment JSON config")
    p.add_argument("--widths", type=_parse_int_list, default=[2, 8, 32, 128])
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seeds", type=_parse_int_list, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_sweep_width)

    return parser


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergedLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except MetaBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
