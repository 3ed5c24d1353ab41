"""Task generation, CSV import/export, and context/test splitting.

A *task* is a small supervised dataset ``(X, Y)`` drawn from a common
task distribution.  This module provides two synthetic generators (a
sinusoid family and a bump-mean family with per-task function noise), a
strict CSV loader/saver, seeded context/test splitting, and the sample
size plans used by the benchmark.

All randomness is driven by ``numpy.random.Generator`` streams derived
from a master seed with ``SeedSequence`` spawn keys, one stream per
task.  Task ``i`` therefore does not depend on how many tasks were
generated before it, and regenerating with the same seed reproduces a
task set bit for bit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    EmptyFile,
    InvalidConfig,
    MissingColumn,
    NonNumericCell,
    NotEnoughSamples,
    ShapeMismatch,
)
from .numerics import chol_psd
from .serialize import atomic_write_text, canonical_hash
from .validation import as_float_matrix

__all__ = [
    "Dist",
    "SinusoidConfig",
    "CauchyConfig",
    "Task",
    "TaskSet",
    "SplitPlan",
    "CsvSchema",
    "SINUSOID_EASY",
    "SINUSOID_HARD",
    "CAUCHY_DEFAULT",
    "DATASET_CONFIGS",
    "SPLIT_PLANS",
    "task_rng",
    "generate_sinusoid",
    "generate_cauchy",
    "generate_dataset",
    "cauchy_mean",
    "save_tasks_csv",
    "load_tasks_csv",
    "split_context_test",
]

_DIST_KINDS = ("normal", "uniform", "fixed")


@dataclass(frozen=True)
class Dist:
    """A one-dimensional sampling distribution for task parameters.

    Parameters
    ----------
    kind : str
        One of ``"normal"`` (a=mean, b=std), ``"uniform"`` (a=low,
        b=high), or ``"fixed"`` (a=value, b ignored).
    a, b : float
        Meaning depends on ``kind`` as above.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in _DIST_KINDS:
            raise InvalidConfig(f"unknown distribution kind {self.kind!r}")
        if self.kind == "normal" and self.b < 0:
            raise InvalidConfig("normal std must be nonnegative")
        if self.kind == "uniform" and not self.a < self.b:
            raise InvalidConfig("uniform requires a < b")

    @classmethod
    def normal(cls, mean: float, std: float) -> "Dist":
        return cls("normal", float(mean), float(std))

    @classmethod
    def uniform(cls, low: float, high: float) -> "Dist":
        return cls("uniform", float(low), float(high))

    @classmethod
    def fixed(cls, value: float) -> "Dist":
        return cls("fixed", float(value))

    def draw(self, rng: np.random.Generator, size=None):
        """Sample from the distribution using ``rng``."""
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size=size)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size=size)
        if size is None:
            return self.a
        return np.full(size, self.a)

    def mean(self) -> float:
        """Exact mean of the distribution."""
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a

    def std(self) -> float:
        """Exact standard deviation of the distribution."""
        if self.kind == "normal":
            return self.b
        if self.kind == "uniform":
            return (self.b - self.a) / np.sqrt(12.0)
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Dist":
        try:
            return cls(str(d["kind"]), float(d["a"]), float(d.get("b", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad distribution spec {d!r}") from exc


_PHASE_FORMS = ("shifted", "additive")


@dataclass(frozen=True)
class SinusoidConfig:
    """Parameters of the sinusoid task family.

    Each task draws ``(slope, amplitude, frequency, phase, offset)``
    once and then samples points ``y = slope*x + amplitude*sin(inner) +
    offset + noise`` with ``x ~ Uniform[x_low, x_high]``.  The default
    ``phase_form="shifted"`` uses ``inner = frequency*(x - phase)``;
    ``"additive"`` uses ``inner = frequency*x + phase``.
    """

    slope: Dist
    amplitude: Dist
    frequency: Dist
    phase: Dist
    offset: Dist
    noise: Dist
    x_low: float = -5.0
    x_high: float = 5.0
    phase_form: str = "shifted"

    def __post_init__(self):
        if not self.x_low < self.x_high:
            raise InvalidConfig("sinusoid requires x_low < x_high")
        if self.phase_form not in _PHASE_FORMS:
            raise InvalidConfig(f"unknown phase_form {self.phase_form!r}")
        if self.noise.mean() != 0.0:
            raise InvalidConfig("observation noise must have zero mean")

    def to_dict(self) -> dict:
        return {
            "family": "sinusoid",
            "slope": self.slope.to_dict(),
            "amplitude": self.amplitude.to_dict(),
            "frequency": self.frequency.to_dict(),
            "phase": self.phase.to_dict(),
            "offset": self.offset.to_dict(),
            "noise": self.noise.to_dict(),
            "x_low": self.x_low,
            "x_high": self.x_high,
            "phase_form": self.phase_form,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SinusoidConfig":
        base = SINUSOID_EASY.to_dict()
        unknown = set(d) - set(base)
        if unknown:
            raise InvalidConfig(f"unknown sinusoid config keys {sorted(unknown)}")
        base.update(d)
        return cls(
            slope=Dist.from_dict(base["slope"]),
            amplitude=Dist.from_dict(base["amplitude"]),
            frequency=Dist.from_dict(base["frequency"]),
            phase=Dist.from_dict(base["phase"]),
            offset=Dist.from_dict(base["offset"]),
            noise=Dist.from_dict(base["noise"]),
            x_low=float(base["x_low"]),
            x_high=float(base["x_high"]),
            phase_form=str(base["phase_form"]),
        )


@dataclass(frozen=True)
class CauchyConfig:
    """Parameters of the two-bump task family.

    The shared mean is ``m(x) = w1*exp(-(x-mu1)^2/(2*s1^2)) +
    w2*exp(-(x-mu2)^2/(2*s2^2))``.  Each task adds a function drawn from
    a zero-mean Gaussian process with a squared-exponential kernel
    (``task_lengthscale``, ``task_outputscale``) sampled jointly at the
    task's inputs, plus i.i.d. observation noise.  Inputs are sampled
    uniformly from ``[x_low, x_high]`` unless ``x_locations`` pins them
    to a fixed grid (useful for checking the induced covariance).
    """

    w1: float = 2.0
    w2: float = 2.0
    mu1: float = -2.0
    mu2: float = 2.0
    s1: float = 1.0
    s2: float = 1.0
    task_lengthscale: float = 1.0
    task_outputscale: float = 0.5
    noise_std: float = 0.1
    x_low: float = -6.0
    x_high: float = 6.0
    x_locations: tuple | None = None

    def __post_init__(self):
        if self.s1 <= 0 or self.s2 <= 0:
            raise InvalidConfig("bump widths must be positive")
        if self.task_lengthscale <= 0:
            raise InvalidConfig("task_lengthscale must be positive")
        if self.task_outputscale < 0 or self.noise_std < 0:
            raise InvalidConfig("scales must be nonnegative")
        if not self.x_low < self.x_high:
            raise InvalidConfig("requires x_low < x_high")
        if self.x_locations is not None:
            locs = tuple(float(v) for v in self.x_locations)
            object.__setattr__(self, "x_locations", locs)

    def to_dict(self) -> dict:
        d = {
            "family": "cauchy",
            "w1": self.w1,
            "w2": self.w2,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "s1": self.s1,
            "s2": self.s2,
            "task_lengthscale": self.task_lengthscale,
            "task_outputscale": self.task_outputscale,
            "noise_std": self.noise_std,
            "x_low": self.x_low,
            "x_high": self.x_high,
        }
        if self.x_locations is not None:
            d["x_locations"] = list(self.x_locations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CauchyConfig":
        base = CAUCHY_DEFAULT.to_dict()
        base["x_locations"] = None
        unknown = set(d) - set(base)
        if unknown:
            raise InvalidConfig(f"unknown cauchy config keys {sorted(unknown)}")
        base.update(d)
        locs = base.pop("x_locations")
        base.pop("family")
        kwargs = {k: float(v) for k, v in base.items()}
        if locs is not None:
            kwargs["x_locations"] = tuple(float(v) for v in locs)
        return cls(**kwargs)


SINUSOID_EASY = SinusoidConfig(
    slope=Dist.normal(0.5, 0.2),
    amplitude=Dist.uniform(0.7, 1.3),
    frequency=Dist.fixed(1.5),
    phase=Dist.normal(0.1, 0.1),
    offset=Dist.normal(5.0, 0.1),
    noise=Dist.normal(0.0, 0.1),
)

SINUSOID_HARD = SinusoidConfig(
    slope=Dist.normal(0.5, 0.6),
    amplitude=Dist.uniform(0.7, 1.4),
    frequency=Dist.uniform(1.0, 2.0),
    phase=Dist.normal(0.0, 2.0),
    offset=Dist.normal(5.0, 0.8),
    noise=Dist.normal(0.0, 0.2),
)

CAUCHY_DEFAULT = CauchyConfig()

DATASET_CONFIGS = {
    "sinusoid-easy": SINUSOID_EASY,
    "sinusoid-hard": SINUSOID_HARD,
    "cauchy": CAUCHY_DEFAULT,
}


@dataclass(frozen=True)
class Task:
    """One task: inputs ``X`` (n, n_x), outputs ``Y`` (n, n_y).

    ``info`` carries generator metadata (e.g. the drawn function
    parameters) and does not participate in any computation.
    """

    X: np.ndarray
    Y: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        x = as_float_matrix(self.X, "X")
        y = as_float_matrix(self.Y, "Y")
        if x.shape[0] != y.shape[0]:
            raise ShapeMismatch(
                f"X has {x.shape[0]} rows but Y has {y.shape[0]}"
            )
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "Y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_x(self) -> int:
        return self.X.shape[1]

    @property
    def n_y(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class TaskSet:
    """An ordered collection of tasks with shared input/output widths.

    ``provenance`` records how the set was produced (generator name,
    master seed, config dictionary and hash) so that an identical set
    can be regenerated.
    """

    tasks: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if not tasks:
            raise InvalidConfig("a task set needs at least one task")
        for task in tasks:
            if task.n_x != tasks[0].n_x or task.n_y != tasks[0].n_y:
                raise ShapeMismatch(
                    "all tasks in a set must share input/output widths"
                )
        object.__setattr__(self, "tasks", tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def __getitem__(self, i: int) -> Task:
        return self.tasks[i]

    def __iter__(self):
        return iter(self.tasks)

    @property
    def n_x(self) -> int:
        return self.tasks[0].n_x

    @property
    def n_y(self) -> int:
        return self.tasks[0].n_y

    @classmethod
    def from_pairs(cls, pairs, provenance: dict | None = None) -> "TaskSet":
        """Build a task set from an iterable of ``(X, Y)`` pairs."""
        tasks = tuple(Task(x, y) for x, y in pairs)
        return cls(tasks, dict(provenance or {}))


@dataclass(frozen=True)
class SplitPlan:
    """Sample size plan for one benchmark dataset.

    Training tasks have ``train_samples`` points each.  Test tasks have
    ``n_context + n_test_samples`` points: the context part is what the
    model conditions on and metrics are computed on the remainder.
    """

    n_train_tasks: int
    train_samples: int
    n_test_tasks: int
    n_context: int
    n_test_samples: int

    def __post_init__(self):
        for name in (
            "n_train_tasks",
            "train_samples",
            "n_test_tasks",
            "n_test_samples",
        ):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be at least 1")
        if self.n_context < 0:
            raise InvalidConfig("n_context must be nonnegative")

    @property
    def test_task_samples(self) -> int:
        return self.n_context + self.n_test_samples

    def to_dict(self) -> dict:
        return {
            "n_train_tasks": self.n_train_tasks,
            "train_samples": self.train_samples,
            "n_test_tasks": self.n_test_tasks,
            "n_context": self.n_context,
            "n_test_samples": self.n_test_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        base = {f: None for f in (
            "n_train_tasks", "train_samples", "n_test_tasks",
            "n_context", "n_test_samples",
        )}
        unknown = set(d) - set(base)
        if unknown:
            raise InvalidConfig(f"unknown split keys {sorted(unknown)}")
        missing = [k for k in base if k not in d]
        if missing:
            raise InvalidConfig(f"missing split keys {missing}")
        return cls(**{k: int(d[k]) for k in base})


SPLIT_PLANS = {
    "sinusoid-easy": SplitPlan(20, 5, 100, 5, 100),
    "sinusoid-hard": SplitPlan(20, 10, 100, 10, 100),
    "cauchy": SplitPlan(20, 20, 1000, 20, 100),
    "swissfel": SplitPlan(5, 200, 4, 200, 200),
}


def task_rng(seed, index: int) -> np.random.Generator:
    """RNG stream for task ``index`` under master ``seed``.

    Streams are derived with a spawn key, so the stream for task ``i``
    is the same no matter how many tasks are generated alongside it.
    ``seed`` may be an int or a tuple of ints.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.default_rng(ss)


def _seed_value(seed):
    """JSON-friendly representation of a seed (int or tuple of ints)."""
    if isinstance(seed, (tuple, list)):
        return [int(s) for s in seed]
    return int(seed)


def _provenance(generator: str, seed, n_tasks: int, n_samples: int,
                config_dict: dict) -> dict:
    return {
        "generator": generator,
        "seed": _seed_value(seed),
        "n_tasks": int(n_tasks),
        "n_samples": int(n_samples),
        "config": config_dict,
        "config_hash": canonical_hash(config_dict),
    }


def generate_sinusoid(config: SinusoidConfig, n_tasks: int, n_samples: int,
                      seed) -> TaskSet:
    """Generate sinusoid tasks.

    Per task, the function parameters are drawn once, then inputs are
    sampled uniformly and noise is added per sample.  Generation is
    bitwise reproducible for a fixed ``(config, n_tasks, n_samples,
    seed)``.

    Parameters
    ----------
    config : SinusoidConfig
        Task family parameters.
    n_tasks, n_samples : int
        Number of tasks and points per task (both >= 1).
    seed : int or tuple of int
        Master seed for the set.

    Returns
    -------
    TaskSet
    """
    if n_tasks < 1 or n_samples < 1:
        raise InvalidConfig("n_tasks and n_samples must be at least 1")
    tasks = []
    for i in range(n_tasks):
        rng = task_rng(seed, i)
        k = float(config.slope.draw(rng))
        amp = float(config.amplitude.draw(rng))
        freq = float(config.frequency.draw(rng))
        phase = float(config.phase.draw(rng))
        offset = float(config.offset.draw(rng))
        x = rng.uniform(config.x_low, config.x_high, size=(n_samples, 1))
        eps = np.asarray(config.noise.draw(rng, size=(n_samples, 1)), dtype=float)
        if config.phase_form == "shifted":
            inner = freq * (x - phase)
        else:
            inner = freq * x + phase
        y = k * x + amp * np.sin(inner) + offset + eps
        info = {
            "slope": k,
            "amplitude": amp,
            "frequency": freq,
            "phase": phase,
            "offset": offset,
        }
        tasks.append(Task(x, y, info))
    prov = _provenance("sinusoid", seed, n_tasks, n_samples, config.to_dict())
    return TaskSet(tuple(tasks), prov)


def cauchy_mean(config: CauchyConfig, x: np.ndarray) -> np.ndarray:
    """Shared mean function of the two-bump family, elementwise in x."""
    x = np.asarray(x, dtype=float)
    b1 = config.w1 * np.exp(-((x - config.mu1) ** 2) / (2.0 * config.s1 ** 2))
    b2 = config.w2 * np.exp(-((x - config.mu2) ** 2) / (2.0 * config.s2 ** 2))
    return b1 + b2


def generate_cauchy(config: CauchyConfig, n_tasks: int, n_samples: int,
                    seed) -> TaskSet:
    """Generate two-bump tasks with per-task Gaussian-process deviations.

    Each task draws inputs (uniform, or the fixed ``config.x_locations``
    grid), then a zero-mean squared-exponential GP sample jointly at the
    inputs via a Cholesky factor, then adds i.i.d. observation noise.

    Parameters
    ----------
    config : CauchyConfig
    n_tasks, n_samples : int
        Both at least 1.  When ``config.x_locations`` is set its length
        must equal ``n_samples``.
    seed : int or tuple of int

    Returns
    -------
    TaskSet
    """
    if n_tasks < 1 or n_samples < 1:
        raise InvalidConfig("n_tasks and n_samples must be at least 1")
    if config.x_locations is not None and len(config.x_locations) != n_samples:
        raise InvalidConfig(
            "x_locations length must equal n_samples "
            f"({len(config.x_locations)} != {n_samples})"
        )
    fixed_x = None
    if config.x_locations is not None:
        fixed_x = np.asarray(config.x_locations, dtype=float).reshape(-1, 1)
    tasks = []
    for i in range(n_tasks):
        rng = task_rng(seed, i)
        if fixed_x is not None:
            x = fixed_x.copy()
        else:
            x = rng.uniform(config.x_low, config.x_high, size=(n_samples, 1))
        z = rng.standard_normal((n_samples, 1))
        if config.task_outputscale > 0.0:
            diff = x - x.T
            cov = config.task_outputscale ** 2 * np.exp(
                -(diff ** 2) / (2.0 * config.task_lengthscale ** 2)
            )
            f = chol_psd(cov).lower @ z
        else:
            f = np.zeros((n_samples, 1))
        eps = config.noise_std * rng.standard_normal((n_samples, 1))
        y = cauchy_mean(config, x) + f + eps
        tasks.append(Task(x, y))
    prov = _provenance("cauchy", seed, n_tasks, n_samples, config.to_dict())
    return TaskSet(tuple(tasks), prov)


def generate_dataset(name: str, n_tasks: int, n_samples: int, seed,
                     config=None) -> TaskSet:
    """Generate a named benchmark dataset.

    Parameters
    ----------
    name : str
        One of ``DATASET_CONFIGS`` (``sinusoid-easy``, ``sinusoid-hard``,
        ``cauchy``).
    config : SinusoidConfig or CauchyConfig, optional
        Override the default family parameters.
    """
    if name not in DATASET_CONFIGS:
        raise InvalidConfig(
            f"unknown dataset {name!r}; expected one of {sorted(DATASET_CONFIGS)}"
        )
    if config is None:
        config = DATASET_CONFIGS[name]
    if name.startswith("sinusoid"):
        if not isinstance(config, SinusoidConfig):
            raise InvalidConfig(f"{name} requires a SinusoidConfig")
        return generate_sinusoid(config, n_tasks, n_samples, seed)
    if not isinstance(config, CauchyConfig):
        raise InvalidConfig(f"{name} requires a CauchyConfig")
    return generate_cauchy(config, n_tasks, n_samples, seed)


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a task CSV file.

    The file must contain a task id column plus ``x0..x{n_x-1}`` and
    ``y0..y{n_y-1}`` numeric columns.  Extra columns are ignored.
    """

    task_column: str = "task_id"
    input_columns: tuple = ("x0",)
    output_columns: tuple = ("y0",)

    def __post_init__(self):
        if not self.input_columns or not self.output_columns:
            raise InvalidConfig("schema needs at least one input and output column")
        object.__setattr__(self, "input_columns", tuple(self.input_columns))
        object.__setattr__(self, "output_columns", tuple(self.output_columns))

    def to_dict(self) -> dict:
        return {
            "task_column": self.task_column,
            "input_columns": list(self.input_columns),
            "output_columns": list(self.output_columns),
        }


def _default_columns(prefix: str, header: list) -> tuple:
    """Collect ``prefix0, prefix1, ...`` consecutively from header."""
    cols = []
    while f"{prefix}{len(cols)}" in header:
        cols.append(f"{prefix}{len(cols)}")
    return tuple(cols)


def save_tasks_csv(path, taskset: TaskSet) -> None:
    """Write a task set to CSV with the standard column layout.

    Columns are ``task_id, x0..x{n_x-1}, y0..y{n_y-1}``.  Floats are
    written with round-trip precision so a reload is bit-exact.  The
    write is atomic.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (
        ["task_id"]
        + [f"x{j}" for j in range(taskset.n_x)]
        + [f"y{j}" for j in range(taskset.n_y)]
    )
    writer.writerow(header)
    for i, task in enumerate(taskset):
        for r in range(task.n):
            row = [str(i)]
            row += [repr(float(v)) for v in task.X[r]]
            row += [repr(float(v)) for v in task.Y[r]]
            writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def load_tasks_csv(path, schema: CsvSchema | None = None) -> TaskSet:
    """Load tasks from a CSV file.

    Rows with the same task id form one task, in file order; tasks are
    ordered by first appearance of their id.  With ``schema=None`` the
    input/output columns are inferred from the header as the maximal
    consecutive runs ``x0..`` and ``y0..``.

    Raises
    ------
    MissingColumn
        If a required column is absent from the header.
    NonNumericCell
        If a data cell cannot be parsed as a float (reported with its
        1-based data row index and column name).
    EmptyFile
        If the file has no data rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if schema is None:
            if "task_id" not in header:
                raise MissingColumn("task_id")
            xcols = _default_columns("x", header)
            ycols = _default_columns("y", header)
            if not xcols:
                raise MissingColumn("x0")
            if not ycols:
                raise MissingColumn("y0")
            schema = CsvSchema("task_id", xcols, ycols)
        else:
            for name in (
                (schema.task_column,) + schema.input_columns + schema.output_columns
            ):
                if name not in header:
                    raise MissingColumn(name)
        col_index = {name: header.index(name) for name in header}
        tcol = col_index[schema.task_column]
        xidx = [col_index[c] for c in schema.input_columns]
        yidx = [col_index[c] for c in schema.output_columns]

        rows_by_task: dict = {}
        n_rows = 0
        for row_number, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            n_rows += 1

            def parse(idx: int):
                name = header[idx]
                if idx >= len(row):
                    raise NonNumericCell(row_number, name, "")
                cell = row[idx].strip()
                try:
                    return float(cell)
                except ValueError:
                    raise NonNumericCell(row_number, name, cell) from None

            tid = row[tcol].strip() if tcol < len(row) else ""
            xs = [parse(i) for i in xidx]
            ys = [parse(i) for i in yidx]
            rows_by_task.setdefault(tid, []).append((xs, ys))
    if n_rows == 0:
        raise EmptyFile(f"{path} has no data rows")
    tasks = []
    for tid, rows in rows_by_task.items():
        x = np.array([r[0] for r in rows], dtype=float)
        y = np.array([r[1] for r in rows], dtype=float)
        tasks.append(Task(x, y, {"task_id": tid}))
    prov = {
        "generator": "csv",
        "path": str(path),
        "schema": schema.to_dict(),
        "n_tasks": len(tasks),
    }
    return TaskSet(tuple(tasks), prov)


def split_context_test(task: Task, n_context: int, seed) -> tuple:
    """Split a task into context and test parts by a seeded partition.

    Indices are sampled without replacement; both parts keep their rows
    in the original task order.  Requires ``0 <= n_context < task.n`` so
    that the test part is never empty.

    Returns
    -------
    (Task, Task)
        The context task (possibly empty) and the test task.
    """
    if n_context < 0:
        raise InvalidConfig("n_context must be nonnegative")
    if n_context >= task.n:
        raise NotEnoughSamples(
            f"cannot hold out {n_context} context points from a task "
            f"with {task.n} samples"
        )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    perm = rng.permutation(task.n)
    ctx_idx = np.sort(perm[:n_context])
    test_idx = np.sort(perm[n_context:])
    context = Task(task.X[ctx_idx], task.Y[ctx_idx], dict(task.info))
    test = Task(task.X[test_idx], task.Y[test_idx], dict(task.info))
    return context, test
