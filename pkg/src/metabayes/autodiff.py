"""Reverse-mode automatic differentiation over 2-D float64 arrays.

A small tape-free engine in the micrograd style: each :class:`Node` holds
a value, its parent nodes, and a vector-Jacobian closure. Every value is
a 2-D array; scalars are shape (1, 1) and vectors are explicit rows or
columns. Broadcasting is limited to what the losses need: equal shapes,
a (1, 1) scalar against anything, and a row (1, m) or column (n, 1)
against an (n, m) matrix.

The module also owns the shared MLP feature map (:func:`forward`), the
named parameter container (:class:`ParamStore`), the gradient checker
(:func:`finite_diff_check`), and parameter checkpoint files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular as _solve_tri

from .exceptions import (
    InvalidConfig,
    NonFiniteLoss,
    NonScalarLoss,
    ShapeMismatch,
)

CHECKPOINT_MAGIC = "METABAYES-CKPT-1"


def _as_value(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"node values must be 2-D, got shape {arr.shape}")
    return arr


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("value", "parents", "vjp", "leaf_name")

    def __init__(self, value, parents=(), vjp=None, leaf_name=None):
        self.value = _as_value(value)
        self.parents = tuple(parents)
        self.vjp = vjp
        self.leaf_name = leaf_name

    @property
    def shape(self):
        return self.value.shape

    # Sugar so loss assembly reads like the math.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        tag = f" leaf={self.leaf_name!r}" if self.leaf_name else ""
        return f"Node(shape={self.value.shape}{tag})"


def constant(x) -> Node:
    """Wrap an array as a graph constant (no gradient flows into it)."""
    return Node(x)


def leaf(params: "ParamStore", name: str) -> Node:
    """A differentiable leaf bound to a named parameter."""
    return Node(params[name], leaf_name=name)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


# ---------------------------------------------------------------------------
# limited broadcasting support


def _bcast_shape(sa, sb):
    """Result shape for the limited broadcast rules, or raise."""
    if sa == sb:
        return sa
    if sa == (1, 1):
        return sb
    if sb == (1, 1):
        return sa
    if sa[1] == sb[1] and (sa[0] == 1 or sb[0] == 1):
        return (max(sa[0], sb[0]), sa[1])
    if sa[0] == sb[0] and (sa[1] == 1 or sb[1] == 1):
        return (sa[0], max(sa[1], sb[1]))
    raise ShapeMismatch(f"cannot broadcast shapes {sa} and {sb}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and grad.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeMismatch(f"cannot reduce gradient {grad.shape} to {shape}")
    return out


def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _bcast_shape(a.shape, b.shape)
    value = a.value + b.value

    def vjp(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Node(value, (a, b), vjp)


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _bcast_shape(a.shape, b.shape)
    value = a.value - b.value

    def vjp(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return Node(value, (a, b), vjp)


def neg(a) -> Node:
    a = _as_node(a)
    return Node(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _bcast_shape(a.shape, b.shape)
    value = a.value * b.value

    def vjp(g):
        return (_reduce_to(g * b.value, a.shape),
                _reduce_to(g * a.value, b.shape))

    return Node(value, (a, b), vjp)


def div(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _bcast_shape(a.shape, b.shape)
    value = a.value / b.value

    def vjp(g):
        return (_reduce_to(g / b.value, a.shape),
                _reduce_to(-g * a.value / (b.value * b.value), b.shape))

    return Node(value, (a, b), vjp)


def scale(a, c: float) -> Node:
    """Multiply by a Python constant."""
    a = _as_node(a)
    c = float(c)
    return Node(c * a.value, (a,), lambda g: (c * g,))


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    value = a.value @ b.value
    at, bt = a.value, b.value

    def vjp(g):
        return g @ bt.T, at.T @ g

    return Node(value, (a, b), vjp)


def transpose(a) -> Node:
    a = _as_node(a)
    return Node(a.value.T, (a,), lambda g: (g.T,))


def tanh(a) -> Node:
    a = _as_node(a)
    value = np.tanh(a.value)

    def vjp(g):
        return (g * (1.0 - value * value),)

    return Node(value, (a,), vjp)


def relu(a) -> Node:
    a = _as_node(a)
    mask = a.value > 0

    def vjp(g):
        return (g * mask,)

    return Node(a.value * mask, (a,), vjp)


def exp(a) -> Node:
    a = _as_node(a)
    value = np.exp(a.value)

    def vjp(g):
        return (g * value,)

    return Node(value, (a,), vjp)


def log(a) -> Node:
    a = _as_node(a)
    av = a.value

    def vjp(g):
        return (g / av,)

    return Node(np.log(av), (a,), vjp)


def softplus(a) -> Node:
    a = _as_node(a)
    av = a.value
    value = np.logaddexp(0.0, av)

    def vjp(g):
        return (g / (1.0 + np.exp(-av)),)

    return Node(value, (a,), vjp)


def sum_all(a) -> Node:
    a = _as_node(a)
    shape = a.shape

    def vjp(g):
        return (np.full(shape, g[0, 0]),)

    return Node([[a.value.sum()]], (a,), vjp)


def trace(a) -> Node:
    a = _as_node(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"trace of non-square shape {a.shape}")

    def vjp(g):
        return (g[0, 0] * np.eye(n),)

    return Node([[np.trace(a.value)]], (a,), vjp)


def diag_part(a) -> Node:
    """Diagonal of a square matrix as an (n, 1) column."""
    a = _as_node(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"diag_part of non-square shape {a.shape}")

    def vjp(g):
        out = np.zeros((n, n))
        np.fill_diagonal(out, g[:, 0])
        return (out,)

    return Node(np.diag(a.value).reshape(-1, 1), (a,), vjp)


def take_rows(a, indices) -> Node:
    """Select rows by index; the gradient scatter-adds them back."""
    a = _as_node(a)
    idx = np.asarray(indices, dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeMismatch(
            f"row indices out of range for shape {a.shape}")
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Node(a.value[idx], (a,), vjp)


def cholesky(a) -> Node:
    """Lower Cholesky factor, reading only the lower triangle of the input.

    The backward rule is the blocked reverse recurrence written in closed
    form: with P the lower triangle of LᵀL̄ (diagonal halved), the
    symmetric cotangent is ½·L⁻ᵀ(P + Pᵀ)L⁻¹, folded onto the lower
    triangle since the upper one is never read.
    """
    a = _as_node(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"cholesky of non-square shape {a.shape}")
    lower = np.linalg.cholesky(np.tril(a.value) + np.tril(a.value, -1).T)

    def vjp(g):
        lbar = np.tril(g)
        x = lower.T @ lbar
        p = np.tril(x)
        np.fill_diagonal(p, 0.5 * np.diag(x))
        sym = p + p.T
        tmp = _solve_tri(lower, sym, lower=True, trans="T")
        sbar = 0.5 * _solve_tri(lower, tmp.T, lower=True, trans="T").T
        abar = np.tril(2.0 * sbar)
        np.fill_diagonal(abar, np.diag(sbar))
        return (abar,)

    return Node(lower, (a,), vjp)


def triangular_solve(l, b, trans: bool = False) -> Node:
    """Solve op(L)·X = B for lower-triangular L; op is Lᵀ when trans."""
    l, b = _as_node(l), _as_node(b)
    n, m = l.shape
    if n != m:
        raise ShapeMismatch(f"triangular_solve with non-square L {l.shape}")
    if b.shape[0] != n:
        raise ShapeMismatch(f"triangular_solve: L {l.shape} vs B {b.shape}")
    lv = np.tril(l.value)
    x = _solve_tri(lv, b.value, lower=True, trans="T" if trans else "N")

    def vjp(g):
        bbar = _solve_tri(lv, g, lower=True, trans="N" if trans else "T")
        if trans:
            lbar = -x @ bbar.T
        else:
            lbar = -bbar @ x.T
        return np.tril(lbar), bbar

    return Node(x, (l, b), vjp)


def pairwise_sqdist(u) -> Node:
    """Matrix of squared Euclidean distances between the rows of U."""
    u = _as_node(u)
    uv = u.value
    sq = np.sum(uv * uv, axis=1, keepdims=True)
    value = sq + sq.T - 2.0 * (uv @ uv.T)
    np.maximum(value, 0.0, out=value)
    np.fill_diagonal(value, 0.0)

    def vjp(g):
        w = g + g.T
        return (2.0 * (w.sum(axis=1, keepdims=True) * uv - w @ uv),)

    return Node(value, (u,), vjp)


def lower_tri_exp_diag(a) -> Node:
    """Strictly-lower part of A plus exp of its diagonal on the diagonal.

    Maps an unconstrained square matrix to a valid Cholesky factor with a
    positive diagonal.
    """
    a = _as_node(a)
    n, m = a.shape
    if n != m:
        raise ShapeMismatch(f"lower_tri_exp_diag of non-square shape {a.shape}")
    d = np.exp(np.diag(a.value))
    value = np.tril(a.value, -1)
    np.fill_diagonal(value, d)

    def vjp(g):
        out = np.tril(g, -1)
        np.fill_diagonal(out, np.diag(g) * d)
        return (out,)

    return Node(value, (a,), vjp)


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Ordered, named float64 tensors with flatten/unflatten round-trip."""

    def __init__(self, arrays: dict | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        if arrays:
            for name, arr in arrays.items():
                self.add(name, arr)

    def add(self, name: str, array) -> None:
        if name in self._arrays:
            raise InvalidConfig(f"duplicate parameter name {name!r}")
        self._arrays[name] = _as_value(array).copy()

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._arrays[name]
        except KeyError:
            raise InvalidConfig(f"unknown parameter {name!r}") from None

    def __setitem__(self, name: str, array) -> None:
        arr = _as_value(array)
        if name in self._arrays and self._arrays[name].shape != arr.shape:
            raise ShapeMismatch(
                f"parameter {name!r} shape {self._arrays[name].shape} "
                f"cannot be replaced by {arr.shape}")
        self._arrays[name] = arr.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def shapes(self) -> dict[str, tuple]:
        return {name: arr.shape for name, arr in self._arrays.items()}

    @property
    def n_params(self) -> int:
        return sum(arr.size for arr in self._arrays.values())

    def copy(self) -> "ParamStore":
        return ParamStore(self._arrays)

    def flatten(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([a.reshape(-1) for a in self._arrays.values()])

    def unflatten(self, vec) -> "ParamStore":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != self.n_params:
            raise ShapeMismatch(
                f"flat vector of size {vec.size} does not match "
                f"{self.n_params} parameters")
        out = ParamStore()
        start = 0
        for name, arr in self._arrays.items():
            stop = start + arr.size
            out.add(name, vec[start:stop].reshape(arr.shape))
            start = stop
        return out

    def __repr__(self):
        inner = ", ".join(f"{k}:{v.shape}" for k, v in self._arrays.items())
        return f"ParamStore({inner})"


def backward(loss: Node, params: ParamStore | None = None) -> ParamStore:
    """Gradients of a scalar node with respect to every leaf parameter.

    When ``params`` is given, the result contains one gradient per stored
    parameter, with exact zeros for parameters the graph never touched.
    """
    if loss.value.shape != (1, 1):
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.value.shape}")

    topo: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(topo):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg

    by_name: dict[str, np.ndarray] = {}
    for node in topo:
        if node.leaf_name is None:
            continue
        g = grads.get(id(node))
        if g is None:
            continue
        acc = by_name.get(node.leaf_name)
        by_name[node.leaf_name] = g.copy() if acc is None else acc + g

    out = ParamStore()
    if params is not None:
        for name, arr in params.items():
            out.add(name, by_name.get(name, np.zeros(arr.shape)))
    else:
        for name, g in by_name.items():
            out.add(name, g)
    return out


# ---------------------------------------------------------------------------
# MLP feature map


@dataclass(frozen=True)
class FeatureNetSpec:
    """Architecture of one MLP: hidden layers with activation, linear output.

    ``name`` prefixes the parameter names so several nets can share one
    ParamStore.
    """

    input_dim: int
    hidden: tuple = ()
    output_dim: int = 1
    activation: str = "tanh"
    name: str = "phi"

    def __post_init__(self):
        widths = (self.input_dim, *self.hidden, self.output_dim)
        if any(int(w) < 1 for w in widths):
            raise InvalidConfig(f"all layer widths must be >= 1, got {widths}")
        if self.activation not in ("tanh", "relu"):
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))

    @property
    def dims(self) -> tuple:
        return (self.input_dim, *self.hidden, self.output_dim)

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.dims) - 1):
            names.append(f"{self.name}/W{i}")
            names.append(f"{self.name}/b{i}")
        return names


def init_net_params(spec: FeatureNetSpec, rng: np.random.Generator,
                    store: ParamStore | None = None) -> ParamStore:
    """Glorot-uniform weights, zero biases, appended to ``store``."""
    store = store if store is not None else ParamStore()
    dims = spec.dims
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        store.add(f"{spec.name}/W{i}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        store.add(f"{spec.name}/b{i}", np.zeros((1, fan_out)))
    return store


def forward(spec: FeatureNetSpec, params: ParamStore, X) -> Node:
    """Feature matrix Φ(X): one row per input row."""
    x = _as_node(X)
    if x.shape[1] != spec.input_dim:
        raise ShapeMismatch(
            f"X has {x.shape[1]} columns, net expects {spec.input_dim}")
    act = tanh if spec.activation == "tanh" else relu
    h = x
    n_layers = len(spec.dims) - 1
    for i in range(n_layers):
        w = leaf(params, f"{spec.name}/W{i}")
        b = leaf(params, f"{spec.name}/b{i}")
        if w.shape != (spec.dims[i], spec.dims[i + 1]):
            raise ShapeMismatch(
                f"{spec.name}/W{i} has shape {w.shape}, "
                f"expected {(spec.dims[i], spec.dims[i + 1])}")
        h = matmul(h, w) + b
        if i < n_layers - 1:
            h = act(h)
    return h


def finite_diff_check(loss_fn, params: ParamStore, step: float = 1e-5) -> float:
    """Compare reverse-mode gradients against central differences.

    ``loss_fn`` maps a ParamStore to a scalar Node. Returns the maximum
    over coordinates of |g_ad − g_fd| / max(1, |g_fd|).
    """
    if not (1e-7 <= step <= 1e-3):
        raise InvalidConfig(f"step must lie in [1e-7, 1e-3], got {step}")

    node = loss_fn(params)
    if node.value.shape != (1, 1):
        raise NonScalarLoss(f"loss_fn returned shape {node.value.shape}")
    if not np.isfinite(node.value[0, 0]):
        raise NonFiniteLoss("loss is not finite at the evaluation point")
    g_flat = backward(node, params).flatten()

    flat = params.flatten()
    worst = 0.0
    for k in range(flat.size):
        bumped = flat.copy()
        bumped[k] = flat[k] + step
        up = float(loss_fn(params.unflatten(bumped)).value[0, 0])
        bumped[k] = flat[k] - step
        down = float(loss_fn(params.unflatten(bumped)).value[0, 0])
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteLoss(f"loss not finite at finite-difference probe {k}")
        g_fd = (up - down) / (2.0 * step)
        err = abs(g_flat[k] - g_fd) / max(1.0, abs(g_fd))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoint files


def save_checkpoint(path: str, params: ParamStore, seed: int,
                    meta: dict | None = None) -> None:
    """Write named tensors plus the master seed as a JSON document.

    The write is atomic: a temp file in the target directory is renamed
    over the destination.
    """
    doc = {
        "magic": CHECKPOINT_MAGIC,
        "seed": int(seed),
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in params.items()
        },
    }
    if meta:
        doc["meta"] = meta
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> tuple[ParamStore, int, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InvalidConfig(f"checkpoint file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"checkpoint {path} is not valid JSON: {exc}") from None
    if doc.get("magic") != CHECKPOINT_MAGIC:
        raise InvalidConfig(
            f"{path} is not a parameter checkpoint (bad magic {doc.get('magic')!r})")
    params = ParamStore()
    for name, entry in doc["tensors"].items():
        params.add(name, np.asarray(entry["data"], dtype=float).reshape(entry["shape"]))
    return params, int(doc["seed"]), doc.get("meta", {})
