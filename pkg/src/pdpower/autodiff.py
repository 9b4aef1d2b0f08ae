"""Small reverse-mode autodiff over dense float64 numpy arrays.

Each op builds a new :class:`Tensor` holding references to its parents and a
closure that pushes the output adjoint back to them. ``Tensor.backward`` builds
a :class:`Tape` (reverse topological order of the graph) and replays it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NumericOverflowError(FloatingPointError):
    def __init__(self, op: str, message: str = "non-finite values in output"):
        super().__init__(f"{op}: {message}")
        self.op = op


def _check_finite(op: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericOverflowError(op)
    return arr


_ONES: dict[int, np.ndarray] = {}


def _colsum(a: np.ndarray) -> np.ndarray:
    """Column sums of a 2-D array; a BLAS mat-vec is much faster than sum(axis=0)."""
    n = a.shape[0]
    ones = _ONES.get(n)
    if ones is None:
        ones = _ONES[n] = np.ones(n)
    return ones @ a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (undo numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    if grad.ndim == 2 and len(shape) == 1 and shape[0] == grad.shape[1]:
        return _colsum(grad)
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Callable[[np.ndarray], None] | None = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | float | None = None) -> "Tape":
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        tape = Tape.from_output(self)
        tape.replay(self, np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape))
        return tape

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None): return reduce("sum", self, axis)
    def mean(self, axis=None): return reduce("mean", self, axis)
    def min(self, axis=None): return reduce("min_over_axis", self, axis)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def relu(self): return relu(self)
    def tanh(self): return tanh(self)
    def sigmoid(self): return sigmoid(self)
    def exp(self): return exp(self)
    def log1p(self): return log1p(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Tape:
    """Ops of one graph in reverse topological order, ready to replay."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        order.reverse()
        return cls(order)

    def replay(self, out: Tensor, seed: np.ndarray) -> None:
        # intermediate adjoints live here so that only leaves keep .grad
        adj: dict[int, np.ndarray] = {id(out): np.array(seed, dtype=np.float64)}
        for node in self.nodes:
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg


def _make(data: np.ndarray, parents: tuple, backward, op: str) -> Tensor:
    _check_finite(op, data)
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else (),
                  _backward=backward if req else None, op=op)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T if a.requires_grad else None),
                (b, a.data.T @ g if b.requires_grad else None))
    return _make(out, (a, b), backward, "matmul")


def affine(x, w, b) -> Tensor:
    """Fused ``x @ w + b`` for a batch of row vectors."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"affine: incompatible shapes {x.shape}, {w.shape}, {b.shape}")
    out = x.data @ w.data
    out += b.data

    def backward(g):
        return ((x, g @ w.data.T if x.requires_grad else None),
                (w, x.data.T @ g), (b, _colsum(g)))
    return _make(out, (x, w, b), backward, "affine")


# ---------------------------------------------------------------- elementwise

def _binary_shapes(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))
    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))
    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape) if a.requires_grad else None),
                (b, _unbroadcast(g * a.data, b.shape) if b.requires_grad else None))
    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("div", a, b)
    if np.any(b.data == 0.0):
        raise ZeroDivisionError("div: zero in denominator")
    out = a.data / b.data

    def backward(g):
        return ((a, _unbroadcast(g / b.data, a.shape) if a.requires_grad else None),
                (b, _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None))
    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: ((a, -g),), "neg")


def log1p(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= -1.0):
        raise NumericOverflowError("log1p", "argument must exceed -1")
    return _make(np.log1p(a.data), (a,), lambda g: ((a, g / (1.0 + a.data)),), "log1p")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: ((a, g * out),), "exp")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: ((a, g * mask),), "relu")


max0 = relu


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: ((a, g * (1.0 - out * out)),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split by sign so exp never overflows
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: ((a, g * out * (1.0 - out)),), "sigmoid")


def clip(a, lo, hi) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    a = as_tensor(a)
    lo_arr = np.asarray(lo, dtype=np.float64)
    hi_arr = np.asarray(hi, dtype=np.float64)
    out = np.minimum(np.maximum(a.data, lo_arr), hi_arr)
    mask = (a.data >= lo_arr) & (a.data <= hi_arr)
    return _make(out, (a,), lambda g: ((a, g * mask),), "clip")


ELEMENTWISE: dict[str, Callable] = {
    "add": add, "sub": sub, "mul": mul, "div": div,
    "log1p": log1p, "exp": exp, "relu": relu, "tanh": tanh,
    "sigmoid": sigmoid, "max0": max0,
}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------- reductions

def reduce(op: str, x, axis=None) -> Tensor:
    x = as_tensor(x)
    if axis is not None and not (-x.ndim <= axis < x.ndim):
        raise ValueError(f"{op}: axis {axis} invalid for shape {x.shape}")
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise ValueError(f"{op}: reduction over an empty axis")

    if op == "sum":
        out = x.data.sum(axis=axis)

        def backward(g):
            g = g if axis is None else np.expand_dims(g, axis)
            return ((x, np.broadcast_to(g, x.shape)),)
    elif op == "mean":
        out = x.data.mean(axis=axis)

        def backward(g):
            g = g if axis is None else np.expand_dims(g, axis)
            return ((x, np.broadcast_to(g / n, x.shape)),)
    elif op == "min_over_axis":
        if axis is None:
            flat = int(np.argmin(x.data))
            out = x.data.reshape(-1)[flat]

            def backward(g):
                gx = np.zeros(x.size)
                gx[flat] = g
                return ((x, gx.reshape(x.shape)),)
        else:
            # np.argmin returns the first minimiser, so ties go to the lowest index
            idx = np.expand_dims(np.argmin(x.data, axis=axis), axis)
            out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

            def backward(g):
                gx = np.zeros(x.shape)
                np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
                return ((x, gx),)
    else:
        raise ValueError(f"unknown reduction {op!r}")
    return _make(np.asarray(out), (x,), backward, op)


# ---------------------------------------------------------------- shape plumbing

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: ((x, g.reshape(x.shape)),), "reshape")


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        gx = np.zeros(x.shape)
        if _is_basic_index(idx):
            gx[idx] = g
        else:
            np.add.at(gx, idx, g)
        return ((x, gx),)
    return _make(np.array(x.data[idx]), (x,), backward, "getitem")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: nothing to concatenate")
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def backward(g):
        parts = []
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            parts.append((t, g[tuple(sl)]))
        return tuple(parts)
    return _make(out, tuple(ts), backward, "concat")


# ---------------------------------------------------------------- batch norm

@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.99

    @classmethod
    def init(cls, dim: int, momentum: float = 0.99) -> "RunningStats":
        return cls(np.zeros(dim), np.ones(dim), momentum)


BN_EPS = 1e-5


def batch_norm(x, gamma, beta, mode: str, running: RunningStats, eps: float = BN_EPS) -> Tensor:
    """Normalise each column of ``x`` (S x d), then scale by gamma and shift by beta.

    In train mode the batch statistics are used and folded into ``running``;
    eval mode reads ``running`` only.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if mode == "train":
        s = x.shape[0]
        if s < 2:
            raise ValueError("batch_norm: train mode needs at least 2 rows")
        mu = _colsum(x.data) / s
        xc = x.data - mu
        var = _colsum(xc * xc) / s
        m = running.momentum
        running.mean = m * running.mean + (1 - m) * mu
        running.var = m * running.var + (1 - m) * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def backward(g):
            dgamma = _colsum(g * xhat)
            dbeta = _colsum(g)
            dx = None
            if x.requires_grad:
                # standard batch-norm adjoint, in terms of dgamma/dbeta
                dx = (gamma.data * inv / s) * (s * g - dbeta - xhat * dgamma)
            return ((x, dx), (gamma, dgamma), (beta, dbeta))
    elif mode == "eval":
        inv = 1.0 / np.sqrt(running.var + eps)
        xhat = (x.data - running.mean) * inv

        def backward(g):
            return ((x, g * gamma.data * inv), (gamma, _colsum(g * xhat)), (beta, _colsum(g)))
    else:
        raise ValueError(f"batch_norm: unknown mode {mode!r}")
    out = xhat * gamma.data + beta.data
    return _make(out, (x, gamma, beta), backward, "batch_norm")


# ---------------------------------------------------------------- optimiser / init

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              names: Sequence[str] | None = None) -> None:
    """In-place bias-corrected Adam update. ``None`` grads are treated as zero."""
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("adam_step: parameter list changed length")
    for k, g in enumerate(grads):
        if g is not None and not np.isfinite(g).all():
            label = names[k] if names is not None else f"param[{k}]"
            raise NumericOverflowError("adam_step", f"non-finite gradient for {label}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    step_size = state.lr * math.sqrt(c2) / c1
    eps_hat = state.eps * math.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = 0.0
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        # same as lr * mhat / (sqrt(vhat) + eps), rearranged
        p.data -= step_size * m / (np.sqrt(v) + eps_hat)


def xavier_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    """Zero-mean Gaussian weights of variance 1/fan_in, shape (fan_in, fan_out)."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    w = rng.normal(0.0, math.sqrt(1.0 / fan_in), size=(fan_in, fan_out))
    return Tensor(w, requires_grad=True)


BIAS_INIT = 0.01


def bias_init(dim: int) -> Tensor:
    return Tensor(np.full(dim, BIAS_INIT), requires_grad=True)


def parameters_grads(params: Iterable[Tensor]) -> list:
    return [p.grad for p in params]
