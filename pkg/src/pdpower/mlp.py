"""Fully-connected policy networks with a feasibility-enforcing output layer."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RunningStats, Tensor

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear", "scaled_sigmoid", "projection")


@dataclass(frozen=True)
class FeasibleSet:
    """Per-output feasible set: ``nonneg`` (x >= 0) or ``box`` (lo <= x <= hi)."""

    kind: str = "nonneg"
    lo: tuple = ()
    hi: tuple = ()

    def __post_init__(self):
        if self.kind not in ("nonneg", "box"):
            raise ValueError(f"unknown feasible set kind {self.kind!r}")
        if self.kind == "box":
            if len(self.lo) != len(self.hi):
                raise ValueError("box bounds must have equal length")
            if any(l > h for l, h in zip(self.lo, self.hi)):
                raise ValueError("box requires lo <= hi elementwise")

    @classmethod
    def box(cls, lo, hi, dim: int | None = None) -> "FeasibleSet":
        lo_a, hi_a = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        if dim is not None:
            lo_a, hi_a = np.broadcast_to(lo_a, (dim,)), np.broadcast_to(hi_a, (dim,))
        return cls("box", tuple(lo_a.tolist()), tuple(hi_a.tolist()))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        if self.kind == "nonneg":
            return bool(np.all(x >= -tol))
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))


def project(fset: FeasibleSet, u) -> np.ndarray:
    """Euclidean projection onto ``fset``; for these sets it is a clamp."""
    u = np.asarray(u, dtype=float)
    if fset.kind == "nonneg":
        return np.maximum(u, 0.0)
    return np.clip(u, np.asarray(fset.lo), np.asarray(fset.hi))


def mask_node_output(x, i: int, dims: Sequence[int]):
    """Slice of the global vector ``x`` that belongs to node ``i``.

    Nodes are labelled 1..N here, like the unit vectors e_i that select them
    (everything else in the package indexes nodes from 0). Works on the last
    axis, so batched (S x sum(dims)) inputs and Tensors are fine.
    """
    if not isinstance(x, Tensor):
        x = np.asarray(x)
    length = (x.data if isinstance(x, Tensor) else x).shape[-1]
    if sum(dims) != length:
        raise ValueError(f"dims {list(dims)} do not partition length {length}")
    if not 1 <= i <= len(dims):
        raise IndexError(f"node label {i} out of range 1..{len(dims)}")
    lo = int(sum(dims[:i - 1]))
    return x[..., lo:lo + dims[i - 1]]


@dataclass(frozen=True)
class LayerSpec:
    out_dim: int
    activation: str = "relu"
    use_batch_norm: bool = False
    bound: float | tuple | None = None
    feasible: FeasibleSet | None = None

    def __post_init__(self):
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "scaled_sigmoid":
            if self.bound is None or np.any(np.asarray(self.bound) <= 0):
                raise ValueError("scaled_sigmoid needs a positive bound")
        if self.activation == "projection" and self.feasible is None:
            raise ValueError("projection activation needs a feasible set")


def _activate(spec: LayerSpec, z: Tensor) -> Tensor:
    act = spec.activation
    if act == "relu":
        return ad.relu(z)
    if act == "tanh":
        return ad.tanh(z)
    if act == "sigmoid":
        return ad.sigmoid(z)
    if act == "linear":
        return z
    if act == "scaled_sigmoid":
        return ad.sigmoid(z) * np.asarray(spec.bound, dtype=float)
    fs = spec.feasible
    if fs.kind == "nonneg":
        return ad.relu(z)
    return ad.clip(z, np.asarray(fs.lo), np.asarray(fs.hi))


def hidden_layers(widths: Sequence[int], batch_norm: bool = True) -> list[LayerSpec]:
    return [LayerSpec(w, "relu", batch_norm) for w in widths]


class Mlp:
    """Affine -> (batch norm) -> activation, repeated.

    Weights are stored (in, out) so a batch of row vectors maps as ``x @ W + b``.
    """

    def __init__(self, in_dim: int, layers: Sequence[LayerSpec], rng: np.random.Generator,
                 bn_momentum: float = 0.99):
        if in_dim < 1:
            raise ValueError("in_dim must be >= 1")
        self.in_dim = in_dim
        self.layers = list(layers)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        self.gammas: dict[int, Tensor] = {}
        self.betas: dict[int, Tensor] = {}
        self.running: dict[int, RunningStats] = {}
        prev = in_dim
        for r, spec in enumerate(self.layers):
            self.weights.append(ad.xavier_init(prev, spec.out_dim, rng))
            self.biases.append(ad.bias_init(spec.out_dim))
            if spec.use_batch_norm:
                self.gammas[r] = Tensor(np.ones(spec.out_dim), requires_grad=True)
                self.betas[r] = Tensor(np.zeros(spec.out_dim), requires_grad=True)
                self.running[r] = RunningStats.init(spec.out_dim, bn_momentum)
            prev = spec.out_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for r in range(len(self.layers)):
            out.append((f"W{r}", self.weights[r]))
            out.append((f"b{r}", self.biases[r]))
            if r in self.gammas:
                out.append((f"gamma{r}", self.gammas[r]))
                out.append((f"beta{r}", self.betas[r]))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def widths(self) -> list[int]:
        return [s.out_dim for s in self.layers]

    def forward(self, x, mode: str = "train") -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ad.ShapeError(f"Mlp expects (S, {self.in_dim}) input, got {x.shape}")
        u = x
        for r, spec in enumerate(self.layers):
            z = ad.affine(u, self.weights[r], self.biases[r])
            if spec.use_batch_norm:
                z = ad.batch_norm(z, self.gammas[r], self.betas[r], mode, self.running[r])
            u = _activate(spec, z)
        return u

    __call__ = forward

    # ------------------------------------------------------------ checkpoints
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data.copy() for name, p in self.named_parameters()}
        for r, rs in self.running.items():
            arrays[f"running_mean{r}"] = rs.mean.copy()
            arrays[f"running_var{r}"] = rs.var.copy()
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if arrays[name].shape != p.shape:
                raise ad.ShapeError(f"{name}: checkpoint shape {arrays[name].shape} != {p.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)
        for r, rs in self.running.items():
            rs.mean = np.array(arrays[f"running_mean{r}"], dtype=np.float64)
            rs.var = np.array(arrays[f"running_var{r}"], dtype=np.float64)

    def meta(self) -> dict:
        layers = []
        for s in self.layers:
            d = asdict(s)
            if s.feasible is not None:
                d["feasible"] = asdict(s.feasible)
            layers.append(d)
        return {"in_dim": self.in_dim, "layers": layers}

    def save(self, path: str | Path) -> None:
        np.savez(path, __meta__=np.array(json.dumps(self.meta())), **self.state_arrays())

    @classmethod
    def from_meta(cls, meta: dict, rng: np.random.Generator | None = None) -> "Mlp":
        specs = []
        for d in meta["layers"]:
            d = dict(d)
            if d.get("feasible") is not None:
                f = d["feasible"]
                d["feasible"] = FeasibleSet(f["kind"], tuple(f["lo"]), tuple(f["hi"]))
            if isinstance(d.get("bound"), list):
                d["bound"] = tuple(d["bound"])
            specs.append(LayerSpec(**d))
        return cls(meta["in_dim"], specs, rng or np.random.default_rng(0))

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with np.load(path) as z:
            meta = json.loads(str(z["__meta__"]))
            net = cls.from_meta(meta)
            net.load_state_arrays({k: z[k] for k in z.files if k != "__meta__"})
        return net


@dataclass(frozen=True)
class Architecture:
    """Hidden widths for the three network roles of one problem size."""

    centralized: tuple
    optimizer: tuple
    quantizer: tuple
    batch_norm: bool = True
    quantizer_batch_norm: bool = True
    input_transform: str = "log"

    @classmethod
    def default(cls, problem_id: str, n: int) -> "Architecture":
        if problem_id == "p5":
            return cls((20 * n,) * 5, (20 * n,) * 4, (20 * n,))
        return cls((10 * n,) * 4, (10 * n,) * 3, (10 * n,))


@dataclass(frozen=True)
class InputTransform:
    """Recorded elementwise map applied to raw channel gains before a network.

    ``log`` is ``log(a + offset)``, a bijection from [0, inf) onto
    [log(offset), inf); ``identity`` passes gains through. Metrics are always
    computed on the raw gains, only network inputs are transformed.
    """

    kind: str = "log"
    offset: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("identity", "log"):
            raise ValueError(f"unknown input transform {self.kind!r}")
        if self.kind == "log" and not self.offset > 0:
            raise ValueError("log transform needs a positive offset")

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self.kind == "identity":
            return a
        if np.any(a < 0):
            raise ValueError("channel gains must be nonnegative")
        return np.log(a + self.offset)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z if self.kind == "identity" else np.exp(z) - self.offset


def output_layer(dim: int, feasible: FeasibleSet, box_activation: str = "scaled_sigmoid") -> LayerSpec:
    """Output layer that keeps every decision inside ``feasible``."""
    if feasible.kind == "box" and box_activation == "scaled_sigmoid":
        if any(l != 0.0 for l in feasible.lo):
            raise ValueError("scaled_sigmoid output assumes a [0, hi] box")
        hi = feasible.hi if len(set(feasible.hi)) > 1 else feasible.hi[0]
        return LayerSpec(dim, "scaled_sigmoid", bound=hi)
    return LayerSpec(dim, "projection", feasible=feasible)
