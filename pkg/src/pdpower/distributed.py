"""Per-node quantizer/optimizer networks exchanging B-bit bipolar messages.

Node ``i`` maps its local observation ``a_i`` through its quantizer network
(tanh output, then stochastic binarisation) to ``v_i`` of length
``L_i = sum_{j != i} B_ij``. ``v_i`` is cut into per-destination segments
``v_ij`` in ascending ``j`` (skipping ``i``). The optimizer network of node
``i`` sees ``c_i = [a_i | v_1i | ... | v_Ni]``, senders ascending, ``i`` skipped.

Training is centralised: all 2N networks form one graph and are updated
jointly by :func:`pdpower.trainer.train`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .binarize import StochasticBinarizer
from .mlp import Architecture, InputTransform, LayerSpec, Mlp, hidden_layers, output_layer
from .problems import Problem
from .trainer import TrainConfig, TrainResult, _act_in_chunks, rng_streams, train


@dataclass(frozen=True)
class Topology:
    n: int
    bits: tuple  # bits[i][j]: capacity of link i -> j; diagonal ignored

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.shape != (self.n, self.n):
            raise ValueError(f"bits must be {self.n}x{self.n}")
        if np.any(b < 0):
            raise ValueError("backhaul capacities must be nonnegative")

    @classmethod
    def uniform(cls, n: int, bits: float) -> "Topology":
        return cls.from_matrix(np.full((n, n), bits))

    @classmethod
    def from_matrix(cls, bits) -> "Topology":
        # fractional capacities carry floor(B_ij) bits
        b = np.floor(np.asarray(bits, dtype=float)).astype(int)
        np.fill_diagonal(b, 0)
        return cls(len(b), tuple(tuple(int(v) for v in row) for row in b))

    def b(self, i: int, j: int) -> int:
        return 0 if i == j else self.bits[i][j]

    def out_bits(self, i: int) -> int:
        """L_i: total bits node i sends."""
        return sum(self.b(i, j) for j in range(self.n))

    def in_bits(self, i: int) -> int:
        """M_i: total bits node i receives."""
        return sum(self.b(j, i) for j in range(self.n))

    def others(self, i: int) -> list[int]:
        return [j for j in range(self.n) if j != i]


class NodeNet:
    """Quantizer (None when the node sends nothing) and optimizer of one node."""

    def __init__(self, quantizer: Mlp | None, optimizer: Mlp, binarizer: StochasticBinarizer):
        self.quantizer = quantizer
        self.optimizer = optimizer
        self.binarizer = binarizer

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        if self.quantizer is not None:
            out += [(f"{prefix}Q.{k}", p) for k, p in self.quantizer.named_parameters()]
        out += [(f"{prefix}D.{k}", p) for k, p in self.optimizer.named_parameters()]
        return out

    def save(self, directory: str | Path, index: int) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        if self.quantizer is not None:
            paths.append(directory / f"node{index}_quantizer.npz")
            self.quantizer.save(paths[-1])
        paths.append(directory / f"node{index}_optimizer.npz")
        self.optimizer.save(paths[-1])
        return paths

    @classmethod
    def load(cls, directory: str | Path, index: int, rng: np.random.Generator | None = None) -> "NodeNet":
        directory = Path(directory)
        qpath = directory / f"node{index}_quantizer.npz"
        quant = Mlp.load(qpath) if qpath.exists() else None
        return cls(quant, Mlp.load(directory / f"node{index}_optimizer.npz"),
                   StochasticBinarizer(rng or np.random.default_rng(0)))


def build_nodes(problem: Problem, topology: Topology, rng_init: np.random.Generator,
                rng_noise: np.random.Generator, arch: Architecture | None = None,
                box_activation: str = "scaled_sigmoid") -> list[NodeNet]:
    arch = arch or Architecture.default(problem.problem_id, problem.n)
    fs = problem.feasible_set()
    noise_streams = rng_noise.spawn(topology.n)
    nodes = []
    for i in range(topology.n):
        a_dim, out_dim = problem.obs_dims[i], problem.out_dims[i]
        L = topology.out_bits(i)
        quant = None
        if L > 0:
            quant = Mlp(a_dim, hidden_layers(arch.quantizer, arch.quantizer_batch_norm)
                        + [LayerSpec(L, "tanh")], rng_init)
        node_fs = _node_set(fs, i, out_dim)
        opt = Mlp(a_dim + topology.in_bits(i),
                  hidden_layers(arch.optimizer, arch.batch_norm)
                  + [output_layer(out_dim, node_fs, box_activation)], rng_init)
        nodes.append(NodeNet(quant, opt, StochasticBinarizer(noise_streams[i])))
    return nodes


def _node_set(fs, i, out_dim):
    if fs.kind == "nonneg":
        return fs
    lo, hi = fs.lo[i * out_dim:(i + 1) * out_dim], fs.hi[i * out_dim:(i + 1) * out_dim]
    return type(fs)("box", tuple(lo), tuple(hi))


# ---------------------------------------------------------------- message passing

MessageSet = dict  # (i, j) -> Tensor of shape (S, B_ij) with entries in {-1, +1}


def quantize_all(nodes: Sequence[NodeNet], topology: Topology, observations: Sequence,
                 mode: str = "train", message_mode: str | None = None) -> MessageSet:
    """Every node's outgoing messages.

    ``message_mode`` overrides how bits are drawn (``train``: stochastic,
    ``eval``: sign) while ``mode`` drives batch norm; by default both follow ``mode``.
    """
    message_mode = message_mode or mode
    messages: MessageSet = {}
    for i, node in enumerate(nodes):
        a_i = ad.as_tensor(observations[i])
        if node.quantizer is None:
            for j in topology.others(i):
                messages[(i, j)] = ad.Tensor(np.zeros((a_i.shape[0], 0)))
            continue
        v_hat = node.quantizer(a_i, mode)
        v = node.binarizer(v_hat, message_mode)
        lo = 0
        for j in topology.others(i):
            b = topology.b(i, j)
            messages[(i, j)] = v[:, lo:lo + b]
            lo += b
    return messages


def assemble_inputs(observations: Sequence, messages: MessageSet, topology: Topology) -> list[Tensor]:
    inputs = []
    for i in range(topology.n):
        parts = [ad.as_tensor(observations[i])]
        for j in topology.others(i):
            try:
                m = messages[(j, i)]
            except KeyError:
                raise KeyError(f"missing message from node {j} to node {i}") from None
            if m.shape[1] != topology.b(j, i):
                raise ValueError(f"message {j}->{i} has {m.shape[1]} bits, link carries {topology.b(j, i)}")
            if m.shape[1]:
                parts.append(m)
        inputs.append(parts[0] if len(parts) == 1 else ad.concat(parts, axis=1))
    return inputs


def distributed_forward(nodes: Sequence[NodeNet], topology: Topology, observations: Sequence,
                        mode: str = "train", message_mode: str | None = None) -> Tensor:
    messages = quantize_all(nodes, topology, observations, mode, message_mode)
    inputs = assemble_inputs(observations, messages, topology)
    xs = [node.optimizer(c, mode) for node, c in zip(nodes, inputs)]
    return xs[0] if len(xs) == 1 else ad.concat(xs, axis=1)


class DistributedPolicy:
    def __init__(self, problem: Problem, topology: Topology, nodes: list[NodeNet],
                 transform: InputTransform | None = None):
        if topology.n != problem.n:
            raise ValueError("topology and problem disagree on N")
        self.problem = problem
        self.topology = topology
        self.nodes = nodes
        self.transform = transform or InputTransform()
        # default bit rule for forward(); None lets the batch-norm mode decide
        self.message_mode: str | None = None

    @classmethod
    def create(cls, problem: Problem, topology: Topology, streams: dict,
               arch: Architecture | None = None, box_activation: str = "scaled_sigmoid"):
        arch = arch or Architecture.default(problem.problem_id, problem.n)
        nodes = build_nodes(problem, topology, streams["init"], streams["noise"], arch, box_activation)
        return cls(problem, topology, nodes, InputTransform(arch.input_transform))

    def named_parameters(self):
        out = []
        for i, node in enumerate(self.nodes):
            out += node.named_parameters(prefix=f"node{i}.")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def quantizer_parameters(self):
        return [p for n, p in self.named_parameters() if ".Q." in n]

    def _local(self, a) -> list[np.ndarray]:
        return self.problem.observation_partition(self.transform(np.atleast_2d(a)))

    def forward(self, a, mode="train", message_mode: str | None = None) -> Tensor:
        return distributed_forward(self.nodes, self.topology, self._local(a), mode,
                                   message_mode or self.message_mode)

    def act(self, a, stochastic: bool = False) -> np.ndarray:
        """Decisions with frozen batch norm; bits are signs, or sampled if ``stochastic``."""
        msg = "train" if stochastic else "eval"
        return _act_in_chunks(lambda x, mode: self.forward(x, mode, msg), np.atleast_2d(a))

    def messages(self, a, mode="eval") -> MessageSet:
        return quantize_all(self.nodes, self.topology, self._local(a), mode)

    def reseed_noise(self, rng: np.random.Generator) -> None:
        for node, child in zip(self.nodes, rng.spawn(len(self.nodes))):
            node.binarizer.rng = child

    def networks(self):
        return [net for node in self.nodes for net in (node.quantizer, node.optimizer) if net is not None]

    def state_arrays(self):
        out = {}
        for i, node in enumerate(self.nodes):
            if node.quantizer is not None:
                out.update({f"node{i}.Q.{k}": v for k, v in node.quantizer.state_arrays().items()})
            out.update({f"node{i}.D.{k}": v for k, v in node.optimizer.state_arrays().items()})
        return out

    def load_state_arrays(self, arrays):
        for i, node in enumerate(self.nodes):
            if node.quantizer is not None:
                pre = f"node{i}.Q."
                node.quantizer.load_state_arrays({k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)})
            pre = f"node{i}.D."
            node.optimizer.load_state_arrays({k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)})

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        for i, node in enumerate(self.nodes):
            node.save(directory, i)
        meta = {"kind": "distributed", "problem": self.problem.describe(),
                "topology": {"n": self.topology.n, "bits": self.topology.bits},
                "transform": asdict(self.transform)}
        (directory / "policy.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory: str | Path, problem: Problem,
             rng: np.random.Generator | None = None) -> "DistributedPolicy":
        directory = Path(directory)
        meta = json.loads((directory / "policy.json").read_text())
        topo = Topology.from_matrix(meta["topology"]["bits"])
        rng = rng or np.random.default_rng(0)
        nodes = [NodeNet.load(directory, i, child) for i, child in enumerate(rng.spawn(topo.n))]
        return cls(problem, topo, nodes, InputTransform(**meta["transform"]))


def train_distributed(problem: Problem, topology: Topology, config: TrainConfig,
                      arch: Architecture | None = None, box_activation: str = "scaled_sigmoid",
                      log_path=None, progress: bool = False) -> TrainResult:
    streams = rng_streams(config.seed)
    policy = DistributedPolicy.create(problem, topology, streams, arch, box_activation)
    return train(problem, policy, config, streams=streams, log_path=log_path, progress=progress)
