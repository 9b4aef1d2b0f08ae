"""Primal-dual training of power-control policies under expectation constraints.

Each iteration draws a fresh mini-batch, takes one Adam step on the network
parameters against the batch Lagrangian

    L = mean(f) + sum_k lam_k * (mean(g_k) - G_k),      f = -utility

and one projected subgradient step on the multipliers using the same batch
means: lam <- max(lam + eta_dual * (mean(g) - G), 0).
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, NumericOverflowError, Tensor
from .mlp import Architecture, InputTransform, Mlp, hidden_layers, output_layer
from .problems import Problem

log = logging.getLogger(__name__)

GRAD_NORM_LIMIT = 1e6


class Policy(Protocol):
    def named_parameters(self) -> list[tuple[str, Tensor]]: ...
    def forward(self, a, mode: str = "train") -> Tensor: ...
    def act(self, a: np.ndarray) -> np.ndarray: ...
    def state_arrays(self) -> dict[str, np.ndarray]: ...
    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None: ...


def _act_in_chunks(forward, a: np.ndarray, chunk: int = 50_000) -> np.ndarray:
    outs = [forward(a[i:i + chunk], "eval").data for i in range(0, len(a), chunk)]
    return np.concatenate(outs, axis=0)


class CentralizedPolicy:
    """One network mapping the global observation to every node's decision."""

    def __init__(self, problem: Problem, rng: np.random.Generator,
                 arch: Architecture | None = None, box_activation: str = "scaled_sigmoid"):
        arch = arch or Architecture.default(problem.problem_id, problem.n)
        self.problem = problem
        self.transform = InputTransform(arch.input_transform)
        self.net = Mlp(problem.obs_dim,
                       hidden_layers(arch.centralized, arch.batch_norm)
                       + [output_layer(problem.n, problem.feasible_set(), box_activation)],
                       rng)

    def named_parameters(self):
        return self.net.named_parameters()

    def parameters(self):
        return self.net.parameters()

    def forward(self, a, mode="train") -> Tensor:
        return self.net(self.transform(a), mode)

    def act(self, a) -> np.ndarray:
        return _act_in_chunks(self.forward, np.atleast_2d(a))

    def networks(self):
        return [self.net]

    def state_arrays(self):
        return self.net.state_arrays()

    def load_state_arrays(self, arrays):
        self.net.load_state_arrays(arrays)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.net.save(directory / "centralized.npz")
        meta = {"kind": "centralized", "problem": self.problem.describe(),
                "transform": asdict(self.transform)}
        (directory / "policy.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory: str | Path, problem: Problem) -> "CentralizedPolicy":
        directory = Path(directory)
        meta = json.loads((directory / "policy.json").read_text())
        obj = cls.__new__(cls)
        obj.problem = problem
        obj.transform = InputTransform(**meta["transform"])
        obj.net = Mlp.load(directory / "centralized.npz")
        if obj.net.in_dim != problem.obs_dim:
            raise ValueError("checkpoint does not match the problem's observation size")
        return obj


class ConstantPolicy:
    """Observation-independent decision vector; useful for convex sanity runs."""

    def __init__(self, dim: int, init: float = 0.0):
        self.theta = Tensor(np.full((1, dim), float(init)), requires_grad=True)

    def named_parameters(self):
        return [("theta", self.theta)]

    def forward(self, a, mode="train") -> Tensor:
        return ad.matmul(np.ones((len(np.atleast_2d(a)), 1)), self.theta)

    def act(self, a) -> np.ndarray:
        return self.forward(a, "eval").data

    def state_arrays(self):
        return {"theta": self.theta.data.copy()}

    def load_state_arrays(self, arrays):
        self.theta.data = np.array(arrays["theta"], dtype=float)


# ---------------------------------------------------------------- configuration

@dataclass
class TrainConfig:
    iterations: int = 50_000
    batch_size: int = 1000
    lr: float = 1e-3
    lr_dual: float | None = None
    # multiply both step sizes by lr_decay_factor at each of these fractions of the run
    lr_decay_at: tuple = (0.6, 0.85)
    lr_decay_factor: float = 0.2
    # when false only the primal step decays and the multipliers keep tracking
    decay_dual: bool = False
    checkpoint_every: int = 500
    val_size: int = 100_000
    freeze_dual: bool = False
    # from this fraction of the run on, messages use the deterministic quantiser
    # so the multipliers enforce the constraints of the policy that is deployed
    sign_messages_from: float | None = 0.6
    # dual step on g_k / G_k rather than g_k for bounds above one, which keeps the
    # relative multiplier step independent of the power scale
    normalize_dual: bool = True
    # after the loop, batch-norm running statistics are recomputed exactly on this
    # many fresh samples; the moving averages carry a few percent of batch noise
    bn_refresh_size: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.lr <= 0 or (self.lr_dual is not None and self.lr_dual <= 0):
            raise ValueError("step sizes must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.bn_refresh_size < 0:
            raise ValueError("bn_refresh_size must be >= 0")
        if self.sign_messages_from is not None and not 0.0 <= self.sign_messages_from <= 1.0:
            raise ValueError("sign_messages_from must be a fraction in [0, 1]")

    @classmethod
    def paper(cls, **kw) -> "TrainConfig":
        base = dict(iterations=500_000, batch_size=5000, lr=5e-5, lr_decay_at=(),
                    val_size=1_000_000)
        base.update(kw)
        return cls(**base)

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        return cls(**kw)

    def dual_lr(self) -> float:
        return self.lr if self.lr_dual is None else self.lr_dual

    def scale_at(self, t: int) -> float:
        s = 1.0
        for frac in self.lr_decay_at:
            if t > frac * self.iterations:
                s *= self.lr_decay_factor
        return s


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for init, mini-batches, binarisation noise, validation, batch-norm refresh."""
    names = ("init", "data", "noise", "val", "bn")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {k: np.random.default_rng(s) for k, s in zip(names, children)}


# ---------------------------------------------------------------- state

@dataclass
class DualState:
    lam: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "DualState":
        return cls(np.zeros(k))

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if np.any(self.lam < 0):
            raise ValueError("multipliers must be nonnegative")


@dataclass
class TrainState:
    policy: Policy
    problem: Problem
    dual: DualState
    adam: AdamState
    config: TrainConfig
    t: int = 0
    skipped: int = 0

    @property
    def bounds(self) -> np.ndarray:
        return self.problem.bounds

    def params(self) -> list[Tensor]:
        return [p for _, p in self.policy.named_parameters()]


@dataclass
class LagrangianTerms:
    value: Tensor
    cost: float
    constraint_means: np.ndarray
    utility: float

    @property
    def lagrangian(self) -> float:
        return float(self.value.data)


def lagrangian(a: np.ndarray, policy: Policy, problem: Problem, lam: np.ndarray,
               bounds: np.ndarray | None = None, mode: str = "train") -> LagrangianTerms:
    """Batch estimate of the Lagrangian, differentiable in the policy parameters."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    bounds = problem.bounds if bounds is None else np.asarray(bounds, dtype=float)
    x = policy.forward(a, mode)
    util = problem.utility(a, x).mean()
    g_means = problem.constraints(a, x).mean(axis=0)
    # G_k is a constant: subtracting it changes the value but not the gradient
    value = (g_means * lam).sum() - util - float(lam @ bounds)
    if not math.isfinite(float(value.data)):
        raise NumericOverflowError("lagrangian", f"value {float(value.data)}")
    return LagrangianTerms(value, -float(util.data), g_means.data.copy(), float(util.data))


def primal_step(state: TrainState, a: np.ndarray, lr_scale: float = 1.0) -> LagrangianTerms:
    params = state.params()
    for p in params:
        p.grad = None
    terms = lagrangian(a, state.policy, state.problem, state.dual.lam)
    terms.value.backward()
    grads = [p.grad for p in params]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads if g is not None))
    if not norm <= GRAD_NORM_LIMIT:
        state.skipped += 1
        log.warning("iteration %d: gradient norm %.3g over limit, step skipped", state.t, norm)
        return terms
    state.adam.lr = state.config.lr * lr_scale
    ad.adam_step(params, grads, state.adam, names=[n for n, _ in state.policy.named_parameters()])
    return terms


def dual_step(state: TrainState, constraint_means: np.ndarray, lr_scale: float = 1.0) -> np.ndarray:
    """Projected subgradient ascent on the multipliers from batch constraint means."""
    slack = np.asarray(constraint_means, dtype=float) - state.bounds
    if not state.config.freeze_dual:
        eta = state.config.dual_lr() * lr_scale
        if state.config.normalize_dual:
            slack = slack / np.maximum(np.abs(state.bounds), 1.0) ** 2
        state.dual.lam = np.maximum(state.dual.lam + eta * slack, 0.0)
    assert np.all(state.dual.lam >= 0)
    return state.dual.lam


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalMetrics:
    metric: float
    metric_std: float
    constraint_means: np.ndarray
    bounds: np.ndarray
    feasible: np.ndarray
    count: int

    @property
    def ci95(self) -> float:
        return 1.96 * self.metric_std / math.sqrt(self.count)

    @property
    def slack(self) -> np.ndarray:
        return self.constraint_means - self.bounds

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


def evaluate_decisions(problem: Problem, a: np.ndarray, x: np.ndarray,
                       rel_tol: float = 0.0) -> EvalMetrics:
    a = np.atleast_2d(a)
    util = problem.utility(a, x).data
    g = problem.constraints(a, x).data.mean(axis=0)
    return EvalMetrics(
        metric=float(util.mean()),
        metric_std=float(util.std()),
        constraint_means=g,
        bounds=problem.bounds.copy(),
        feasible=g <= problem.bounds * (1.0 + rel_tol),
        count=len(a),
    )


def evaluate(policy: Policy, problem: Problem, test_a: np.ndarray, rel_tol: float = 0.0) -> EvalMetrics:
    return evaluate_decisions(problem, test_a, policy.act(test_a), rel_tol)


# ---------------------------------------------------------------- logging

@dataclass
class ConvergenceLog:
    k: int
    rows: list = field(default_factory=list)
    diverged: bool = False

    @property
    def columns(self) -> list[str]:
        return (["iteration", "lagrangian", "cost"]
                + [f"slack_{i + 1}" for i in range(self.k)]
                + [f"lambda_{i + 1}" for i in range(self.k)]
                + ["val_metric"])

    def append(self, iteration: int, lagrangian_value: float, cost: float,
               slack: np.ndarray, lam: np.ndarray, val_metric: float) -> None:
        if self.rows and iteration <= self.rows[-1][0]:
            raise ValueError("iterations must increase")
        self.rows.append([iteration, lagrangian_value, cost, *np.asarray(slack).tolist(),
                          *np.asarray(lam).tolist(), val_metric])

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([r[idx] for r in self.rows])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


@dataclass
class TrainResult:
    policy: Policy
    dual: DualState
    log: ConvergenceLog
    state: TrainState


def _checkpoint(state: TrainState, log_: ConvergenceLog, val_a: np.ndarray) -> float:
    m = evaluate(state.policy, state.problem, val_a)
    slack = m.slack
    lam = state.dual.lam
    lag = -m.metric + float(lam @ slack)
    log_.append(state.t, lag, -m.metric, slack, lam.copy(), m.metric)
    return m.metric


def refresh_batch_norm(policy, a: np.ndarray) -> None:
    """Set every batch-norm running mean and variance to the statistics of ``a``."""
    nets = policy.networks() if hasattr(policy, "networks") else []
    stats = [rs for net in nets for rs in net.running.values()]
    if not stats:
        return
    saved = [rs.momentum for rs in stats]
    for rs in stats:
        rs.momentum = 0.0
    try:
        if hasattr(policy, "message_mode"):
            policy.forward(a, "train", "eval")
        else:
            policy.forward(a, "train")
    finally:
        for rs, m in zip(stats, saved):
            rs.momentum = m


def train(problem: Problem, policy: Policy, config: TrainConfig,
          streams: dict[str, np.random.Generator] | None = None,
          log_path: str | Path | None = None, progress: bool = False) -> TrainResult:
    """Run the primal-dual loop for ``config.iterations`` fresh mini-batches."""
    streams = streams or rng_streams(config.seed)
    state = TrainState(policy, problem, DualState.zeros(problem.num_constraints),
                       AdamState(config.lr), config)
    val_a = problem.sample(config.val_size, streams["val"]) if config.val_size else None
    clog = ConvergenceLog(problem.num_constraints)
    good = (policy.state_arrays(), state.dual.lam.copy())
    data = streams["data"]
    for t in range(1, config.iterations + 1):
        state.t = t
        scale = config.scale_at(t)
        if hasattr(policy, "message_mode"):
            late = config.sign_messages_from is not None and t > config.sign_messages_from * config.iterations
            policy.message_mode = "eval" if late else None
        a = problem.sample(config.batch_size, data)
        try:
            terms = primal_step(state, a, scale)
        except NumericOverflowError as exc:
            log.error("diverged at iteration %d (%s); restoring last good checkpoint", t, exc)
            policy.load_state_arrays(good[0])
            state.dual.lam = good[1]
            clog.diverged = True
            break
        dual_step(state, terms.constraint_means, scale if config.decay_dual else 1.0)
        if val_a is not None and (t % config.checkpoint_every == 0 or t == config.iterations):
            metric = _checkpoint(state, clog, val_a)
            if math.isfinite(metric):
                good = (policy.state_arrays(), state.dual.lam.copy())
            else:
                policy.load_state_arrays(good[0])
                state.dual.lam = good[1]
                clog.diverged = True
                break
            if progress:
                log.info("t=%d metric=%.4f lam=%s", t, metric, np.round(state.dual.lam, 4))
    if hasattr(policy, "message_mode"):
        policy.message_mode = None
    if config.bn_refresh_size and config.iterations:
        refresh_batch_norm(policy, problem.sample(config.bn_refresh_size, streams["bn"]))
    if log_path is not None:
        clog.to_csv(log_path)
    return TrainResult(policy, state.dual, clog, state)
