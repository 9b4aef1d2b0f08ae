"""Power-control problems with long-term (expectation) constraints.

* ``p3`` cognitive multiple access: maximise E[log(1 + sum_i h_i p_i)] subject to
  E[p_i] <= P and E[sum_i g_i p_i] <= Gamma, p >= 0.
* ``p4`` interference channel sum rate, E[p_i] <= P_A and 0 <= p_i <= P_P.
* ``p5`` interference channel minimum rate, same constraints as ``p4``.

Channel gains are unit-mean exponential power gains; noise power is 1 and all
rates are in nats.

Global observation layout: the per-node observations ``a_i`` concatenated in node
order. For C-MAC ``a_i = (h_i, g_i)``; for the IFC ``a_i = (h_1i, ..., h_Ni)``,
i.e. column ``i`` of ``H`` where ``H[j, i]`` is the gain from transmitter ``j``
to receiver ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .mlp import FeasibleSet


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


@dataclass
class ChannelSample:
    """A batch of fading realisations. Either ``h``/``g`` (C-MAC) or ``H`` (IFC)."""

    h: np.ndarray | None = None
    g: np.ndarray | None = None
    H: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.h) if self.H is None else len(self.H)


# ---------------------------------------------------------------- cost functions
# These take Tensors for p (and plain arrays for the channels) so the same code
# serves training and evaluation.

def _p(p) -> Tensor:
    return ad.as_tensor(np.atleast_2d(p) if not isinstance(p, Tensor) else p)


def cmac_capacity(h: np.ndarray, p) -> Tensor:
    p = _p(p)
    return ad.log1p((p * np.atleast_2d(h)).sum(axis=1))


def cmac_constraint_values(g: np.ndarray, p) -> Tensor:
    """(p_1, ..., p_N, sum_i g_i p_i) per sample, shape (S, N+1)."""
    p = _p(p)
    it = (p * np.atleast_2d(g)).sum(axis=1).reshape(-1, 1)
    return ad.concat([p, it], axis=1)


def _offdiag(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    return H * (1.0 - np.eye(n))


def ifc_link_rates(H: np.ndarray, p) -> Tensor:
    """Per-receiver rates log(1 + h_ii p_i / (1 + sum_{j != i} h_ji p_j)), shape (S, N)."""
    H = np.asarray(H, dtype=float)
    if H.ndim == 2:
        H = H[None]
    p = _p(p)
    s, n = p.shape
    diag = np.diagonal(H, axis1=1, axis2=2)
    interference = (p.reshape(s, n, 1) * _offdiag(H)).sum(axis=1)
    return ad.log1p(p * diag / (interference + 1.0))


# numpy-facing helpers -----------------------------------------------------------

def cmac_cost(h, g, p) -> np.ndarray | float:
    """Sum capacity in nats (``g`` unused; kept for a uniform signature)."""
    out = cmac_capacity(np.asarray(h, float), np.asarray(p, float)).data
    return float(out[0]) if np.ndim(p) == 1 else out


def cmac_constraints(h, g, p) -> np.ndarray:
    out = cmac_constraint_values(np.asarray(g, float), np.asarray(p, float)).data
    return out[0] if np.ndim(p) == 1 else out


def ifc_rates(H, p) -> np.ndarray:
    out = ifc_link_rates(np.asarray(H, float), np.asarray(p, float)).data
    return out[0] if np.ndim(p) == 1 else out


def ifc_sum_cost(H, p):
    r = ifc_rates(H, p)
    return float(r.sum()) if r.ndim == 1 else r.sum(axis=1)


def ifc_minrate_cost(H, p):
    r = ifc_rates(H, p)
    return float(r.min()) if r.ndim == 1 else r.min(axis=1)


# ---------------------------------------------------------------- problem classes

class Problem:
    """Common interface the trainer, baselines and harness rely on."""

    problem_id: str = ""
    n: int
    obs_dims: list[int]
    bounds: np.ndarray

    @property
    def out_dims(self) -> list[int]:
        return [1] * self.n

    @property
    def num_constraints(self) -> int:
        return len(self.bounds)

    @property
    def obs_dim(self) -> int:
        return sum(self.obs_dims)

    def feasible_set(self) -> FeasibleSet:
        raise NotImplementedError

    def sample_channels(self, count: int, rng: np.random.Generator) -> ChannelSample:
        raise NotImplementedError

    def observations(self, ch: ChannelSample) -> np.ndarray:
        raise NotImplementedError

    def unpack(self, a: np.ndarray) -> ChannelSample:
        raise NotImplementedError

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.observations(self.sample_channels(count, rng))

    def utility(self, a: np.ndarray, x) -> Tensor:
        """Per-sample objective to be maximised, shape (S,)."""
        raise NotImplementedError

    def constraints(self, a: np.ndarray, x) -> Tensor:
        """Per-sample constraint values g_k, shape (S, K)."""
        raise NotImplementedError

    def observation_partition(self, a: np.ndarray) -> list[np.ndarray]:
        a = np.asarray(a)
        edges = np.cumsum([0] + self.obs_dims)
        return [a[..., lo:hi] for lo, hi in zip(edges[:-1], edges[1:])]

    def describe(self) -> dict:
        raise NotImplementedError


def _check_count(count: int) -> None:
    if count < 1:
        raise ValueError("count must be >= 1")


class CMACProblem(Problem):
    problem_id = "p3"

    def __init__(self, n: int = 2, power: float = 1.0, gamma: float = 1.0):
        if power <= 0 or gamma <= 0:
            raise ValueError("power budget and IT bound must be positive")
        self.n = n
        self.power = float(power)
        self.gamma = float(gamma)
        self.obs_dims = [2] * n
        self.bounds = np.array([self.power] * n + [self.gamma])

    def feasible_set(self) -> FeasibleSet:
        return FeasibleSet("nonneg")

    def sample_channels(self, count, rng) -> ChannelSample:
        _check_count(count)
        return ChannelSample(h=rng.exponential(1.0, (count, self.n)),
                             g=rng.exponential(1.0, (count, self.n)))

    def observations(self, ch: ChannelSample) -> np.ndarray:
        a = np.empty((len(ch), 2 * self.n))
        a[:, 0::2] = ch.h
        a[:, 1::2] = ch.g
        return a

    def unpack(self, a) -> ChannelSample:
        a = np.atleast_2d(a)
        return ChannelSample(h=a[:, 0::2], g=a[:, 1::2])

    def utility(self, a, x) -> Tensor:
        return cmac_capacity(np.atleast_2d(a)[:, 0::2], x)

    def constraints(self, a, x) -> Tensor:
        return cmac_constraint_values(np.atleast_2d(a)[:, 1::2], x)

    def describe(self) -> dict:
        return {"problem": self.problem_id, "n": self.n, "P": self.power, "Gamma": self.gamma}


class IFCProblem(Problem):
    def __init__(self, n: int = 3, avg_power: float = 1.0, peak_power: float | None = None,
                 objective: str = "sum"):
        peak_power = avg_power if peak_power is None else peak_power
        if avg_power <= 0 or peak_power <= 0:
            raise ValueError("power budgets must be positive")
        if avg_power > peak_power:
            raise ValueError("average power budget cannot exceed peak power")
        if objective not in ("sum", "minrate"):
            raise ValueError(f"unknown objective {objective!r}")
        self.n = n
        self.avg_power = float(avg_power)
        self.peak_power = float(peak_power)
        self.objective = objective
        self.problem_id = "p4" if objective == "sum" else "p5"
        self.obs_dims = [n] * n
        self.bounds = np.full(n, self.avg_power)

    def feasible_set(self) -> FeasibleSet:
        return FeasibleSet.box(0.0, self.peak_power, self.n)

    def sample_channels(self, count, rng) -> ChannelSample:
        _check_count(count)
        return ChannelSample(H=rng.exponential(1.0, (count, self.n, self.n)))

    def observations(self, ch: ChannelSample) -> np.ndarray:
        # a[:, i*N + j] = H[:, j, i]
        return np.ascontiguousarray(ch.H.transpose(0, 2, 1)).reshape(len(ch), -1)

    def unpack(self, a) -> ChannelSample:
        a = np.atleast_2d(a)
        return ChannelSample(H=a.reshape(-1, self.n, self.n).transpose(0, 2, 1))

    def channel_matrix(self, a) -> np.ndarray:
        return self.unpack(a).H

    def utility(self, a, x) -> Tensor:
        rates = ifc_link_rates(self.channel_matrix(a), x)
        return rates.sum(axis=1) if self.objective == "sum" else rates.min(axis=1)

    def constraints(self, a, x) -> Tensor:
        return ad.as_tensor(x)

    def describe(self) -> dict:
        return {"problem": self.problem_id, "n": self.n, "P_A": self.avg_power,
                "P_P": self.peak_power}


class QuadraticToy(Problem):
    """Convex sanity problem with a closed-form saddle point.

    Observations ``a ~ N(m, I)``; utility ``-0.5 * ||x - a||^2``; one constraint
    ``E[c . x] <= G``. For a constant decision the optimum is
    ``x* = m - lam* c`` with ``lam* = max(c.m - G, 0) / ||c||^2``.
    """

    problem_id = "toy"

    def __init__(self, mean=(1.0, 2.0), c=(1.0, 1.0), bound: float = 0.0):
        self.mean = np.asarray(mean, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if self.mean.shape != self.c.shape or self.mean.ndim != 1:
            raise ValueError("mean and c must be vectors of equal length")
        self.n = len(self.mean)
        self.obs_dims = [self.n]
        self.bounds = np.array([float(bound)])

    @property
    def out_dims(self) -> list[int]:
        return [self.n]

    def feasible_set(self) -> FeasibleSet:
        return FeasibleSet.box(-np.inf, np.inf, self.n)

    def sample(self, count, rng) -> np.ndarray:
        _check_count(count)
        return self.mean + rng.standard_normal((count, self.n))

    def utility(self, a, x) -> Tensor:
        d = ad.as_tensor(x) - np.atleast_2d(a)
        return (d * d).sum(axis=1) * -0.5

    def constraints(self, a, x) -> Tensor:
        return ad.matmul(ad.as_tensor(x), self.c.reshape(-1, 1))

    def kkt(self) -> tuple[np.ndarray, float]:
        lam = max(float(self.c @ self.mean) - self.bounds[0], 0.0) / float(self.c @ self.c)
        return self.mean - lam * self.c, lam

    def describe(self) -> dict:
        return {"problem": self.problem_id, "mean": self.mean.tolist(), "c": self.c.tolist(),
                "G": float(self.bounds[0])}


def sample_channels(problem: Problem, count: int, rng: np.random.Generator) -> ChannelSample:
    return problem.sample_channels(count, rng)


def observation_partition(problem: Problem, a) -> list[np.ndarray]:
    return problem.observation_partition(a)


def make_problem(problem_id: str, n: int, snr_db: float, gamma: float = 1.0,
                 peak_ratio: float = 1.0) -> Problem:
    """Build a problem at one sweep point.

    SNR is the per-node power budget P (``p3``) or the average budget P_A
    (``p4``/``p5``); ``peak_ratio`` sets P_P = peak_ratio * P_A.
    """
    pid = problem_id.lower()
    budget = db_to_linear(snr_db)
    if pid == "p3":
        return CMACProblem(n, budget, gamma)
    if pid in ("p4", "p5"):
        if peak_ratio < 1:
            raise ValueError("peak_ratio must be >= 1")
        return IFCProblem(n, budget, budget * peak_ratio, "sum" if pid == "p4" else "minrate")
    raise ValueError(f"unknown problem {problem_id!r}")


def problem_from_description(d: dict) -> Problem:
    """Inverse of ``Problem.describe`` for the three power-control problems."""
    pid = d["problem"]
    if pid == "p3":
        return CMACProblem(d["n"], d["P"], d["Gamma"])
    if pid in ("p4", "p5"):
        return IFCProblem(d["n"], d["P_A"], d["P_P"], "sum" if pid == "p4" else "minrate")
    raise ValueError(f"cannot rebuild problem {pid!r}")
