"""Reference power-control schemes and brute-force oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problems import CMACProblem, IFCProblem, Problem, ifc_link_rates
from .trainer import EvalMetrics, evaluate_decisions


# ---------------------------------------------------------------- C-MAC

def cmac_inner(h: np.ndarray, c: np.ndarray) -> np.ndarray:
    """argmax_p log(1 + sum h_i p_i) - sum c_i p_i over p >= 0, row-wise.

    The objective depends on p only through s = sum h_i p_i, and s is cheapest
    to buy from the user with the smallest c_i / h_i, so that user alone
    transmits at (1/c - 1/h)_+.
    """
    h = np.atleast_2d(np.asarray(h, float))
    c = np.broadcast_to(np.asarray(c, float), h.shape)
    if np.any(c <= 0):
        raise ValueError("prices must be positive")
    best = np.argmin(c / h, axis=1)
    rows = np.arange(len(h))
    p = np.zeros_like(h)
    p[rows, best] = np.maximum(1.0 / c[rows, best] - 1.0 / h[rows, best], 0.0)
    return p


@dataclass
class OracleResult:
    multipliers: np.ndarray
    constraint_means: np.ndarray
    bounds: np.ndarray
    objective: float
    dual_value: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    decisions: np.ndarray | None = None
    test_metrics: EvalMetrics | None = None

    @property
    def duality_gap(self) -> float:
        return self.dual_value - self.objective

    @property
    def max_violation(self) -> float:
        return float(np.max(self.constraint_means - self.bounds))

    def policy(self):
        lam = self.multipliers

        def act(h, g):
            return cmac_inner(h, lam[:-1] + lam[-1] * np.atleast_2d(g))
        return act


def _kkt_residual(lam, means, bounds) -> float:
    # active (lam > 0): |mean - G|; inactive: (mean - G)_+
    active = lam > 0
    r = np.where(active, np.abs(means - bounds), np.maximum(means - bounds, 0.0))
    return float(np.max(r))


def cmac_dual_oracle(problem: CMACProblem, rng: np.random.Generator, tol: float = 1e-3,
                     sample_size: int = 100_000, max_iter: int = 10_000,
                     step0: float = 0.5, test_a: np.ndarray | None = None) -> OracleResult:
    """Long-term-constrained optimum of the C-MAC problem via its dual.

    Multipliers for the N power constraints and the IT constraint are found by
    projected subgradient descent on the dual function, estimated on a fixed
    sample of ``sample_size`` realisations. The primal decision for given
    multipliers is :func:`cmac_inner` with prices lam_i + mu * g_i.
    """
    n = problem.n
    ch = problem.sample_channels(sample_size, rng)
    h, g = ch.h, ch.g
    bounds = problem.bounds
    nu = np.full(n + 1, 1.0)
    floor = 1e-12  # keeps prices positive when every multiplier sits at zero
    best = None
    history = []

    def solve(nu_):
        prices = nu_[:n] + nu_[n] * g + floor
        p = cmac_inner(h, prices)
        means = np.concatenate([p.mean(axis=0), [(g * p).sum(axis=1).mean()]])
        obj = float(np.log1p((h * p).sum(axis=1)).mean())
        dual = float(np.mean(np.log1p((h * p).sum(axis=1)) - (prices * p).sum(axis=1))) + float(nu_ @ bounds)
        return p, means, obj, dual

    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        p, means, obj, dual = solve(nu)
        res = _kkt_residual(nu, means, bounds)
        history.append((it, dual, obj, res))
        if best is None or res < best[0]:
            best = (res, nu.copy(), p, means, obj, dual)
        if res <= tol:
            converged = True
            break
        # relative violation, step step0/sqrt(t) scaled by the multiplier's own size
        sub = (means - bounds) / bounds
        nu = np.maximum(nu + step0 / math.sqrt(it) * sub * np.maximum(nu, 1e-3), 0.0)
    res, nu_best, p, means, obj, dual = best
    out = OracleResult(nu_best, means, bounds, obj, dual, it, converged, history, decisions=p)
    if test_a is not None:
        out.test_metrics = evaluate_decisions(problem, test_a, cmac_oracle_decisions(out, problem, test_a))
    return out


def cmac_oracle_decisions(result: OracleResult, problem: CMACProblem, a: np.ndarray) -> np.ndarray:
    ch = problem.unpack(a)
    return result.policy()(ch.h, ch.g)


def cmac_short_term(h, g, P: float, gamma: float) -> np.ndarray:
    """Per-realisation optimum with p_i <= P and sum g_i p_i <= gamma.

    The objective only depends on sum h_i p_i, so this is a fractional knapsack:
    fill users in decreasing h_i / g_i until the interference budget runs out.
    """
    h = np.atleast_2d(np.asarray(h, float))
    g = np.atleast_2d(np.asarray(g, float))
    s, n = h.shape
    order = np.argsort(-h / g, axis=1, kind="stable")
    rows = np.arange(s)
    budget = np.full(s, float(gamma))
    p = np.zeros_like(h)
    for k in range(n):
        i = order[:, k]
        gi = g[rows, i]
        take = np.clip(budget / gi, 0.0, P)
        p[rows, i] = take
        budget = np.maximum(budget - gi * take, 0.0)
    return p


def fixed_cmac(g, P: float, gamma: float) -> np.ndarray:
    """p_i = min(P, gamma / g_i)."""
    return np.minimum(P, gamma / np.asarray(g, float))


# ---------------------------------------------------------------- interference channel

@dataclass
class WmmseResult:
    p: np.ndarray
    iterations: int
    history: np.ndarray  # (iterations + 1, S) sum rates, initial point first


def wmmse(H, peak_power: float, max_iter: int = 500, tol: float = 1e-9,
          p_init=None, return_history: bool = False):
    """Scalar WMMSE for the interference channel with power gains ``H[.., j, i]`` (tx j -> rx i).

    With transmit amplitudes v_i = sqrt(p_i) and channel amplitudes sqrt(h):

        u_i = sqrt(h_ii) v_i / (1 + sum_j h_ji v_j^2)
        w_i = 1 / (1 - u_i sqrt(h_ii) v_i)
        v_i = clip(w_i u_i sqrt(h_ii) / sum_j w_j u_j^2 h_ij, 0, sqrt(P_P))

    Starts from p_i = peak_power unless ``p_init`` is given and stops once no
    sum rate moves by more than ``tol``.
    """
    H = np.asarray(H, float)
    single = H.ndim == 2
    if single:
        H = H[None]
    if peak_power <= 0:
        raise ValueError("peak_power must be positive")
    s, n, _ = H.shape
    diag_amp = np.sqrt(np.diagonal(H, axis1=1, axis2=2))
    p0 = np.full((s, n), float(peak_power)) if p_init is None else np.broadcast_to(np.asarray(p_init, float), (s, n))
    v = np.sqrt(p0)
    vmax = math.sqrt(peak_power)

    def rate(v_):
        return ifc_link_rates(H, v_ ** 2).data.sum(axis=1)

    hist = [rate(v)]
    it = 0
    for it in range(1, max_iter + 1):
        rx = np.einsum("sji,sj->si", H, v ** 2) + 1.0
        u = diag_amp * v / rx
        w = 1.0 / (1.0 - u * diag_amp * v)
        # denominator for tx i: sum over receivers j of w_j u_j^2 h_ij
        den = np.einsum("sij,sj->si", H, w * u ** 2)
        v = np.clip(w * u * diag_amp / den, 0.0, vmax)
        hist.append(rate(v))
        if np.max(np.abs(hist[-1] - hist[-2])) < tol:
            break
    p = np.minimum(v ** 2, peak_power)  # sqrt round trip can overshoot by an ulp
    if single:
        p = p[0]
    if return_history:
        return WmmseResult(p, it, np.array(hist))
    return p


def grid_search(objective, n: int, hi: float | np.ndarray, steps: int, lo: float | np.ndarray = 0.0,
                chunk: int = 200_000):
    """Exhaustive maximisation of ``objective(P) -> values`` over a regular grid.

    ``objective`` receives a (M, n) array of candidate points.
    """
    lo_a = np.broadcast_to(np.asarray(lo, float), (n,))
    hi_a = np.broadcast_to(np.asarray(hi, float), (n,))
    axes = [np.linspace(lo_a[i], hi_a[i], steps + 1) for i in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    best_val, best_p = -np.inf, None
    for start in range(0, len(mesh), chunk):
        pts = mesh[start:start + chunk]
        vals = objective(pts)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_p = float(vals[k]), pts[k].copy()
    return best_p, best_val


GRID_MAX_N = 3


def grid_oracle(H, peak_power: float, grid_steps: int = 100, objective: str = "sum",
                refine_rounds: int = 0):
    """Brute-force per-realisation optimum for a small interference channel.

    Searches {0, d, ..., P_P}^N; ``refine_rounds`` re-grids a +-2d box around
    the incumbent that many times, each with a grid_steps-fold finer step.
    """
    H = np.asarray(H, float)
    n = H.shape[0]
    if n > GRID_MAX_N:
        raise ValueError(f"grid oracle refuses N={n} > {GRID_MAX_N}")
    if objective not in ("sum", "minrate"):
        raise ValueError(f"unknown objective {objective!r}")

    def fn(pts):
        r = ifc_link_rates(np.broadcast_to(H, (len(pts), n, n)), pts).data
        return r.sum(axis=1) if objective == "sum" else r.min(axis=1)

    p, val = grid_search(fn, n, peak_power, grid_steps)
    step = peak_power / grid_steps
    for _ in range(refine_rounds):
        lo = np.clip(p - 2 * step, 0.0, peak_power)
        hi = np.clip(p + 2 * step, 0.0, peak_power)
        p2, v2 = grid_search(fn, n, hi, grid_steps, lo=lo)
        if v2 >= val:
            p, val = p2, v2
        step = 4 * step / grid_steps
    return p, val


def maxmin_bisection(H, peak_power: float, tol: float = 1e-12):
    """Exact max-min SINR power control for one realisation.

    SINR target gamma is feasible iff the minimal power vector solving
    h_ii p_i = gamma (1 + sum_{j != i} h_ji p_j) is positive and within P_P.
    Returns the powers and the optimal minimum rate log(1 + gamma*).
    """
    H = np.asarray(H, float)
    n = H.shape[0]
    d = np.diag(H)
    cross = H.T * (1.0 - np.eye(n))  # cross[i, j] = h_ji

    def min_power(gamma):
        A = np.diag(d) - gamma * cross
        try:
            p = np.linalg.solve(A, np.full(n, gamma))
        except np.linalg.LinAlgError:
            return None
        if np.any(p < 0) or np.max(np.abs(np.linalg.eigvals(gamma * cross / d[:, None]))) >= 1:
            return None
        return p

    lo, hi = 0.0, float(np.min(d) * peak_power)  # no one beats its interference-free SNR
    best = np.zeros(n)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        p = min_power(mid)
        if p is not None and np.max(p) <= peak_power:
            lo, best = mid, p
        else:
            hi = mid
    return best, math.log1p(lo)


def heuristics(kind: str, problem: Problem, a: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Non-learned reference policies: ``peak``, ``random`` or ``fixed_cmac``."""
    a = np.atleast_2d(a)
    s, n = len(a), problem.n
    if kind == "peak":
        return np.full((s, n), _peak(problem))
    if kind == "random":
        if rng is None:
            raise ValueError("random power needs an rng")
        return rng.uniform(0.0, _peak(problem), (s, n))
    if kind == "fixed_cmac":
        if not isinstance(problem, CMACProblem):
            raise ValueError("fixed_cmac applies to the C-MAC problem only")
        return fixed_cmac(problem.unpack(a).g, problem.power, problem.gamma)
    raise ValueError(f"unknown heuristic {kind!r}")


def _peak(problem: Problem) -> float:
    if isinstance(problem, IFCProblem):
        return problem.peak_power
    if isinstance(problem, CMACProblem):
        return problem.power
    raise TypeError(type(problem))


class NaiveDistributedPolicy:
    """A centrally trained network run at each node with zeros for unseen observations."""

    def __init__(self, central, problem: Problem):
        self.central = central
        self.problem = problem

    def act(self, a) -> np.ndarray:
        a = np.atleast_2d(a)
        edges = np.cumsum([0] + self.problem.obs_dims)
        out = np.empty((len(a), self.problem.n))
        for i in range(self.problem.n):
            masked = np.zeros_like(a)
            masked[:, edges[i]:edges[i + 1]] = a[:, edges[i]:edges[i + 1]]
            out[:, i] = self.central.act(masked)[:, i]
        return out
