"""Central finite-difference checks for every primitive and for whole networks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RunningStats, Tensor

FD_STEP = 1e-6
REL_TOL = 1e-5


def numeric_grad(fn: Callable[[], float], x: np.ndarray, step: float = FD_STEP,
                 indices: Sequence | None = None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. entries of ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in (range(flat.size) if indices is None else indices):
        old = flat[k]
        flat[k] = old + step
        up = fn()
        flat[k] = old - step
        down = fn()
        flat[k] = old
        gflat[k] = (up - down) / (2 * step)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-3)
    return float(np.max(np.abs(analytic - numeric)) / scale)


@dataclass
class CheckResult:
    name: str
    cases: int
    worst: float

    @property
    def passed(self) -> bool:
        return self.worst <= REL_TOL


def check_op(build: Callable[..., Tensor], inputs: list[np.ndarray]) -> float:
    """Worst relative error of d(sum(w * out))/d(inputs) for random weights w."""
    rng = np.random.default_rng(len(inputs) + inputs[0].size)
    ts = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    out = build(*ts)
    w = rng.normal(size=out.shape)
    loss = (out * w).sum()
    loss.backward()
    worst = 0.0
    for t in ts:
        def f():
            return float((build(*[Tensor(u.data) for u in ts]).data * w).sum())
        num = numeric_grad(f, t.data)
        worst = max(worst, rel_error(t.grad, num))
    return worst


def _away_from(x: np.ndarray, points: Sequence[float], gap: float = 1e-3) -> np.ndarray:
    for p in points:
        close = np.abs(x - p) < gap
        x = np.where(close, p + np.copysign(gap, x - p + 1e-300), x)
    return x


def _distinct(x: np.ndarray, gap: float = 1e-3) -> np.ndarray:
    # spread ties so min() has a unique argmin along every row
    flat = x.reshape(-1)
    order = np.argsort(flat)
    flat[order] += np.arange(flat.size) * gap
    return x


def primitive_suite(cases: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)

    def u(shape):
        return rng.uniform(-2, 2, size=shape)

    def rshape():
        return (int(rng.integers(1, 5)), int(rng.integers(1, 5)))

    results = []

    def run(name, make_case):
        worst = 0.0
        for _ in range(cases):
            build, inputs = make_case()
            worst = max(worst, check_op(build, inputs))
        results.append(CheckResult(name, cases, worst))

    def matmul_case():
        m, k = rshape()
        n = int(rng.integers(1, 5))
        return ad.matmul, [u((m, k)), u((k, n))]

    def affine_case():
        m, k = rshape()
        n = int(rng.integers(1, 5))
        return ad.affine, [u((m, k)), u((k, n)), u((n,))]

    run("matmul", matmul_case)
    run("affine", affine_case)
    for name, fn in (("add", ad.add), ("sub", ad.sub), ("mul", ad.mul)):
        def case(fn=fn):
            s = rshape()
            # second operand broadcast along rows half of the time
            other = u(s) if rng.random() < 0.5 else u((s[1],))
            return fn, [u(s), other]
        run(name, case)

    def div_case():
        s = rshape()
        den = rng.uniform(0.5, 2, size=s) * rng.choice([-1, 1], size=s)
        return ad.div, [u(s), den]
    run("div", div_case)
    run("log1p", lambda: (ad.log1p, [rng.uniform(-0.5, 2, size=rshape())]))
    run("exp", lambda: (ad.exp, [u(rshape())]))
    run("tanh", lambda: (ad.tanh, [u(rshape())]))
    run("sigmoid", lambda: (ad.sigmoid, [u(rshape())]))
    run("relu", lambda: (ad.relu, [_away_from(u(rshape()), [0.0])]))
    run("clip", lambda: (lambda x: ad.clip(x, -1.0, 1.0), [_away_from(u(rshape()), [-1.0, 1.0])]))
    run("neg", lambda: (ad.neg, [u(rshape())]))

    def red_case(op):
        def make():
            s = rshape()
            axis = [None, 0, 1][int(rng.integers(0, 3))]
            x = u(s)
            if op == "min_over_axis":
                x = _distinct(x)
            return (lambda t: ad.reduce(op, t, axis)), [x]
        return make
    for op in ("sum", "mean", "min_over_axis"):
        run(op, red_case(op))

    def reshape_case():
        s = rshape()
        return (lambda t: ad.reshape(t, (-1,))), [u(s)]
    run("reshape", reshape_case)

    def getitem_case():
        s = rshape()
        return (lambda t: t[:, : max(1, s[1] // 2)]), [u(s)]
    run("getitem", getitem_case)

    def concat_case():
        m = int(rng.integers(1, 5))
        return (lambda a, b: ad.concat([a, b], axis=1)), [u((m, 2)), u((m, 3))]
    run("concat", concat_case)

    def bn_case(mode):
        def make():
            s, d = int(rng.integers(2, 7)), int(rng.integers(1, 4))
            rs = RunningStats(rng.normal(size=d), rng.uniform(0.5, 2, size=d))

            def build(x, g, b):
                # fresh copy so repeated evaluation sees the same running stats
                return ad.batch_norm(x, g, b, mode, RunningStats(rs.mean.copy(), rs.var.copy()))
            return build, [u((s, d)), u((d,)), u((d,))]
        return make
    run("batch_norm[train]", bn_case("train"))
    run("batch_norm[eval]", bn_case("eval"))
    return results


def network_check(seed: int = 0, entries_per_param: int = 6, batch: int = 16) -> CheckResult:
    """Whole-graph check: 4-hidden-layer centralized net inside the C-MAC Lagrangian."""
    from .mlp import LayerSpec, Mlp, hidden_layers
    from .problems import CMACProblem

    rng = np.random.default_rng(seed)
    problem = CMACProblem(2, 2.0, 1.0)
    net = Mlp(problem.obs_dim, hidden_layers([20] * 4) + [LayerSpec(2, "scaled_sigmoid", bound=3.0)], rng)
    a = problem.sample(batch, rng)
    lam = np.array([0.3, 0.2, 0.5])

    def loss_tensor():
        x = net(a, "train")
        util = problem.utility(a, x).mean()
        g = problem.constraints(a, x).mean(axis=0)
        return (g * lam).sum() - util

    params = net.parameters()
    for p in params:
        p.grad = None
    loss_tensor().backward()
    worst = 0.0
    cases = 0
    for p in params:
        idx = rng.choice(p.size, size=min(entries_per_param, p.size), replace=False)
        num = numeric_grad(lambda: float(loss_tensor().data), p.data, indices=idx)
        worst = max(worst, rel_error(p.grad.reshape(-1)[idx], num.reshape(-1)[idx]))
        cases += len(idx)
    return CheckResult("network[4x20, C-MAC Lagrangian]", cases, worst)


def run_all(cases: int = 100, seed: int = 0) -> list[CheckResult]:
    return primitive_suite(cases, seed) + [network_check(seed)]
