import numpy as np
import pytest

from pdpower.baselines import (cmac_dual_oracle, cmac_inner, cmac_oracle_decisions, cmac_short_term, fixed_cmac,
                               grid_oracle, grid_search, heuristics, maxmin_bisection, wmmse)
from pdpower.problems import CMACProblem, IFCProblem, ifc_minrate_cost, ifc_sum_cost, make_problem


def _lagrangian_value(h, c):
    return lambda p: np.log1p(p @ h) - p @ c


# ---------------------------------------------------------------- C-MAC inner problem

def test_inner_closed_form_example():
    h, c = np.array([2.0, 1.0]), np.array([1.0, 1.0])
    p = cmac_inner(h, c)[0]
    np.testing.assert_allclose(p, [0.5, 0.0])
    grid_p, grid_v = grid_search(_lagrangian_value(h, c), 2, 5.0, 5000)
    np.testing.assert_allclose(grid_p, p, atol=1e-3)
    assert _lagrangian_value(h, c)(p[None])[0] >= grid_v - 1e-12


def test_inner_expensive_users_stay_silent():
    np.testing.assert_array_equal(cmac_inner([1.0, 2.0], [1.0, 3.0]), [[0.0, 0.0]])


def test_inner_matches_grid_on_random_draws():
    rng = np.random.default_rng(0)
    h = rng.uniform(0.2, 3.0, (1000, 2))
    c = rng.uniform(0.2, 3.0, (1000, 2))
    p = cmac_inner(h, c)
    axis = np.linspace(0, 5, 101)
    mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    for k in range(1000):
        grid = np.max(np.log1p(mesh @ h[k]) - mesh @ c[k])
        val = np.log1p(p[k] @ h[k]) - p[k] @ c[k]
        assert val >= grid - 1e-12
        assert val - grid <= 0.05 * 3.0  # one grid step times the largest slope


def test_inner_rejects_nonpositive_price():
    with pytest.raises(ValueError):
        cmac_inner([1.0], [0.0])


# ---------------------------------------------------------------- short-term and fixed

def test_short_term_examples():
    np.testing.assert_array_equal(cmac_short_term([[1, 2]], [[1, 1]], 1.0, 1e9), [[1.0, 1.0]])
    np.testing.assert_array_equal(cmac_short_term([[1, 2]], [[1, 1]], 1.0, 1.0), [[0.0, 1.0]])
    np.testing.assert_array_equal(cmac_short_term([[1, 2]], [[1, 1]], 1.0, 0.0), [[0.0, 0.0]])


def test_short_term_matches_constrained_grid():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h, g = rng.exponential(size=2), rng.exponential(size=2)
        P, gamma = 2.0, 1.0
        p = cmac_short_term(h[None], g[None], P, gamma)[0]
        assert np.all(p <= P) and p @ g <= gamma + 1e-9
        axis = np.linspace(0, P, 801)
        mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
        ok = mesh @ g <= gamma
        assert np.log1p(p @ h) >= np.max(np.log1p(mesh[ok] @ h)) - 1e-12


def test_fixed_allocation():
    assert fixed_cmac(np.array([2.0]), 5.0, 1.0)[0] == 0.5
    assert fixed_cmac(np.array([0.1]), 5.0, 1.0)[0] == 5.0


@pytest.mark.slow
def test_dual_oracle_at_5db_is_tight_on_active_constraints():
    p = make_problem("p3", 2, 5.0)
    res = cmac_dual_oracle(p, np.random.default_rng(0))
    assert res.converged
    active = res.multipliers > 1e-6
    assert active.any()
    assert np.all(np.abs(res.constraint_means[active] - res.bounds[active]) <= 1e-3 * res.bounds[active])
    assert res.max_violation <= 1e-3 * res.bounds.max()
    # decisions from the multipliers reproduce a feasible policy on fresh data
    a = p.sample(200_000, np.random.default_rng(9))
    x = cmac_oracle_decisions(res, p, a)
    assert np.all(p.constraints(a, x).data.mean(axis=0) <= res.bounds * 1.02)


# ---------------------------------------------------------------- WMMSE and grids

def test_wmmse_single_link_full_power():
    assert wmmse(np.array([[0.7]]), 3.0) == pytest.approx([3.0])


def test_wmmse_decoupled_links_full_power():
    H = np.diag([0.5, 2.0, 1.3])
    np.testing.assert_allclose(wmmse(H, 2.0, p_init=np.full(3, 0.1)), 2.0, rtol=1e-6)


def test_wmmse_history_is_monotone():
    H = np.random.default_rng(2).exponential(size=(300, 3, 3)) * 10
    res = wmmse(H, 10.0, p_init=np.full(3, 1.0), return_history=True)
    assert np.all(np.diff(res.history, axis=0) >= -1e-10)
    assert res.p.shape == (300, 3)
    assert np.all((res.p >= 0) & (res.p <= 10.0))


def test_wmmse_locally_optimal_against_grid():
    rng = np.random.default_rng(4)
    H = rng.exponential(size=(2, 2))
    P = 3.0
    p = wmmse(H, P, max_iter=5000, tol=1e-14)
    val = ifc_sum_cost(H, p)
    # local grid centred on the WMMSE point
    lo, hi = np.clip(p - 0.01, 0, P), np.clip(p + 0.01, 0, P)
    axes = [np.linspace(lo[i], hi[i], 1000) for i in range(2)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    assert val >= np.max(ifc_sum_cost(np.broadcast_to(H, (len(mesh), 2, 2)), mesh)) - 1e-6
    _, global_val = grid_oracle(H, P, 1000)
    assert global_val >= val - 1e-6


def test_grid_oracle_without_interference():
    p, _ = grid_oracle(np.eye(2), 1.0, 100)
    np.testing.assert_allclose(p, [1.0, 1.0])


def test_grid_oracle_strong_interference_picks_a_corner():
    H = np.array([[1.0, 20.0], [20.0, 1.0]])
    p, _ = grid_oracle(H, 5.0, 100)
    assert sorted(p.tolist()) == [0.0, 5.0]


def test_grid_oracle_beats_heuristics():
    rng = np.random.default_rng(6)
    prob = IFCProblem(3, 1.0, 2.0)
    for _ in range(5):
        a = prob.sample(1, rng)
        H = prob.channel_matrix(a)[0]
        _, val = grid_oracle(H, 2.0, 40)
        for x in (heuristics("peak", prob, a), heuristics("random", prob, a, rng)):
            assert val >= ifc_sum_cost(H, x[0]) - 1e-12


def test_grid_oracle_refuses_large_n():
    with pytest.raises(ValueError):
        grid_oracle(np.eye(4), 1.0, 10)


def test_maxmin_bisection_against_grid():
    rng = np.random.default_rng(8)
    for _ in range(10):
        H = rng.exponential(size=(2, 2))
        p, val = maxmin_bisection(H, 2.0)
        assert np.all(p <= 2.0 + 1e-9)
        assert ifc_minrate_cost(H, p) == pytest.approx(val, abs=1e-9)
        _, grid_val = grid_oracle(H, 2.0, 200, "minrate", refine_rounds=2)
        assert val >= grid_val - 1e-9
        assert val - grid_val <= 1e-4


# ---------------------------------------------------------------- heuristics

def test_peak_and_random():
    prob = IFCProblem(3, 1.0, 2.0)
    a = prob.sample(100_000, np.random.default_rng(0))
    np.testing.assert_array_equal(heuristics("peak", prob, a[:2]), np.full((2, 3), 2.0))
    r = heuristics("random", prob, a, np.random.default_rng(1))
    assert r.mean() == pytest.approx(1.0, rel=0.01)
    with pytest.raises(ValueError):
        heuristics("random", prob, a)
    with pytest.raises(ValueError):
        heuristics("fixed_cmac", prob, a)


def test_fixed_heuristic_on_cmac():
    prob = CMACProblem(1, power=5.0, gamma=1.0)
    x = heuristics("fixed_cmac", prob, np.array([[1.0, 2.0]]))
    assert x[0, 0] == 0.5
