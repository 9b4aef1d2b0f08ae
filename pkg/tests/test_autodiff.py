import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from pdpower import autodiff as ad
from pdpower.autodiff import AdamState, NumericOverflowError, RunningStats, ShapeError, Tape, Tensor
from pdpower.gradcheck import check_op, network_check, numeric_grad, primitive_suite, rel_error

finite = st.floats(-2, 2, allow_nan=False, allow_infinity=False)


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


# ---------------------------------------------------------------- matmul

def test_matmul_identity():
    out = ad.matmul(np.eye(2), np.array([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [4.0]])


def test_matmul_direct():
    assert ad.matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).data.item() == 11.0


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_backward_is_b_transpose(rng):
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    ad.matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    num = numeric_grad(lambda: float((a.data @ b.data).sum()), a.data)
    assert rel_error(a.grad, num) < 1e-8


# ---------------------------------------------------------------- elementwise

def test_relu_and_tanh_examples():
    assert ad.relu(Tensor(np.array(-3.0))).data == 0.0
    assert ad.tanh(Tensor(np.array(0.0))).data == 0.0


def test_log1p_derivative_at_one():
    x = leaf(1.0)
    ad.log1p(x).backward()
    assert x.grad == pytest.approx(0.5)


def test_elementwise_dispatch_matches_functions(rng):
    x, y = rng.uniform(0.5, 2, 5), rng.uniform(0.5, 2, 5)
    for op, ref in [("add", x + y), ("sub", x - y), ("mul", x * y), ("div", x / y)]:
        np.testing.assert_allclose(ad.elementwise(op, x, y).data, ref)
    np.testing.assert_allclose(ad.elementwise("max0", x - 1).data, np.maximum(x - 1, 0))
    np.testing.assert_allclose(ad.elementwise("sigmoid", x).data, 1 / (1 + np.exp(-x)))
    with pytest.raises(ValueError):
        ad.elementwise("cosh", x)


def test_div_rejects_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        ad.div(np.ones(2), np.array([1.0, 0.0]))


def test_overflow_names_op():
    with pytest.raises(NumericOverflowError, match="exp"):
        ad.exp(Tensor(np.array([1000.0])))


def test_broadcast_adjoint_sums_rows(rng):
    x, b = leaf(rng.normal(size=(5, 3))), leaf(rng.normal(size=3))
    (x + b).sum().backward()
    np.testing.assert_allclose(b.grad, np.full(3, 5.0))


# ---------------------------------------------------------------- reductions

def test_mean_example():
    assert ad.reduce("mean", np.array([1.0, 2.0, 3.0])).data == 2.0


def test_min_routes_gradient_to_argmin():
    x = leaf([0.4, 0.1, 0.7])
    out = ad.reduce("min_over_axis", x)
    out.backward()
    assert out.data == pytest.approx(0.1)
    np.testing.assert_array_equal(x.grad, [0, 1, 0])


def test_min_ties_go_to_lowest_index():
    x = leaf([[0.2, 0.2, 0.5], [0.9, 0.3, 0.3]])
    ad.reduce("min_over_axis", x, axis=1).sum().backward()
    np.testing.assert_array_equal(x.grad, [[1, 0, 0], [0, 1, 0]])


def test_sum_gradient_is_ones(rng):
    x = leaf(rng.normal(size=(3, 4)))
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_reduce_errors():
    with pytest.raises(ValueError):
        ad.reduce("sum", np.zeros((0, 3)), axis=0)
    with pytest.raises(ValueError):
        ad.reduce("sum", np.zeros((2, 3)), axis=2)


# ---------------------------------------------------------------- tape

def test_tape_visits_each_op_once_in_reverse_topological_order(rng):
    a = leaf(rng.normal(size=3))
    b = a * 2.0
    c = b + a      # a reached along two paths
    d = (c * b).sum()
    tape = Tape.from_output(d)
    ids = [id(n) for n in tape.nodes]
    assert len(ids) == len(set(ids))
    pos = {id(n): k for k, n in enumerate(tape.nodes)}
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] > pos[id(node)]
    d.backward()
    # d = sum((3a) * (2a)) = 6 sum(a^2)
    np.testing.assert_allclose(a.grad, 12 * a.data)


def test_leaf_gradients_accumulate_across_backward_calls(rng):
    a = leaf(rng.normal(size=2))
    (a * 3.0).sum().backward()
    (a * 3.0).sum().backward()
    np.testing.assert_allclose(a.grad, [6.0, 6.0])


# ---------------------------------------------------------------- finite differences

def test_every_primitive_passes_gradcheck():
    for res in primitive_suite(cases=100, seed=1):
        assert res.passed, (res.name, res.worst)
        assert res.cases >= 100


def test_two_layer_composition_chain_rule():
    assert network_check(seed=3).passed


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=4), elements=finite))
def test_tanh_sigmoid_composite_gradcheck(x):
    assert check_op(lambda t: ad.tanh(t) * ad.sigmoid(t) + ad.exp(t * 0.5), [x]) < 1e-5


@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 4)), elements=finite))
def test_batch_norm_train_gradcheck(x):
    # skip nearly constant columns where the eps term dominates
    if np.min(x.std(axis=0)) < 1e-2:
        return
    d = x.shape[1]
    g, b = np.linspace(0.5, 1.5, d), np.linspace(-1, 1, d)
    assert check_op(lambda t, gg, bb: ad.batch_norm(t, gg, bb, "train", RunningStats.init(d)),
                    [x, g, b]) < 1e-5


# ---------------------------------------------------------------- batch norm

def test_batch_norm_constant_column_outputs_beta():
    x = np.column_stack([np.full(4, 3.0), np.arange(4.0)])
    out = ad.batch_norm(x, np.ones(2), np.array([0.7, 0.0]), "train", RunningStats.init(2))
    np.testing.assert_allclose(out.data[:, 0], 0.7)


def test_batch_norm_unit_variance_batch():
    out = ad.batch_norm(np.array([[-1.0], [1.0]]), np.ones(1), np.zeros(1), "train", RunningStats.init(1))
    np.testing.assert_allclose(out.data[:, 0], [-1.0, 1.0], atol=1e-5)


def test_batch_norm_needs_two_samples_in_train_mode():
    with pytest.raises(ValueError):
        ad.batch_norm(np.ones((1, 3)), np.ones(3), np.zeros(3), "train", RunningStats.init(3))
    ad.batch_norm(np.ones((1, 3)), np.ones(3), np.zeros(3), "eval", RunningStats.init(3))


def test_batch_norm_eval_matches_train_after_repeated_batches(rng):
    x = rng.normal(2.0, 3.0, size=(64, 3))
    rs = RunningStats.init(3)
    g, b = np.array([1.0, 2.0, 0.5]), np.array([0.0, 1.0, -1.0])
    for _ in range(3000):
        train_out = ad.batch_norm(x, g, b, "train", rs).data
    eval_out = ad.batch_norm(x, g, b, "eval", rs).data
    np.testing.assert_allclose(eval_out, train_out, atol=1e-6)


# ---------------------------------------------------------------- adam

def test_adam_zero_gradient_leaves_parameters():
    p = leaf([1.0, -2.0])
    st_ = AdamState(lr=0.1)
    ad.adam_step([p], [np.zeros(2)], st_)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr_against_gradient():
    p = leaf([0.0, 0.0])
    ad.adam_step([p], [np.array([3.0, -0.2])], AdamState(lr=1e-3))
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-4)


def test_adam_quadratic_bowl():
    x = leaf([1.0])
    state = AdamState(lr=1e-2)
    for _ in range(5000):
        ad.adam_step([x], [2 * x.data], state)
    assert abs(x.data[0]) < 1e-3


def test_adam_non_finite_gradient_names_parameter():
    with pytest.raises(NumericOverflowError, match="W0"):
        ad.adam_step([leaf([1.0])], [np.array([np.nan])], AdamState(lr=1e-3), names=["W0"])


def test_adam_rejects_nonpositive_lr():
    with pytest.raises(ValueError):
        AdamState(lr=0.0)


def test_adam_step_counter_increases():
    p, s = leaf([1.0]), AdamState(lr=1e-3)
    for k in range(1, 4):
        ad.adam_step([p], [np.ones(1)], s)
        assert s.step == k
        assert s.m[0].shape == p.shape


# ---------------------------------------------------------------- init

def test_xavier_statistics():
    w = ad.xavier_init(100, 1000, np.random.default_rng(0)).data
    assert w.size == 10 ** 5
    assert 0.009 <= w.var() <= 0.011
    assert -0.01 <= w.mean() <= 0.01


def test_bias_init_exact():
    assert np.all(ad.bias_init(7).data == 0.01)


def test_xavier_rejects_zero_fan_in():
    with pytest.raises(ValueError):
        ad.xavier_init(0, 3, np.random.default_rng(0))


def test_same_seed_same_trajectory():
    def run(seed):
        rng = np.random.default_rng(seed)
        w = ad.xavier_init(3, 2, rng)
        s = AdamState(lr=1e-2)
        for _ in range(20):
            x = rng.normal(size=(8, 3))
            w.grad = None
            loss = ad.tanh(ad.matmul(x, w)).sum()
            loss.backward()
            ad.adam_step([w], [w.grad], s)
        return w.data
    assert np.array_equal(run(4), run(4))
    assert not np.array_equal(run(4), run(5))


def test_forward_outputs_finite_on_finite_inputs(rng):
    x = rng.uniform(-2, 2, size=(4, 3))
    for op in ("tanh", "sigmoid", "exp", "relu"):
        assert np.isfinite(ad.elementwise(op, x).data).all()
    assert math.isfinite(float(ad.log1p(np.abs(x)).sum().data))
