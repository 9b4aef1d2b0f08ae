import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from pdpower import autodiff as ad
from pdpower.autodiff import Tensor
from pdpower.binarize import (StochasticBinarizer, binarize_backward, binarize_eval, binarize_forward,
                              plus_probability)

unit = st.floats(-1, 1, allow_nan=False)


def test_plus_one_is_deterministic(rng):
    out = binarize_forward(np.ones(10_000), rng)
    assert (out.v == 1).all()
    assert (binarize_forward(-np.ones(100), rng).v == -1).all()


def test_zero_is_a_fair_coin(rng):
    v = binarize_forward(np.zeros(100_000), rng).v
    assert 0.495 <= np.mean(v == 1) <= 0.505


def test_unbiased_at_point_four(rng):
    v = binarize_forward(np.full(1_000_000, 0.4), rng).v
    assert 0.396 <= v.mean() <= 0.404


def test_plus_probability_is_affine():
    np.testing.assert_allclose(plus_probability([-1, 0, 0.5, 1]), [0, 0.5, 0.75, 1])


def test_out_of_range_rejected(rng):
    with pytest.raises(ValueError):
        binarize_forward(np.array([1.001]), rng)
    with pytest.raises(ValueError):
        binarize_eval(np.array([-1.5]))
    # tiny overshoot is clipped
    assert binarize_forward(np.array([1 + 5e-13]), rng).v[0] == 1.0


def test_backward_is_identity():
    np.testing.assert_array_equal(binarize_backward([1.0, -2.0]), [1.0, -2.0])


def test_eval_examples():
    np.testing.assert_array_equal(binarize_eval([0.3, -0.7]), [1.0, -1.0])
    np.testing.assert_array_equal(binarize_eval([0.0]), [1.0])


def test_eval_is_mode_of_stochastic(rng):
    vh = rng.uniform(-1, 1, size=16)
    vh = vh[np.abs(vh) > 0.05]
    draws = binarize_forward(np.tile(vh, (20_000, 1)), rng).v
    mode = np.where(np.mean(draws == 1, axis=0) > 0.5, 1.0, -1.0)
    np.testing.assert_array_equal(mode, binarize_eval(vh))


@given(hnp.arrays(np.float64, st.integers(1, 8), elements=unit), st.integers(0, 2 ** 32))
def test_noise_mean_bound(vh, seed):
    n = 20_000
    out = binarize_forward(np.tile(vh, (n, 1)), np.random.default_rng(seed))
    assert np.all(np.abs(out.q.mean(axis=0)) <= 4 / np.sqrt(n))


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=unit),
       st.integers(0, 2 ** 32))
def test_outputs_bipolar_and_decomposition(vh, seed):
    out = binarize_forward(vh, np.random.default_rng(seed))
    assert set(np.unique(out.v)) <= {-1.0, 1.0}
    np.testing.assert_array_equal(out.q, out.v - out.v_hat)
    # v = v_hat + q holds up to one rounding of the sum
    assert np.all(np.abs(out.v_hat + out.q - out.v) <= np.spacing(1.0))


def test_full_chain_gradient_matches_identity_construction(rng):
    x = rng.normal(size=(6, 3))
    w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))

    def grads(use_binarizer):
        W1, W2 = Tensor(w1.copy(), requires_grad=True), Tensor(w2.copy(), requires_grad=True)
        vh = ad.tanh(ad.matmul(x, W1))
        mid = StochasticBinarizer(np.random.default_rng(0))(vh) if use_binarizer else vh
        # a loss linear in the message so the upstream adjoint does not depend on the bits
        (ad.matmul(mid, W2) * np.arange(1.0, 3.0)).sum().backward()
        return W1.grad
    np.testing.assert_allclose(grads(True), grads(False))


def test_monte_carlo_finite_difference_matches_pass_through():
    # loss multilinear in v, so E[loss] is the same polynomial in v_hat and
    # the pass-through gradient is exact in expectation
    rng = np.random.default_rng(3)
    L = 4
    vh0 = rng.uniform(-0.6, 0.6, L)
    A = rng.normal(size=(L, L))
    A = np.triu(A, 1)
    b = rng.normal(size=L)

    def loss(v):
        return v @ b + np.einsum("si,ij,sj->s", v, A, v)

    n, step = 1_000_000, 0.05
    u = rng.random((n, L))  # common random numbers across perturbations

    def expected(vh):
        v = np.where(u < plus_probability(vh), 1.0, -1.0)
        return loss(v).mean()

    fd = np.array([(expected(vh0 + step * e) - expected(vh0 - step * e)) / (2 * step) for e in np.eye(L)])
    t = Tensor(vh0.copy(), requires_grad=True)
    out = StochasticBinarizer(np.random.default_rng(9))(t.reshape((1, L)), "train")
    # pass-through gradient at the expectation: dE/dvh = b + (A + A^T) vh
    analytic = b + (A + A.T) @ vh0
    (out * b).sum().backward()
    np.testing.assert_allclose(t.grad, b)
    assert np.max(np.abs(fd - analytic)) <= 0.02 * np.max(np.abs(analytic))


def test_binarizer_eval_mode_records_noise():
    b = StochasticBinarizer(np.random.default_rng(0))
    out = b(Tensor(np.array([[0.2, -0.4]])), "eval")
    np.testing.assert_array_equal(out.data, [[1.0, -1.0]])
    np.testing.assert_allclose(b.last.q, [[0.8, -0.6]])
    with pytest.raises(ValueError):
        b(Tensor(np.zeros((1, 1))), "sample")


def test_seeded_stream_reproducible():
    vh = np.linspace(-0.9, 0.9, 50)
    a = binarize_forward(vh, np.random.default_rng(11)).v
    b = binarize_forward(vh, np.random.default_rng(11)).v
    np.testing.assert_array_equal(a, b)
