import numpy as np
import pytest
from hypothesis import given, strategies as st

from dilconv.conv1d import ConvParams
from dilconv.errors import NonFinite, ShapeMismatch
from dilconv.reference import (
    finite_diff_check, naive_backward_data, naive_backward_weight, naive_forward,
)


def correlate_oracle(x, w, d):
    """Valid cross-correlation via numpy, with the filter dilated by zero insertion."""
    n, c, _ = x.shape
    k, _, s = w.shape
    wd = np.zeros((k, c, d * (s - 1) + 1))
    wd[:, :, ::d] = w
    q = x.shape[2] - wd.shape[2] + 1
    out = np.zeros((n, k, q))
    for i in range(n):
        for a in range(k):
            for b in range(c):
                out[i, a] += np.correlate(x[i, b], wd[a, b], mode="valid")
    return out


def test_identity_filter(rng):
    x = rng.standard_normal((2, 1, 9))
    np.testing.assert_array_equal(naive_forward(x, np.ones((1, 1, 1)), ConvParams(1, 1, 1, 5)), x)


def test_dilated_pair_example():
    x = np.array([[[1.0, 2, 3, 4, 5]]])
    out = naive_forward(x, np.array([[[1.0, 1.0]]]), ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [4.0, 6.0, 8.0]


def test_backward_data_example():
    g = np.array([[[1.0, 1.0, 1.0]]])
    out = naive_backward_data(g, np.array([[[1.0, 1.0]]]), ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [1.0, 1.0, 2.0, 1.0, 1.0]


def test_backward_weight_example():
    x = np.array([[[1.0, 2, 3, 4, 5]]])
    g = np.array([[[1.0, 1.0, 1.0]]])
    out = naive_backward_weight(g, x, ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [6.0, 12.0]


def test_backward_data_pointwise(rng):
    w = rng.standard_normal((3, 2, 1))
    g = rng.standard_normal((1, 3, 4))
    got = naive_backward_data(g, w, ConvParams(2, 3, 1))
    np.testing.assert_allclose(got[0], w[:, :, 0].T @ g[0])


def test_backward_weight_impulse(rng):
    x = rng.standard_normal((1, 3, 20))
    p = ConvParams(3, 2, 4, 3)
    g = np.zeros((1, 2, 20 - 9))
    g[0, 1, 5] = 1.0
    got = naive_backward_weight(g, x, p)
    assert not got[0].any()
    for s in range(4):
        np.testing.assert_array_equal(got[1, :, s], x[0, :, 5 + 3 * s])


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 6),
       st.integers(1, 4), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_forward_matches_numpy_correlate(n, c, k, s, d, q, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, c, q + d * (s - 1)))
    w = r.standard_normal((k, c, s))
    np.testing.assert_allclose(naive_forward(x, w, ConvParams(c, k, s, d)),
                               correlate_oracle(x, w, d), rtol=1e-12, atol=1e-12)


def test_d1_matches_standard_convolution_on_100_shapes():
    r = np.random.default_rng(7)
    for _ in range(100):
        n, c, k, s = r.integers(1, 4, 4)
        q = int(r.integers(1, 20))
        x = r.standard_normal((n, c, q + s - 1))
        w = r.standard_normal((k, c, s))
        want = np.zeros((n, k, q))
        for i in range(n):
            for a in range(k):
                for b in range(c):
                    # true convolution with the flipped filter is correlation
                    want[i, a] += np.convolve(x[i, b], w[a, b, ::-1], mode="valid")
        np.testing.assert_allclose(naive_forward(x, w, ConvParams(c, k, s, 1)), want,
                                   rtol=1e-12, atol=1e-12)


@given(st.integers(1, 2), st.integers(1, 4), st.integers(1, 4), st.integers(1, 5),
       st.integers(1, 3), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_backward_data_is_adjoint(n, c, k, s, d, q, seed):
    r = np.random.default_rng(seed)
    p = ConvParams(c, k, s, d)
    x = r.standard_normal((n, c, q + d * (s - 1)))
    y = r.standard_normal((n, k, q))
    w = r.standard_normal((k, c, s))
    lhs = np.vdot(naive_forward(x, w, p), y)
    rhs = np.vdot(x, naive_backward_data(y, w, p))
    assert abs(lhs - rhs) <= 1e-6 * max(1.0, abs(lhs))


def test_backward_weight_is_adjoint_in_weights(rng):
    p = ConvParams(3, 2, 4, 2)
    x = rng.standard_normal((2, 3, 30))
    y = rng.standard_normal((2, 2, 24))
    w = rng.standard_normal((2, 3, 4))
    lhs = np.vdot(naive_forward(x, w, p), y)
    rhs = np.vdot(w, naive_backward_weight(y, x, p))
    assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


def test_backward_data_finite_differences(rng):
    p = ConvParams(2, 2, 3, 2)
    x = rng.standard_normal((1, 2, 16 + 4))
    w = rng.standard_normal((2, 2, 3))
    y = naive_forward(x, w, p)
    grad = naive_backward_data(2 * y, w, p)
    err = finite_diff_check(lambda v: np.sum(naive_forward(v, w, p) ** 2), x.copy(), grad)
    assert err <= 1e-3


def test_backward_weight_finite_differences(rng):
    p = ConvParams(3, 2, 4, 2)
    x = rng.standard_normal((2, 3, 20))
    w = rng.standard_normal((2, 3, 4))
    grad = naive_backward_weight(2 * naive_forward(x, w, p), x, p)
    err = finite_diff_check(lambda v: np.sum(naive_forward(x, v, p) ** 2), w.copy(), grad)
    assert err <= 1e-3


def test_fd_quadratic():
    err = finite_diff_check(lambda v: float(v[0] ** 2), np.array([3.0]), np.array([6.0]))
    assert err <= 1e-6


def test_fd_detects_wrong_gradient(rng):
    p = ConvParams(2, 2, 3, 1)
    x = rng.standard_normal((1, 2, 12))
    w = rng.standard_normal((2, 2, 3))
    grad = 1.1 * naive_backward_weight(2 * naive_forward(x, w, p), x, p)
    err = finite_diff_check(lambda v: np.sum(naive_forward(x, v, p) ** 2), w.copy(), grad)
    assert err == pytest.approx(0.1, rel=0.05)


def test_fd_restores_input():
    x = np.array([1.0, 2.0])
    finite_diff_check(lambda v: float(v @ v), x, 2 * x)
    assert x.tolist() == [1.0, 2.0]


def test_fd_rejects_non_finite():
    with pytest.raises(NonFinite):
        finite_diff_check(lambda v: float("nan"), np.zeros(2), np.zeros(2))


def test_fd_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_diff_check(lambda v: 0.0, np.zeros(1), np.zeros(1), eps=0.0)


def test_dtype_follows_inputs(rng):
    p = ConvParams(1, 1, 2)
    x32 = rng.standard_normal((1, 1, 5)).astype(np.float32)
    w32 = np.ones((1, 1, 2), np.float32)
    assert naive_forward(x32, w32, p).dtype == np.float32
    assert naive_forward(x32.astype(np.float64), w32, p).dtype == np.float64


@pytest.mark.parametrize("fn, a, b", [
    (naive_forward, np.zeros((1, 2, 5)), np.zeros((1, 3, 2))),
    (naive_backward_data, np.zeros((1, 2, 5)), np.zeros((1, 1, 2))),
    (naive_backward_weight, np.zeros((1, 1, 5)), np.zeros((2, 1, 6))),
])
def test_shape_errors(fn, a, b):
    with pytest.raises(ShapeMismatch):
        fn(a, b, ConvParams(1, 1, 2))
