import numpy as np
import pytest
from hypothesis import given, strategies as st

from dilconv.bf16 import bf16_to_fp32, round_to_bf16
from dilconv.conv1d import (
    ConvParams, conv1d_backward_data, conv1d_backward_weight, conv1d_forward, conv_flops,
    conv_shapes, max_threads, output_width,
)
from dilconv.errors import OddDims, ShapeMismatch, TooNarrow
from dilconv.reference import naive_backward_data, naive_backward_weight, naive_forward
from dilconv.tensor import Precision, pack_weights_backward, pack_weights_forward, same_padding

from conftest import max_rel_err


def fwd(x, w, p, **kw):
    return conv1d_forward(x, pack_weights_forward(w, p.precision), p, **kw)


def bwd_d(g, w, p, **kw):
    return conv1d_backward_data(g, pack_weights_backward(w, p.precision), p, **kw)


def draw(rng, n, c, k, s, d, q):
    x = rng.uniform(-1, 1, (n, c, q + d * (s - 1))).astype(np.float32)
    w = rng.uniform(-1, 1, (k, c, s)).astype(np.float32)
    g = rng.uniform(-1, 1, (n, k, q)).astype(np.float32)
    return x, w, g


@pytest.mark.parametrize("s, d, w_padded, q", [(3, 3, 23, 17), (1, 7, 10, 10), (5, 4, 100, 84)])
def test_output_width(s, d, w_padded, q):
    p = ConvParams(1, 1, s, d)
    assert output_width(p, w_padded) == q
    sh = conv_shapes(p, w_padded)
    assert sh.w == sh.q + sh.receptive


def test_too_narrow():
    with pytest.raises(TooNarrow):
        output_width(ConvParams(1, 1, 3, 3), 6)


@pytest.mark.parametrize("n, c, k, s, q, flops", [
    (1, 15, 15, 51, 60000, 1_377_000_000),
    (1, 1, 1, 1, 1, 2),
    (64, 64, 64, 9, 20000, 94_371_840_000),
])
def test_conv_flops(n, c, k, s, q, flops):
    assert conv_flops(ConvParams(c, k, s), n, q) == flops


def test_flops_count_matches_multiply_adds():
    # count the multiply-adds the direct loop performs, times two
    p = ConvParams(3, 4, 5, 2)
    n, q = 2, 7
    macs = sum(1 for _ in np.ndindex(n, p.k, q, p.c, p.s))
    assert conv_flops(p, n, q) == 2 * macs


def test_params_validation():
    with pytest.raises(ValueError):
        ConvParams(0, 1, 1)
    with pytest.raises(OddDims):
        ConvParams(3, 4, 5, precision="bf16")
    assert ConvParams(4, 4, 5, precision="bf16").precision is Precision.BF16


def test_forward_scaling_filter():
    out = fwd(np.array([[[1.0, 2, 3]]]), np.array([[[2.0]]]), ConvParams(1, 1, 1))
    assert out.reshape(-1).tolist() == [2.0, 4.0, 6.0]


def test_forward_dilated_pair():
    out = fwd(np.array([[[1.0, 2, 3, 4, 5]]]), np.array([[[1.0, 1.0]]]), ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [4.0, 6.0, 8.0]


def test_forward_figure_geometry(rng):
    p = ConvParams(5, 4, 3, 3)
    x, w, _ = draw(rng, 2, 5, 4, 3, 3, 17)
    assert x.shape[2] == 23
    assert fwd(x, w, p).shape == (2, 4, 17)


def test_backward_data_pointwise():
    out = bwd_d(np.array([[[1.0, 2.0]]]), np.array([[[3.0]]]), ConvParams(1, 1, 1))
    assert out.reshape(-1).tolist() == [3.0, 6.0]


def test_backward_data_dilated_pair():
    out = bwd_d(np.ones((1, 1, 3)), np.ones((1, 1, 2)), ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [1.0, 1.0, 2.0, 1.0, 1.0]


def test_backward_data_random(rng):
    p = ConvParams(4, 6, 5, 2)
    _, w, g = draw(rng, 3, 4, 6, 5, 2, 40)
    assert max_rel_err(bwd_d(g, w, p), naive_backward_data(g, w, p)) <= 1e-6


def test_backward_weight_dilated_pair():
    out = conv1d_backward_weight(np.ones((1, 1, 3)), np.array([[[1.0, 2, 3, 4, 5]]]),
                                 ConvParams(1, 1, 2, 2))
    assert out.reshape(-1).tolist() == [6.0, 12.0]


def test_backward_weight_zero_grad(rng):
    p = ConvParams(3, 4, 5, 2)
    x, _, g = draw(rng, 2, 3, 4, 5, 2, 30)
    assert not conv1d_backward_weight(np.zeros_like(g), x, p).any()


def test_backward_weight_finite_differences(rng):
    from dilconv.reference import finite_diff_check
    p = ConvParams(3, 4, 5, 1)
    x, w, _ = draw(rng, 2, 3, 4, 5, 1, 12)
    x64 = x.astype(np.float64)
    grad = conv1d_backward_weight(2 * fwd(x, w, p), x, p)
    err = finite_diff_check(lambda v: np.sum(naive_forward(x64, v, p) ** 2),
                            w.astype(np.float64), grad)
    assert err <= 1e-3


@given(st.sampled_from([1, 3]), st.sampled_from([1, 4, 8, 15, 16, 32]),
       st.sampled_from([1, 4, 8, 15, 16, 32]), st.sampled_from([1, 5, 9, 51]),
       st.sampled_from([1, 2, 8]), st.sampled_from([64, 100, 1000]), st.integers(0, 2**32 - 1))
def test_matches_oracle(n, c, k, s, d, q, seed):
    rng = np.random.default_rng(seed)
    p = ConvParams(c, k, s, d)
    x, w, g = draw(rng, n, c, k, s, d, q)
    assert max_rel_err(fwd(x, w, p), naive_forward(x, w, p)) <= 1e-5
    assert max_rel_err(bwd_d(g, w, p), naive_backward_data(g, w, p)) <= 1e-5
    assert max_rel_err(conv1d_backward_weight(g, x, p), naive_backward_weight(g, x, p)) <= 1e-5


@pytest.mark.parametrize("q", [1, 15, 63, 65, 130])
def test_remainder_tiles(rng, q):
    p = ConvParams(4, 3, 3, 2, block_w=16)
    x, w, g = draw(rng, 2, 4, 3, 3, 2, q)
    assert max_rel_err(fwd(x, w, p), naive_forward(x, w, p)) <= 1e-5
    assert max_rel_err(bwd_d(g, w, p), naive_backward_data(g, w, p)) <= 1e-5
    assert max_rel_err(conv1d_backward_weight(g, x, p), naive_backward_weight(g, x, p)) <= 1e-5


def test_tile_and_thread_independence(rng):
    x, w, g = draw(rng, 5, 15, 15, 9, 4, 300)
    outs = []
    for bw in (16, 64, 128):
        for threads in (1, 2, max_threads()):
            p = ConvParams(15, 15, 9, 4, block_w=bw)
            outs.append((fwd(x, w, p, threads=threads), bwd_d(g, w, p, threads=threads),
                         conv1d_backward_weight(g, x, p, threads=threads)))
    for other in outs[1:]:
        for a, b in zip(outs[0], other):
            np.testing.assert_array_equal(a, b)


def test_directional_derivative(rng):
    p = ConvParams(4, 4, 5, 2)
    x, w, _ = draw(rng, 2, 4, 4, 5, 2, 32)
    x64, w64 = x.astype(np.float64), w.astype(np.float64)
    out = fwd(x, w, p)
    gx = bwd_d(2 * out, w, p)
    gw = conv1d_backward_weight(2 * out, x, p)
    vx, vw = rng.standard_normal(x.shape), rng.standard_normal(w.shape)
    eps = 1e-3
    loss = lambda a, b: np.sum(naive_forward(a, b, p) ** 2)  # noqa: E731
    fd_x = (loss(x64 + eps * vx, w64) - loss(x64 - eps * vx, w64)) / (2 * eps)
    fd_w = (loss(x64, w64 + eps * vw) - loss(x64, w64 - eps * vw)) / (2 * eps)
    assert abs(fd_x - np.vdot(gx, vx)) <= 1e-3 * abs(fd_x)
    assert abs(fd_w - np.vdot(gw, vw)) <= 1e-3 * abs(fd_w)


@pytest.mark.parametrize("s, d, w", [(3, 3, 17), (51, 8, 300), (5, 1, 9)])
def test_same_padding_keeps_width(rng, s, d, w):
    pad = same_padding(s, d)
    x = np.pad(rng.standard_normal((1, 2, w)).astype(np.float32), ((0, 0), (0, 0), (pad, pad)))
    assert fwd(x, rng.standard_normal((3, 2, s)), ConvParams(2, 3, s, d)).shape[2] == w


@given(st.sampled_from([2, 4, 16]), st.sampled_from([2, 8, 16]), st.sampled_from([1, 5, 9]),
       st.sampled_from([1, 2, 8]), st.sampled_from([64, 100]), st.integers(0, 2**32 - 1))
def test_bf16_close_to_fp32_on_rounded_inputs(c, k, s, d, q, seed):
    rng = np.random.default_rng(seed)
    p = ConvParams(c, k, s, d, precision="bf16")
    x, w, g = draw(rng, 2, c, k, s, d, q)
    xr, wr, gr = round_to_bf16(x), round_to_bf16(w), round_to_bf16(g)
    assert max_rel_err(bf16_to_fp32(fwd(x, w, p)), naive_forward(xr, wr, p)) <= 1e-2
    assert max_rel_err(bf16_to_fp32(bwd_d(g, w, p)), naive_backward_data(gr, wr, p)) <= 1e-2
    assert max_rel_err(conv1d_backward_weight(g, x, p), naive_backward_weight(gr, xr, p)) <= 1e-2


def test_bf16_outputs_are_bf16(rng):
    p = ConvParams(4, 4, 3, 1, precision="bf16")
    x, w, g = draw(rng, 1, 4, 4, 3, 1, 20)
    assert fwd(x, w, p).dtype == np.uint16
    assert bwd_d(g, w, p).dtype == np.uint16
    assert conv1d_backward_weight(g, x, p).dtype == np.float32


def test_bf16_rejects_odd_width(rng):
    p = ConvParams(4, 4, 3, 1, precision="bf16")
    x, w, g = draw(rng, 1, 4, 4, 3, 1, 21)
    with pytest.raises(OddDims):
        fwd(x, w, p)
    with pytest.raises(OddDims):
        bwd_d(g, w, p)


def test_wrong_packing_rejected(rng):
    p = ConvParams(2, 2, 3)
    x, w, g = draw(rng, 1, 2, 2, 3, 1, 8)
    with pytest.raises(ShapeMismatch):
        conv1d_forward(x, pack_weights_backward(w), p)
    with pytest.raises(ShapeMismatch):
        conv1d_backward_data(g, pack_weights_forward(w), p)


def test_shape_mismatch(rng):
    p = ConvParams(2, 2, 3)
    x, w, g = draw(rng, 1, 2, 2, 3, 1, 8)
    with pytest.raises(ShapeMismatch):
        fwd(x[:, :1], w, p)
    with pytest.raises(ShapeMismatch):
        conv1d_backward_weight(g[:, :, :5], x, p)
    with pytest.raises(ShapeMismatch):
        conv1d_backward_weight(g, x[:1].repeat(2, 0), p)
