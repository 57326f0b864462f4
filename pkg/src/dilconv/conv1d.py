"""Dilated 1D convolution passes built on the batch-reduce GEMM.

All kernels take pre-padded inputs and compute the "valid" correlation

    out[n, k, q] = sum_{c, s} in[n, c, q + d*s] * weight[k, c, s]

with output width ``Q = W - d*(S-1)``. The width axis is cut into tiles of
``block_w`` columns; each tile of the forward and backward-data passes is a
single batch-reduce GEMM over the S taps. Work is split across threads by
batch sample only.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .bf16 import BF16, fp32_to_bf16
from .errors import OddDims, ShapeMismatch, TooNarrow
from .microkernel import (
    ACC_SIZE, TILE, brgemm_bf16_core, brgemm_f32_core,
)
from .tensor import Layout, PackedWeights, Precision, as_tensor3d, pack_bf16_pairs

# backward-weight GEMM column count is padded to a multiple of this
_LANES = 16


@dataclass(frozen=True)
class ConvParams:
    c: int
    k: int
    s: int
    d: int = 1
    precision: Precision = Precision.FP32
    block_w: int = 64

    def __post_init__(self):
        object.__setattr__(self, "precision", Precision(self.precision))
        for name in ("c", "k", "s", "d", "block_w"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.precision is Precision.BF16:
            odd = [f"{n}={getattr(self, n)}" for n in ("c", "k", "block_w") if getattr(self, n) % 2]
            if odd:
                raise OddDims("BF16 convolution needs even " + ", ".join(odd))

    @property
    def receptive(self) -> int:
        return self.d * (self.s - 1)


@dataclass(frozen=True)
class ConvShapes:
    q: int
    w: int
    receptive: int


def output_width(p: ConvParams, w_padded: int) -> int:
    if w_padded <= p.receptive:
        raise TooNarrow(f"padded width {w_padded} <= d*(S-1) = {p.receptive}")
    return w_padded - p.receptive


def conv_shapes(p: ConvParams, w_padded: int) -> ConvShapes:
    return ConvShapes(output_width(p, w_padded), w_padded, p.receptive)


def conv_flops(p: ConvParams, n: int, q: int) -> int:
    """Two FLOPs per multiply-accumulate of one pass."""
    return 2 * n * p.k * p.c * p.s * q


@contextlib.contextmanager
def thread_limit(threads: int | None):
    """Temporarily set the kernel thread count (None leaves it alone)."""
    if threads is None:
        yield
        return
    prev = numba.get_num_threads()
    numba.set_num_threads(int(threads))
    try:
        yield
    finally:
        numba.set_num_threads(prev)


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


# ---------------------------------------------------------------------------
# compiled pass drivers; all buffers flat

@njit(parallel=True, cache=True)
def _forward_f32(x, w, out, N, C, K, S, d, W, Q, bw):
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_offs = np.empty(S, np.int64)
        b_offs = np.empty(S, np.int64)
        for s in range(S):
            a_offs[s] = s * K * C
        for pos in range(0, Q, bw):
            cols = min(bw, Q - pos)
            for s in range(S):
                b_offs[s] = n * C * W + pos + s * d
            brgemm_f32_core(w, a_offs, C, x, b_offs, W, out, n * K * Q + pos, Q,
                            K, cols, C, np.float32(1.0), np.float32(0.0), acc)


@njit(parallel=True, cache=True)
def _forward_bf16(xp, w, out, N, C, K, S, d, W, Q, bw):
    # xp: channel-pair packed input, per sample (C/2, W, 2)
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_s = np.empty(TILE * C, np.uint32)
        b_s = np.empty(TILE * C, np.uint32)
        a_offs = np.empty(S, np.int64)
        b_offs = np.empty(S, np.int64)
        for s in range(S):
            a_offs[s] = s * K * C
        for pos in range(0, Q, bw):
            cols = min(bw, Q - pos)
            for s in range(S):
                b_offs[s] = n * C * W + 2 * (pos + s * d)
            brgemm_bf16_core(w, a_offs, C, xp, b_offs, 2 * W, out, n * K * Q + pos, Q,
                             K, cols, C, np.float32(1.0), np.float32(0.0), acc, a_s, b_s)


@njit(parallel=True, cache=True)
def _backward_data_f32(gp, w, gd, N, C, K, S, d, Wp, W, bw):
    # gp: grad_out zero-padded by d*(S-1) per side, per sample (K, Wp)
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_offs = np.empty(S, np.int64)
        b_offs = np.empty(S, np.int64)
        for s in range(S):
            a_offs[s] = s * C * K
        for pos in range(0, W, bw):
            cols = min(bw, W - pos)
            for s in range(S):
                b_offs[s] = n * K * Wp + pos + s * d
            brgemm_f32_core(w, a_offs, K, gp, b_offs, Wp, gd, n * C * W + pos, W,
                            C, cols, K, np.float32(1.0), np.float32(0.0), acc)


@njit(parallel=True, cache=True)
def _backward_data_bf16(gpp, w, gd, N, C, K, S, d, Wp, W, bw):
    # gpp: padded grad_out, filter-pair packed, per sample (K/2, Wp, 2)
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_s = np.empty(TILE * K, np.uint32)
        b_s = np.empty(TILE * K, np.uint32)
        a_offs = np.empty(S, np.int64)
        b_offs = np.empty(S, np.int64)
        for s in range(S):
            a_offs[s] = s * C * K
        for pos in range(0, W, bw):
            cols = min(bw, W - pos)
            for s in range(S):
                b_offs[s] = n * K * Wp + 2 * (pos + s * d)
            brgemm_bf16_core(w, a_offs, K, gpp, b_offs, 2 * Wp, gd, n * C * W + pos, W,
                             C, cols, K, np.float32(1.0), np.float32(0.0), acc, a_s, b_s)


@njit(parallel=True, cache=True)
def _backward_weight_f32(x, got, part, N, C, Kp, S, d, W, Q, bw):
    # got: grad_out transposed per sample to (Q, Kp); part: per-sample (S, C, Kp)
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_off = np.empty(1, np.int64)
        b_off = np.empty(1, np.int64)
        for pos in range(0, Q, bw):
            cols = min(bw, Q - pos)
            b_off[0] = n * Q * Kp + pos * Kp
            for s in range(S):
                a_off[0] = n * C * W + pos + s * d
                brgemm_f32_core(x, a_off, W, got, b_off, Kp, part, (n * S + s) * C * Kp, Kp,
                                C, Kp, cols, np.float32(1.0), np.float32(1.0), acc)


@njit(parallel=True, cache=True)
def _backward_weight_bf16(x, gotp, part, N, C, Kp, S, d, W, Q, bw):
    # gotp: transposed grad_out with width pairs packed, per sample (Q/2, Kp, 2)
    for n in prange(N):
        acc = np.empty(ACC_SIZE, np.float32)
        a_s = np.empty(TILE * bw, np.uint32)
        b_s = np.empty(TILE * bw, np.uint32)
        a_off = np.empty(1, np.int64)
        b_off = np.empty(1, np.int64)
        for pos in range(0, Q, bw):
            cols = min(bw, Q - pos)
            b_off[0] = n * Q * Kp + pos * Kp
            for s in range(S):
                a_off[0] = n * C * W + pos + s * d
                brgemm_bf16_core(x, a_off, W, gotp, b_off, 2 * Kp, part, (n * S + s) * C * Kp, Kp,
                                 C, Kp, cols, np.float32(1.0), np.float32(1.0), acc, a_s, b_s)


# ---------------------------------------------------------------------------

def _input_bits(t: np.ndarray, p: ConvParams) -> np.ndarray:
    if p.precision is Precision.BF16:
        return t if t.dtype == BF16 else fp32_to_bf16(t)
    if t.dtype == BF16:
        raise ShapeMismatch("BF16 tensor passed to an FP32 convolution")
    return np.ascontiguousarray(t, dtype=np.float32)


def _weights_bits(w: PackedWeights, p: ConvParams) -> np.ndarray:
    if p.precision is Precision.BF16:
        return w.data if w.data.dtype == BF16 else fp32_to_bf16(w.data)
    if w.data.dtype == BF16:
        raise ShapeMismatch("BF16 weights passed to an FP32 convolution")
    return w.data


def _check_even_width(width: int, what: str, p: ConvParams) -> None:
    if p.precision is Precision.BF16 and width % 2:
        raise OddDims(f"BF16 convolution needs an even {what}, got {width}")


def _finish(out: np.ndarray, p: ConvParams) -> np.ndarray:
    return fp32_to_bf16(out) if p.precision is Precision.BF16 else out


def conv1d_forward(inp, w: PackedWeights, p: ConvParams, threads: int | None = None) -> np.ndarray:
    """Forward pass on a pre-padded ``(N, C, W)`` input -> ``(N, K, Q)``.

    FP32 returns float32; BF16 rounds inputs/weights to BF16 if needed,
    accumulates in FP32 and returns BF16 bits.
    """
    x = as_tensor3d(inp, "input")
    N, C, W = x.shape
    if w.layout is not Layout.FORWARD_SKC:
        raise ShapeMismatch("forward pass needs weights packed with pack_weights_forward")
    if (C, w.k, w.c, w.s) != (p.c, p.k, p.c, p.s):
        raise ShapeMismatch(f"input C={C}, weights (S={w.s}, K={w.k}, C={w.c}) vs params {p}")
    Q = output_width(p, W)
    _check_even_width(W, "input width", p)
    xb = _input_bits(x, p)
    wb = _weights_bits(w, p)
    out = np.empty((N, p.k, Q), dtype=np.float32)
    with thread_limit(threads):
        if p.precision is Precision.BF16:
            _forward_bf16(pack_bf16_pairs(xb).reshape(-1), wb.reshape(-1), out.reshape(-1),
                          N, C, p.k, p.s, p.d, W, Q, p.block_w)
        else:
            _forward_f32(xb.reshape(-1), wb.reshape(-1), out.reshape(-1),
                         N, C, p.k, p.s, p.d, W, Q, p.block_w)
    return _finish(out, p)


def conv1d_backward_data(grad_out, w: PackedWeights, p: ConvParams,
                         threads: int | None = None) -> np.ndarray:
    """Gradient w.r.t. the padded input: ``(N, K, Q)`` -> ``(N, C, Q + d*(S-1))``."""
    g = as_tensor3d(grad_out, "grad_out")
    N, K, Q = g.shape
    if w.layout is not Layout.BACKWARD_SCK:
        raise ShapeMismatch("backward-data pass needs weights packed with pack_weights_backward")
    if (K, w.k, w.c, w.s) != (p.k, p.k, p.c, p.s):
        raise ShapeMismatch(f"grad_out K={K}, weights (S={w.s}, C={w.c}, K={w.k}) vs params {p}")
    _check_even_width(Q, "output width", p)
    P = p.receptive
    W = Q + P
    Wp = Q + 2 * P
    gb = _input_bits(g, p)
    gp = np.zeros((N, K, Wp), dtype=gb.dtype)
    gp[:, :, P:P + Q] = gb
    wb = _weights_bits(w, p)
    gd = np.empty((N, p.c, W), dtype=np.float32)
    with thread_limit(threads):
        if p.precision is Precision.BF16:
            _backward_data_bf16(pack_bf16_pairs(gp).reshape(-1), wb.reshape(-1), gd.reshape(-1),
                                N, p.c, K, p.s, p.d, Wp, W, p.block_w)
        else:
            _backward_data_f32(gp.reshape(-1), wb.reshape(-1), gd.reshape(-1),
                               N, p.c, K, p.s, p.d, Wp, W, p.block_w)
    return _finish(gd, p)


def conv1d_backward_weight(grad_out, inp, p: ConvParams, threads: int | None = None) -> np.ndarray:
    """Weight gradient ``(K, C, S)`` in float32, for either precision."""
    g = as_tensor3d(grad_out, "grad_out")
    x = as_tensor3d(inp, "input")
    N, K, Q = g.shape
    Nx, C, W = x.shape
    if Nx != N or K != p.k or C != p.c:
        raise ShapeMismatch(f"grad_out {g.shape} and input {x.shape} disagree with params {p}")
    if output_width(p, W) != Q:
        raise ShapeMismatch(f"grad_out width {Q} != W - d*(S-1) = {W - p.receptive}")
    _check_even_width(W, "input width", p)
    _check_even_width(Q, "output width", p)
    Kp = -(-K // _LANES) * _LANES
    gb = _input_bits(g, p)
    got = np.zeros((N, Q, Kp), dtype=gb.dtype)
    got[:, :, :K] = gb.transpose(0, 2, 1)
    xb = _input_bits(x, p)
    part = np.zeros((N, p.s, C, Kp), dtype=np.float32)
    with thread_limit(threads):
        if p.precision is Precision.BF16:
            _backward_weight_bf16(xb.reshape(-1), pack_bf16_pairs(got).reshape(-1), part.reshape(-1),
                                  N, C, Kp, p.s, p.d, W, Q, p.block_w)
        else:
            _backward_weight_f32(xb.reshape(-1), got.reshape(-1), part.reshape(-1),
                                 N, C, Kp, p.s, p.d, W, Q, p.block_w)
    total = part[0].copy()
    for n in range(1, N):
        total += part[n]
    return np.ascontiguousarray(total[:, :, :K].transpose(2, 1, 0))
