"""Direct-loop convolution and gradients used as ground truth.

These share no indexing code with the GEMM path. They accumulate in float64
and return the input's float dtype, so a float64 call gives an (almost)
exact answer for finite-difference checks.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .errors import NonFinite, ShapeMismatch


@njit(cache=True)
def _fwd(x, w, d, out):
    N, C, _ = x.shape
    K, _, S = w.shape
    Q = out.shape[2]
    for n in range(N):
        for k in range(K):
            for q in range(Q):
                total = 0.0
                for c in range(C):
                    for s in range(S):
                        total += np.float64(x[n, c, q + d * s]) * np.float64(w[k, c, s])
                out[n, k, q] = total


@njit(cache=True)
def _bwd_data(g, w, d, out):
    N, K, Q = g.shape
    _, C, S = w.shape
    W = out.shape[2]
    for n in range(N):
        for c in range(C):
            for x in range(W):
                total = 0.0
                for k in range(K):
                    for s in range(S):
                        q = x - d * s
                        if 0 <= q < Q:
                            total += np.float64(g[n, k, q]) * np.float64(w[k, c, s])
                out[n, c, x] = total


@njit(cache=True)
def _bwd_weight(g, x, d, out):
    N, K, Q = g.shape
    _, C, _ = x.shape
    S = out.shape[2]
    for k in range(K):
        for c in range(C):
            for s in range(S):
                total = 0.0
                for n in range(N):
                    for q in range(Q):
                        total += np.float64(x[n, c, q + d * s]) * np.float64(g[n, k, q])
                out[k, c, s] = total


def _float(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != np.float64:
        a = a.astype(np.float32)
    return np.ascontiguousarray(a)


def _out_dtype(*arrays):
    return np.float64 if any(a.dtype == np.float64 for a in arrays) else np.float32


def naive_forward(inp, w, p) -> np.ndarray:
    x, wt = _float(inp), _float(w)
    if x.ndim != 3 or wt.ndim != 3:
        raise ShapeMismatch("expected (N, C, W) input and (K, C, S) weights")
    N, C, W = x.shape
    K, Cw, S = wt.shape
    if C != Cw or (p.c, p.k, p.s) != (C, K, S):
        raise ShapeMismatch(f"input {x.shape}, weights {wt.shape}, params {p}")
    Q = W - p.d * (S - 1)
    if Q < 1:
        raise ShapeMismatch(f"input width {W} too narrow for S={S}, d={p.d}")
    out = np.empty((N, K, Q), dtype=_out_dtype(x, wt))
    _fwd(x, wt, p.d, out)
    return out


def naive_backward_data(grad_out, w, p) -> np.ndarray:
    g, wt = _float(grad_out), _float(w)
    if g.ndim != 3 or wt.ndim != 3:
        raise ShapeMismatch("expected (N, K, Q) grad_out and (K, C, S) weights")
    N, K, Q = g.shape
    Kw, C, S = wt.shape
    if K != Kw or (p.c, p.k, p.s) != (C, K, S):
        raise ShapeMismatch(f"grad_out {g.shape}, weights {wt.shape}, params {p}")
    out = np.empty((N, C, Q + p.d * (S - 1)), dtype=_out_dtype(g, wt))
    _bwd_data(g, wt, p.d, out)
    return out


def naive_backward_weight(grad_out, inp, p) -> np.ndarray:
    g, x = _float(grad_out), _float(inp)
    if g.ndim != 3 or x.ndim != 3:
        raise ShapeMismatch("expected (N, K, Q) grad_out and (N, C, W) input")
    N, K, Q = g.shape
    Nx, C, W = x.shape
    if N != Nx or (p.c, p.k) != (C, K) or W - p.d * (p.s - 1) != Q:
        raise ShapeMismatch(f"grad_out {g.shape}, input {x.shape}, params {p}")
    out = np.empty((K, C, p.s), dtype=_out_dtype(g, x))
    _bwd_weight(g, x, p.d, out)
    return out


def finite_diff_check(f, x, analytic_grad, eps: float = 1e-3) -> float:
    """Worst discrepancy between ``analytic_grad`` and central differences of ``f``.

    The error is max_i |fd_i - g_i| / max_i |fd_i|, i.e. relative to the
    largest numerical partial, which stays meaningful where single partials
    vanish. ``x`` is perturbed in place and restored.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x)
    flat = x.reshape(-1)
    grad = np.asarray(analytic_grad, dtype=np.float64).reshape(-1)
    if grad.size != flat.size:
        raise ShapeMismatch(f"gradient has {grad.size} entries, parameters {flat.size}")
    fd = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(f(x))
        flat[i] = orig - eps
        down = float(f(x))
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFinite(f"objective is not finite at coordinate {i}")
        fd[i] = (up - down) / (2 * eps)
    scale = np.max(np.abs(fd))
    diff = np.max(np.abs(fd - grad))
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)
