"""Layer pieces for the demo network: convolution wrapper, activations, losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..bf16 import bf16_to_fp32
from ..conv1d import ConvParams, conv1d_backward_data, conv1d_backward_weight, conv1d_forward
from ..errors import ShapeMismatch
from ..reference import naive_backward_data, naive_backward_weight, naive_forward
from ..tensor import Precision, pack_weights_backward, pack_weights_forward, same_padding


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    # no gradient through the kink at exactly 0
    return np.where(x > 0, grad_y, 0).astype(np.result_type(grad_y, x))


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff, dtype=np.float64)), (2.0 / diff.size) * diff


def bce_with_logits(logits, mask) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy, softplus(z) - y*z, evaluated without overflow."""
    z, y = np.asarray(logits), np.asarray(mask)
    if z.shape != y.shape:
        raise ShapeMismatch(f"logits {z.shape} vs mask {y.shape}")
    loss = np.mean(np.logaddexp(0.0, z) - y * z, dtype=np.float64)
    return float(loss), ((expit(z) - y) / z.size).astype(z.dtype)


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
    """Plain SGD, ``p - lr*g`` per array; ``lr=0`` is allowed and leaves params unchanged."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    out = []
    for p, g in zip(params, grads):
        p, g = np.asarray(p), np.asarray(g)
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
        out.append((p - p.dtype.type(lr) * g).astype(p.dtype))
    return out


@dataclass
class ConvLayer:
    """Same-padded dilated convolution plus a per-filter bias.

    ``weight`` (K, C, S) and ``bias`` (K,) are the float32 master copies. In
    BF16 mode the kernels see BF16-rounded weights and activations; layers
    with an odd channel or filter count run in FP32 instead.
    """

    weight: np.ndarray
    bias: np.ndarray
    dilation: int = 1
    precision: Precision = Precision.FP32

    def __post_init__(self):
        k, c, s = self.weight.shape
        if self.bias.shape != (k,):
            raise ShapeMismatch(f"bias {self.bias.shape} for {k} filters")
        self.pad = same_padding(s, self.dilation)
        prec = Precision(self.precision)
        if prec is Precision.BF16 and (c % 2 or k % 2):
            prec = Precision.FP32
        self.params = ConvParams(c, k, s, self.dilation, precision=prec)

    @property
    def effective_precision(self) -> Precision:
        return self.params.precision

    def _pad(self, x: np.ndarray) -> np.ndarray:
        return np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad)))

    def forward(self, x: np.ndarray, exact: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Returns ``(y, padded_x)``; the padded input is kept for the backward pass.

        ``exact=True`` uses the float64 reference loops instead of the kernels.
        """
        xp = self._pad(x)
        if exact:
            y = naive_forward(xp, self.weight.astype(np.float64), self.params)
            return y + self.bias.astype(np.float64)[None, :, None], xp
        y = conv1d_forward(xp, pack_weights_forward(self.weight, self.params.precision), self.params)
        if self.params.precision is Precision.BF16:
            y = bf16_to_fp32(y)
        return y + self.bias[None, :, None], xp

    def backward(self, grad_y: np.ndarray, xp: np.ndarray, exact: bool = False):
        """Returns ``(grad_x, grad_weight, grad_bias)``."""
        grad_b = grad_y.sum(axis=(0, 2), dtype=np.float64).astype(self.bias.dtype)
        q = grad_y.shape[2]
        if exact:
            w64 = self.weight.astype(np.float64)
            gx = naive_backward_data(grad_y, w64, self.params)
            gw = naive_backward_weight(grad_y, xp, self.params)
        else:
            pb = pack_weights_backward(self.weight, self.params.precision)
            gx = conv1d_backward_data(grad_y, pb, self.params)
            if self.params.precision is Precision.BF16:
                gx = bf16_to_fp32(gx)
            gw = conv1d_backward_weight(grad_y, xp, self.params)
        return gx[:, :, self.pad:self.pad + q], gw, grad_b
