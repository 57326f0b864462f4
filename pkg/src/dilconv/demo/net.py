"""Small residual denoiser with a regression head and a peak-logit head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from ..tensor import Precision
from .layers import ConvLayer, bce_with_logits, mse_loss, relu_backward, relu_forward


@dataclass(frozen=True)
class NetConfig:
    channels: int = 15
    filter_size: int = 51
    dilation: int = 8
    blocks: int = 4
    precision: Precision = Precision.FP32
    block_scale: float = 0.5  # residual branch init relative to He scaling

    def __post_init__(self):
        object.__setattr__(self, "precision", Precision(self.precision))
        for name in ("channels", "filter_size", "dilation", "blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_precision(cls, precision, **kw) -> "NetConfig":
        """Default body width: 15 channels in FP32, 16 in BF16 (even dims)."""
        precision = Precision(precision)
        kw.setdefault("channels", 16 if precision is Precision.BF16 else 15)
        return cls(precision=precision, **kw)


@dataclass
class Forward:
    """Activations kept for the backward pass."""

    reg: np.ndarray
    logits: np.ndarray
    saved: list = field(default_factory=list)


class DemoNet:
    """stem conv + ReLU, ``blocks`` residual blocks ``x + relu(conv(x))``, two 1-tap heads.

    Inputs are ``(N, 1, Q)`` tracks; both heads return ``(N, Q)``.
    """

    def __init__(self, cfg: NetConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c, s = cfg.channels, cfg.filter_size

        def conv(k, cin, taps, dil, scale):
            w = rng.normal(0.0, scale * np.sqrt(2.0 / (cin * taps)), (k, cin, taps))
            return ConvLayer(w.astype(np.float32), np.zeros(k, np.float32), dil, cfg.precision)

        self.stem = conv(c, 1, s, cfg.dilation, 1.0)
        self.body = [conv(c, c, s, cfg.dilation, cfg.block_scale) for _ in range(cfg.blocks)]
        self.reg_head = conv(1, c, 1, 1, 0.5)
        self.peak_head = conv(1, c, 1, 1, 0.5)

    @property
    def layers(self) -> list[ConvLayer]:
        return [self.stem, *self.body, self.reg_head, self.peak_head]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise ShapeMismatch(f"expected {2 * len(self.layers)} arrays, got {len(params)}")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeMismatch(f"layer {i}: got {w.shape}/{b.shape}")
            layer.weight, layer.bias = w, b

    def forward(self, x: np.ndarray, exact: bool = False) -> Forward:
        if x.ndim == 2:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeMismatch(f"expected (N, Q) or (N, 1, Q) input, got {x.shape}")
        if exact:
            x = x.astype(np.float64)
        saved = []
        z, xp = self.stem.forward(x, exact)
        h = relu_forward(z)
        saved.append((xp, z))
        for layer in self.body:
            z, xp = layer.forward(h, exact)
            saved.append((xp, z))
            h = h + relu_forward(z)
        reg, xr = self.reg_head.forward(h, exact)
        logits, xl = self.peak_head.forward(h, exact)
        saved += [xr, xl]
        return Forward(reg[:, 0], logits[:, 0], saved)

    def loss(self, fwd: Forward, clean, mask, w_mse: float = 1.0, w_bce: float = 1.0):
        """Combined loss and the gradients w.r.t. both head outputs."""
        mse, g_reg = mse_loss(fwd.reg, clean)
        bce, g_log = bce_with_logits(fwd.logits, mask)
        return w_mse * mse + w_bce * bce, w_mse * g_reg, w_bce * g_log

    def backward(self, fwd: Forward, g_reg: np.ndarray, g_log: np.ndarray,
                 exact: bool = False) -> list[np.ndarray]:
        """Gradients in :meth:`parameters` order."""
        xr, xl = fwd.saved[-2:]
        gh_r, gw_r, gb_r = self.reg_head.backward(g_reg[:, None, :], xr, exact)
        gh_l, gw_l, gb_l = self.peak_head.backward(g_log[:, None, :], xl, exact)
        gh = gh_r + gh_l
        body_grads = []
        for layer, (xp, z) in zip(reversed(self.body), reversed(fwd.saved[1:-2])):
            gz = relu_backward(gh, z)
            gx, gw, gb = layer.backward(gz, xp, exact)
            body_grads.append((gw, gb))
            gh = gh + gx
        xp, z = fwd.saved[0]
        _, gw_s, gb_s = self.stem.backward(relu_backward(gh, z), xp, exact)
        grads = [gw_s, gb_s]
        for gw, gb in reversed(body_grads):
            grads += [gw, gb]
        return grads + [gw_r, gb_r, gw_l, gb_l]
