"""Tensor storage conventions and layout transforms.

Activations are C-contiguous ``(n, c, w)`` arrays with width innermost, so
element ``(i, j, x)`` sits at flat offset ``(i*c + j)*w + x``. FP32 tensors are
``float32``; BF16 tensors are ``uint16`` bit patterns (see :mod:`dilconv.bf16`).
Filters are ``(k, c, s)`` float32 arrays, the master copy for both precisions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bf16 import BF16, bf16_to_fp32, fp32_to_bf16
from .errors import OddChannels, ShapeMismatch


class Precision(str, enum.Enum):
    FP32 = "fp32"
    BF16 = "bf16"


class Layout(str, enum.Enum):
    FORWARD_SKC = "forward_skc"
    BACKWARD_SCK = "backward_sck"


def as_tensor3d(t, name: str = "tensor") -> np.ndarray:
    a = np.asarray(t)
    if a.ndim != 3:
        raise ShapeMismatch(f"{name} must be rank 3 (n, c, w), got shape {a.shape}")
    if a.dtype not in (np.float32, np.float64, BF16):
        a = a.astype(np.float32)
    return np.ascontiguousarray(a)


def as_weight_kcs(w) -> np.ndarray:
    a = np.asarray(w, dtype=np.float32)
    if a.ndim != 3:
        raise ShapeMismatch(f"weights must be rank 3 (k, c, s), got shape {a.shape}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class PackedWeights:
    """Filter slices rearranged for the GEMM formulation.

    ``FORWARD_SKC`` holds ``data[s]`` as the K x C matrix of tap ``s``.
    ``BACKWARD_SCK`` holds ``data[s]`` as the C x K matrix of tap ``S-1-s``.
    ``data`` is float32, or BF16 bits when packed for the BF16 path.
    """

    layout: Layout
    data: np.ndarray

    @property
    def s(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1] if self.layout is Layout.FORWARD_SKC else self.data.shape[2]

    @property
    def c(self) -> int:
        return self.data.shape[2] if self.layout is Layout.FORWARD_SKC else self.data.shape[1]

    @property
    def precision(self) -> Precision:
        return Precision.BF16 if self.data.dtype == BF16 else Precision.FP32


def _narrow(a: np.ndarray, precision: Precision) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    return fp32_to_bf16(a) if Precision(precision) is Precision.BF16 else a


def pack_weights_forward(w, precision: Precision = Precision.FP32) -> PackedWeights:
    w = as_weight_kcs(w)
    return PackedWeights(Layout.FORWARD_SKC, _narrow(w.transpose(2, 0, 1), precision))


def pack_weights_backward(w, precision: Precision = Precision.FP32) -> PackedWeights:
    # tap axis reversed: backward-data addresses slice s at offset -(S-1-s)*d
    w = as_weight_kcs(w)
    return PackedWeights(Layout.BACKWARD_SCK, _narrow(w[:, :, ::-1].transpose(2, 1, 0), precision))


def unpack_weights(p: PackedWeights) -> np.ndarray:
    """Inverse of either packing, back to a float32 (k, c, s) array."""
    data = bf16_to_fp32(p.data) if p.data.dtype == BF16 else p.data
    if p.layout is Layout.FORWARD_SKC:
        return np.ascontiguousarray(data.transpose(1, 2, 0))
    return np.ascontiguousarray(data.transpose(2, 1, 0)[:, :, ::-1])


def zero_pad_width(t, left: int, right: int) -> np.ndarray:
    if left < 0 or right < 0:
        raise ValueError(f"padding must be non-negative, got ({left}, {right})")
    t = as_tensor3d(t)
    return np.pad(t, ((0, 0), (0, 0), (left, right)))


def same_padding(s: int, d: int) -> int:
    """Per-side pad that keeps output width equal to input width."""
    span = d * (s - 1)
    if span % 2:
        raise ValueError(f"d*(S-1) = {span} is odd; symmetric padding is impossible")
    return span // 2


def pack_bf16_pairs(t) -> np.ndarray:
    """Interleave consecutive channel pairs along the width axis.

    ``(..., c, w)`` becomes ``(..., c//2, w, 2)``, i.e. per leading index the
    element (pair p, column x, lane l) lands at flat ``(p*w + x)*2 + l``.
    """
    a = np.asarray(t)
    c, w = a.shape[-2:]
    if c % 2:
        raise OddChannels(f"channel count must be even for BF16 pair packing, got {c}")
    lead = a.shape[:-2]
    paired = a.reshape(*lead, c // 2, 2, w)
    return np.ascontiguousarray(np.swapaxes(paired, -1, -2))


def unpack_bf16_pairs(p) -> np.ndarray:
    a = np.asarray(p)
    c2, w = a.shape[-3:-1]
    lead = a.shape[:-3]
    return np.ascontiguousarray(np.swapaxes(a, -1, -2)).reshape(*lead, 2 * c2, w)
