"""Software BFloat16: the upper 16 bits of an IEEE binary32 value.

BF16 data is carried as ``np.uint16`` bit patterns. Arithmetic never happens
in BF16; values are widened to FP32 before use.
"""
import numpy as np

BF16 = np.uint16

_QUIET_BIT = np.uint32(0x0040)


def fp32_to_bf16(x):
    """Round FP32 to BF16 bits, nearest with ties to even.

    NaN becomes a quiet NaN with the sign kept; infinities are preserved and
    finite values past the largest BF16 round to infinity as RNE requires.
    """
    scalar = np.ndim(x) == 0
    f = np.asarray(x, dtype=np.float32)
    bits = np.atleast_1d(f).view(np.uint32)
    lsb = (bits >> 16) & 1
    rounded = ((bits + np.uint32(0x7FFF) + lsb) >> 16).astype(np.uint16)
    nan = np.isnan(np.atleast_1d(f))
    if nan.any():
        rounded[nan] = ((bits[nan] >> 16) | _QUIET_BIT).astype(np.uint16)
    if scalar:
        return BF16(rounded[0])
    return rounded.reshape(f.shape)


def bf16_to_fp32(b):
    """Widen BF16 bits to FP32 by appending 16 zero bits (exact)."""
    scalar = np.ndim(b) == 0
    u = np.asarray(b, dtype=np.uint16)
    out = (np.atleast_1d(u).astype(np.uint32) << 16).view(np.float32)
    if scalar:
        return np.float32(out[0])
    return out.reshape(u.shape)


def round_to_bf16(x):
    """FP32 image of the BF16 rounding of ``x``."""
    return bf16_to_fp32(fp32_to_bf16(x))


def is_bf16(a) -> bool:
    return np.asarray(a).dtype == BF16
