"""Dilated 1D convolution built on a batch-reduce GEMM microkernel."""
import os

import numba

# Skip the TBB layer unless asked for: the bundled TBB is often too old and
# numba warns on every first parallel launch before falling back anyway.
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .bf16 import bf16_to_fp32, fp32_to_bf16, round_to_bf16  # noqa: E402
from .conv1d import (  # noqa: E402
    ConvParams,
    conv1d_backward_data,
    conv1d_backward_weight,
    conv1d_forward,
    conv_flops,
    conv_shapes,
    output_width,
)
from .microkernel import BrgemmCall, MatrixRef, brgemm, brgemm_bf16, gemm  # noqa: E402
from .reference import (  # noqa: E402
    naive_backward_data,
    naive_backward_weight,
    naive_forward,
)
from .tensor import (  # noqa: E402
    PackedWeights,
    Precision,
    pack_weights_backward,
    pack_weights_forward,
)

__all__ = [
    "BrgemmCall",
    "ConvParams",
    "MatrixRef",
    "PackedWeights",
    "Precision",
    "bf16_to_fp32",
    "brgemm",
    "brgemm_bf16",
    "conv1d_backward_data",
    "conv1d_backward_weight",
    "conv1d_forward",
    "conv_flops",
    "conv_shapes",
    "fp32_to_bf16",
    "gemm",
    "naive_backward_data",
    "naive_backward_weight",
    "naive_forward",
    "output_width",
    "pack_weights_backward",
    "pack_weights_forward",
    "round_to_bf16",
]
