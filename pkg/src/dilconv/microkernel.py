"""Small GEMM and batch-reduce GEMM on flat host buffers.

A batch-reduce GEMM computes ``C = beta*C + alpha * sum_i A_i @ B_i`` where the
blocks ``A_i``/``B_i`` are arbitrary (possibly overlapping) windows of two
host buffers. Every output element accumulates in FP32 in a fixed order,
block index ``i`` ascending then reduction index ascending, so the result does
not depend on how the output is tiled or which thread computes it.

The compiled cores (``*_core``) are called directly from the convolution
passes; :func:`gemm`, :func:`brgemm` and :func:`brgemm_bf16` are the checked
Python entry points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bf16 import BF16
from .errors import EmptyBatch, OddReduction, ShapeMismatch

# output block edge handled by one accumulator tile
TILE = 64
ACC_SIZE = TILE * TILE
_ZERO_OFFSET = np.zeros(1, dtype=np.int64)


@njit(cache=True, nogil=True)
def _accumulate(a, a_offs, a_add, lda, b, b_offs, b_add, ldb, acc, m, n, k):
    """acc += sum_i A_i @ B_i; acc is m x n with row stride n.

    Block i starts at ``a_offs[i] + a_add`` / ``b_offs[i] + b_add``. The
    accumulator stride must be ``n`` itself so LLVM can prove the rows
    disjoint and vectorize the column loop; keeping the block loop in this
    function (not a caller) is worth ~2x as well.
    """
    for i in range(a_offs.shape[0]):
        ao = a_offs[i] + a_add
        bo = b_offs[i] + b_add
        r = 0
        while r + 4 <= m:
            c0 = r * n
            c1 = c0 + n
            c2 = c1 + n
            c3 = c2 + n
            ab = ao + r * lda
            for kk in range(k):
                a0 = a[ab + kk]
                a1 = a[ab + lda + kk]
                a2 = a[ab + 2 * lda + kk]
                a3 = a[ab + 3 * lda + kk]
                br = bo + kk * ldb
                for j in range(n):
                    bv = b[br + j]
                    acc[c0 + j] += a0 * bv
                    acc[c1 + j] += a1 * bv
                    acc[c2 + j] += a2 * bv
                    acc[c3 + j] += a3 * bv
            r += 4
        while r + 2 <= m:
            c0 = r * n
            c1 = c0 + n
            ab = ao + r * lda
            for kk in range(k):
                a0 = a[ab + kk]
                a1 = a[ab + lda + kk]
                br = bo + kk * ldb
                for j in range(n):
                    bv = b[br + j]
                    acc[c0 + j] += a0 * bv
                    acc[c1 + j] += a1 * bv
            r += 2
        if r < m:
            c0 = r * n
            ab = ao + r * lda
            for kk in range(k):
                a0 = a[ab + kk]
                br = bo + kk * ldb
                for j in range(n):
                    acc[c0 + j] += a0 * b[br + j]


@njit(cache=True, nogil=True)
def _load_acc(c, co, ldc, acc, mb, nb, beta):
    if beta == np.float32(0.0):
        for r in range(mb):
            for j in range(nb):
                acc[r * nb + j] = np.float32(0.0)
    elif beta == np.float32(1.0):
        for r in range(mb):
            for j in range(nb):
                acc[r * nb + j] = c[co + r * ldc + j]
    else:
        for r in range(mb):
            for j in range(nb):
                acc[r * nb + j] = beta * c[co + r * ldc + j]


@njit(cache=True, nogil=True)
def _store_acc(c, co, ldc, acc, mb, nb):
    for r in range(mb):
        for j in range(nb):
            c[co + r * ldc + j] = acc[r * nb + j]


@njit(cache=True, nogil=True)
def _pad4(rows):
    return (rows + 3) // 4 * 4


@njit(cache=True, nogil=True)
def _pack_rows(src, so, lds, dst, do, rows, rows_pad, cols, alpha):
    # alpha * block, zero rows appended up to rows_pad
    for r in range(rows):
        for j in range(cols):
            dst[do + r * cols + j] = alpha * src[so + r * lds + j]
    for j in range(rows * cols, rows_pad * cols):
        dst[do + j] = np.float32(0.0)


@njit(cache=True, nogil=True)
def _zero_rows(acc, r0, r1, nb):
    for j in range(r0 * nb, r1 * nb):
        acc[j] = np.float32(0.0)


@njit(cache=True, nogil=True)
def brgemm_f32_core(a, a_offs, lda, b, b_offs, ldb, c, c_off, ldc, m, n, k, alpha, beta, acc):
    """FP32 batch-reduce GEMM on flat buffers; ``acc`` is ACC_SIZE scratch.

    A row count that is not a multiple of 4 (or alpha != 1) goes through a
    zero-padded, pre-scaled copy of the A blocks: the kernel only runs its
    4-row path, and the padding rows are computed but never stored.
    """
    nblk = a_offs.shape[0]
    direct = alpha == np.float32(1.0) and m % 4 == 0
    mp_max = min(TILE, _pad4(m))
    packed = np.empty(0 if direct else nblk * mp_max * k, np.float32)
    p_offs = np.arange(nblk) * (mp_max * k)
    for m0 in range(0, m, TILE):
        mb = min(TILE, m - m0)
        mbp = _pad4(mb)
        if not direct:
            for i in range(nblk):
                _pack_rows(a, a_offs[i] + m0 * lda, lda, packed, p_offs[i], mb, mbp, k, alpha)
        for n0 in range(0, n, TILE):
            nb = min(TILE, n - n0)
            co = c_off + m0 * ldc + n0
            _load_acc(c, co, ldc, acc, mb, nb, beta)
            if direct:
                _accumulate(a, a_offs, m0 * lda, lda, b, b_offs, n0, ldb, acc, mb, nb, k)
            else:
                _zero_rows(acc, mb, mbp, nb)
                _accumulate(packed, p_offs, 0, k, b, b_offs, n0, ldb, acc, mbp, nb, k)
            _store_acc(c, co, ldc, acc, mb, nb)


@njit(cache=True, nogil=True)
def _widen_rows(src, so, lds, dst_u, rows, cols):
    # plain row-major BF16 block -> contiguous FP32 bits (rows x cols)
    for r in range(rows):
        for j in range(cols):
            dst_u[r * cols + j] = np.uint32(src[so + r * lds + j]) << np.uint32(16)


@njit(cache=True, nogil=True)
def _widen_pairs(src, so, ldp, dst_u, rows, cols):
    # pair-packed BF16 block (row pairs interleaved) -> contiguous FP32 bits
    for p in range(rows // 2):
        base = so + p * ldp
        r0 = (2 * p) * cols
        r1 = r0 + cols
        for j in range(cols):
            dst_u[r0 + j] = np.uint32(src[base + 2 * j]) << np.uint32(16)
            dst_u[r1 + j] = np.uint32(src[base + 2 * j + 1]) << np.uint32(16)


@njit(cache=True, nogil=True)
def brgemm_bf16_core(a, a_offs, lda, b, b_offs, ldb, c, c_off, ldc, m, n, k, alpha, beta,
                     acc, a_scratch, b_scratch):
    """BF16-input batch-reduce GEMM with FP32 accumulation.

    ``a`` blocks are plain row-major BF16; ``b`` blocks are pair-packed: logical
    element (row kk, col j) lives at ``off + (kk//2)*ldb + 2*j + kk%2``. Blocks
    are widened to FP32 scratch (exact) and fed to the FP32 accumulation, so
    the result is bitwise the FP32 batch-reduce GEMM of the widened inputs.
    Scratch buffers are uint32 and need TILE*k elements each.
    """
    af = a_scratch.view(np.float32)
    bf = b_scratch.view(np.float32)
    nblk = a_offs.shape[0]
    for m0 in range(0, m, TILE):
        mb = min(TILE, m - m0)
        for n0 in range(0, n, TILE):
            nb = min(TILE, n - n0)
            co = c_off + m0 * ldc + n0
            mbp = _pad4(mb)
            _load_acc(c, co, ldc, acc, mb, nb, beta)
            _zero_rows(acc, mb, mbp, nb)
            for i in range(nblk):
                _widen_rows(a, a_offs[i] + m0 * lda, lda, a_scratch, mb, k)
                for j in range(mb * k, mbp * k):
                    a_scratch[j] = np.uint32(0)
                _widen_pairs(b, b_offs[i] + 2 * n0, ldb, b_scratch, k, nb)
                if alpha != np.float32(1.0):
                    for j in range(mb * k):
                        af[j] = alpha * af[j]
                _accumulate(af, _ZERO_OFFSET, 0, k, bf, _ZERO_OFFSET, 0, nb, acc, mbp, nb, k)
            _store_acc(c, co, ldc, acc, mb, nb)


def new_acc() -> np.ndarray:
    return np.empty(ACC_SIZE, dtype=np.float32)


def new_bf16_scratch(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.empty(TILE * k, dtype=np.uint32), np.empty(TILE * k, dtype=np.uint32)


@dataclass(frozen=True)
class MatrixRef:
    """A rows x cols window of a flat buffer with row stride ``ld``.

    With ``paired=True`` the window is pair-packed BF16: row pairs are
    interleaved, ``ld`` is the stride between row pairs and must be >= 2*cols.
    """

    buf: np.ndarray
    rows: int
    cols: int
    ld: int
    offset: int = 0
    paired: bool = False

    def __post_init__(self):
        if self.buf.ndim != 1:
            raise ShapeMismatch("host buffer must be flat")
        if self.rows < 0 or self.cols < 0 or self.offset < 0:
            raise ShapeMismatch("negative extent or offset")
        if self.paired:
            if self.rows % 2:
                raise OddReduction(f"pair-packed block needs an even row count, got {self.rows}")
            if self.ld < 2 * self.cols:
                raise ShapeMismatch(f"ld={self.ld} < 2*cols={2 * self.cols}")
            end = self.offset + (self.rows // 2 - 1) * self.ld + 2 * self.cols if self.rows else 0
        else:
            if self.ld < self.cols:
                raise ShapeMismatch(f"ld={self.ld} < cols={self.cols}")
            end = self.offset + (self.rows - 1) * self.ld + self.cols if self.rows else 0
        if end > self.buf.size:
            raise ShapeMismatch(f"window ends at {end}, past buffer of {self.buf.size}")

    @classmethod
    def of(cls, arr: np.ndarray) -> "MatrixRef":
        """Whole 2-D C-contiguous array as a window of its own flat buffer."""
        if arr.ndim != 2 or not arr.flags.c_contiguous:
            raise ShapeMismatch("expected a C-contiguous matrix")
        return cls(arr.reshape(-1), arr.shape[0], arr.shape[1], arr.shape[1])

    def view(self) -> np.ndarray:
        """Strided 2-D view of the window (plain layout only)."""
        if self.paired:
            raise ValueError("pair-packed windows have no plain 2-D view")
        step = self.buf.itemsize
        return np.lib.stride_tricks.as_strided(
            self.buf[self.offset:], shape=(self.rows, self.cols),
            strides=(self.ld * step, step), writeable=False)


@dataclass
class BrgemmCall:
    a_list: list[MatrixRef]
    b_list: list[MatrixRef]
    c: MatrixRef
    alpha: float = 1.0
    beta: float = 1.0

    @property
    def m(self) -> int:
        return self.c.rows

    @property
    def n(self) -> int:
        return self.c.cols

    @property
    def k(self) -> int:
        return self.a_list[0].cols if self.a_list else 0

    @property
    def l_br(self) -> int:
        return len(self.a_list)

    def validate(self) -> None:
        if not self.a_list:
            raise EmptyBatch("batch-reduce GEMM needs at least one block pair")
        if len(self.a_list) != len(self.b_list):
            raise ShapeMismatch(f"{len(self.a_list)} A blocks vs {len(self.b_list)} B blocks")
        m, n, k = self.m, self.n, self.k
        for a in self.a_list:
            if (a.rows, a.cols) != (m, k):
                raise ShapeMismatch(f"A block {a.rows}x{a.cols}, expected {m}x{k}")
            if a.buf is not self.a_list[0].buf:
                raise ShapeMismatch("all A blocks must live in one host buffer")
        for b in self.b_list:
            if (b.rows, b.cols) != (k, n):
                raise ShapeMismatch(f"B block {b.rows}x{b.cols}, expected {k}x{n}")
            if b.buf is not self.b_list[0].buf:
                raise ShapeMismatch("all B blocks must live in one host buffer")
        if self.c.buf.dtype != np.float32:
            raise ShapeMismatch("C must be a float32 buffer")
        if self.c.paired:
            raise ShapeMismatch("C cannot be pair-packed")
        if np.shares_memory(self.c.buf, self.a_list[0].buf) or \
                np.shares_memory(self.c.buf, self.b_list[0].buf):
            raise ShapeMismatch("C aliases an input buffer")

    def _offsets(self):
        a_offs = np.array([a.offset for a in self.a_list], dtype=np.int64)
        b_offs = np.array([b.offset for b in self.b_list], dtype=np.int64)
        return a_offs, b_offs


def brgemm(call: BrgemmCall) -> None:
    """In-place FP32 batch-reduce GEMM: ``C = beta*C + alpha*sum_i A_i B_i``."""
    call.validate()
    a0, b0 = call.a_list[0], call.b_list[0]
    if a0.buf.dtype != np.float32 or b0.buf.dtype != np.float32:
        raise ShapeMismatch("FP32 batch-reduce GEMM needs float32 A and B buffers")
    if a0.paired or b0.paired:
        raise ShapeMismatch("pair-packed blocks are for the BF16 kernel")
    a_offs, b_offs = call._offsets()
    brgemm_f32_core(a0.buf, a_offs, a0.ld, b0.buf, b_offs, b0.ld, call.c.buf,
                    call.c.offset, call.c.ld, call.m, call.n, call.k,
                    np.float32(call.alpha), np.float32(call.beta), new_acc())


def gemm(a: MatrixRef, b: MatrixRef, c: MatrixRef, alpha: float = 1.0, beta: float = 1.0) -> None:
    """In-place ``C = beta*C + alpha*A@B``; a batch-reduce GEMM with one pair."""
    brgemm(BrgemmCall([a], [b], c, alpha, beta))


def brgemm_bf16(call: BrgemmCall) -> None:
    """Batch-reduce GEMM on BF16 blocks with FP32 accumulation into C.

    A blocks are plain BF16 matrices; B blocks must be pair-packed
    (``MatrixRef(paired=True)``), so the reduction length must be even.
    """
    if call.k % 2:
        raise OddReduction(f"BF16 reduction length must be even, got k={call.k}")
    call.validate()
    a0, b0 = call.a_list[0], call.b_list[0]
    if a0.buf.dtype != BF16 or b0.buf.dtype != BF16:
        raise ShapeMismatch("BF16 batch-reduce GEMM needs uint16 (BF16) A and B buffers")
    if a0.paired or not b0.paired:
        raise ShapeMismatch("BF16 kernel takes plain A blocks and pair-packed B blocks")
    a_offs, b_offs = call._offsets()
    a_s, b_s = new_bf16_scratch(call.k)
    brgemm_bf16_core(a0.buf, a_offs, a0.ld, b0.buf, b_offs, b0.ld, call.c.buf,
                     call.c.offset, call.c.ld, call.m, call.n, call.k,
                     np.float32(call.alpha), np.float32(call.beta), new_acc(), a_s, b_s)
