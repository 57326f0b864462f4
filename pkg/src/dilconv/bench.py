"""Parameter sweep benchmark: time each pass over a grid, report efficiency.

Config files are flat YAML mappings whose keys are the :class:`SweepConfig`
fields; list-valued fields accept a scalar or a list::

    widths: [1000, 2000]
    channels: 15
    filters: 15
    filter_sizes: [5, 51]
    dilations: 8
    batch: 1
    iterations: 20
    warmup: 3
    precision: fp32
    peak_flops: 1.0e11
    passes: [forward, backward_data, backward_weight]
"""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .conv1d import (
    ConvParams, conv1d_backward_data, conv1d_backward_weight, conv1d_forward, conv_flops,
    thread_limit,
)
from .errors import ConfigError, NonPositiveTime, OddDims
from .tensor import Precision, pack_weights_backward, pack_weights_forward

PASSES = ("fwd", "bwd_d", "bwd_w")
_PASS_ALIASES = {
    "fwd": "fwd", "forward": "fwd",
    "bwd_d": "bwd_d", "backward_data": "bwd_d",
    "bwd_w": "bwd_w", "backward_weight": "bwd_w",
}
CSV_COLUMNS = ("N", "C", "K", "S", "d", "Q", "pass", "seconds", "flops", "gflops",
               "efficiency", "meets_condition", "threads", "precision")
SEED = 20240607


def pass_name(name: str) -> str:
    try:
        return _PASS_ALIASES[name.strip()]
    except KeyError:
        raise ConfigError(f"unknown pass {name!r}; expected one of {sorted(_PASS_ALIASES)}") from None


@dataclass(frozen=True)
class SweepConfig:
    widths: tuple[int, ...]
    channels: tuple[int, ...]
    filters: tuple[int, ...]
    filter_sizes: tuple[int, ...]
    dilations: tuple[int, ...]
    peak_flops: float
    batch: int = 1
    iterations: int = 20
    warmup: int = 3
    precision: Precision = Precision.FP32
    passes: tuple[str, ...] = PASSES

    def __post_init__(self):
        for name in ("widths", "channels", "filters", "filter_sizes", "dilations"):
            vals = getattr(self, name)
            if isinstance(vals, (int, np.integer)):
                vals = (vals,)
            vals = tuple(vals)
            if not vals:
                raise ConfigError(f"{name} must not be empty")
            if any(not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1
                   for v in vals):
                raise ConfigError(f"{name} must hold positive integers, got {vals}")
            object.__setattr__(self, name, tuple(int(v) for v in vals))
        passes = (self.passes,) if isinstance(self.passes, str) else tuple(self.passes)
        if not passes:
            raise ConfigError("passes must not be empty")
        object.__setattr__(self, "passes", tuple(dict.fromkeys(pass_name(p) for p in passes)))
        try:
            object.__setattr__(self, "precision", Precision(self.precision))
        except ValueError:
            raise ConfigError(f"unknown precision {self.precision!r}") from None
        if self.batch < 1 or self.iterations < 1 or self.warmup < 0:
            raise ConfigError("batch and iterations must be >= 1, warmup >= 0")
        try:
            # YAML 1.1 reads "1e9" (no decimal point) as a string
            object.__setattr__(self, "peak_flops", float(self.peak_flops))
        except (TypeError, ValueError):
            raise ConfigError(f"peak_flops must be a number, got {self.peak_flops!r}") from None
        if not self.peak_flops > 0:
            raise ConfigError(f"peak_flops must be positive, got {self.peak_flops}")

    def grid(self):
        """(N, C, K, S, d, Q) tuples in a fixed order."""
        for q, c, k, s, d in itertools.product(self.widths, self.channels, self.filters,
                                               self.filter_sizes, self.dilations):
            yield self.batch, c, k, s, d, q

    @property
    def grid_size(self) -> int:
        return (len(self.widths) * len(self.channels) * len(self.filters)
                * len(self.filter_sizes) * len(self.dilations))


def load_config(path, **overrides) -> SweepConfig:
    """Read a flat YAML sweep file; keyword overrides win over file values."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a key/value mapping")
    known = {f.name for f in fields(SweepConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for key, val in raw.items():
        if isinstance(val, dict):
            raise ConfigError(f"{path}: {key} must be a scalar or a list")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    missing = {"widths", "channels", "filters", "filter_sizes", "dilations", "peak_flops"} - set(raw)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    try:
        return SweepConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def meets_condition(s: int, q: int, c: int, k: int) -> bool:
    """Shapes where the blocked kernels are expected to beat the vendor baseline."""
    return s >= 5 and q >= 1000 and c > 1 and k > 1


def efficiency(flops: float, seconds: float, peak_flops: float) -> float:
    if seconds <= 0:
        raise NonPositiveTime(f"measured time must be positive, got {seconds}")
    if peak_flops <= 0:
        raise ValueError(f"peak_flops must be positive, got {peak_flops}")
    return flops / seconds / peak_flops


@dataclass(frozen=True)
class SweepRecord:
    N: int
    C: int
    K: int
    S: int
    d: int
    Q: int
    pass_: str
    seconds: float
    flops: int
    gflops: float
    efficiency: float
    meets_condition: bool
    threads: int = 1
    precision: str = "fp32"

    @property
    def anomalous(self) -> bool:
        """Efficiency above 1 means the declared peak or the timing is wrong."""
        return self.efficiency > 1.0

    def row(self) -> list[str]:
        return [str(self.N), str(self.C), str(self.K), str(self.S), str(self.d), str(self.Q),
                self.pass_, repr(self.seconds), str(self.flops), repr(self.gflops),
                repr(self.efficiency), str(self.meets_condition).lower(), str(self.threads),
                self.precision]

    @classmethod
    def from_row(cls, row: dict) -> "SweepRecord":
        return cls(int(row["N"]), int(row["C"]), int(row["K"]), int(row["S"]), int(row["d"]),
                   int(row["Q"]), row["pass"], float(row["seconds"]), int(row["flops"]),
                   float(row["gflops"]), float(row["efficiency"]),
                   row["meets_condition"] == "true", int(row["threads"]), row["precision"])


@dataclass(frozen=True)
class Skip:
    shape: tuple[int, ...]
    pass_: str
    reason: str


@dataclass
class SweepResult:
    records: list[SweepRecord] = field(default_factory=list)
    skips: list[Skip] = field(default_factory=list)


def _buffers(p: ConvParams, n: int, q: int, rng: np.random.Generator):
    w_in = q + p.receptive
    return (rng.uniform(-1, 1, (n, p.c, w_in)).astype(np.float32),
            rng.uniform(-1, 1, (p.k, p.c, p.s)).astype(np.float32),
            rng.uniform(-1, 1, (n, p.k, q)).astype(np.float32))


def measure_kernel(shape, pass_: str, iterations: int = 20, warmup: int = 3,
                   precision=Precision.FP32, threads: int | None = None) -> float:
    """Mean wall time (s) of one pass over ``iterations`` calls after ``warmup`` calls.

    ``shape`` is (N, C, K, S, d, Q). Buffers are filled once from a fixed-seed
    PCG64 stream; only the kernel call is inside the timed region.
    """
    n, c, k, s, d, q = shape
    p = ConvParams(c, k, s, d, precision=precision)
    x, w, g = _buffers(p, n, q, np.random.default_rng(SEED))
    pass_ = pass_name(pass_)
    if pass_ == "fwd":
        pw = pack_weights_forward(w, p.precision)
        call = lambda: conv1d_forward(x, pw, p)  # noqa: E731
    elif pass_ == "bwd_d":
        pw = pack_weights_backward(w, p.precision)
        call = lambda: conv1d_backward_data(g, pw, p)  # noqa: E731
    else:
        call = lambda: conv1d_backward_weight(g, x, p)  # noqa: E731
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    total = 0.0
    with thread_limit(threads):
        for _ in range(warmup):
            call()
        for _ in range(iterations):
            t0 = time.perf_counter()
            call()
            total += time.perf_counter() - t0
    return total / iterations


def run_sweep(cfg: SweepConfig, threads: int | None = None, progress=None) -> SweepResult:
    threads_used = threads if threads is not None else 1
    out = SweepResult()
    for shape in cfg.grid():
        n, c, k, s, d, q = shape
        try:
            p = ConvParams(c, k, s, d, precision=cfg.precision)
        except OddDims as exc:
            out.skips += [Skip(shape, ps, str(exc)) for ps in cfg.passes]
            continue
        for ps in cfg.passes:
            secs = measure_kernel(shape, ps, cfg.iterations, cfg.warmup, cfg.precision, threads)
            flops = conv_flops(p, n, q)
            rec = SweepRecord(n, c, k, s, d, q, ps, secs, flops, flops / secs / 1e9,
                              efficiency(flops, secs, cfg.peak_flops),
                              meets_condition(s, q, c, k), threads_used, cfg.precision.value)
            out.records.append(rec)
            if progress is not None:
                progress(rec)
    return out


def write_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_csv(path) -> list[SweepRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SweepRecord.from_row(r) for r in csv.DictReader(fh)]


def summarize(result: SweepResult) -> str:
    lines = []
    for ps in PASSES:
        recs = [r for r in result.records if r.pass_ == ps]
        if not recs:
            continue
        best = max(recs, key=lambda r: r.efficiency)
        worst = min(recs, key=lambda r: r.efficiency)
        lines.append(f"{ps}: {len(recs)} shapes, best {best.efficiency:.4f} "
                     f"({best.gflops:.2f} GFLOP/s at C={best.C} K={best.K} S={best.S} "
                     f"d={best.d} Q={best.Q}), worst {worst.efficiency:.4f} "
                     f"({worst.gflops:.2f} GFLOP/s at C={worst.C} K={worst.K} S={worst.S} "
                     f"d={worst.d} Q={worst.Q})")
    odd = [r for r in result.records if r.anomalous]
    if odd:
        lines.append(f"warning: {len(odd)} records above 100% of the declared peak; "
                     "check --peak-flops")
    for sk in result.skips:
        lines.append("skipped N={} C={} K={} S={} d={} Q={} {}: {}".format(*sk.shape, sk.pass_,
                                                                         sk.reason))
    return "\n".join(lines)


def emit_report(result: SweepResult, csv_path) -> str:
    """Write the CSV and return the text summary."""
    write_csv(result.records, csv_path)
    return summarize(result)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description="Sweep the convolution passes over a grid.")
    ap.add_argument("--config", required=True, help="flat YAML sweep file")
    ap.add_argument("--peak-flops", type=float, required=True, help="machine peak in FLOP/s")
    ap.add_argument("--threads", type=int, required=True)
    ap.add_argument("--out", required=True, help="CSV output path")
    ap.add_argument("--precision", choices=[p.value for p in Precision])
    ap.add_argument("--passes", help="comma-separated subset of fwd,bwd_d,bwd_w")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        passes = [s for s in args.passes.split(",") if s] if args.passes else None
        cfg = load_config(args.config, peak_flops=args.peak_flops, precision=args.precision,
                          passes=passes)
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        result = run_sweep(cfg, threads=args.threads)
        summary = emit_report(result, args.out)
    except (ConfigError, OSError) as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
