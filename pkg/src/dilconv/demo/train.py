"""Training loop and ``train-demo`` command line."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import roc_auc_score

from ..conv1d import thread_limit
from ..errors import NonFiniteLoss
from ..tensor import Precision
from .data import BumpConfig, Dataset, generate_synthetic_dataset
from .layers import sgd_step
from .net import DemoNet, NetConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch: int = 8
    lr: float = 0.01
    seed: int = 0
    width: int = 4096
    segments: int = 256
    precision: Precision = Precision.FP32
    blocks: int = 4
    threads: int = 1
    w_mse: float = 1.0
    w_bce: float = 1.0
    holdout: float = 0.1
    bumps: BumpConfig = field(default_factory=BumpConfig)

    def __post_init__(self):
        object.__setattr__(self, "precision", Precision(self.precision))
        for name in ("epochs", "batch", "width", "segments", "blocks", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")

    def net_config(self) -> NetConfig:
        return NetConfig.for_precision(self.precision, blocks=self.blocks)

    @property
    def pad(self) -> int:
        """Per-side zero padding of the first layer's input."""
        n = self.net_config()
        return n.dilation * (n.filter_size - 1) // 2


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_auroc: float


def _batches(n: int, size: int):
    for i in range(0, n, size):
        yield slice(i, min(i + size, n))


def evaluate(net: DemoNet, data: Dataset, cfg: TrainConfig) -> tuple[float, float]:
    """Segment-weighted mean loss and AUROC of the peak head over ``data``."""
    total, logits = 0.0, []
    for sl in _batches(len(data), cfg.batch):
        fwd = net.forward(data.noisy[sl])
        loss, _, _ = net.loss(fwd, data.clean[sl], data.mask[sl], cfg.w_mse, cfg.w_bce)
        total += loss * (sl.stop - sl.start)
        logits.append(fwd.logits)
    y = data.mask.reshape(-1)
    if y.min() == y.max():
        auroc = float("nan")
    else:
        auroc = float(roc_auc_score(y, np.concatenate(logits).reshape(-1)))
    return total / len(data), auroc


def train(cfg: TrainConfig, on_epoch=None) -> list[EpochStats]:
    data = generate_synthetic_dataset(cfg.seed, cfg.segments, cfg.width, cfg.bumps)
    train_set, val_set = data.split(cfg.holdout)
    net = DemoNet(cfg.net_config(), seed=cfg.seed + 1)
    history = []
    with thread_limit(cfg.threads):
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            total = 0.0
            for b, sl in enumerate(_batches(len(train_set), cfg.batch)):
                fwd = net.forward(train_set.noisy[sl])
                loss, g_reg, g_log = net.loss(fwd, train_set.clean[sl], train_set.mask[sl],
                                              cfg.w_mse, cfg.w_bce)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(
                        f"loss {loss} at epoch {epoch}, batch {b}; "
                        f"max |reg| {np.abs(fwd.reg).max():.3g}, "
                        f"max |logit| {np.abs(fwd.logits).max():.3g}, lr {cfg.lr}")
                grads = net.backward(fwd, g_reg, g_log)
                net.set_parameters(sgd_step(net.parameters(), grads, cfg.lr))
                total += loss * (sl.stop - sl.start)
            val_loss, auroc = evaluate(net, val_set, cfg)
            stats = EpochStats(epoch, total / len(train_set), val_loss, auroc)
            history.append(stats)
            log.info("epoch %d train %.5f val %.5f auroc %.4f (%.1fs)", epoch, stats.train_loss,
                     stats.val_loss, stats.val_auroc, time.perf_counter() - t0)
            if on_epoch is not None:
                on_epoch(stats)
    return history


def write_curve(history: list[EpochStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_auroc"])
        for s in history:
            w.writerow([s.epoch, repr(s.train_loss), repr(s.val_loss), repr(s.val_auroc)])


def read_curve(path) -> list[EpochStats]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [EpochStats(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                           float(r["val_auroc"])) for r in csv.DictReader(fh)]


def build_parser() -> argparse.ArgumentParser:
    d = TrainConfig()
    ap = argparse.ArgumentParser(prog="train-demo",
                                 description="Train the residual denoiser on synthetic peaks.")
    ap.add_argument("--epochs", type=int, default=d.epochs)
    ap.add_argument("--batch", type=int, default=d.batch)
    ap.add_argument("--lr", type=float, default=d.lr)
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--width", type=int, default=d.width)
    ap.add_argument("--segments", type=int, default=d.segments)
    ap.add_argument("--precision", choices=[p.value for p in Precision], default=d.precision.value)
    ap.add_argument("--blocks", type=int, default=d.blocks)
    ap.add_argument("--threads", type=int, default=d.threads)
    ap.add_argument("--w-mse", type=float, default=d.w_mse, help="weight of the regression loss")
    ap.add_argument("--w-bce", type=float, default=d.w_bce, help="weight of the peak loss")
    ap.add_argument("--out", required=True, help="loss-curve CSV path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        cfg = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, seed=args.seed,
                          width=args.width, segments=args.segments, precision=args.precision,
                          blocks=args.blocks, threads=args.threads, w_mse=args.w_mse,
                          w_bce=args.w_bce)
        history = train(cfg)
    except (ValueError, NonFiniteLoss) as exc:
        print(f"train-demo: {exc}", file=sys.stderr)
        return 2
    write_curve(history, args.out)
    last = history[-1]
    print(f"epoch {last.epoch}: val loss {last.val_loss:.5f} "
          f"(epoch 1: {history[0].val_loss:.5f}), AUROC {last.val_auroc:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
