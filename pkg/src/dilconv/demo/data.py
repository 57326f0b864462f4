"""Synthetic peak-calling data: noisy tracks of Gaussian bumps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BumpConfig:
    """Shape of the generated signal; defaults give roughly 5-20% peak cover."""

    mean_bumps: float = 8.0
    sigma_range: tuple[float, float] = (8.0, 40.0)
    height_range: tuple[float, float] = (0.3, 2.0)
    threshold: float = 0.5
    noise: float = 0.4


@dataclass(frozen=True)
class Dataset:
    noisy: np.ndarray  # (count, width) float32
    clean: np.ndarray
    mask: np.ndarray   # 1.0 inside peaks, else 0.0

    def __len__(self) -> int:
        return self.noisy.shape[0]

    def split(self, holdout: float = 0.1) -> tuple["Dataset", "Dataset"]:
        """Last ``holdout`` fraction (at least one segment) becomes validation."""
        n_val = max(1, int(round(len(self) * holdout)))
        if n_val >= len(self):
            raise ValueError(f"cannot hold out {n_val} of {len(self)} segments")
        cut = len(self) - n_val
        head = Dataset(self.noisy[:cut], self.clean[:cut], self.mask[:cut])
        tail = Dataset(self.noisy[cut:], self.clean[cut:], self.mask[cut:])
        return head, tail


def generate_synthetic_dataset(seed: int, count: int, width: int,
                               bumps: BumpConfig = BumpConfig()) -> Dataset:
    if width < 256:
        raise ValueError(f"width must be at least 256, got {width}")
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    x = np.arange(width, dtype=np.float64)
    clean = np.zeros((count, width))
    n_bumps = rng.poisson(bumps.mean_bumps, size=count)
    for i in range(count):
        m = n_bumps[i]
        centers = rng.uniform(0, width, m)
        sigmas = rng.uniform(*bumps.sigma_range, m)
        heights = rng.uniform(*bumps.height_range, m)
        for c, s, h in zip(centers, sigmas, heights):
            clean[i] += h * np.exp(-0.5 * ((x - c) / s) ** 2)
    mask = (clean > bumps.threshold).astype(np.float32)
    noisy = clean + rng.normal(0.0, bumps.noise, clean.shape)
    return Dataset(noisy.astype(np.float32), clean.astype(np.float32), mask)
