"""Synthetic peak-calling training demo driven by the convolution kernels."""
from .data import BumpConfig, Dataset, generate_synthetic_dataset
from .layers import ConvLayer, bce_with_logits, mse_loss, relu_backward, relu_forward, sgd_step
from .net import DemoNet, NetConfig
from .train import EpochStats, TrainConfig, train

__all__ = [
    "BumpConfig", "ConvLayer", "Dataset", "DemoNet", "EpochStats", "NetConfig", "TrainConfig",
    "bce_with_logits", "generate_synthetic_dataset", "mse_loss", "relu_backward",
    "relu_forward", "sgd_step", "train",
]
