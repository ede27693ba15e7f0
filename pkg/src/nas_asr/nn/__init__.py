"""Minimal differentiable building blocks with explicit reverse-mode
gradients: conv2d, maxpool, batchnorm, (B)LSTM, linear, relu, softmax,
plus Adam with global-norm gradient clipping and checkpoint IO."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm,
    Conv2D,
    Linear,
    MaxPool2D,
    ReLU,
    ShapeError,
    Softmax,
    softmax,
    xavier_uniform,
)
from .optim import Adam, OptimizerConfig, clip_by_global_norm, global_norm
from .recurrent import BLSTM, LSTM, LstmCellParams, blstm_forward, lstm_step

__all__ = [
    "Adam",
    "BLSTM",
    "BatchNorm",
    "Conv2D",
    "LSTM",
    "Linear",
    "LstmCellParams",
    "MaxPool2D",
    "OptimizerConfig",
    "ReLU",
    "ShapeError",
    "Softmax",
    "blstm_forward",
    "clip_by_global_norm",
    "global_norm",
    "load_checkpoint",
    "lstm_step",
    "save_checkpoint",
    "softmax",
    "xavier_uniform",
]
