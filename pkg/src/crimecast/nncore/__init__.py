"""Dense-tensor neural-network core: layers, losses and an optimiser, numpy only."""

from .errors import NNCoreError, NonFiniteError, ShapeError, StateError
from .layers import (
    Activation,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    Pool2D,
    Sequential,
    TimeDistributed,
    dropout,
)
from .losses import bce_loss, mcce_loss, mse_loss
from .lstm import LSTM, lstm_forward, lstm_step
from .ops import conv2d_backward, conv2d_forward, pool2d_backward, pool2d_forward
from .optim import Adam, optimizer_step

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten", "LSTM", "Layer",
    "NNCoreError", "NonFiniteError", "Pool2D", "Sequential", "ShapeError", "StateError",
    "TimeDistributed", "bce_loss", "conv2d_backward", "conv2d_forward", "dropout", "lstm_forward",
    "lstm_step", "mcce_loss", "mse_loss", "optimizer_step", "pool2d_backward", "pool2d_forward",
]
