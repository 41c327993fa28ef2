"""Minimal deterministic deep-learning engine (numpy, layer-wise backprop)."""

from .tensor import Tensor
from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dropout,
    LeakyReLU,
    ReLU,
    Sigmoid,
    Tanh,
)
from .losses import bce_loss, l1_loss
from .optim import Adam
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "Conv2d",
    "ConvTranspose2d",
    "BatchNorm2d",
    "Dropout",
    "LeakyReLU",
    "ReLU",
    "Sigmoid",
    "Tanh",
    "l1_loss",
    "bce_loss",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
]
