"""Minimal float64 neural-network substrate: layers, losses, Adam, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_scalar_grad, finite_diff_check, relative_error
from .layers import (
    BatchNorm,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    Layer,
    LeakyReLU,
    MaxOverTime,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Tanh,
    TransposedConv2D,
    sigmoid,
    softmax,
)
from .losses import mean_log_sigmoid, mean_log_softmax, softmax_cross_entropy
from .optim import Adam, AdamState, adam_update

LAYER_KINDS = ("Embedding", "Conv1D", "Conv2D", "TransposedConv2D", "Dense", "MaxOverTime",
               "LeakyReLU", "Tanh", "Sigmoid", "Softmax", "BatchNorm", "Dropout")
