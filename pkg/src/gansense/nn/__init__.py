"""Minimal dense neural-network engine (forward, backprop, RMSprop, Adam)."""

from gansense.nn.network import (
    Activation,
    Batch,
    LayerSpec,
    Loss,
    NetworkError,
    NetworkSpec,
    NetworkState,
    OptimizerKind,
    OptimizerSpec,
    forward,
    initialize,
    loss_and_gradient,
    one_hot,
    optimizer_step,
    train,
)

__all__ = [
    "Activation", "Batch", "LayerSpec", "Loss", "NetworkError", "NetworkSpec", "NetworkState",
    "OptimizerKind", "OptimizerSpec", "forward", "initialize", "loss_and_gradient", "one_hot",
    "optimizer_step", "train",
]
