"""Minimal dense-tensor numeric core: autodiff, layers, Adam."""

from .tensor import Tensor, GradTape, backward, as_tensor, mse
from .params import ParamSet
from .optim import AdamState, adam_step

__all__ = [
    "Tensor",
    "GradTape",
    "backward",
    "as_tensor",
    "mse",
    "ParamSet",
    "AdamState",
    "adam_step",
]
