"""Trainable x-prediction denoiser: autodiff engine, 1-D U-Net, checkpoints."""

from . import autodiff
from .unet import (
    UNetConfig,
    init_params,
    layer_shapes,
    parameter_count,
    time_embedding,
    unet_apply,
    unet_forward,
)
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "autodiff",
    "UNetConfig",
    "init_params",
    "layer_shapes",
    "parameter_count",
    "time_embedding",
    "unet_apply",
    "unet_forward",
    "save_checkpoint",
    "load_checkpoint",
]
