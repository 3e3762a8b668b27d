"""Linear-RNN quantile forecaster."""

from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .forecaster import (DEFAULT_QUANTILES, Forecaster, ModelConfig, NonFiniteGradientError, TokenBatch, gradients,
                         make_batch, pinball_loss)
from .layers import Block, DeltaProductMixer, GatedMLP, RMSNorm, ShortConv
from .recurrence import householder_step, recurrence_chunkwise, recurrence_sequential, transition_operator

__all__ = [
    "Block", "CheckpointError", "DEFAULT_QUANTILES", "DeltaProductMixer", "Forecaster", "GatedMLP", "ModelConfig",
    "NonFiniteGradientError", "RMSNorm", "ShortConv", "TokenBatch", "gradients", "householder_step",
    "load_checkpoint", "make_batch", "pinball_loss", "read_checkpoint", "recurrence_chunkwise",
    "recurrence_sequential", "save_checkpoint", "transition_operator",
]
