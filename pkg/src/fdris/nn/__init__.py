"""Dense-tensor computation core: reverse-mode differentiation, graph
attention layers, gated global pooling, MSE+L2 loss, and Adam."""

from .tensor import Tensor
from .layers import (
    DegenerateRowError,
    attention_logits,
    dropout,
    gat_layer,
    global_attention_pool,
    masked_softmax,
)
from .model import (
    GatLayerParams,
    ModelDims,
    ModelParameters,
    PoolParams,
    forward,
    init_parameters,
    load_checkpoint,
    loss,
    save_checkpoint,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "DegenerateRowError",
    "GatLayerParams",
    "ModelDims",
    "ModelParameters",
    "PoolParams",
    "Tensor",
    "adam_step",
    "attention_logits",
    "dropout",
    "forward",
    "gat_layer",
    "global_attention_pool",
    "init_parameters",
    "load_checkpoint",
    "loss",
    "masked_softmax",
    "save_checkpoint",
]
