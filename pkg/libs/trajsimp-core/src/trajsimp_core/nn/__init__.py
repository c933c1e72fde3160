from .checkpoint import CheckpointHeader, load_checkpoint, save_checkpoint
from .gradcheck import GradientCheckResult, check_gradients
from .layers import (
    AttentionBlock,
    AttentionStack,
    Embedding,
    FeedForward,
    GraphAttentionLayer,
    GraphAttentionStack,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    build_adjacency,
    forward_attention,
    forward_gat,
)
from .optim import SGD, Adam, AdamHyper, AdamState, adam_step, sgd_step
from .tensor import (
    ComputationTape,
    GradientMap,
    Parameter,
    Tensor,
    backward,
    concat,
    cross_entropy,
    l2norm,
    sigmoid,
)

__all__ = [
    # Tensor kernel
    "ComputationTape",
    "GradientMap",
    "Parameter",
    "Tensor",
    "backward",
    "concat",
    "cross_entropy",
    "l2norm",
    "sigmoid",
    # Layers
    "AttentionBlock",
    "AttentionStack",
    "Embedding",
    "FeedForward",
    "GraphAttentionLayer",
    "GraphAttentionStack",
    "LayerNorm",
    "Linear",
    "Module",
    "MultiHeadSelfAttention",
    "build_adjacency",
    "forward_attention",
    "forward_gat",
    # Optimizers
    "SGD",
    "Adam",
    "AdamHyper",
    "AdamState",
    "adam_step",
    "sgd_step",
    # Checkpoints
    "CheckpointHeader",
    "load_checkpoint",
    "save_checkpoint",
    "GradientCheckResult",
    "check_gradients",
]
