"""Minimal differentiable-network engine used by every trained model here."""

from .checkpoint import assign_parameters, load_checkpoint, save_checkpoint
from .layers import (
    BidirectionalGru,
    DenseNet,
    Embedding,
    GatedRecurrentCell,
    Linear,
    apply_activation,
    init_uniform,
    merge_parameters,
)
from .tensor import (
    GraphNotBuilt,
    ShapeMismatch,
    Tensor,
    concat,
    dropout,
    finite_checks,
    no_grad,
    sigmoid_binary_cross_entropy,
    softmax_cross_entropy,
    stack_rows,
)
from .train import Adam, Diverged, TrainingReport, iterate_batches, train_loop

__all__ = [
    "Adam",
    "BidirectionalGru",
    "DenseNet",
    "Diverged",
    "Embedding",
    "GatedRecurrentCell",
    "GraphNotBuilt",
    "Linear",
    "ShapeMismatch",
    "Tensor",
    "TrainingReport",
    "apply_activation",
    "assign_parameters",
    "concat",
    "dropout",
    "finite_checks",
    "init_uniform",
    "iterate_batches",
    "load_checkpoint",
    "merge_parameters",
    "no_grad",
    "save_checkpoint",
    "sigmoid_binary_cross_entropy",
    "softmax_cross_entropy",
    "stack_rows",
    "train_loop",
]
