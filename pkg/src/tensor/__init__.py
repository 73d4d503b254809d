"""Dense tensors, reverse-mode differentiation and the ops the pipeline needs."""

from src.tensor.tensor import (
    DEFAULT_DTYPE,
    ComputationTape,
    Tensor,
    TapeRecord,
    active_tape,
    backward,
    no_grad,
    parameter,
)
from src.tensor import ops
from src.tensor.flops import FlopCounter, count_flops, flop_scope
from src.tensor.io import load_tensor, save_tensor

__all__ = [
    "DEFAULT_DTYPE",
    "ComputationTape",
    "FlopCounter",
    "TapeRecord",
    "Tensor",
    "active_tape",
    "backward",
    "count_flops",
    "flop_scope",
    "load_tensor",
    "no_grad",
    "ops",
    "parameter",
    "save_tensor",
]
