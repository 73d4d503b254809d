"""
Dense tensor with tape-based reverse-mode differentiation.

A Tensor wraps a contiguous numpy array. Operations in ``src.tensor.ops`` record
themselves on the active ComputationTape of the current thread when any input
requires grad; ``backward`` replays the records in reverse to populate ``grad``
on leaf tensors.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from src.errors import ArgumentError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
DEFAULT_DTYPE = np.dtype(np.float32)

_local = threading.local()


class Tensor:
    """Dense n-dimensional float array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        name: str | None = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            dtype = np.dtype(dtype)
            if dtype not in FLOAT_DTYPES:
                raise ArgumentError(f"unsupported dtype {dtype}; use float32 or float64")
            array = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in FLOAT_DTYPES:
            array = data
        else:
            array = np.asarray(data, dtype=DEFAULT_DTYPE)

        # ascontiguousarray promotes 0-d arrays to shape (1,)
        self.data: np.ndarray = np.ascontiguousarray(array) if array.ndim else np.asarray(array)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.is_leaf = True
        self.name = name

    # ------------------------------------------------------------------ properties
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------------ operators
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, exponent: float):
        return ops.power(self, exponent)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.index(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return ops.mean(self, axis=axis, keepdims=keepdims)


def parameter(data, dtype=None, name: str | None = None) -> Tensor:
    """Create a leaf tensor that requires grad."""
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


@dataclass(eq=False)
class TapeRecord:
    """One executed operation: its inputs, its output and the adjoint rule."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class ComputationTape:
    """Ordered record of executed operations.

    Use as a context manager; operations executed inside the block on inputs that
    require grad are appended in execution order.
    """

    def __init__(self) -> None:
        self.records: list[TapeRecord] = []

    def record(self, record: TapeRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> "ComputationTape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()


class no_grad:
    """Suspend recording on the current thread."""

    def __enter__(self) -> None:
        _stack().append(None)

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> ComputationTape | None:
    """The innermost tape of the current thread, or None when not recording."""
    stack = _stack()
    return stack[-1] if stack else None


def backward(tape: ComputationTape, loss: Tensor) -> None:
    """Populate ``grad`` on every leaf tensor the scalar ``loss`` depends on.

    Intermediate adjoints live only for the duration of the call; leaf gradients
    accumulate across calls until reset with ``zero_grad``.
    """
    if loss.size != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ArgumentError("loss was not produced through recorded operations")

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    adjoints: dict[int, np.ndarray] = {id(loss): seed}
    leaves: dict[int, Tensor] = {}

    for rec in reversed(tape.records):
        grad_out = adjoints.pop(id(rec.output), None)
        if grad_out is None:
            continue
        grads = rec.backward(grad_out)
        for tensor, grad in zip(rec.inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            adjoints[key] = adjoints[key] + grad if key in adjoints else grad
            if tensor.is_leaf:
                leaves[key] = tensor

    for key, leaf in leaves.items():
        grad = np.asarray(adjoints[key], dtype=leaf.dtype).reshape(leaf.shape)
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad


from src.tensor import ops  # noqa: E402
