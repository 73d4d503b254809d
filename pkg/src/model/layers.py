"""
Parameter containers and the layers the network is assembled from.
"""

import math
from typing import Iterator

import numpy as np

from src.errors import CheckpointError, ShapeError
from src.tensor import Tensor, ops, parameter


class Module:
    """Base class: parameters are discovered from attributes in definition order."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"forward not implemented for {type(self).__name__}")

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Module":
        """Convert every parameter in place (f64 for gradient checks)."""
        for p in self.parameters():
            p.data = np.ascontiguousarray(p.data.astype(dtype))
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise CheckpointError(f"parameter mismatch: missing={missing} unexpected={unexpected}")
        for name, value in state.items():
            if name not in own:
                continue
            p = own[name]
            if p.shape != tuple(value.shape):
                raise CheckpointError(f"{name}: checkpoint shape {tuple(value.shape)} != model shape {p.shape}")
            p.data = np.ascontiguousarray(np.asarray(value, dtype=p.dtype))
            p.grad = None


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    """y = x @ W + b with W stored as [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        bound = math.sqrt(6.0 / (in_features + out_features))
        self.weight = parameter(_uniform(rng, (in_features, out_features), bound))
        self.bias = parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"Linear: input width {x.shape[-1]} != {self.weight.shape[0]}")
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
    ) -> None:
        fan_in = in_channels * kernel_size * kernel_size
        bound = math.sqrt(3.0 / fan_in)
        self.weight = parameter(_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), bound))
        self.bias = parameter(np.zeros(out_channels, dtype=np.float32))
        self.stride = stride
        self.padding = kernel_size // 2

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvBlock(Module):
    """Conv followed by GELU."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, stride: int = 1) -> None:
        self.conv = Conv2d(in_channels, out_channels, 3, rng, stride=stride)

    def forward(self, x: Tensor) -> Tensor:
        return ops.gelu(self.conv(x))


class LayerNorm(Module):
    def __init__(self, dim: int) -> None:
        self.gain = parameter(np.ones(dim, dtype=np.float32))
        self.bias = parameter(np.zeros(dim, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        if dim % heads:
            raise ShapeError(f"attention width {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        n, d = x.shape
        return ops.transpose(ops.reshape(x, (n, self.heads, d // self.heads)), (1, 0, 2))

    def forward(self, query: Tensor, key: Tensor, value: Tensor) -> tuple[Tensor, Tensor]:
        """Attend ``[N, D]`` queries over ``[M, D]`` keys; returns output and ``[heads, N, M]`` weights."""
        n, d = query.shape
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(d // self.heads))
        weights = ops.softmax(scores, axis=-1)
        mixed = ops.reshape(ops.transpose(ops.matmul(weights, v), (1, 0, 2)), (n, d))
        return self.out_proj(mixed), weights


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator) -> None:
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))
