"""
Differentiable tensor operations.

Every op computes its forward value with numpy, reports its FLOPs, and, when a
tape is active and an input requires grad, records an adjoint rule mapping the
output gradient to one gradient per input (None for non-differentiable inputs).
Image-space ops take ``[C, H, W]`` tensors.
"""

import functools
import math
from numbers import Number
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from src.errors import ArgumentError, ShapeError
from src.tensor.flops import add_flops
from src.tensor.tensor import TapeRecord, Tensor, active_tape

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    out.is_leaf = False
    if needs_grad:
        tape.record(TapeRecord(op=op, inputs=tuple(inputs), output=out, backward=backward))
    return out


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap numbers and arrays as constant tensors, matching ``like``'s dtype for scalars."""
    if isinstance(value, Tensor):
        return value
    if isinstance(value, Number) and like is not None:
        return Tensor(np.asarray(value, dtype=like.dtype))
    if isinstance(value, np.ndarray) and like is not None and value.dtype.kind != "f":
        return Tensor(value.astype(like.dtype))
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b, "add")
    data = a.data + b.data
    add_flops("add", data.size)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b, "sub")
    data = a.data - b.data
    add_flops("sub", data.size)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b, "mul")
    data = a.data * b.data
    add_flops("mul", data.size)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", data, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b, "div")
    data = a.data / b.data
    add_flops("div", data.size)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("div", data, (a, b), backward)


def neg(x: Tensor) -> Tensor:
    data = -x.data
    add_flops("neg", data.size)
    return _result("neg", data, (x,), lambda g: (-g,))


def scale(x: Tensor, factor: float) -> Tensor:
    data = x.data * x.dtype.type(factor)
    add_flops("scale", data.size)
    return _result("scale", data, (x,), lambda g: (g * x.dtype.type(factor),))


def power(x: Tensor, exponent: float) -> Tensor:
    data = np.power(x.data, exponent)
    add_flops("pow", data.size)

    def backward(g):
        return (g * exponent * np.power(x.data, exponent - 1),)

    return _result("pow", data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    add_flops("exp", data.size)
    return _result("exp", data, (x,), lambda g: (g * data,))


def log(x: Tensor) -> Tensor:
    data = np.log(x.data)
    add_flops("log", data.size)
    return _result("log", data, (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    data = np.sqrt(x.data)
    add_flops("sqrt", data.size)
    return _result("sqrt", data, (x,), lambda g: (g * 0.5 / data,))


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)
    add_flops("relu", data.size)
    return _result("relu", data, (x,), lambda g: (g * (x.data > 0),))


def clip(x: Tensor, low: float | None = None, high: float | None = None) -> Tensor:
    """Elementwise clamp; the gradient passes only where the input was inside the range."""
    data = np.clip(x.data, low, high).astype(x.dtype, copy=False)
    add_flops("clip", data.size)
    inside = np.ones(x.shape, dtype=bool)
    if low is not None:
        inside &= x.data >= low
    if high is not None:
        inside &= x.data <= high
    return _result("clip", data, (x,), lambda g: (g * inside,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    data = (x.data * cdf).astype(x.dtype, copy=False)
    add_flops("gelu", data.size)

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),)

    return _result("gelu", data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    data = expit(x.data)
    add_flops("sigmoid", data.size)
    return _result("sigmoid", data, (x,), lambda g: (g * data * (1 - data),))


def binary_cross_entropy_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise BCE of sigmoid(logits) against constant targets, stable for any logit."""
    x = logits.data
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=x.dtype)
    if t.shape != x.shape:
        t = np.broadcast_to(t, x.shape)
    data = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    add_flops("bce_logits", data.size)

    def backward(g):
        return (g * (expit(x) - t),)

    return _result("bce_logits", data, (logits,), backward)


# ---------------------------------------------------------------------- reductions
def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    data = np.sum(x.data, axis=axis, keepdims=keepdims)
    add_flops("sum", x.size)
    axes = _norm_axes(axis, x.ndim)

    def backward(g):
        g = np.reshape(g, np.shape(data))
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _result("sum", np.asarray(data), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    data = np.mean(x.data, axis=axis, keepdims=keepdims)
    add_flops("mean", x.size)

    def backward(g):
        g = np.reshape(g, np.shape(data))
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return _result("mean", np.asarray(data), (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)
    add_flops("softmax", data.size)

    def backward(g):
        return (data * (g - np.sum(g * data, axis=axis, keepdims=True)),)

    return _result("softmax", data, (x,), backward)


def layer_norm(
    x: Tensor,
    gain: Tensor | None = None,
    bias: Tensor | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over the last axis, then apply the optional affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    data = xhat
    if gain is not None:
        if gain.shape != (x.shape[-1],):
            raise ShapeError(f"layer_norm: gain shape {gain.shape} does not match {x.shape}")
        data = data * gain.data
    if bias is not None:
        if bias.shape != (x.shape[-1],):
            raise ShapeError(f"layer_norm: bias shape {bias.shape} does not match {x.shape}")
        data = data + bias.data
    add_flops("layer_norm", data.size)

    inputs = [x] + [t for t in (gain, bias) if t is not None]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gxhat = g * gain.data if gain is not None else g
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [gx]
        if gain is not None:
            grads.append((g * xhat).sum(axis=lead))
        if bias is not None:
            grads.append(g.sum(axis=lead))
        return grads

    return _result("layer_norm", data, inputs, backward)


# ---------------------------------------------------------------------- shape ops
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _result("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    data = np.ascontiguousarray(np.transpose(x.data, axes))
    inverse = tuple(np.argsort(axes))
    return _result("transpose", data, (x,), lambda g: (np.transpose(g, inverse),))


def index(x: Tensor, idx) -> Tensor:
    """Gather ``x[idx]`` with numpy indexing semantics."""
    data = np.asarray(x.data[idx])

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, idx, np.reshape(g, data.shape))
        return (grad,)

    return _result("index", data, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return _result("concat", data, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# ---------------------------------------------------------------------- linear algebra
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None
    add_flops("matmul", 2 * data.size * a.shape[-1])

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("matmul", data, (a, b), backward)


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of a ``[C_in, H, W]`` map with ``[C_out, C_in, kh, kw]`` filters.

    Output size is ``(H + 2*padding - kh) // stride + 1``; strided convs drop a
    trailing partial window.
    """
    if input.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected [C,H,W] input and 4-d weight, got {input.shape} and {weight.shape}")
    c_in, height, width = input.shape
    c_out, w_in, kh, kw = weight.shape
    if w_in != c_in:
        raise ShapeError(f"conv2d: input channels {c_in} do not match weight {weight.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ArgumentError(f"conv2d: invalid stride {stride} or padding {padding}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {c_out} output channels")

    padded_h, padded_w = height + 2 * padding, width + 2 * padding
    if padded_h < kh or padded_w < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {padded_h}x{padded_w}")
    out_h = (padded_h - kh) // stride + 1
    out_w = (padded_w - kw) // stride + 1

    x = np.pad(input.data, ((0, 0), (padding, padding), (padding, padding))) if padding else input.data
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :out_h, :out_w]
    data = np.tensordot(weight.data, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        data = data + bias.data[:, None, None]
    add_flops("conv2d", 2 * c_in * kh * kw * data.size)

    inputs = [input, weight] + ([bias] if bias is not None else [])

    def backward(g):
        g_weight = np.tensordot(g, windows, axes=([1, 2], [1, 2]))
        cols = np.tensordot(weight.data, g, axes=([0], [0]))  # C_in, kh, kw, out_h, out_w
        g_padded = np.zeros_like(x)
        span_h = stride * (out_h - 1) + 1
        span_w = stride * (out_w - 1) + 1
        for i in range(kh):
            for j in range(kw):
                g_padded[:, i : i + span_h : stride, j : j + span_w : stride] += cols[:, i, j]
        g_input = g_padded[:, padding : padding + height, padding : padding + width] if padding else g_padded
        grads = [g_input, g_weight]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return grads

    return _result("conv2d", data, inputs, backward)


# ---------------------------------------------------------------------- pooling / resampling
def _windows(x: Tensor, k: int, op: str) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"{op}: expected [C,H,W], got {x.shape}")
    if k < 1:
        raise ArgumentError(f"{op}: window must be positive, got {k}")
    c, height, width = x.shape
    if height % k or width % k:
        raise ShapeError(f"{op}: spatial size {height}x{width} not divisible by window {k}")
    return (
        x.data.reshape(c, height // k, k, width // k, k)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, height // k, width // k, k * k)
    )


def _unwindow(win: np.ndarray, k: int) -> np.ndarray:
    c, h, w, _ = win.shape
    return win.reshape(c, h, w, k, k).transpose(0, 1, 3, 2, 4).reshape(c, h * k, w * k)


def max_pool2d(x: Tensor, k: int) -> Tensor:
    """Window maximum with stride k; ties send the gradient to the first element in row-major order."""
    win = _windows(x, k, "max_pool2d")
    arg = np.argmax(win, axis=-1)
    data = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    add_flops("max_pool2d", win.size)

    def backward(g):
        g_win = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(g_win, arg[..., None], g[..., None], axis=-1)
        return (_unwindow(g_win, k),)

    return _result("max_pool2d", data, (x,), backward)


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    win = _windows(x, k, "avg_pool2d")
    data = win.mean(axis=-1)
    add_flops("avg_pool2d", win.size)

    def backward(g):
        g_win = np.broadcast_to((g / (k * k))[..., None], win.shape)
        return (_unwindow(np.ascontiguousarray(g_win), k),)

    return _result("avg_pool2d", data, (x,), backward)


@functools.lru_cache(maxsize=128)
def _interp_matrix(size: int, factor: int, dtype: str) -> np.ndarray:
    """Rows map output coordinates to input coordinates (align_corners=False)."""
    matrix = np.zeros((size * factor, size), dtype=np.float64)
    for out in range(size * factor):
        src = max((out + 0.5) / factor - 0.5, 0.0)
        lo = min(int(math.floor(src)), size - 1)
        hi = min(lo + 1, size - 1)
        frac = src - lo
        matrix[out, lo] += 1.0 - frac
        matrix[out, hi] += frac
    matrix = matrix.astype(dtype)
    matrix.setflags(write=False)
    return matrix


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Bilinear upsampling of ``[C, h, w]`` by an integer factor."""
    if isinstance(factor, bool) or not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ArgumentError(f"bilinear_upsample: factor must be an integer >= 1, got {factor!r}")
    if x.ndim != 3:
        raise ShapeError(f"bilinear_upsample: expected [C,h,w], got {x.shape}")
    if factor == 1:
        return _result("upsample", x.data.copy(), (x,), lambda g: (g,))

    c, h, w = x.shape
    rows = _interp_matrix(h, int(factor), x.dtype.str)
    cols = _interp_matrix(w, int(factor), x.dtype.str)
    tall = np.matmul(rows, x.data)  # C, H', w
    data = np.matmul(tall, cols.T)  # C, H', W'
    add_flops("upsample", 2 * c * rows.shape[0] * h * w + 2 * data.size * w)

    def backward(g):
        return (np.matmul(rows.T, np.matmul(g, cols)),)

    return _result("upsample", data, (x,), backward)
