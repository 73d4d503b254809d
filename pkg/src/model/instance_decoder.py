"""
Dual transformer instance decoder.

Learned object queries are refined by a short stack of decoder stages, each
attending to either the global features X_G (the stride-64 backbone output) or
the local features X_L (pooled mask features), and then read out by three linear
heads into class logits, mask kernels and IoU-aware objectness.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from src.errors import ArgumentError, ShapeError
from src.model.config import ModelConfig
from src.model.layers import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from src.tensor import Tensor, flop_scope, ops, parameter

FOCAL_PRIOR = 0.01


@functools.lru_cache(maxsize=64)
def _sine_table(h: int, w: int, d: int, temperature: float) -> np.ndarray:
    per_axis = d // 2
    freq = np.arange(per_axis) // 2
    dim_t = temperature ** (2.0 * freq / per_axis)
    ys = np.arange(h, dtype=np.float64) / h * 2 * math.pi
    xs = np.arange(w, dtype=np.float64) / w * 2 * math.pi

    def encode(coords: np.ndarray) -> np.ndarray:
        phase = coords[None, :] / dim_t[:, None]  # per_axis, n
        even = (np.arange(per_axis) % 2 == 0)[:, None]
        return np.where(even, np.sin(phase), np.cos(phase))

    table = np.empty((d, h, w), dtype=np.float64)
    table[:per_axis] = encode(ys)[:, :, None]
    table[per_axis:] = encode(xs)[:, None, :]
    table.setflags(write=False)
    return table


def sine_position_embedding(h: int, w: int, d: int, temperature: float = 10000.0, dtype=np.float32) -> Tensor:
    """``[d, h, w]`` embedding: first half encodes rows, second half columns.

    Within each half, channel ``2i`` is ``sin(c / T^(2i/(d/2)))`` and ``2i+1`` the
    matching cosine, where ``c = 2*pi*index/size``.
    """
    if d <= 0 or d % 2:
        raise ArgumentError(f"position embedding width must be a positive even number, got {d}")
    if h <= 0 or w <= 0:
        raise ArgumentError(f"position embedding needs positive size, got {h}x{w}")
    return Tensor(_sine_table(h, w, d, float(temperature)), dtype=dtype)


def extract_local_features(x_mask: Tensor, pool: str = "max", k: int = 8) -> Tensor:
    """X_L = f_pool(X_mask); ``pool='none'`` passes the mask features through."""
    if pool == "max":
        return ops.max_pool2d(x_mask, k)
    if pool == "avg":
        return ops.avg_pool2d(x_mask, k)
    if pool == "none":
        return x_mask
    raise ArgumentError(f"unknown pool type {pool!r}")


@dataclass
class QuerySet:
    q: Tensor

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]


@dataclass
class InstancePrediction:
    class_logits: Tensor
    kernels: Tensor
    objectness: Tensor
    scores: np.ndarray
    categories: np.ndarray


@dataclass
class DecodeResult:
    """Queries after the first stage (q_g), the final queries, and the queries entering the last stage."""

    q_g: QuerySet
    q_final: QuerySet
    passing: QuerySet


def _tokens(feats: Tensor) -> Tensor:
    c, h, w = feats.shape
    return ops.transpose(ops.reshape(feats, (c, h * w)), (1, 0))


class DecoderStage(Module):
    """Self-attention, cross-attention to flattened features, feed-forward; pre-norm residuals."""

    def __init__(self, kind: str, in_channels: int, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.kind = kind
        d = cfg.hidden_dim
        self.input_proj = Linear(in_channels, d, rng)
        self.norm_self = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.norm_cross = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.norm_ffn = LayerNorm(d)
        self.ffn = FeedForward(d, cfg.ffn_dim, rng)

    def forward(
        self,
        q: QuerySet,
        feats: Tensor,
        pos: Tensor | None = None,
        return_attention: bool = False,
    ):
        if feats.ndim != 3 or feats.shape[0] != self.input_proj.weight.shape[0]:
            raise ShapeError(
                f"{self.kind} stage expects [{self.input_proj.weight.shape[0]}, h, w] features, got {feats.shape}"
            )
        d = self.input_proj.weight.shape[1]
        if q.d != d:
            raise ShapeError(f"query width {q.d} != decoder width {d}")
        _, h, w = feats.shape
        if pos is None:
            pos = sine_position_embedding(h, w, d, dtype=feats.dtype)
        memory = self.input_proj(_tokens(feats))
        keys = ops.add(memory, _tokens(pos))

        x = q.q
        normed = self.norm_self(x)
        attended, _ = self.self_attn(normed, normed, normed)
        x = ops.add(x, attended)

        attended, cross_weights = self.cross_attn(self.norm_cross(x), keys, memory)
        x = ops.add(x, attended)

        x = ops.add(x, self.ffn(self.norm_ffn(x)))
        out = QuerySet(x)
        return (out, cross_weights) if return_attention else out


def decoder_stage(q: QuerySet, feats: Tensor, pos: Tensor | None, weights: DecoderStage) -> QuerySet:
    return weights(q, feats, pos)


class InstanceDecoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        d = cfg.hidden_dim
        self.queries = parameter(rng.standard_normal((cfg.num_queries, d)).astype(np.float32))
        c6 = cfg.backbone.widths[3]
        self.stages = [
            DecoderStage(kind, c6 if kind == "global" else cfg.kernel_dim, cfg, rng) for kind in cfg.stages
        ]
        self.class_head = Linear(d, cfg.num_classes, rng)
        self.kernel_head = Linear(d, cfg.kernel_dim, rng)
        self.objectness_head = Linear(d, 1, rng)
        self.class_head.bias.data[:] = -math.log((1 - FOCAL_PRIOR) / FOCAL_PRIOR)

    def initial_queries(self) -> QuerySet:
        return QuerySet(self.queries)

    def _run(self, stage: DecoderStage, q: QuerySet, x_g: Tensor | None, x_l: Tensor | None) -> QuerySet:
        feats = x_g if stage.kind == "global" else x_l
        if feats is None:
            raise ArgumentError(f"{stage.kind} stage needs {'X_G' if stage.kind == 'global' else 'X_L'}")
        return stage(q, feats)

    def decode(self, x_g: Tensor | None, x_l: Tensor | None, q0: QuerySet | None = None) -> DecodeResult:
        q = q0 if q0 is not None else self.initial_queries()
        first = None
        passing = q
        for i, stage in enumerate(self.stages):
            passing = q
            q = self._run(stage, q, x_g, x_l)
            if i == 0:
                first = q
        return DecodeResult(q_g=first, q_final=q, passing=passing)

    def run_last_stage(self, passing: QuerySet, x_g: Tensor | None, x_l: Tensor | None) -> QuerySet:
        return self._run(self.stages[-1], passing, x_g, x_l)

    def predict(self, q: QuerySet) -> InstancePrediction:
        return predict_heads(q, self)


def dual_decode(q0: QuerySet, x_g: Tensor | None, x_l: Tensor | None, weights: InstanceDecoder) -> DecodeResult:
    with flop_scope("instance_decoder"):
        return weights.decode(x_g, x_l, q0)


def fuse_scores(class_logits: np.ndarray, objectness: np.ndarray) -> np.ndarray:
    """sqrt(sigmoid(max class logit) * sigmoid(objectness))."""
    cls = expit(class_logits.max(axis=1))
    obj = expit(objectness.reshape(-1))
    return np.sqrt(cls * obj)


def predict_heads(q: QuerySet, weights: InstanceDecoder) -> InstancePrediction:
    with flop_scope("instance_decoder"):
        logits = weights.class_head(q.q)
        kernels = weights.kernel_head(q.q)
        objectness = weights.objectness_head(q.q)
    return InstancePrediction(
        class_logits=logits,
        kernels=kernels,
        objectness=objectness,
        scores=fuse_scores(logits.data, objectness.data),
        categories=np.argmax(logits.data, axis=1),
    )


def segment(kernels: Tensor, x_mask: Tensor) -> Tensor:
    """Mask logits M = K . X_mask, ``[N, D_k] x [D_k, H, W] -> [N, H, W]``."""
    if kernels.ndim != 2 or x_mask.ndim != 3 or kernels.shape[1] != x_mask.shape[0]:
        raise ShapeError(f"segment: kernels {kernels.shape} do not match mask features {x_mask.shape}")
    d, h, w = x_mask.shape
    flat = ops.matmul(kernels, ops.reshape(x_mask, (d, h * w)))
    return ops.reshape(flat, (kernels.shape[0], h, w))
