"""
Toy backbone with the four-level output contract X3, X4, X5 (local) and X6 (global).

Six stride-2 conv stages bring the image to stride 64; the last stage is followed
by transformer blocks over its tokens so X6 has a global receptive field.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ShapeError
from src.model.config import BackboneConfig
from src.model.instance_decoder import sine_position_embedding
from src.model.layers import ConvBlock, FeedForward, LayerNorm, Module, MultiHeadAttention
from src.tensor import Tensor, flop_scope, ops

STRIDES = (8, 16, 32, 64)


@dataclass
class FeaturePyramid:
    x3: Tensor
    x4: Tensor
    x5: Tensor
    x6: Tensor

    @property
    def levels(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.x3, self.x4, self.x5, self.x6


class TransformerBlock(Module):
    """Pre-norm self-attention + feed-forward over ``[M, C]`` tokens."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        self.norm_attn = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm_ffn = LayerNorm(dim)
        self.ffn = FeedForward(dim, 2 * dim, rng)

    def forward(self, tokens: Tensor, pos: Tensor) -> Tensor:
        normed = self.norm_attn(tokens)
        qk = ops.add(normed, pos)
        attended, _ = self.attn(qk, qk, normed)
        tokens = ops.add(tokens, attended)
        return ops.add(tokens, self.ffn(self.norm_ffn(tokens)))


class Backbone(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        c3, c4, c5, c6 = cfg.widths
        widths = [cfg.stem_width, max(8, c3 // 2), c3, c4, c5, c6]
        self.stages = []
        in_channels = 3
        for width in widths:
            blocks = [ConvBlock(in_channels, width, rng, stride=2)]
            blocks += [ConvBlock(width, width, rng) for _ in range(cfg.num_conv_stages - 1)]
            self.stages.append(_Stage(blocks))
            in_channels = width
        self.blocks = [TransformerBlock(c6, cfg.heads, rng) for _ in range(cfg.transformer_blocks)]

    def forward(self, image: Tensor) -> FeaturePyramid:
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"backbone expects a [3, H, W] image, got {image.shape}")
        _, height, width = image.shape
        if height % 64 or width % 64 or height == 0 or width == 0:
            raise ShapeError(f"image size {height}x{width} is not divisible by 64")

        with flop_scope("backbone"):
            x = image
            outputs = []
            for i, stage in enumerate(self.stages):
                x = stage(x)
                if i >= 2:
                    outputs.append(x)
            x3, x4, x5, x6 = outputs

            c, h, w = x6.shape
            tokens = ops.transpose(ops.reshape(x6, (c, h * w)), (1, 0))
            pos = sine_position_embedding(h, w, c, dtype=x6.dtype)
            pos = ops.transpose(ops.reshape(pos, (c, h * w)), (1, 0))
            for block in self.blocks:
                tokens = block(tokens, pos)
            x6 = ops.reshape(ops.transpose(tokens, (1, 0)), (c, h, w))
        return FeaturePyramid(x3, x4, x5, x6)


class _Stage(Module):
    def __init__(self, blocks: list[ConvBlock]) -> None:
        self.blocks = blocks

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


def backbone_forward(image: Tensor, backbone: Backbone) -> FeaturePyramid:
    return backbone(image)
