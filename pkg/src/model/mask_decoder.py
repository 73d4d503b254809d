"""
Semantic-enhanced mask decoder.

Fuses X3..X5 into single-level stride-8 mask features with a top-down pass, a
bottom-up pass and a final aggregation at stride 8. Semantic enhancers inject X6
into every level as a sigmoid gate plus an additive term.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ShapeError
from src.model.backbone import FeaturePyramid
from src.model.config import ModelConfig
from src.model.layers import Conv2d, Module
from src.tensor import Tensor, flop_scope, ops


@dataclass
class MaskFeatures:
    x_mask: Tensor


class SemanticEnhancer(Module):
    def __init__(self, global_channels: int, channels: int, rng: np.random.Generator) -> None:
        self.gate_proj = Conv2d(global_channels, channels, 1, rng)
        self.add_proj = Conv2d(global_channels, channels, 1, rng)


def semantic_enhance(x: Tensor, x6: Tensor, w: SemanticEnhancer) -> Tensor:
    """x * sigmoid(P_g(up(x6))) + P_a(up(x6)).

    The 1x1 projections run at X6 resolution before upsampling; both maps are
    linear and bilinear weights sum to one, so the order does not change the result.
    """
    if x.ndim != 3 or x6.ndim != 3:
        raise ShapeError(f"semantic_enhance: expected [C,h,w] maps, got {x.shape} and {x6.shape}")
    _, h, wd = x.shape
    _, h6, w6 = x6.shape
    if h % h6 or wd % w6 or h // h6 != wd // w6:
        raise ShapeError(f"semantic_enhance: {x.shape} is not an integer upscaling of {x6.shape}")
    if w.gate_proj.weight.shape[0] != x.shape[0] or w.gate_proj.weight.shape[1] != x6.shape[0]:
        raise ShapeError(
            f"semantic_enhance: enhancer maps {w.gate_proj.weight.shape[1]} -> {w.gate_proj.weight.shape[0]} "
            f"channels, features are {x6.shape[0]} -> {x.shape[0]}"
        )
    factor = h // h6
    with flop_scope("enhancer"):
        gate = ops.sigmoid(ops.bilinear_upsample(w.gate_proj(x6), factor))
        shift = ops.bilinear_upsample(w.add_proj(x6), factor)
        return ops.add(ops.mul(x, gate), shift)


class MaskDecoder(Module):
    """Iterative top-down / bottom-up fusion with optional semantic enhancers."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        c3, c4, c5, c6 = cfg.backbone.widths
        d = cfg.kernel_dim
        self.lateral = [Conv2d(c, d, 1, rng) for c in (c3, c4, c5)]
        self.top_down = [Conv2d(d, d, 3, rng) for _ in range(2)]
        self.down = [Conv2d(d, d, 3, rng, stride=2) for _ in range(2)]
        self.bottom_up = [Conv2d(d, d, 3, rng) for _ in range(2)]
        self.out_conv = Conv2d(d, d, 3, rng)
        self.enhancers = [SemanticEnhancer(c6, d, rng) for _ in range(3)] if cfg.enhancers else []

    def forward(self, p: FeaturePyramid, use_enhancers: bool | None = None) -> Tensor:
        enhance = bool(self.enhancers) if use_enhancers is None else use_enhancers and bool(self.enhancers)
        with flop_scope("mask_decoder"):
            l3, l4, l5 = (conv(x) for conv, x in zip(self.lateral, (p.x3, p.x4, p.x5)))
            if enhance:
                l3, l4, l5 = (semantic_enhance(x, p.x6, se) for x, se in zip((l3, l4, l5), self.enhancers))

            p5 = l5
            p4 = ops.gelu(self.top_down[0](ops.add(l4, ops.bilinear_upsample(p5, 2))))
            p3 = ops.gelu(self.top_down[1](ops.add(l3, ops.bilinear_upsample(p4, 2))))

            n3 = p3
            n4 = ops.gelu(self.bottom_up[0](ops.add(p4, ops.gelu(self.down[0](n3)))))
            n5 = ops.gelu(self.bottom_up[1](ops.add(p5, ops.gelu(self.down[1](n4)))))

            merged = ops.add(ops.add(n3, ops.bilinear_upsample(n4, 2)), ops.bilinear_upsample(n5, 4))
            return self.out_conv(merged)


class FPNMaskDecoder(Module):
    """Plain top-down FPN with a single output conv (ablation baseline)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        c3, c4, c5, _ = cfg.backbone.widths
        d = cfg.kernel_dim
        self.lateral = [Conv2d(c, d, 1, rng) for c in (c3, c4, c5)]
        self.out_conv = Conv2d(d, d, 3, rng)

    def forward(self, p: FeaturePyramid, use_enhancers: bool | None = None) -> Tensor:
        with flop_scope("mask_decoder"):
            l3, l4, l5 = (conv(x) for conv, x in zip(self.lateral, (p.x3, p.x4, p.x5)))
            p4 = ops.add(l4, ops.bilinear_upsample(l5, 2))
            p3 = ops.add(l3, ops.bilinear_upsample(p4, 2))
            return self.out_conv(p3)


def fuse_pyramid(p: FeaturePyramid, weights: MaskDecoder) -> MaskFeatures:
    return MaskFeatures(weights(p))


def fuse_pyramid_fpn_baseline(p: FeaturePyramid, weights: FPNMaskDecoder) -> MaskFeatures:
    return MaskFeatures(weights(p))


def build_mask_decoder(cfg: ModelConfig, rng: np.random.Generator) -> Module:
    return MaskDecoder(cfg, rng) if cfg.mask_decoder == "iterative" else FPNMaskDecoder(cfg, rng)
