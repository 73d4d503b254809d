"""
The full per-frame network: backbone, mask decoder, dual instance decoder, heads.
"""

import threading
from dataclasses import dataclass

import numpy as np

from src.model.backbone import Backbone, FeaturePyramid
from src.model.config import ModelConfig
from src.model.instance_decoder import (
    DecodeResult,
    InstanceDecoder,
    InstancePrediction,
    QuerySet,
    dual_decode,
    extract_local_features,
    predict_heads,
    segment,
)
from src.model.layers import Module
from src.model.mask_decoder import build_mask_decoder
from src.tensor import Tensor


@dataclass
class FrameFeatures:
    pyramid: FeaturePyramid
    x_mask: Tensor
    x_l: Tensor | None

    @property
    def x_g(self) -> Tensor:
        return self.pyramid.x6


@dataclass
class FrameOutput:
    features: FrameFeatures
    decode: DecodeResult
    prediction: InstancePrediction
    mask_logits: Tensor


class KernelVIS(Module):
    def __init__(self, cfg: ModelConfig, dtype=np.float32) -> None:
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.backbone = Backbone(cfg.backbone, rng)
        self.mask_decoder = build_mask_decoder(cfg, rng)
        self.instance_decoder = InstanceDecoder(cfg, rng)
        self._lock = threading.Lock()
        self.decoder_invocations = 0
        if np.dtype(dtype) != np.float32:
            self.astype(dtype)

    def extract(self, image: Tensor, with_local: bool = True) -> FrameFeatures:
        """Backbone + mask decoder, plus the pooled local features when requested."""
        pyramid = self.backbone(image)
        x_mask = self.mask_decoder(pyramid)
        x_l = extract_local_features(x_mask, self.cfg.pool, self.cfg.pool_size) if with_local else None
        return FrameFeatures(pyramid, x_mask, x_l)

    def decode(self, features: FrameFeatures, q0: QuerySet | None = None) -> DecodeResult:
        with self._lock:
            self.decoder_invocations += 1
        q0 = q0 if q0 is not None else self.instance_decoder.initial_queries()
        return dual_decode(q0, features.x_g, features.x_l, self.instance_decoder)

    def predict(self, q: QuerySet, features: FrameFeatures) -> tuple[InstancePrediction, Tensor]:
        prediction = predict_heads(q, self.instance_decoder)
        return prediction, segment(prediction.kernels, features.x_mask)

    def forward(self, image: Tensor) -> FrameOutput:
        features = self.extract(image)
        decoded = self.decode(features)
        prediction, masks = self.predict(decoded.q_final, features)
        return FrameOutput(features, decoded, prediction, masks)

    def pass_queries(self, passing: QuerySet, features: FrameFeatures) -> tuple[InstancePrediction, Tensor]:
        """Run only the last decoder stage on ``features`` starting from queries of another frame."""
        q = self.instance_decoder.run_last_stage(passing, features.x_g, features.x_l)
        return self.predict(q, features)

    def param_groups(self) -> dict[str, list[Tensor]]:
        """Backbone parameters separately (they train at a reduced rate)."""
        backbone = [p for _, p in self.backbone.named_parameters()]
        ids = {id(p) for p in backbone}
        return {"backbone": backbone, "head": [p for p in self.parameters() if id(p) not in ids]}
