"""
Two-phase training on synthetic clips.

The image phase trains on independent frames. The video phase continues from those
weights at a reduced learning rate on frame pairs (t, t+delta) and adds the temporal
query-passing mask loss. Every iteration is logged as ``iter loss l_cls l_mask l_obj``.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from src.errors import ConfigError
from src.tensor import ComputationTape, Tensor, backward, ops
from src.training.callbacks import NullCallback, TrainingCallback
from src.training.losses import (
    GroundTruthSet,
    LossWeights,
    combine_losses,
    temporal_query_passing_loss,
    total_loss,
)
from src.training.optim import AdamW, OptimConfig


@dataclass(frozen=True)
class TrainConfig:
    image_iterations: int = 200
    video_iterations: int = 100
    video_lr_scale: float = 0.5
    min_delta: int = 1
    max_delta: int = 5
    flip: bool = True
    temporal: bool = True
    train_clips: int = 8
    log_every: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_iterations < 0 or self.video_iterations < 0:
            raise ConfigError("iteration counts must be non-negative")
        if not 0 <= self.min_delta <= self.max_delta:
            raise ConfigError(f"delta range [{self.min_delta}, {self.max_delta}] is empty")
        if self.video_lr_scale <= 0 or self.train_clips < 1 or self.log_every < 1:
            raise ConfigError("video_lr_scale, train_clips and log_every must be positive")

    @property
    def iterations(self) -> int:
        return self.image_iterations + self.video_iterations


@dataclass
class IterationRecord:
    iteration: int
    phase: str
    loss: float
    l_cls: float
    l_mask: float
    l_obj: float

    def to_line(self) -> str:
        return f"{self.iteration} {self.loss!r} {self.l_cls!r} {self.l_mask!r} {self.l_obj!r}"


def flip_frame(frame: Tensor) -> Tensor:
    return Tensor(frame.data[:, :, ::-1].copy())


class Trainer:
    def __init__(
        self,
        net,
        clips: list,
        optim_cfg: OptimConfig = OptimConfig(),
        train_cfg: TrainConfig = TrainConfig(),
        weights: LossWeights = LossWeights(),
        callback: TrainingCallback | None = None,
    ) -> None:
        if not clips:
            raise ConfigError("training needs at least one clip")
        self.net = net
        self.clips = clips
        self.optim_cfg = optim_cfg
        self.cfg = train_cfg
        self.weights = weights
        self.callback = callback or NullCallback()
        self.rng = np.random.default_rng(train_cfg.seed)
        self.history: list[IterationRecord] = []

    def _maybe_flip(self, frames: list[Tensor], gts: list[GroundTruthSet]):
        if self.cfg.flip and self.rng.random() < 0.5:
            return [flip_frame(f) for f in frames], [g.flipped() for g in gts]
        return frames, gts

    def sample_image(self):
        clip = self.clips[int(self.rng.integers(len(self.clips)))]
        t = int(self.rng.integers(len(clip.frames)))
        (frame,), (gt,) = self._maybe_flip([clip.frames[t]], [clip.gt[t]])
        return frame, gt

    def sample_pair(self):
        """Two frames of one clip, delta ~ U[min_delta, max_delta] capped by the clip length."""
        clip = self.clips[int(self.rng.integers(len(self.clips)))]
        delta = int(self.rng.integers(self.cfg.min_delta, self.cfg.max_delta + 1))
        delta = min(delta, len(clip.frames) - 1)
        t = int(self.rng.integers(len(clip.frames) - delta))
        frames, gts = self._maybe_flip([clip.frames[t], clip.frames[t + delta]], [clip.gt[t], clip.gt[t + delta]])
        return frames[0], gts[0], frames[1], gts[1]

    def image_loss(self, image: Tensor, gt: GroundTruthSet):
        out = self.net.forward(image)
        return total_loss(out.prediction, out.mask_logits, gt, self.weights)

    def video_loss(self, frame_t: Tensor, gt_t: GroundTruthSet, frame_tpd: Tensor, gt_tpd: GroundTruthSet):
        """Both frames' objectives plus lambda_mask times the passing loss."""
        out_t = self.net.forward(frame_t)
        out_tpd = self.net.forward(frame_tpd)
        loss_t = total_loss(out_t.prediction, out_t.mask_logits, gt_t, self.weights)
        loss_tpd = total_loss(out_tpd.prediction, out_tpd.mask_logits, gt_tpd, self.weights)
        l_cls = ops.add(loss_t.l_cls, loss_tpd.l_cls)
        l_mask = ops.add(loss_t.l_mask, loss_tpd.l_mask)
        l_obj = ops.add(loss_t.l_obj, loss_tpd.l_obj)
        if self.cfg.temporal:
            passing = temporal_query_passing_loss(self.net, out_t, out_tpd, gt_tpd, gt_t, loss_tpd.targets)
            l_mask = ops.add(l_mask, passing)
        return combine_losses(l_cls, l_mask, l_obj, self.weights), l_cls, l_mask, l_obj

    def _step(self, optimizer: AdamW, iteration: int, phase: str, total: int, compute) -> IterationRecord:
        lr = optimizer.lr_at(iteration, total)
        optimizer.zero_grad()
        with ComputationTape() as tape:
            loss, l_cls, l_mask, l_obj = compute()
        if not np.isfinite(loss.item()):
            message = f"{phase} iteration {iteration}: loss is not finite ({loss.item()})"
            self.callback.on_error(message)
            raise FloatingPointError(message)
        backward(tape, loss)
        optimizer.step(lr)
        return IterationRecord(iteration, phase, loss.item(), l_cls.item(), l_mask.item(), l_obj.item())

    def _phase(self, name: str, iterations: int, lr_scale: float, compute, start: int, log: TextIO | None):
        if iterations == 0:
            return
        self.callback.on_phase(name, iterations)
        optimizer = AdamW(self.net.param_groups(), self.optim_cfg, lr_scale=lr_scale)
        for i in range(iterations):
            record = self._step(optimizer, i, name, iterations, compute)
            record.iteration = start + i
            self.history.append(record)
            if log is not None:
                log.write(record.to_line() + "\n")
            self.callback.on_iteration(record)
            if (i + 1) % self.cfg.log_every == 0 or i + 1 == iterations:
                self.callback.on_progress(f"{name} {i + 1}/{iterations} loss={record.loss:.4f}")

    def train(self, metrics_path: str | Path | None = None) -> list[IterationRecord]:
        def image_compute():
            breakdown = self.image_loss(*self.sample_image())
            return breakdown.total, breakdown.l_cls, breakdown.l_mask, breakdown.l_obj

        def video_compute():
            return self.video_loss(*self.sample_pair())

        log = open(metrics_path, "w") if metrics_path is not None else None
        try:
            self._phase("image", self.cfg.image_iterations, 1.0, image_compute, 0, log)
            self._phase(
                "video",
                self.cfg.video_iterations,
                self.cfg.video_lr_scale,
                video_compute,
                self.cfg.image_iterations,
                log,
            )
        finally:
            if log is not None:
                log.close()
        return self.history
