"""
AdamW with per-group learning-rate multipliers and a step-decay schedule.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import ArgumentError
from src.tensor import Tensor


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    backbone_multiplier: float = 0.5
    decay_at: tuple[float, ...] = (0.78, 0.93)
    decay_factor: float = 0.1

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.weight_decay < 0 or self.eps <= 0:
            raise ArgumentError("lr and eps must be positive, weight_decay non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ArgumentError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.backbone_multiplier < 0 or not (0 < self.decay_factor <= 1):
            raise ArgumentError("backbone_multiplier must be >= 0 and decay_factor in (0, 1]")
        if any(not 0 < f <= 1 for f in self.decay_at) or list(self.decay_at) != sorted(self.decay_at):
            raise ArgumentError(f"decay_at must be increasing fractions in (0, 1], got {self.decay_at}")


def step_decay(base_lr: float, iteration: int, total: int, milestones=(0.78, 0.93), factor: float = 0.1) -> float:
    """Learning rate at ``iteration`` (0-based) with a x``factor`` drop at each milestone fraction."""
    lr = base_lr
    for fraction in milestones:
        if iteration >= int(round(fraction * total)):
            lr *= factor
    return lr


class AdamW:
    """Adam with decoupled weight decay over named parameter groups."""

    def __init__(self, groups: dict[str, list[Tensor]], cfg: OptimConfig, lr_scale: float = 1.0) -> None:
        self.cfg = cfg
        self.lr_scale = lr_scale
        self.groups = groups
        self.multipliers = {name: (cfg.backbone_multiplier if name == "backbone" else 1.0) for name in groups}
        self.steps = 0
        self._m = {id(p): np.zeros_like(p.data) for ps in groups.values() for p in ps}
        self._v = {id(p): np.zeros_like(p.data) for ps in groups.values() for p in ps}

    def zero_grad(self) -> None:
        for params in self.groups.values():
            for p in params:
                p.zero_grad()

    def lr_at(self, iteration: int, total: int) -> float:
        return step_decay(self.cfg.lr * self.lr_scale, iteration, total, self.cfg.decay_at, self.cfg.decay_factor)

    def step(self, lr: float) -> None:
        cfg = self.cfg
        self.steps += 1
        bias1 = 1 - cfg.beta1**self.steps
        bias2 = 1 - cfg.beta2**self.steps
        for name, params in self.groups.items():
            group_lr = lr * self.multipliers[name]
            for p in params:
                if p.grad is None:
                    continue
                g = p.grad
                m = self._m[id(p)]
                v = self._v[id(p)]
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                update = (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
                p.data *= 1 - group_lr * cfg.weight_decay
                p.data -= (group_lr * update).astype(p.dtype, copy=False)
