"""
Seeded synthetic videos of moving geometric shapes.

Each clip holds a fixed set of disks, rectangles and triangles moving with constant
velocity plus a small jitter and bouncing off the borders. Depth order is fixed per
clip and occluded pixels belong to the nearer shape. Ground-truth masks are rendered
at stride 8 by majority vote over each 8x8 block.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from src.errors import ConfigError, GenerationError
from src.tensor import Tensor
from src.training.losses import GroundTruthSet
from src.utils.logger import logger

SHAPES = ("disk", "rectangle", "triangle")
MASK_STRIDE = 8
MAX_DRAWS = 50


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 128
    frames: int = 6
    min_instances: int = 1
    max_instances: int = 4
    shapes: tuple[str, ...] = SHAPES
    min_speed: float = 0.0
    max_speed: float = 4.0
    min_radius: float = 12.0
    max_radius: float = 24.0
    jitter: float = 0.5
    num_classes: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_size <= 0 or self.image_size % 64:
            raise ConfigError(f"image_size must be a positive multiple of 64, got {self.image_size}")
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if not 1 <= self.min_instances <= self.max_instances:
            raise ConfigError(f"instance range [{self.min_instances}, {self.max_instances}] is empty")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ConfigError(f"shapes must be a non-empty subset of {SHAPES}, got {self.shapes}")
        if not 0 <= self.min_speed <= self.max_speed:
            raise ConfigError(f"speed range [{self.min_speed}, {self.max_speed}] is empty")
        if not 4 <= self.min_radius <= self.max_radius:
            raise ConfigError(f"radius range [{self.min_radius}, {self.max_radius}] is empty or below 4")
        if self.jitter < 0 or self.num_classes < 1:
            raise ConfigError("jitter must be >= 0 and num_classes >= 1")


@dataclass
class SynthClip:
    frames: list[Tensor]
    gt: list[GroundTruthSet]
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class _Shape:
    kind: str
    category: int
    color: np.ndarray
    radius: float
    aspect: tuple[float, float]
    pos: np.ndarray
    vel: np.ndarray


def shape_mask(shape: _Shape, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    cy, cx = shape.pos
    r = shape.radius
    if shape.kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if shape.kind == "rectangle":
        return (np.abs(yy - cy) <= r * shape.aspect[0]) & (np.abs(xx - cx) <= r * shape.aspect[1])
    top = cy - r
    return (yy >= top) & (yy <= cy + r) & (np.abs(xx - cx) <= (yy - top) / 2)


def majority_downsample(mask: np.ndarray, stride: int = MASK_STRIDE) -> np.ndarray:
    """Foreground where more than half of the ``stride x stride`` block is foreground."""
    h, w = mask.shape
    blocks = mask.reshape(h // stride, stride, w // stride, stride).sum(axis=(1, 3))
    return (blocks * 2 > stride * stride).astype(np.uint8)


def is_connected(mask: np.ndarray) -> bool:
    """At most one 4-connected component."""
    _, count = ndimage.label(mask)
    return count <= 1


def _spawn(cfg: SynthConfig, rng: np.random.Generator) -> list[_Shape]:
    count = int(rng.integers(cfg.min_instances, cfg.max_instances + 1))
    size = cfg.image_size
    shapes = []
    for _ in range(count):
        kind_idx = int(rng.integers(len(cfg.shapes)))
        kind = cfg.shapes[kind_idx]
        radius = float(rng.uniform(cfg.min_radius, cfg.max_radius))
        aspect = (float(rng.uniform(0.6, 1.0)), float(rng.uniform(0.6, 1.0)))
        pos = rng.uniform(radius, size - radius, size=2)
        speed = float(rng.uniform(cfg.min_speed, cfg.max_speed))
        angle = float(rng.uniform(0, 2 * math.pi))
        vel = np.array([speed * math.sin(angle), speed * math.cos(angle)])
        shapes.append(
            _Shape(
                kind=kind,
                category=SHAPES.index(kind) % cfg.num_classes,
                color=rng.uniform(0.35, 1.0, size=3),
                radius=radius,
                aspect=aspect,
                pos=pos,
                vel=vel,
            )
        )
    return shapes


def _advance(shape: _Shape, size: int, jitter: np.ndarray) -> None:
    moving = bool(np.any(shape.vel != 0))
    shape.pos = shape.pos + shape.vel + (jitter if moving else 0.0)
    lo, hi = shape.radius, size - shape.radius
    for axis in range(2):
        if shape.pos[axis] < lo:
            shape.pos[axis] = min(2 * lo - shape.pos[axis], hi)
            shape.vel[axis] = -shape.vel[axis]
        elif shape.pos[axis] > hi:
            shape.pos[axis] = max(2 * hi - shape.pos[axis], lo)
            shape.vel[axis] = -shape.vel[axis]


def _draw(cfg: SynthConfig, rng: np.random.Generator) -> SynthClip | None:
    size = cfg.image_size
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    shapes = _spawn(cfg, rng)
    depth = rng.permutation(len(shapes))  # painted far to near
    background = (0.1 + 0.05 * rng.random((3, size, size))).astype(np.float32)

    frames: list[Tensor] = []
    gts: list[GroundTruthSet] = []
    seen = np.zeros(len(shapes), dtype=bool)
    for t in range(cfg.frames):
        if t > 0:
            for shape in shapes:
                _advance(shape, size, rng.normal(0, cfg.jitter, size=2))
        labels = np.full((size, size), -1, dtype=np.int64)
        image = background.copy()
        for k in depth:
            region = shape_mask(shapes[k], yy, xx)
            labels[region] = k
            image[:, region] = shapes[k].color[:, None].astype(np.float32)

        masks, categories, track_ids = [], [], []
        for k, shape in enumerate(shapes):
            full = labels == k
            small = majority_downsample(full)
            if not small.any():
                continue
            if not (is_connected(full) and is_connected(small)):
                return None
            seen[k] = True
            masks.append(small)
            categories.append(shape.category)
            track_ids.append(k + 1)
        h = size // MASK_STRIDE
        gts.append(
            GroundTruthSet(
                np.stack(masks) if masks else np.zeros((0, h, h), dtype=np.uint8),
                np.array(categories, dtype=np.int64),
                np.array(track_ids, dtype=np.int64),
            )
        )
        frames.append(Tensor(image))
    if not seen.all():
        return None
    return SynthClip(frames=frames, gt=gts, seed=cfg.seed, meta={"instances": len(shapes)})


def generate_clip(cfg: SynthConfig) -> SynthClip:
    """Render one clip; a deterministic function of ``cfg`` (seed included)."""
    smallest = (2 * cfg.min_radius) ** 2 * 0.5
    if 2 * cfg.max_radius > cfg.image_size:
        raise GenerationError(f"shapes of radius {cfg.max_radius} do not fit a {cfg.image_size}px frame")
    if cfg.min_instances * smallest > cfg.image_size**2:
        raise GenerationError(
            f"{cfg.min_instances} shapes of radius >= {cfg.min_radius} do not fit a {cfg.image_size}px frame"
        )
    for attempt in range(MAX_DRAWS):
        clip = _draw(cfg, np.random.default_rng([cfg.seed, attempt]))
        if clip is not None:
            if attempt:
                logger.debug(f"clip seed={cfg.seed} accepted after {attempt + 1} draws")
            return clip
    raise GenerationError(f"no valid clip for seed {cfg.seed} after {MAX_DRAWS} draws")


def generate_clips(cfg: SynthConfig, count: int, offset: int = 0) -> list[SynthClip]:
    """``count`` clips with seeds ``cfg.seed + offset + i``."""
    return [generate_clip(replace(cfg, seed=cfg.seed + offset + i)) for i in range(count)]
