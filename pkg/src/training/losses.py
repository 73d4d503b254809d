"""
Training objective: L = lambda_c * L_cls + lambda_mask * L_mask + lambda_obj * L_obj.

Classification uses the sigmoid focal loss, masks use dice plus per-pixel BCE on the
matched pairs, and the objectness head regresses the IoU of each query's binarized
mask with its matched ground truth. The temporal query-passing loss reuses the mask
terms on masks produced from queries of an earlier frame.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from src.errors import ArgumentError, ShapeError
from src.tensor import Tensor, ops
from src.training.matching import Assignment, hungarian_match, matching_cost

DICE_EPS = 1e-6


@dataclass
class GroundTruthSet:
    """Binary stride-8 instance masks ``[G, h, w]`` with categories and optional track IDs."""

    masks: np.ndarray
    categories: np.ndarray
    track_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        self.categories = np.asarray(self.categories, dtype=np.int64).reshape(-1)
        if self.masks.ndim != 3:
            raise ShapeError(f"ground-truth masks must be [G, h, w], got {self.masks.shape}")
        if len(self.categories) != self.masks.shape[0]:
            raise ShapeError(f"{self.masks.shape[0]} masks but {len(self.categories)} categories")
        if np.any(self.masks > 1):
            raise ArgumentError("ground-truth masks must be binary")
        if np.any(self.categories < 0):
            raise ArgumentError("category IDs must be non-negative")
        if self.track_ids is not None:
            self.track_ids = np.asarray(self.track_ids, dtype=np.int64).reshape(-1)
            if len(self.track_ids) != len(self.categories):
                raise ShapeError(f"{len(self.categories)} instances but {len(self.track_ids)} track IDs")
            if len(set(self.track_ids.tolist())) != len(self.track_ids):
                raise ArgumentError("track IDs must be unique within a frame")

    def __len__(self) -> int:
        return len(self.categories)

    @property
    def size(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]

    @classmethod
    def empty(cls, h: int, w: int) -> "GroundTruthSet":
        return cls(np.zeros((0, h, w), dtype=np.uint8), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def flipped(self) -> "GroundTruthSet":
        return GroundTruthSet(self.masks[:, :, ::-1].copy(), self.categories, self.track_ids)


@dataclass(frozen=True)
class LossWeights:
    cls: float = 2.0
    mask: float = 2.0
    obj: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self) -> None:
        for name in ("cls", "mask", "obj", "focal_alpha", "focal_gamma"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"loss weight {name} must be non-negative")
        if self.focal_alpha > 1:
            raise ArgumentError(f"focal_alpha must lie in [0, 1], got {self.focal_alpha}")


@dataclass
class LossTargets:
    """Assignment and IoU targets; constants with respect to the loss gradient."""

    assignment: Assignment
    iou_targets: np.ndarray


@dataclass
class LossBreakdown:
    total: Tensor
    l_cls: Tensor
    l_mask: Tensor
    l_obj: Tensor
    targets: LossTargets = field(repr=False)

    def values(self) -> tuple[float, float, float, float]:
        return self.total.item(), self.l_cls.item(), self.l_mask.item(), self.l_obj.item()


def _normalizer(assignment: Assignment) -> float:
    return float(max(1, len(assignment)))


def focal_targets(num_queries: int, num_classes: int, assignment: Assignment, gt: GroundTruthSet) -> np.ndarray:
    targets = np.zeros((num_queries, num_classes))
    for i, j in assignment.pairs:
        c = int(gt.categories[j])
        if c >= num_classes:
            raise ArgumentError(f"category {c} outside the {num_classes} configured classes")
        targets[i, c] = 1.0
    return targets


def focal_loss(
    logits: Tensor, assignment: Assignment, gt: GroundTruthSet, alpha: float = 0.25, gamma: float = 2.0
) -> Tensor:
    """Sigmoid focal loss summed over all queries and classes, normalized by the match count."""
    t = focal_targets(logits.shape[0], logits.shape[1], assignment, gt).astype(logits.dtype)
    ce = ops.binary_cross_entropy_with_logits(logits, t)
    p = ops.sigmoid(logits)
    # 1 - p_t = p + t - 2pt, which rounding can push below 0 in float32
    one_minus_pt = ops.clip(ops.sub(ops.add(p, t), ops.scale(ops.mul(p, t), 2.0)), 0.0, 1.0)
    alpha_t = (alpha * t + (1 - alpha) * (1 - t)).astype(logits.dtype)
    per_element = ops.mul(ops.mul(ce, ops.power(one_minus_pt, gamma)), alpha_t)
    return ops.scale(ops.sum(per_element), 1.0 / _normalizer(assignment))


def dice_loss(pred: Tensor, gt_mask) -> Tensor:
    """1 - (2 sum(pg) + eps) / (sum(p) + sum(g) + eps) per ``[h, w]`` pair, summed over leading pairs."""
    g = np.asarray(gt_mask, dtype=pred.dtype)
    if pred.shape != g.shape:
        raise ShapeError(f"dice_loss: prediction {pred.shape} != target {g.shape}")
    axes = (-2, -1)
    inter = ops.sum(ops.mul(pred, g), axis=axes)
    numer = ops.add(ops.scale(inter, 2.0), DICE_EPS)
    denom = ops.add(ops.sum(pred, axis=axes), g.sum(axis=axes) + DICE_EPS)
    return ops.sum(ops.sub(1.0, ops.div(numer, denom)))


def bce_mask_loss(mask_logits: Tensor, gt_mask) -> Tensor:
    """Per-pixel BCE on logits, averaged per ``[h, w]`` pair and summed over leading pairs."""
    g = np.asarray(gt_mask, dtype=mask_logits.dtype)
    if mask_logits.shape != g.shape:
        raise ShapeError(f"bce_mask_loss: prediction {mask_logits.shape} != target {g.shape}")
    bce = ops.binary_cross_entropy_with_logits(mask_logits, g)
    return ops.sum(ops.mean(bce, axis=(-2, -1)))


def mask_loss(mask_logits: Tensor, assignment: Assignment, gt: GroundTruthSet) -> Tensor:
    """Dice plus BCE over matched pairs, normalized by the match count."""
    if mask_logits.shape[1:] != gt.size:
        raise ShapeError(f"mask logits {mask_logits.shape[1:]} do not match ground truth {gt.size}")
    if not len(assignment):
        return ops.scale(ops.sum(mask_logits), 0.0)
    matched = ops.index(mask_logits, assignment.queries)
    g = gt.masks[assignment.targets]
    total = ops.add(dice_loss(ops.sigmoid(matched), g), bce_mask_loss(matched, g))
    return ops.scale(total, 1.0 / _normalizer(assignment))


def mask_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(pred, gt).sum() / union)


def iou_targets(mask_logits: np.ndarray, assignment: Assignment, gt: GroundTruthSet) -> np.ndarray:
    """IoU of each matched query's mask binarized at 0.5 with its target; 0 for unmatched queries."""
    targets = np.zeros(mask_logits.shape[0])
    for i, j in assignment.pairs:
        targets[i] = mask_iou(mask_logits[i] > 0, gt.masks[j])
    return targets


def objectness_loss(objectness: Tensor, targets: np.ndarray) -> Tensor:
    """Mean BCE between sigmoid(objectness) and the IoU targets over all queries."""
    t = np.asarray(targets, dtype=objectness.dtype).reshape(objectness.shape)
    return ops.mean(ops.binary_cross_entropy_with_logits(objectness, t))


def compute_targets(class_logits: Tensor, mask_logits: Tensor, gt: GroundTruthSet) -> LossTargets:
    if mask_logits.shape[1:] != gt.size:
        raise ShapeError(f"mask logits {mask_logits.shape[1:]} do not match ground truth {gt.size}")
    cost = matching_cost(class_logits.data, expit(mask_logits.data), gt.masks, gt.categories)
    assignment = hungarian_match(cost)
    return LossTargets(assignment, iou_targets(mask_logits.data, assignment, gt))


def combine_losses(l_cls, l_mask, l_obj, w: LossWeights = LossWeights()):
    """Weighted sum of the three components; works on floats and tensors alike."""
    if isinstance(l_cls, Tensor):
        return ops.add(ops.add(ops.scale(l_cls, w.cls), ops.scale(l_mask, w.mask)), ops.scale(l_obj, w.obj))
    return w.cls * l_cls + w.mask * l_mask + w.obj * l_obj


def total_loss(
    prediction,
    mask_logits: Tensor,
    gt: GroundTruthSet,
    w: LossWeights = LossWeights(),
    targets: LossTargets | None = None,
) -> LossBreakdown:
    """Full objective for one frame. ``prediction`` is an InstancePrediction."""
    if targets is None:
        targets = compute_targets(prediction.class_logits, mask_logits, gt)
    l_cls = focal_loss(prediction.class_logits, targets.assignment, gt, w.focal_alpha, w.focal_gamma)
    l_mask = mask_loss(mask_logits, targets.assignment, gt)
    l_obj = objectness_loss(prediction.objectness, targets.iou_targets)
    return LossBreakdown(combine_losses(l_cls, l_mask, l_obj, w), l_cls, l_mask, l_obj, targets)


def transport_assignment(assignment: Assignment, gt_tpd: GroundTruthSet, gt_t: GroundTruthSet | None) -> Assignment:
    """Keep the frame t+delta pairs; with ``gt_t`` given, only those whose track exists at frame t."""
    if gt_tpd.track_ids is None or (gt_t is not None and gt_t.track_ids is None):
        raise ArgumentError("query passing needs track IDs on the ground truth")
    if gt_t is None:
        return assignment
    alive = set(gt_t.track_ids.tolist())
    pairs = [(i, j) for i, j in assignment.pairs if int(gt_tpd.track_ids[j]) in alive]
    dropped = [i for i, j in assignment.pairs if (i, j) not in pairs]
    return Assignment(pairs=pairs, unmatched=sorted(assignment.unmatched + dropped))


def temporal_query_passing_loss(
    net,
    frame_t,
    frame_tpd,
    gt_tpd: GroundTruthSet,
    gt_t: GroundTruthSet | None = None,
    targets: LossTargets | None = None,
) -> Tensor:
    """Mask loss on masks decoded from frame t's passing queries with frame t+delta features.

    ``frame_t`` and ``frame_tpd`` are FrameOutputs of ``net``; the passed masks share
    frame t+delta's assignment, so query i keeps the ground truth it was matched to there.
    """
    if targets is None:
        targets = compute_targets(frame_tpd.prediction.class_logits, frame_tpd.mask_logits, gt_tpd)
    assignment = transport_assignment(targets.assignment, gt_tpd, gt_t)
    _, passed_masks = net.pass_queries(frame_t.decode.passing, frame_tpd.features)
    return mask_loss(passed_masks, assignment, gt_tpd)
