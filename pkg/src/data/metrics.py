"""
Clip-level evaluation: matched-mask IoU, track consistency and AP-lite.

Predictions and ground truth are matched per frame by Hungarian matching on mask
IoU; a pair counts when its IoU is at least 0.5. AP-lite is the 11-point
interpolated average precision at that threshold over all pooled detections, with a
detection correct when it is matched and its category agrees.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from src.errors import ArgumentError
from src.training.losses import GroundTruthSet
from src.training.matching import hungarian_match
from src.tracking.tracker import TrackedFrameResult, TrackedInstance
from src.utils.parallel import ordered_map

IOU_THRESHOLD = 0.5
RECALL_POINTS = np.linspace(0.0, 1.0, 11)


@dataclass
class EvalReport:
    mean_iou: float = 0.0
    track_consistency: float = 0.0
    ap_lite: float = 0.0
    misses: int = 0
    false_positives: int = 0
    matched: int = 0
    num_gt: int = 0
    num_pred: int = 0

    def to_lines(self) -> list[str]:
        return [f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}" for key, value in asdict(self).items()]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClipMatches:
    """Per-clip matching outcome, pooled by ``summarize``."""

    ious: list[float] = field(default_factory=list)
    detections: list[tuple[float, int, int, bool]] = field(default_factory=list)  # score, frame, track, correct
    tracks: dict[int, list[int]] = field(default_factory=dict)  # gt track -> matched predicted ids
    num_gt: int = 0
    num_pred: int = 0


def _gt_sets(gt) -> list[GroundTruthSet]:
    return list(gt.gt) if hasattr(gt, "gt") else list(gt)


def iou_matrix(pred_masks: list[np.ndarray], gt_masks: np.ndarray) -> np.ndarray:
    if not pred_masks or len(gt_masks) == 0:
        return np.zeros((len(pred_masks), len(gt_masks)))
    p = np.stack([m.reshape(-1) for m in pred_masks]).astype(np.int64)
    g = gt_masks.reshape(len(gt_masks), -1).astype(np.int64)
    inter = p @ g.T
    union = p.sum(1)[:, None] + g.sum(1)[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def _sorted_instances(result: TrackedFrameResult) -> list[TrackedInstance]:
    return sorted(result.instances, key=lambda inst: (inst.track_id, -inst.score))


def match_clip(pred: list[TrackedFrameResult], gt) -> ClipMatches:
    gts = _gt_sets(gt)
    if len(pred) != len(gts):
        raise ArgumentError(f"{len(pred)} predicted frames but {len(gts)} ground-truth frames")

    out = ClipMatches()
    for t, (result, frame_gt) in enumerate(zip(pred, gts)):
        instances = _sorted_instances(result)
        for inst in instances:
            if inst.mask.shape != frame_gt.size:
                raise ArgumentError(f"frame {t}: mask size {inst.mask.shape} != ground truth {frame_gt.size}")
        out.num_gt += len(frame_gt)
        out.num_pred += len(instances)
        for track_id in frame_gt.track_ids if frame_gt.track_ids is not None else range(len(frame_gt)):
            out.tracks.setdefault(int(track_id), [])

        ious = iou_matrix([inst.mask for inst in instances], frame_gt.masks)
        correct = [False] * len(instances)
        for i, j in hungarian_match(-ious).pairs:
            if ious[i, j] < IOU_THRESHOLD:
                continue
            out.ious.append(float(ious[i, j]))
            correct[i] = instances[i].category == int(frame_gt.categories[j])
            gt_track = int(frame_gt.track_ids[j]) if frame_gt.track_ids is not None else j
            out.tracks[gt_track].append(instances[i].track_id)
        out.detections.extend((inst.score, t, inst.track_id, ok) for inst, ok in zip(instances, correct))
    return out


def ap_lite(detections: list[tuple[float, int, int, bool]], num_gt: int) -> float:
    if num_gt == 0:
        return 1.0 if not detections else 0.0
    ranked = sorted(detections, key=lambda d: (-d[0], d[1], d[2]))
    hits = np.array([d[3] for d in ranked], dtype=np.float64)
    if hits.size == 0:
        return 0.0
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / num_gt
    total = 0.0
    for r in RECALL_POINTS:
        above = precision[recall >= r]
        total += above.max() if above.size else 0.0
    return float(total / len(RECALL_POINTS))


def summarize(clips: list[ClipMatches]) -> EvalReport:
    ious = [iou for c in clips for iou in c.ious]
    detections = [d for c in clips for d in c.detections]
    tracks = [ids for c in clips for ids in c.tracks.values()]
    num_gt = sum(c.num_gt for c in clips)
    num_pred = sum(c.num_pred for c in clips)
    consistent = sum(1 for ids in tracks if ids and len(set(ids)) == 1)
    return EvalReport(
        mean_iou=float(np.mean(ious)) if ious else 0.0,
        track_consistency=consistent / len(tracks) if tracks else 0.0,
        ap_lite=ap_lite(detections, num_gt),
        misses=num_gt - len(ious),
        false_positives=num_pred - len(ious),
        matched=len(ious),
        num_gt=num_gt,
        num_pred=num_pred,
    )


def evaluate_clip(pred: list[TrackedFrameResult], gt) -> EvalReport:
    """Evaluate one clip; ``gt`` is a SynthClip or a list of per-frame GroundTruthSets."""
    return summarize([match_clip(pred, gt)])


def evaluate_clips(preds: list[list[TrackedFrameResult]], gts: list) -> EvalReport:
    if len(preds) != len(gts):
        raise ArgumentError(f"{len(preds)} predicted clips but {len(gts)} ground-truth clips")
    return summarize(ordered_map(lambda pair: match_clip(*pair), list(zip(preds, gts))))
