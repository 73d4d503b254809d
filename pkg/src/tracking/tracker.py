"""
Online tracker: kernel reuse inside T-frame clips and kernel association across keyframes.

On a keyframe the full network runs and the new kernels inherit track IDs from the
previous keyframe's kernels by cosine similarity. The following T-1 frames only run
the backbone and mask decoder and segment with the keyframe kernels, reusing its
scores and categories. Instances are emitted by score threshold alone.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import ArgumentError, ConfigError, ShapeError, TrackStateError
from src.model.instance_decoder import segment
from src.tensor import Tensor, no_grad
from src.training.matching import hungarian_match
from src.utils.logger import logger

NORM_EPS = 1e-12


@dataclass(frozen=True)
class TrackerConfig:
    reuse_interval: int = 3
    score_threshold: float = 0.4
    association: str = "hungarian"
    new_track_threshold: float = 0.1
    strict: bool = False

    def __post_init__(self) -> None:
        if self.reuse_interval < 1:
            raise ConfigError(f"reuse interval T must be >= 1, got {self.reuse_interval}")
        if not 0 <= self.score_threshold <= 1:
            raise ConfigError(f"score_threshold must lie in [0, 1], got {self.score_threshold}")
        if self.association != "hungarian":
            raise ConfigError(f"unknown association mode {self.association!r}")


@dataclass(frozen=True)
class TrackState:
    keyframe_kernels: np.ndarray | None = None
    keyframe_scores: np.ndarray | None = None
    keyframe_categories: np.ndarray | None = None
    track_ids: tuple[int, ...] = ()
    frames_since_keyframe: int = 0
    next_free_id: int = 1
    frame_index: int = 0

    @classmethod
    def initial(cls) -> "TrackState":
        return cls()

    @property
    def initialized(self) -> bool:
        return self.keyframe_kernels is not None


@dataclass
class TrackedInstance:
    track_id: int
    category: int
    score: float
    mask: np.ndarray
    logits: np.ndarray | None = None


@dataclass
class TrackedFrameResult:
    frame_index: int
    instances: list[TrackedInstance] = field(default_factory=list)
    keyframe: bool = True
    mask_size: tuple[int, int] | None = None

    def __len__(self) -> int:
        return len(self.instances)


@dataclass
class SequenceResult:
    frames: list[TrackedFrameResult]
    state: TrackState
    decoder_invocations: int


def kernel_similarity(prev: np.ndarray, curr: np.ndarray) -> np.ndarray:
    """Cosine similarity S[i, j] between previous kernel i and current kernel j."""
    prev = np.asarray(prev, dtype=np.float64)
    curr = np.asarray(curr, dtype=np.float64)
    if prev.ndim != 2 or curr.ndim != 2 or prev.shape[1] != curr.shape[1]:
        raise ShapeError(f"kernel widths differ: {prev.shape} vs {curr.shape}")
    a = prev / np.maximum(np.linalg.norm(prev, axis=1, keepdims=True), NORM_EPS)
    b = curr / np.maximum(np.linalg.norm(curr, axis=1, keepdims=True), NORM_EPS)
    return a @ b.T


def associate_kernels(prev: np.ndarray, curr: np.ndarray) -> np.ndarray:
    """``match[j] = i``: current query j inherits the track of previous query i."""
    prev = np.asarray(getattr(prev, "data", prev))
    curr = np.asarray(getattr(curr, "data", curr))
    similarity = kernel_similarity(prev, curr)
    if prev.shape[0] != curr.shape[0]:
        raise ShapeError(f"query counts differ: {prev.shape[0]} vs {curr.shape[0]}")
    match = np.empty(curr.shape[0], dtype=np.int64)
    for i, j in hungarian_match(-similarity).pairs:
        match[j] = i
    return match


def filter_predictions(result: TrackedFrameResult, threshold: float) -> TrackedFrameResult:
    """Keep instances scoring above ``threshold``; no cross-instance suppression."""
    kept = [inst for inst in result.instances if inst.score > threshold]
    return replace(result, instances=kept)


def _instances(track_ids, categories, scores, logits: np.ndarray) -> list[TrackedInstance]:
    return [
        TrackedInstance(
            track_id=int(track_ids[i]),
            category=int(categories[i]),
            score=float(scores[i]),
            mask=logits[i] > 0,
            logits=logits[i],
        )
        for i in range(len(track_ids))
    ]


def _assign_ids(state: TrackState, kernels: np.ndarray, cfg: TrackerConfig) -> tuple[tuple[int, ...], int]:
    n = kernels.shape[0]
    if not state.initialized:
        return tuple(range(state.next_free_id, state.next_free_id + n)), state.next_free_id + n

    similarity = kernel_similarity(state.keyframe_kernels, kernels)
    match = associate_kernels(state.keyframe_kernels, kernels)
    next_free = state.next_free_id
    ids = []
    for j, i in enumerate(match):
        if cfg.strict and similarity[i, j] < cfg.new_track_threshold:
            ids.append(next_free)
            next_free += 1
        else:
            ids.append(state.track_ids[i])
    return tuple(ids), next_free


def process_frame(frame: Tensor, state: TrackState, net, cfg: TrackerConfig) -> tuple[TrackedFrameResult, TrackState]:
    if state.frame_index > 0 and not state.initialized:
        raise TrackStateError(f"frame {state.frame_index} reached with no keyframe state")
    keyframe = not state.initialized or state.frames_since_keyframe == 0

    with no_grad():
        if keyframe:
            out = net.forward(frame)
            kernels = out.prediction.kernels.data
            scores = out.prediction.scores
            categories = out.prediction.categories
            logits = out.mask_logits.data
            track_ids, next_free = _assign_ids(state, kernels, cfg)
            state = replace(
                state,
                keyframe_kernels=kernels,
                keyframe_scores=scores,
                keyframe_categories=categories,
                track_ids=track_ids,
                next_free_id=next_free,
            )
        else:
            features = net.extract(frame, with_local=False)
            logits = segment(Tensor(state.keyframe_kernels), features.x_mask).data

    result = TrackedFrameResult(
        frame_index=state.frame_index,
        instances=_instances(state.track_ids, state.keyframe_categories, state.keyframe_scores, logits),
        keyframe=keyframe,
        mask_size=logits.shape[1:],
    )
    state = replace(
        state,
        frames_since_keyframe=(state.frames_since_keyframe + 1) % cfg.reuse_interval,
        frame_index=state.frame_index + 1,
    )
    return filter_predictions(result, cfg.score_threshold), state


def run_sequence(frames: list[Tensor], net, cfg: TrackerConfig, state: TrackState | None = None) -> SequenceResult:
    if not frames:
        raise ArgumentError("run_sequence needs at least one frame")
    shape = frames[0].shape
    for t, frame in enumerate(frames):
        if frame.shape != shape:
            raise ShapeError(f"frame {t} has shape {frame.shape}, expected {shape}")

    state = state or TrackState.initial()
    results = []
    for frame in frames:
        result, state = process_frame(frame, state, net, cfg)
        results.append(result)
    invocations = sum(r.keyframe for r in results)
    logger.debug(f"tracked {len(frames)} frames with T={cfg.reuse_interval}: {invocations} decoder runs")
    return SequenceResult(frames=results, state=state, decoder_invocations=invocations)
