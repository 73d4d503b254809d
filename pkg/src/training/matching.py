"""
Bipartite label assignment between predicted queries and ground-truth instances.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from src.errors import ArgumentError, ShapeError

COST_ALPHA = 0.8
COST_BETA = 0.8
DICE_EPS = 1e-6


@dataclass
class Assignment:
    """Matched (query, ground truth) pairs sorted by query, plus the unmatched queries."""

    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched: list[int] = field(default_factory=list)

    @property
    def queries(self) -> np.ndarray:
        return np.array([i for i, _ in self.pairs], dtype=np.int64)

    @property
    def targets(self) -> np.ndarray:
        return np.array([j for _, j in self.pairs], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.pairs)

    def target_of(self, query: int) -> int | None:
        for i, j in self.pairs:
            if i == query:
                return j
        return None


def hungarian_match(cost) -> Assignment:
    """Minimum-total-cost injective assignment of min(N, G) pairs."""
    cost = np.asarray(getattr(cost, "data", cost), dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ArgumentError("cost matrix contains NaN or infinite entries")
    n, g = cost.shape
    if n == 0 or g == 0:
        return Assignment(pairs=[], unmatched=list(range(n)))

    rows, cols = linear_sum_assignment(cost)
    pairs = sorted((int(i), int(j)) for i, j in zip(rows, cols))
    matched = {i for i, _ in pairs}
    return Assignment(pairs=pairs, unmatched=[i for i in range(n) if i not in matched])


def dice_score(masks: np.ndarray, gt_masks: np.ndarray) -> np.ndarray:
    """Pairwise 2|m.g| / (|m| + |g| + eps) for ``[N, H, W]`` against ``[G, H, W]``."""
    m = masks.reshape(masks.shape[0], -1)
    g = gt_masks.reshape(gt_masks.shape[0], -1).astype(m.dtype)
    inter = m @ g.T
    return 2 * inter / (m.sum(1)[:, None] + g.sum(1)[None, :] + DICE_EPS)


def matching_cost(
    class_logits: np.ndarray,
    mask_probs: np.ndarray,
    gt_masks: np.ndarray,
    gt_categories: np.ndarray,
    alpha: float = COST_ALPHA,
    beta: float = COST_BETA,
) -> np.ndarray:
    """cost[i, j] = -p_i(c_j)^alpha * dice(m_i, g_j)^beta; masks are post-sigmoid."""
    class_logits = np.asarray(getattr(class_logits, "data", class_logits), dtype=np.float64)
    mask_probs = np.asarray(getattr(mask_probs, "data", mask_probs), dtype=np.float64)
    if mask_probs.shape[1:] != gt_masks.shape[1:]:
        raise ShapeError(f"mask size {mask_probs.shape[1:]} != ground-truth size {gt_masks.shape[1:]}")
    n = class_logits.shape[0]
    if len(gt_categories) == 0:
        return np.zeros((n, 0))
    probs = expit(class_logits)[:, np.asarray(gt_categories, dtype=np.int64)]
    dice = dice_score(mask_probs, gt_masks)
    return -(probs**alpha) * (dice**beta)
