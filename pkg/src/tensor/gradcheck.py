"""
Central finite-difference checks for analytic gradients.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from src.tensor.tensor import ComputationTape, Tensor, backward, no_grad

RTOL = 1e-5
ATOL = 1e-8


@dataclass
class GradCheckResult:
    checked: int
    failures: list[tuple[str, tuple[int, ...], float, float]]
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return not self.failures


def element_ok(analytic: float, numeric: float, rtol: float = RTOL, atol: float = ATOL) -> bool:
    diff = abs(analytic - numeric)
    if diff <= atol:
        return True
    return diff / max(abs(analytic), abs(numeric)) < rtol


def numerical_gradient(
    fn: Callable[[], Tensor], tensor: Tensor, positions: Iterable[tuple[int, ...]], eps: float = 1e-4
) -> dict[tuple[int, ...], float]:
    """Central differences of the scalar ``fn()`` with respect to selected entries of ``tensor``."""
    result = {}
    with no_grad():
        for pos in positions:
            original = tensor.data[pos]
            tensor.data[pos] = original + eps
            plus = fn().item()
            tensor.data[pos] = original - eps
            minus = fn().item()
            tensor.data[pos] = original
            result[pos] = (plus - minus) / (2 * eps)
    return result


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[tuple[str, Tensor]],
    eps: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckResult:
    """Compare tape gradients of ``fn`` with central differences.

    With ``max_entries`` set, each tensor is probed at its largest-magnitude
    analytic entries plus random ones, up to that many positions.
    """
    for _, t in tensors:
        t.zero_grad()
    with ComputationTape() as tape:
        loss = fn()
    backward(tape, loss)

    rng = np.random.default_rng(seed)
    failures = []
    checked = 0
    worst = 0.0
    for name, t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        positions = _positions(analytic, max_entries, rng)
        numeric = numerical_gradient(fn, t, positions, eps)
        for pos, n in numeric.items():
            a = float(analytic[pos])
            checked += 1
            denom = max(abs(a), abs(n))
            if denom > 0:
                worst = max(worst, abs(a - n) / denom if abs(a - n) > ATOL else 0.0)
            if not element_ok(a, n):
                failures.append((name, pos, a, n))
    return GradCheckResult(checked=checked, failures=failures, max_rel_error=worst)


def _positions(analytic: np.ndarray, max_entries: int | None, rng) -> list[tuple[int, ...]]:
    if max_entries is None or analytic.size <= max_entries:
        return [tuple(int(i) for i in p) for p in np.ndindex(*analytic.shape)]
    flat = np.abs(analytic).reshape(-1)
    top = [int(i) for i in np.argsort(-flat, kind="stable")[: max(1, max_entries - 1)]]
    taken = set(top)
    rest = [i for i in range(flat.size) if i not in taken]
    if rest and len(top) < max_entries:
        top.append(int(rng.choice(rest)))
    return [tuple(int(i) for i in np.unravel_index(j, analytic.shape)) for j in top]
