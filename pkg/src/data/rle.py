"""
Run-length codec for binary masks.

A mask of size HxW is written as ``HxW c0,c1,c2,...``: alternating run lengths over
the row-major pixels, starting with a (possibly empty) run of zeros.
"""

import numpy as np

from src.errors import ArgumentError


def rle_encode(mask: np.ndarray) -> str:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ArgumentError(f"rle_encode expects a 2-D mask, got shape {mask.shape}")
    flat = mask.reshape(-1).astype(bool)
    h, w = mask.shape
    if flat.size == 0:
        return f"{h}x{w} 0"
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return f"{h}x{w} " + ",".join(str(r) for r in runs)


def rle_decode(size: str, counts: str) -> np.ndarray:
    try:
        h, w = (int(v) for v in size.lower().split("x"))
        runs = [int(c) for c in counts.split(",")]
    except ValueError:
        raise ArgumentError(f"malformed RLE {size} {counts!r}") from None
    if h < 0 or w < 0 or any(r < 0 for r in runs) or sum(runs) != h * w:
        raise ArgumentError(f"RLE runs sum to {sum(runs)}, expected {h * w}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(h, w)
