"""
Clip directories: one tensor file per frame plus a ground-truth text manifest.

``gt.txt`` starts with ``frames <L> <h>x<w>`` followed by one line per visible
instance: ``frame track_id category HxW rle``.
"""

from pathlib import Path

import numpy as np

from src.data.rle import rle_decode, rle_encode
from src.data.synth import SynthClip
from src.errors import ArgumentError, FormatError
from src.tensor.io import SUFFIX, load_tensor, save_tensor
from src.training.losses import GroundTruthSet

GT_MANIFEST = "gt.txt"


def frame_name(index: int) -> str:
    return f"frame_{index:04d}{SUFFIX}"


def write_gt_manifest(gts: list[GroundTruthSet], path: str | Path) -> None:
    if not gts:
        raise ArgumentError("cannot write a manifest for an empty clip")
    h, w = gts[0].size
    lines = [f"frames {len(gts)} {h}x{w}"]
    for t, gt in enumerate(gts):
        for mask, category, track_id in zip(gt.masks, gt.categories, gt.track_ids):
            lines.append(f"{t} {int(track_id)} {int(category)} {rle_encode(mask)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_gt_manifest(path: str | Path) -> list[GroundTruthSet]:
    path = Path(path)
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    header = lines[0].split()
    try:
        if len(header) != 3 or header[0] != "frames":
            raise ValueError
        count = int(header[1])
        h, w = (int(v) for v in header[2].split("x"))
    except ValueError:
        raise FormatError(f"{path}:1: expected 'frames <L> <h>x<w>', got {lines[0]!r}") from None

    per_frame: list[list[tuple[int, int, np.ndarray]]] = [[] for _ in range(count)]
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        try:
            if len(parts) != 5:
                raise ValueError("expected 'frame track_id category HxW rle'")
            t, track_id, category = int(parts[0]), int(parts[1]), int(parts[2])
            mask = rle_decode(parts[3], parts[4])
            if not 0 <= t < count or mask.shape != (h, w):
                raise ValueError(f"frame {t} or mask size {mask.shape} out of range")
        except (ValueError, ArgumentError) as e:
            raise FormatError(f"{path}:{lineno}: {e}") from None
        per_frame[t].append((track_id, category, mask))

    gts = []
    for entries in per_frame:
        if not entries:
            gts.append(GroundTruthSet.empty(h, w))
            continue
        entries.sort(key=lambda e: e[0])
        gts.append(
            GroundTruthSet(
                np.stack([e[2] for e in entries]).astype(np.uint8),
                np.array([e[1] for e in entries]),
                np.array([e[0] for e in entries]),
            )
        )
    return gts


def export_clip(clip: SynthClip, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(clip.frames):
        save_tensor(frame, directory / frame_name(t))
    write_gt_manifest(clip.gt, directory / GT_MANIFEST)
    return directory


def import_frames(directory: str | Path) -> list:
    directory = Path(directory)
    paths = sorted(directory.glob(f"frame_*{SUFFIX}"))
    if not paths:
        raise FileNotFoundError(f"no frames in {directory}")
    return [load_tensor(p) for p in paths]


def import_clip(directory: str | Path) -> SynthClip:
    directory = Path(directory)
    frames = import_frames(directory)
    gts = read_gt_manifest(directory / GT_MANIFEST)
    if len(gts) != len(frames):
        raise FormatError(f"{directory}: {len(frames)} frames but the manifest lists {len(gts)}")
    return SynthClip(frames=frames, gt=gts)
