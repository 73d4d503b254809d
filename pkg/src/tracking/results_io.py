"""
Line-delimited tracking results.

The first line is ``frames <L>``; each further line is one emitted instance:
``frame_index track_id category score HxW rle``. Scores use ``repr`` so they read
back exactly.
"""

from pathlib import Path

from src.data.rle import rle_decode, rle_encode
from src.errors import ArgumentError, FormatError
from src.tracking.tracker import TrackedFrameResult, TrackedInstance


def format_results(results: list[TrackedFrameResult]) -> str:
    lines = [f"frames {len(results)}"]
    for result in results:
        for inst in result.instances:
            lines.append(
                f"{result.frame_index} {inst.track_id} {inst.category} {float(inst.score)!r} {rle_encode(inst.mask)}"
            )
    return "\n".join(lines) + "\n"


def write_results(results: list[TrackedFrameResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_results(results))
    return path


def parse_results(text: str, source: str = "<results>") -> list[TrackedFrameResult]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("frames "):
        raise FormatError(f"{source}:1: expected 'frames <L>' header")
    try:
        count = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise FormatError(f"{source}:1: bad frame count in {lines[0]!r}") from None

    results = [TrackedFrameResult(frame_index=t, keyframe=False) for t in range(count)]
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        try:
            if len(parts) != 6:
                raise ValueError("expected 'frame_index track_id category score HxW rle'")
            t = int(parts[0])
            if not 0 <= t < count:
                raise ValueError(f"frame index {t} outside [0, {count})")
            inst = TrackedInstance(
                track_id=int(parts[1]),
                category=int(parts[2]),
                score=float(parts[3]),
                mask=rle_decode(parts[4], parts[5]),
            )
        except (ValueError, ArgumentError) as e:
            raise FormatError(f"{source}:{lineno}: {e}") from None
        results[t].instances.append(inst)
        results[t].mask_size = inst.mask.shape
    return results


def read_results(path: str | Path) -> list[TrackedFrameResult]:
    path = Path(path)
    return parse_results(path.read_text(), str(path))
