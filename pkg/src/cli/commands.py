"""
Command implementations behind the CLI: train, infer, eval, bench, ablate, generate.

Commands raise kernelvis errors; the runner maps them to exit codes.
"""

import dataclasses
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from src.cli.callbacks import CLICallback
from src.cli.config import RunConfig, apply_point, load_config, parse_config, parse_grid
from src.data.clip_io import GT_MANIFEST, export_clip, import_frames, read_gt_manifest
from src.data.metrics import EvalReport, evaluate_clips
from src.data.synth import SynthClip, generate_clip, generate_clips
from src.errors import CheckpointError, ConfigError
from src.model.checkpoint import load_checkpoint, read_checkpoint_config, save_checkpoint
from src.model.network import KernelVIS
from src.store.run_store import open_run_store
from src.tensor import count_flops
from src.tracking.results_io import read_results, write_results
from src.tracking.tracker import TrackerConfig, TrackState, process_frame, run_sequence
from src.training.callbacks import TrainingCallback
from src.training.trainer import IterationRecord, Trainer
from src.utils.logger import logger
from src.utils.parallel import ordered_map

METRICS_FILE = "metrics.txt"
RESULTS_FILE = "results.txt"
HELD_OUT_OFFSET = 10_000


@dataclass
class TrainResult:
    checkpoint: Path
    history: list[IterationRecord]
    config: RunConfig


@dataclass
class BenchReport:
    frames: pd.DataFrame
    summary: pd.DataFrame


def _register(kind: str, config_text: str, output_dir: Path):
    store = open_run_store()
    run_id = f"{kind}-{uuid.uuid4().hex[:12]}"
    if store is not None:
        try:
            store.create(run_id, kind, config_text, str(output_dir))
        except Exception as e:
            logger.warning(f"Could not register run: {e}")
            store = None
    return store, run_id


def _finish(store, run_id: str, status: str, metrics: dict | None = None) -> None:
    if store is None:
        return
    try:
        store.finish(run_id, status, metrics)
    except Exception as e:
        logger.warning(f"Could not update run {run_id}: {e}")


def train_model(cfg: RunConfig, callback: TrainingCallback | None = None, metrics_path=None):
    net = KernelVIS(cfg.model)
    clips = generate_clips(cfg.data, cfg.train.train_clips)
    trainer = Trainer(net, clips, cfg.optim, cfg.train, cfg.loss, callback)
    history = trainer.train(metrics_path)
    return net, history


def cmd_train(config_path, output_dir, callback: TrainingCallback | None = None) -> TrainResult:
    cfg = load_config(config_path)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    store, run_id = _register("train", cfg.to_text(), output_dir)
    try:
        net, history = train_model(cfg, callback or CLICallback(), output_dir / METRICS_FILE)
        save_checkpoint(net, output_dir, cfg.to_text())
    except Exception:
        _finish(store, run_id, "failed")
        raise
    final = history[-1] if history else None
    _finish(store, run_id, "done", {"final_loss": final.loss} if final else None)
    logger.info(f"Training finished: {len(history)} iterations, checkpoint at {output_dir}")
    return TrainResult(output_dir, history, cfg)


def load_model(checkpoint, config_path=None) -> tuple[KernelVIS, RunConfig]:
    """Rebuild the network from the checkpoint's config (or ``config_path``) and load its weights."""
    if config_path is not None:
        cfg = load_config(config_path)
    else:
        try:
            cfg = parse_config(read_checkpoint_config(checkpoint))
        except ConfigError as e:
            raise CheckpointError(f"checkpoint config is invalid: {e}") from e
    net = KernelVIS(cfg.model)
    load_checkpoint(net, checkpoint)
    return net, cfg


def _tracker_config(cfg: RunConfig, threshold: float | None, reuse_T: int | None) -> TrackerConfig:
    changes = {}
    if threshold is not None:
        changes["score_threshold"] = threshold
    if reuse_T is not None:
        changes["reuse_interval"] = reuse_T
    return dataclasses.replace(cfg.tracker, **changes)


def render_masks(results, directory: Path) -> int:
    directory.mkdir(parents=True, exist_ok=True)
    count = 0
    for result in results:
        for inst in result.instances:
            image = Image.fromarray(inst.mask.astype(np.uint8) * 255)
            image.save(directory / f"frame_{result.frame_index:04d}_track_{inst.track_id:04d}.png")
            count += 1
    return count


def cmd_infer(
    checkpoint,
    clip_dir,
    output_dir,
    threshold: float | None = None,
    reuse_T: int | None = None,
    render: bool = False,
    config_path=None,
) -> Path:
    net, cfg = load_model(checkpoint, config_path)
    tracker_cfg = _tracker_config(cfg, threshold, reuse_T)
    frames = import_frames(clip_dir)
    sequence = run_sequence(frames, net, tracker_cfg)
    output_dir = Path(output_dir)
    path = write_results(sequence.frames, output_dir / RESULTS_FILE)
    if render:
        rendered = render_masks(sequence.frames, output_dir / "masks")
        logger.info(f"Rendered {rendered} instance masks")
    logger.info(
        f"Tracked {len(frames)} frames ({sequence.decoder_invocations} keyframes), results in {path}"
    )
    return path


def cmd_eval(results_path, gt_path) -> EvalReport:
    gt_path = Path(gt_path)
    if gt_path.is_dir():
        gt_path = gt_path / GT_MANIFEST
    results = read_results(results_path)
    gts = read_gt_manifest(gt_path)
    return evaluate_clips([results], [gts])


def cmd_bench(checkpoint, size: int, frames: int = 6, reuse_T=(1, 3, 6), seed: int = 0) -> BenchReport:
    """Per-frame wall time and FLOPs for each reuse interval on one synthetic clip."""
    net, cfg = load_model(checkpoint)
    clip = generate_clip(dataclasses.replace(cfg.data, image_size=size, frames=frames, seed=seed))
    store, run_id = _register("bench", cfg.to_text(), Path(checkpoint))

    rows = []
    for interval in reuse_T:
        tracker_cfg = dataclasses.replace(cfg.tracker, reuse_interval=interval)
        state = TrackState.initial()
        for t, frame in enumerate(clip.frames):
            with count_flops() as counter:
                start = time.perf_counter()
                result, state = process_frame(frame, state, net, tracker_cfg)
                elapsed = time.perf_counter() - start
            rows.append(
                {
                    "T": interval,
                    "frame": t,
                    "keyframe": result.keyframe,
                    "ms": elapsed * 1000,
                    "flops": counter.total,
                    "decoder_flops": counter.scope("instance_decoder"),
                }
            )
    per_frame = pd.DataFrame(rows)
    summary = per_frame.groupby("T").agg(
        total_flops=("flops", "sum"), keyframes=("keyframe", "sum"), mean_ms=("ms", "mean")
    )
    split = per_frame.pivot_table(index="T", columns="keyframe", values="flops", aggfunc="mean")
    split = split.reindex(columns=[True, False])
    summary["keyframe_flops"] = split[True]
    summary["reuse_flops"] = split[False]
    summary = summary.reset_index()
    _finish(store, run_id, "done", {f"total_flops_T{int(r.T)}": float(r.total_flops) for r in summary.itertuples()})
    return BenchReport(per_frame, summary)


def evaluate_model(net, tracker_cfg: TrackerConfig, clips: list[SynthClip]) -> EvalReport:
    preds = ordered_map(lambda clip: run_sequence(clip.frames, net, tracker_cfg).frames, clips)
    return evaluate_clips(preds, clips)


def cmd_ablate(grid_path, table_path=None, eval_clips: int = 4, callback: TrainingCallback | None = None):
    grid_path = Path(grid_path)
    grid = parse_grid(grid_path.read_text(), grid_path.parent)
    store, run_id = _register("ablate", grid_path.read_text(), grid_path.parent)
    rows = []
    points = grid.points()
    for k, point in enumerate(points, start=1):
        cfg = apply_point(grid.base, point)
        logger.info(f"Ablation point {k}/{len(points)}: {point}")
        net, history = train_model(cfg, callback)
        held_out = generate_clips(cfg.data, eval_clips, offset=HELD_OUT_OFFSET)
        report = evaluate_model(net, cfg.tracker, held_out)
        rows.append(
            {
                **point,
                "params": net.num_parameters(),
                "final_loss": history[-1].loss if history else float("nan"),
                **report.as_dict(),
            }
        )
    table = pd.DataFrame(rows)
    if table_path is not None:
        save_table(table, table_path)
    _finish(store, run_id, "done", {"points": float(len(rows))})
    return table


def save_table(table: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".xlsx":
        table.to_excel(path, index=False, engine="openpyxl")
    elif path.suffix == ".csv":
        table.to_csv(path, index=False)
    else:
        raise ConfigError(f"table path must end in .csv or .xlsx, got {path.name}")
    return path


def cmd_generate(config_path, output_dir, count: int = 20, offset: int = HELD_OUT_OFFSET) -> list[Path]:
    cfg = load_config(config_path)
    output_dir = Path(output_dir)
    paths = []
    for i, clip in enumerate(generate_clips(cfg.data, count, offset=offset)):
        paths.append(export_clip(clip, output_dir / f"clip_{i:04d}"))
    logger.info(f"Wrote {len(paths)} clips to {output_dir}")
    return paths
