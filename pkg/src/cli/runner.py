"""
CLI runner for kernelvis.
Parses the command line, dispatches to the command implementations and maps
errors to stable exit codes.
"""

import argparse
import sys

from src.cli import commands
from src.errors import (
    ArgumentError,
    CheckpointError,
    ConfigError,
    FormatError,
    GenerationError,
    ShapeError,
    TensorFileError,
    TrackStateError,
)
from src.utils.logger import logger

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_IO = 4


def _reuse_list(raw: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("reuse intervals must be integers >= 1")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelvis", description="Kernel-based video instance segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train on synthetic clips and write a checkpoint")
    train.add_argument("--config", default=None, help="run config file (defaults when omitted)")
    train.add_argument("--output", required=True, help="checkpoint / metrics directory")

    infer = sub.add_parser("infer", help="track a clip directory and write RLE results")
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--input", required=True, help="clip directory of frame tensors")
    infer.add_argument("--output", required=True)
    infer.add_argument("--config", default=None, help="override the checkpoint's config")
    infer.add_argument("--threshold", type=float, default=None)
    infer.add_argument("--reuse-T", dest="reuse_T", type=int, default=None)
    infer.add_argument("--render", action="store_true", help="write grayscale per-instance mask images")

    evaluate = sub.add_parser("eval", help="score a results file against a ground-truth manifest")
    evaluate.add_argument("--results", required=True)
    evaluate.add_argument("--gt", required=True, help="gt.txt or a clip directory")

    bench = sub.add_parser("bench", help="per-frame time and FLOPs, keyframes vs reused frames")
    bench.add_argument("--checkpoint", required=True)
    bench.add_argument("--size", type=int, default=128)
    bench.add_argument("--frames", type=int, default=6)
    bench.add_argument("--reuse-T", dest="reuse_T", type=_reuse_list, default=(1, 3, 6))
    bench.add_argument("--seed", type=int, default=0)

    ablate = sub.add_parser("ablate", help="train and evaluate every point of a config grid")
    ablate.add_argument("--grid", required=True)
    ablate.add_argument("--table", default=None, help="save the table as .csv or .xlsx")
    ablate.add_argument("--eval-clips", dest="eval_clips", type=int, default=4)

    generate = sub.add_parser("generate", help="write held-out synthetic clips")
    generate.add_argument("--config", default=None)
    generate.add_argument("--output", required=True)
    generate.add_argument("--count", type=int, default=20)
    generate.add_argument("--offset", type=int, default=commands.HELD_OUT_OFFSET)
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "train":
        result = commands.cmd_train(args.config, args.output)
        if result.history:
            print(f"final_loss={result.history[-1].loss!r}")
        print(f"checkpoint={result.checkpoint}")
    elif args.command == "infer":
        path = commands.cmd_infer(
            args.checkpoint, args.input, args.output, args.threshold, args.reuse_T, args.render, args.config
        )
        print(f"results={path}")
    elif args.command == "eval":
        for line in commands.cmd_eval(args.results, args.gt).to_lines():
            print(line)
    elif args.command == "bench":
        report = commands.cmd_bench(args.checkpoint, args.size, args.frames, args.reuse_T, args.seed)
        print(report.frames.to_string(index=False))
        print()
        print(report.summary.to_string(index=False))
    elif args.command == "ablate":
        print(commands.cmd_ablate(args.grid, args.table, args.eval_clips).to_string(index=False))
    elif args.command == "generate":
        for path in commands.cmd_generate(args.config, args.output, args.count, args.offset):
            print(path)


def main(argv: list[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_CONFIG
    except CheckpointError as e:
        logger.error(f"Checkpoint error: {e}")
        return EXIT_CHECKPOINT
    except (OSError, TensorFileError, FormatError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except (ShapeError, ArgumentError, GenerationError, TrackStateError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG
    except FloatingPointError as e:
        logger.error(f"Training diverged: {e}")
        return EXIT_CONFIG
    return EXIT_OK


def run_cli(argv: list[str] | None = None) -> None:
    sys.exit(main(argv))
