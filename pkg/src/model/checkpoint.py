"""
Weight checkpoints: a directory of portable tensor files plus ``manifest.txt``.

Each manifest line is ``<parameter name> <file name>``. The run configuration is
stored next to the weights as ``config.ini``.
"""

from pathlib import Path

from src.errors import CheckpointError, TensorFileError
from src.model.layers import Module
from src.tensor.io import SUFFIX, load_tensor, save_tensor
from src.utils.logger import logger

MANIFEST = "manifest.txt"
CONFIG_FILE = "config.ini"


def save_checkpoint(model: Module, directory: str | Path, config_text: str | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (name, param) in enumerate(model.named_parameters()):
        file_name = f"{i:04d}_{name.replace('.', '_')}{SUFFIX}"
        save_tensor(param, directory / file_name)
        lines.append(f"{name} {file_name}")
    (directory / MANIFEST).write_text("\n".join(lines) + "\n")
    if config_text is not None:
        (directory / CONFIG_FILE).write_text(config_text)
    logger.info(f"Saved {len(lines)} tensors to {directory}")
    return directory


def read_manifest(directory: str | Path) -> dict[str, str]:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise CheckpointError(f"no {MANIFEST} in {directory}")
    entries = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CheckpointError(f"{path}:{lineno}: expected '<name> <file>', got {line!r}")
        entries[parts[0]] = parts[1]
    return entries


def load_checkpoint(model: Module, directory: str | Path) -> None:
    """Load weights into ``model``; names and shapes must match exactly."""
    directory = Path(directory)
    entries = read_manifest(directory)
    state = {}
    for name, file_name in entries.items():
        try:
            state[name] = load_tensor(directory / file_name).data
        except FileNotFoundError:
            raise CheckpointError(f"{name}: missing tensor file {file_name}") from None
        except TensorFileError as e:
            raise CheckpointError(f"{name}: {e}") from e
    model.load_state_dict(state, strict=True)
    logger.info(f"Loaded {len(state)} tensors from {directory}")


def read_checkpoint_config(directory: str | Path) -> str:
    path = Path(directory) / CONFIG_FILE
    if not path.exists():
        raise CheckpointError(f"no {CONFIG_FILE} in {directory}")
    return path.read_text()
