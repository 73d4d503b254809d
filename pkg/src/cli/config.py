"""
Run configuration files.

Flat ``key = value`` lines grouped under ``[section]`` headers; ``#`` and ``;``
start comments and lists are comma separated. Every field has a default, unknown
sections and keys are rejected, and every error names its 1-based line.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from src.data.synth import SynthConfig
from src.errors import ArgumentError, ConfigError
from src.model.config import BackboneConfig, ModelConfig
from src.tracking.tracker import TrackerConfig
from src.training.losses import LossWeights
from src.training.optim import OptimConfig
from src.training.trainer import TrainConfig

DECODER_ALIASES = {"single": "global", "stacked": "global-global"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthConfig = field(default_factory=SynthConfig)

    def to_text(self) -> str:
        sections = {
            "model": _model_items(self.model),
            "tracker": _items(self.tracker),
            "loss": _items(self.loss),
            "optim": _items(self.optim),
            "train": _items(self.train),
            "data": _items(self.data),
        }
        lines = []
        for name, items in sections.items():
            lines.append(f"[{name}]")
            lines += [f"{key} = {_format(value)}" for key, value in items.items()]
            lines.append("")
        return "\n".join(lines)

    def with_model(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, model=dataclasses.replace(self.model, **changes))


def _items(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def _model_items(model: ModelConfig) -> dict:
    items = _items(model)
    backbone = items.pop("backbone")
    for key, value in _items(backbone).items():
        items["backbone_heads" if key == "heads" else key] = value
    return items


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(raw: str, default, key: str, line: int):
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            element = default[0] if default else ""
            return tuple(_convert(p, element, key, line) for p in parts)
        return raw
    except ValueError as e:
        raise ConfigError(f"{key}: {e}", line=line) from None


def parse_sections(text: str) -> tuple[dict[str, dict[str, tuple[str, int]]], dict[str, int]]:
    """Split text into ``{section: {key: (raw value, line)}}`` plus each section's header line."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    headers: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            current = line[1:-1].strip()
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", line=lineno)
            sections[current] = {}
            headers[current] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside of any [section]", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", line=lineno)
        sections[current][key] = (value, lineno)
    return sections, headers


def _build(defaults: dict, entries: dict[str, tuple[str, int]], section: str, aliases=None) -> dict:
    aliases = aliases or {}
    values = dict(defaults)
    for key, (raw, line) in entries.items():
        name = aliases.get(key, key)
        if name not in defaults:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line=line)
        values[name] = _convert(raw, defaults[name], key, line)
    return values


def _construct(factory, values: dict, section: str, line: int | None):
    try:
        return factory(**values)
    except (ConfigError, ArgumentError) as e:
        raise ConfigError(f"[{section}] {e}", line=line) from None


def parse_config(text: str) -> RunConfig:
    sections, headers = parse_sections(text)
    defaults = RunConfig()
    builders = {
        "tracker": (TrackerConfig, _items(defaults.tracker), {"reuse_T": "reuse_interval"}),
        "loss": (LossWeights, _items(defaults.loss), None),
        "optim": (OptimConfig, _items(defaults.optim), None),
        "train": (TrainConfig, _items(defaults.train), None),
        "data": (SynthConfig, _items(defaults.data), None),
    }
    for name in sections:
        if name != "model" and name not in builders:
            raise ConfigError(f"unknown section [{name}]", line=headers[name])

    built = {}
    for name, (cls, section_defaults, aliases) in builders.items():
        entries = sections.get(name, {})
        values = _build(section_defaults, entries, name, aliases)
        built[name] = _construct(cls, values, name, headers.get(name))

    model_entries = sections.get("model", {})
    values = _build(_model_items(defaults.model), model_entries, "model")
    if values["decoder_mode"] in DECODER_ALIASES:
        values["decoder_mode"] = DECODER_ALIASES[values["decoder_mode"]]
    backbone_values = {
        "widths": values.pop("widths"),
        "stem_width": values.pop("stem_width"),
        "num_conv_stages": values.pop("num_conv_stages"),
        "transformer_blocks": values.pop("transformer_blocks"),
        "heads": values.pop("backbone_heads"),
    }
    backbone = _construct(BackboneConfig, backbone_values, "model", headers.get("model"))
    model = _construct(ModelConfig, {**values, "backbone": backbone}, "model", headers.get("model"))

    if built["data"].num_classes > model.num_classes:
        line = sections.get("data", {}).get("num_classes", (None, headers.get("data")))[1]
        raise ConfigError(
            f"data uses {built['data'].num_classes} categories but the model predicts {model.num_classes}", line=line
        )
    return RunConfig(model=model, **built)


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class AblationGrid:
    base: RunConfig
    axes: dict[str, tuple]

    def points(self) -> list[dict]:
        """Cartesian product of the axes in file order."""
        points = [{}]
        for key, values in self.axes.items():
            points = [{**p, key: v} for p in points for v in values]
        return points


GRID_AXES = {
    "decoder_mode": "global-local",
    "pool": "max",
    "pool_size": 8,
    "reuse_T": 3,
    "enhancers": True,
    "mask_decoder": "iterative",
    "temporal": True,
}


def parse_grid(text: str, base_dir: str | Path = ".") -> AblationGrid:
    sections, headers = parse_sections(text)
    for name in sections:
        if name not in ("base", "grid"):
            raise ConfigError(f"unknown section [{name}] in grid file", line=headers[name])
    base = RunConfig()
    for key, (raw, line) in sections.get("base", {}).items():
        if key != "config":
            raise ConfigError(f"unknown key {key!r} in [base]", line=line)
        path = Path(raw)
        if not path.is_absolute():
            path = Path(base_dir) / path
        base = load_config(path)

    axes = {}
    for key, (raw, line) in sections.get("grid", {}).items():
        if key not in GRID_AXES:
            raise ConfigError(f"unknown grid axis {key!r}; expected one of {sorted(GRID_AXES)}", line=line)
        values = _convert(raw, (GRID_AXES[key],), key, line)
        if not values:
            raise ConfigError(f"grid axis {key!r} has no values", line=line)
        axes[key] = values
    return AblationGrid(base=base, axes=axes)


def apply_point(base: RunConfig, point: dict) -> RunConfig:
    """RunConfig for one ablation point; raises ConfigError for invalid combinations."""
    model_changes = {k: v for k, v in point.items() if k in ("decoder_mode", "pool", "pool_size", "enhancers", "mask_decoder")}
    if model_changes.get("decoder_mode") in DECODER_ALIASES:
        model_changes["decoder_mode"] = DECODER_ALIASES[model_changes["decoder_mode"]]
    try:
        cfg = base.with_model(**model_changes)
        if "reuse_T" in point:
            cfg = dataclasses.replace(cfg, tracker=dataclasses.replace(cfg.tracker, reuse_interval=point["reuse_T"]))
        if "temporal" in point:
            cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, temporal=point["temporal"]))
    except ArgumentError as e:
        raise ConfigError(str(e)) from None
    return cfg
