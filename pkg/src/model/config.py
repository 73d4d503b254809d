"""
Model hyperparameters.
"""

from dataclasses import dataclass, field

from src.errors import ConfigError

DECODER_MODES: dict[str, tuple[str, ...]] = {
    "global-local": ("global", "local"),
    "local-local": ("local", "local"),
    "global-global": ("global", "global"),
    "global": ("global",),
    "local": ("local",),
}
POOL_TYPES = ("max", "avg", "none")
POOL_SIZES = (4, 8)
MASK_DECODERS = ("iterative", "fpn")


@dataclass(frozen=True)
class BackboneConfig:
    """Toy backbone: widths of X3..X6, convs per stride stage, transformer blocks at stride 64."""

    widths: tuple[int, int, int, int] = (32, 48, 64, 96)
    stem_width: int = 16
    num_conv_stages: int = 1
    transformer_blocks: int = 1
    heads: int = 4

    def __post_init__(self) -> None:
        if len(self.widths) != 4 or any(w <= 0 for w in self.widths):
            raise ConfigError(f"backbone widths must be four positive integers, got {self.widths}")
        if self.stem_width <= 0 or self.num_conv_stages < 1 or self.transformer_blocks < 1:
            raise ConfigError("backbone needs a positive stem width, >= 1 conv per stage and >= 1 transformer block")
        if self.heads < 1 or self.widths[3] % self.heads:
            raise ConfigError(f"C6={self.widths[3]} must be divisible by {self.heads} heads")


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    num_queries: int = 25
    hidden_dim: int = 128
    heads: int = 4
    ffn_dim: int = 256
    num_classes: int = 3
    decoder_mode: str = "global-local"
    pool: str = "max"
    pool_size: int = 8
    mask_decoder: str = "iterative"
    enhancers: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.decoder_mode not in DECODER_MODES:
            raise ConfigError(f"decoder_mode must be one of {sorted(DECODER_MODES)}, got {self.decoder_mode!r}")
        if self.pool not in POOL_TYPES:
            raise ConfigError(f"pool must be one of {POOL_TYPES}, got {self.pool!r}")
        if self.pool_size not in POOL_SIZES:
            raise ConfigError(f"pool_size must be one of {POOL_SIZES}, got {self.pool_size}")
        if self.mask_decoder not in MASK_DECODERS:
            raise ConfigError(f"mask_decoder must be one of {MASK_DECODERS}, got {self.mask_decoder!r}")
        if self.num_queries < 1 or self.num_classes < 1 or self.ffn_dim < 1:
            raise ConfigError("num_queries, num_classes and ffn_dim must be positive")
        if self.hidden_dim < 4 or self.hidden_dim % 2:
            raise ConfigError(f"hidden_dim must be an even width >= 4, got {self.hidden_dim}")
        if self.hidden_dim % self.heads:
            raise ConfigError(f"hidden_dim {self.hidden_dim} must be divisible by {self.heads} heads")

    @property
    def kernel_dim(self) -> int:
        return self.hidden_dim

    @property
    def stages(self) -> tuple[str, ...]:
        return DECODER_MODES[self.decoder_mode]
