"""
Shared fixtures: seeded generators, tiny model configs and small synthetic clips.
"""

import numpy as np
import pytest

from src.data.synth import SynthConfig, generate_clip
from src.model.config import BackboneConfig, ModelConfig
from src.model.network import KernelVIS
from src.tensor import Tensor

TINY_CONFIG_TEXT = """\
[model]
widths = 4, 4, 4, 8
stem_width = 4
backbone_heads = 2
num_queries = 8
hidden_dim = 8
heads = 2
ffn_dim = 16
pool_size = 4

[data]
image_size = 64
frames = 3
max_instances = 2
min_radius = 8.0
max_radius = 14.0

[train]
image_iterations = 1
video_iterations = 1
train_clips = 2
"""


@pytest.fixture(autouse=True)
def isolated_registry(tmp_path, monkeypatch):
    """Keep the run registry out of the working tree."""
    monkeypatch.setenv("KERNELVIS_DB_PATH", str(tmp_path / "registry" / "kernelvis.db"))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def tiny_model_config(**changes) -> ModelConfig:
    values = dict(
        backbone=BackboneConfig(widths=(4, 4, 4, 8), stem_width=4, heads=2),
        num_queries=8,
        hidden_dim=8,
        heads=2,
        ffn_dim=16,
        num_classes=3,
        pool="avg",
        pool_size=4,
    )
    values.update(changes)
    return ModelConfig(**values)


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture
def tiny_net():
    return KernelVIS(tiny_model_config())


@pytest.fixture
def tiny_net64():
    return KernelVIS(tiny_model_config(), dtype=np.float64)


@pytest.fixture
def image64(rng):
    return Tensor(rng.standard_normal((3, 64, 64)).astype(np.float32))


@pytest.fixture
def synth_cfg():
    return SynthConfig(image_size=64, frames=3, max_instances=2, min_radius=8.0, max_radius=14.0, seed=3)


@pytest.fixture
def tiny_clip(synth_cfg):
    return generate_clip(synth_cfg)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG_TEXT)
    return path


@pytest.fixture
def make_config():
    """Factory for tiny model configs with overrides."""
    return tiny_model_config
