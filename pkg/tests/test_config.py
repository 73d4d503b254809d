"""
Tests for run configuration files and ablation grids.
"""

import pytest

from src.cli.config import RunConfig, apply_point, load_config, parse_config, parse_grid, parse_sections
from src.errors import ConfigError


class TestParseConfig:
    def test_defaults(self):
        assert load_config(None) == RunConfig()
        assert parse_config("") == RunConfig()

    def test_text_round_trip(self):
        cfg = RunConfig()
        assert parse_config(cfg.to_text()) == cfg

    def test_tiny_file(self, tiny_config_file):
        cfg = load_config(tiny_config_file)
        assert cfg.model.backbone.widths == (4, 4, 4, 8)
        assert cfg.model.backbone.heads == 2
        assert cfg.model.hidden_dim == 8
        assert cfg.data.image_size == 64
        assert cfg.train.image_iterations == 1
        assert parse_config(cfg.to_text()) == cfg

    def test_aliases_and_comments(self):
        text = "# run\n[tracker]\nreuse_T = 6 ; keyframe every 6\n[model]\ndecoder_mode = stacked\n"
        cfg = parse_config(text)
        assert cfg.tracker.reuse_interval == 6
        assert cfg.model.decoder_mode == "global-global"
        assert parse_config("[model]\ndecoder_mode = single\n").model.decoder_mode == "global"

    def test_booleans_and_lists(self):
        cfg = parse_config("[model]\nenhancers = no\n[data]\nshapes = disk, triangle\n[optim]\ndecay_at = 0.5\n")
        assert cfg.model.enhancers is False
        assert cfg.data.shapes == ("disk", "triangle")
        assert cfg.optim.decay_at == (0.5,)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("[nope]\n", 1),
            ("[model]\nbogus = 1\n", 2),
            ("[tracker]\n\nreuse_T = x\n", 3),
            ("hidden_dim = 8\n", 1),
            ("[model\n", 1),
            ("[model]\nhidden_dim\n", 2),
            ("[model]\npool_size = 5\n", 1),
            ("[model]\npool = max\npool = avg\n", 3),
            ("[model]\n[model]\n", 2),
            ("[train]\nflip = maybe\n", 2),
            ("[data]\nnum_classes = 5\n", 2),
            ("[tracker]\nscore_threshold = 2.0\n", 1),
        ],
    )
    def test_errors_name_the_line(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}: ")

    def test_sections_keep_raw_values(self):
        sections, headers = parse_sections("[a]\nx = 1, 2\n")
        assert sections == {"a": {"x": ("1, 2", 2)}}
        assert headers == {"a": 1}


class TestGrid:
    def test_points_are_the_cartesian_product(self, tiny_config_file):
        grid_text = (
            f"[base]\nconfig = {tiny_config_file.name}\n"
            "[grid]\ndecoder_mode = single, global-local\nreuse_T = 1, 3\n"
        )
        grid = parse_grid(grid_text, tiny_config_file.parent)
        assert grid.base.model.hidden_dim == 8
        assert grid.points() == [
            {"decoder_mode": "single", "reuse_T": 1},
            {"decoder_mode": "single", "reuse_T": 3},
            {"decoder_mode": "global-local", "reuse_T": 1},
            {"decoder_mode": "global-local", "reuse_T": 3},
        ]

    def test_apply_point(self):
        base = RunConfig()
        cfg = apply_point(
            base, {"decoder_mode": "single", "reuse_T": 6, "temporal": False, "pool_size": 4, "enhancers": False}
        )
        assert cfg.model.decoder_mode == "global"
        assert cfg.model.pool_size == 4
        assert cfg.model.enhancers is False
        assert cfg.tracker.reuse_interval == 6
        assert cfg.train.temporal is False
        assert base.tracker.reuse_interval == 3

    def test_typed_axes(self):
        grid = parse_grid("[grid]\nenhancers = true, false\npool_size = 4, 8\n")
        assert grid.axes == {"enhancers": (True, False), "pool_size": (4, 8)}

    @pytest.mark.parametrize(
        "text",
        ["[grid]\nlr = 1, 2\n", "[grid]\nreuse_T =\n", "[other]\n", "[base]\nmodel = x\n", "[grid]\npool_size = big\n"],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_grid(text)

    def test_invalid_point(self):
        with pytest.raises(ConfigError):
            apply_point(RunConfig(), {"pool_size": 5})
