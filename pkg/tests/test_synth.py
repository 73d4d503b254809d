"""
Tests for the synthetic clip generator, the RLE codec and clip directories.
"""

from dataclasses import replace

import numpy as np
import pytest

from src.data.clip_io import GT_MANIFEST, export_clip, import_clip, import_frames, read_gt_manifest
from src.data.rle import rle_decode, rle_encode
from src.data.synth import SynthConfig, generate_clip, generate_clips, is_connected, majority_downsample
from src.errors import ArgumentError, ConfigError, FormatError, GenerationError


class TestGenerator:
    def test_is_deterministic(self, synth_cfg):
        a, b = generate_clip(synth_cfg), generate_clip(synth_cfg)
        assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a.frames, b.frames))
        for ga, gb in zip(a.gt, b.gt):
            np.testing.assert_array_equal(ga.masks, gb.masks)
            np.testing.assert_array_equal(ga.track_ids, gb.track_ids)

    def test_seeds_differ(self, synth_cfg):
        a = generate_clip(synth_cfg)
        b = generate_clip(replace(synth_cfg, seed=synth_cfg.seed + 1))
        assert a.frames[0].data.tobytes() != b.frames[0].data.tobytes()

    def test_layout(self, tiny_clip, synth_cfg):
        assert len(tiny_clip) == synth_cfg.frames
        for frame, gt in zip(tiny_clip.frames, tiny_clip.gt):
            assert frame.shape == (3, 64, 64)
            assert frame.dtype == np.float32
            assert gt.masks.shape[1:] == (8, 8)
            assert np.all(gt.categories < synth_cfg.num_classes)
            assert len(set(gt.track_ids.tolist())) == len(gt)

    def test_every_instance_is_visible_and_connected(self):
        for seed in range(5):
            cfg = SynthConfig(image_size=64, frames=4, max_instances=3, min_radius=8, max_radius=14, seed=seed)
            clip = generate_clip(cfg)
            seen = set()
            for gt in clip.gt:
                seen.update(gt.track_ids.tolist())
                assert all(is_connected(mask) and mask.any() for mask in gt.masks)
            assert seen == set(range(1, clip.meta["instances"] + 1))

    def test_static_shapes_do_not_move(self):
        cfg = SynthConfig(
            image_size=64, frames=3, max_instances=1, max_speed=0.0, min_radius=10, max_radius=12, seed=1
        )
        clip = generate_clip(cfg)
        assert clip.frames[0].data.tobytes() == clip.frames[2].data.tobytes()

    def test_clip_seeds(self, synth_cfg):
        clips = generate_clips(synth_cfg, 3, offset=100)
        assert [c.seed for c in clips] == [103, 104, 105]

    @pytest.mark.parametrize(
        "changes",
        [
            {"image_size": 100},
            {"frames": 0},
            {"min_instances": 3, "max_instances": 2},
            {"shapes": ("hexagon",)},
            {"min_radius": 2.0},
            {"max_speed": -1.0},
        ],
    )
    def test_config_validation(self, changes):
        with pytest.raises(ConfigError):
            SynthConfig(**changes)

    def test_shapes_that_cannot_fit(self):
        with pytest.raises(GenerationError):
            generate_clip(SynthConfig(image_size=64, min_radius=30, max_radius=40))


class TestMaskHelpers:
    def test_majority_downsample(self):
        left = np.zeros((8, 8), dtype=bool)
        left.reshape(-1)[:33] = True
        right = np.zeros((8, 8), dtype=bool)
        right.reshape(-1)[:32] = True
        np.testing.assert_array_equal(majority_downsample(np.hstack([left, right])), [[1, 0]])

    def test_is_connected(self):
        mask = np.zeros((5, 5), dtype=bool)
        assert is_connected(mask)
        mask[0, 0] = mask[0, 1] = True
        assert is_connected(mask)
        mask[4, 4] = True
        assert not is_connected(mask)
        diagonal = np.eye(2, dtype=bool)
        assert not is_connected(diagonal)


class TestRle:
    def test_known_encodings(self):
        assert rle_encode(np.array([[0, 1], [1, 1]])) == "2x2 1,3"
        assert rle_encode(np.array([[1, 1], [0, 1]])) == "2x2 0,2,1,1"
        assert rle_encode(np.zeros((2, 3))) == "2x3 6"

    def test_decode(self):
        np.testing.assert_array_equal(rle_decode("2x2", "0,2,1,1"), [[True, True], [False, True]])

    def test_round_trip(self, rng):
        mask = rng.uniform(size=(7, 5)) > 0.5
        size, counts = rle_encode(mask).split()
        np.testing.assert_array_equal(rle_decode(size, counts), mask)

    @pytest.mark.parametrize("size,counts", [("2x2", "1,1"), ("2x2", "a"), ("2-2", "4"), ("2x2", "5,-1")])
    def test_malformed(self, size, counts):
        with pytest.raises(ArgumentError):
            rle_decode(size, counts)

    def test_rejects_non_2d(self):
        with pytest.raises(ArgumentError):
            rle_encode(np.zeros(4))


class TestClipDirectory:
    def test_round_trip(self, tmp_path, tiny_clip):
        export_clip(tiny_clip, tmp_path / "clip")
        back = import_clip(tmp_path / "clip")
        assert len(back) == len(tiny_clip)
        for a, b in zip(tiny_clip.frames, back.frames):
            assert a.data.tobytes() == b.data.tobytes()
        for a, b in zip(tiny_clip.gt, back.gt):
            np.testing.assert_array_equal(a.masks, b.masks)
            np.testing.assert_array_equal(a.categories, b.categories)
            np.testing.assert_array_equal(a.track_ids, b.track_ids)

    def test_missing_frames(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            import_frames(tmp_path)

    def test_frame_count_mismatch(self, tmp_path, tiny_clip):
        export_clip(tiny_clip, tmp_path)
        (tmp_path / "frame_0000.kvt").unlink()
        with pytest.raises(FormatError):
            import_clip(tmp_path)

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "frames 2\n",
            "frames 1 8x8\n0 1 0 8x8\n",
            "frames 1 8x8\n2 1 0 8x8 64\n",
            "frames 1 8x8\n0 1 0 4x4 16\n",
        ],
    )
    def test_malformed_manifest(self, tmp_path, text):
        path = tmp_path / GT_MANIFEST
        path.write_text(text)
        with pytest.raises(FormatError):
            read_gt_manifest(path)

    def test_empty_frames_in_manifest(self, tmp_path):
        path = tmp_path / GT_MANIFEST
        path.write_text("frames 2 8x8\n1 3 0 8x8 0,64\n")
        gts = read_gt_manifest(path)
        assert len(gts[0]) == 0 and gts[0].size == (8, 8)
        assert gts[1].track_ids.tolist() == [3]
