"""Stack loading, normalization, sidecar validation and round trips."""

from __future__ import annotations

import json

import numpy as np
import pytest

from colonykit.errors import InvalidInput, InvalidMetadata
from colonykit.imagestack import (
    ImageStack,
    StackMetadata,
    load_label_stack,
    load_sidecar,
    load_stack,
    save_label_stack_raw,
    save_sidecar,
    save_stack_raw,
    save_stack_tiff,
)
from colonykit.units import TIME, quantity

from .conftest import make_metadata, make_stack

SIDECAR = {
    "pixel_size_um": 0.1,
    "frame_interval_min": 15,
    "channels": ["phase"],
    "origin_id": "r1",
}


def write_sidecar(tmp_path, **overrides):
    payload = dict(SIDECAR)
    payload.update(overrides)
    for key, value in list(payload.items()):
        if value is None:
            del payload[key]
    path = tmp_path / "stack.json"
    path.write_text(json.dumps(payload))
    return path


class TestSidecar:
    def test_loads_and_converts_minutes(self, tmp_path):
        meta = load_sidecar(write_sidecar(tmp_path))
        assert meta.pixel_size_um == pytest.approx(0.1)
        assert meta.frame_interval.dimension == TIME
        assert meta.frame_interval_h == pytest.approx(0.25)
        assert meta.channel_names == ("phase",)
        assert meta.origin_id == "r1"

    @pytest.mark.parametrize(
        "key", ["pixel_size_um", "frame_interval_min", "channels", "origin_id"]
    )
    def test_missing_key_named(self, tmp_path, key):
        path = write_sidecar(tmp_path, **{key: None})
        with pytest.raises(InvalidMetadata, match=key):
            load_sidecar(path)

    def test_negative_pixel_size_named(self, tmp_path):
        path = write_sidecar(tmp_path, pixel_size_um=-0.1)
        with pytest.raises(InvalidMetadata, match="pixel_size_um"):
            load_sidecar(path)

    def test_zero_interval_rejected(self, tmp_path):
        path = write_sidecar(tmp_path, frame_interval_min=0)
        with pytest.raises(InvalidMetadata, match="frame_interval_min"):
            load_sidecar(path)

    def test_non_string_channels_rejected(self, tmp_path):
        path = write_sidecar(tmp_path, channels=[1, 2])
        with pytest.raises(InvalidMetadata, match="channels"):
            load_sidecar(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidMetadata):
            load_sidecar(tmp_path / "absent.json")

    def test_invalid_metadata_is_invalid_input(self, tmp_path):
        # callers that catch the broader input error must also see
        # metadata problems
        with pytest.raises(InvalidInput):
            load_sidecar(tmp_path / "absent.json")

    def test_save_load_round_trip(self, tmp_path):
        meta = make_metadata(
            pixel_size_um=0.065,
            frame_interval_h=0.5,
            channels=("phase", "gfp"),
            origin_id="abc",
        )
        save_sidecar(meta, tmp_path / "m.json")
        back = load_sidecar(tmp_path / "m.json")
        assert back.pixel_size_um == pytest.approx(0.065, rel=1e-12)
        assert back.frame_interval_h == pytest.approx(0.5, rel=1e-12)
        assert back.channel_names == ("phase", "gfp")
        assert back.origin_id == "abc"

    def test_sidecar_stores_minutes(self, tmp_path):
        save_sidecar(make_metadata(frame_interval_h=0.25), tmp_path / "m.json")
        raw = json.loads((tmp_path / "m.json").read_text())
        assert raw["frame_interval_min"] == pytest.approx(15.0)


class TestMetadataValidation:
    def test_duplicate_channel_names(self):
        with pytest.raises(InvalidMetadata):
            make_metadata(channels=("a", "a"))

    def test_empty_origin(self):
        with pytest.raises(InvalidMetadata):
            make_metadata(origin_id="")

    def test_wrong_pixel_size_dimension(self):
        with pytest.raises(InvalidMetadata):
            StackMetadata(
                pixel_size=quantity(0.1, "h"),
                frame_interval=quantity(0.25, "h"),
                channel_names=("c0",),
                origin_id="x",
            )


class TestImageStack:
    def test_shape_accessors(self):
        stack = make_stack(np.zeros((3, 4, 5)))
        assert (stack.n_frames, stack.height, stack.width, stack.n_channels) \
            == (3, 4, 5, 1)

    def test_frame_and_channel_views(self):
        pixels = np.linspace(0, 1, 3 * 4 * 4 * 2).reshape(3, 4, 4, 2)
        stack = make_stack(pixels, channels=("phase", "gfp"))
        assert stack.frame(0).shape == (4, 4, 2)
        assert np.array_equal(stack.channel(2, "gfp"), pixels[2, :, :, 1])
        assert np.array_equal(stack.channel(2, 1), pixels[2, :, :, 1])

    def test_frame_out_of_range(self):
        stack = make_stack(np.zeros((3, 4, 4)))
        with pytest.raises(IndexError):
            stack.frame(3)
        with pytest.raises(IndexError):
            stack.channel(0, 1)

    def test_unknown_channel_name(self):
        stack = make_stack(np.zeros((1, 2, 2)))
        with pytest.raises(InvalidInput):
            stack.channel_index("gfp")

    def test_time_of(self):
        stack = make_stack(np.zeros((7, 2, 2)), frame_interval_h=0.25)
        assert stack.time_of(0).to("h") == 0.0
        assert stack.time_of(3).to("h") == pytest.approx(0.75)
        assert stack.time_of(6).to("h") == pytest.approx(1.5)

    def test_iteration_reproduces_buffer(self):
        pixels = np.linspace(0, 1, 2 * 3 * 3 * 1).reshape(2, 3, 3, 1)
        stack = make_stack(pixels)
        rebuilt = np.stack(list(stack), axis=0)
        assert np.array_equal(rebuilt, pixels)

    def test_rejects_out_of_range_intensities(self):
        with pytest.raises(InvalidInput):
            make_stack(np.full((1, 2, 2), 1.5))

    def test_rejects_non_finite(self):
        bad = np.zeros((1, 2, 2))
        bad[0, 0, 0] = np.nan
        with pytest.raises(InvalidInput):
            make_stack(bad)


class TestRawFormat:
    def test_round_trip(self, tmp_path):
        pixels = np.random.default_rng(0).random((3, 5, 4, 2)).astype("<f4")
        save_stack_raw(pixels, tmp_path / "s.raw")
        write_sidecar(tmp_path, channels=["a", "b"])
        stack = load_stack(tmp_path / "s.raw", tmp_path / "stack.json")
        assert np.array_equal(stack.pixels, pixels)

    def test_truncated_file(self, tmp_path):
        pixels = np.zeros((2, 4, 4, 1), dtype="<f4")
        save_stack_raw(pixels, tmp_path / "s.raw")
        blob = (tmp_path / "s.raw").read_bytes()
        (tmp_path / "s.raw").write_bytes(blob[:-8])
        write_sidecar(tmp_path)
        with pytest.raises(InvalidInput):
            load_stack(tmp_path / "s.raw", tmp_path / "stack.json")

    def test_channel_count_mismatch(self, tmp_path):
        save_stack_raw(np.zeros((2, 4, 4, 2), dtype="<f4"), tmp_path / "s.raw")
        write_sidecar(tmp_path)  # names one channel
        with pytest.raises(InvalidInput, match="channel"):
            load_stack(tmp_path / "s.raw", tmp_path / "stack.json")

    def test_missing_stack_file(self, tmp_path):
        write_sidecar(tmp_path)
        with pytest.raises(FileNotFoundError):
            load_stack(tmp_path / "absent.raw", tmp_path / "stack.json")


class TestTiffFormat:
    def test_single_channel_shape(self, tmp_path):
        pixels = np.random.default_rng(1).random((3, 4, 4, 1))
        save_stack_tiff(pixels, tmp_path / "s.tif")
        write_sidecar(tmp_path)
        stack = load_stack(tmp_path / "s.tif", tmp_path / "stack.json")
        assert stack.pixels.shape == (3, 4, 4, 1)

    @pytest.mark.parametrize("bit_depth,levels", [(8, 255), (16, 65535)])
    def test_quantization_round_trip(self, tmp_path, bit_depth, levels):
        # values on the quantization grid survive exactly
        grid = np.arange(16, dtype=np.float64) * 17 / levels
        pixels = np.tile(grid.reshape(1, 4, 4, 1), (2, 1, 1, 1))
        save_stack_tiff(pixels, tmp_path / "s.tif", bit_depth=bit_depth)
        write_sidecar(tmp_path)
        stack = load_stack(tmp_path / "s.tif", tmp_path / "stack.json")
        assert np.allclose(stack.pixels, pixels, atol=1e-7)

    def test_page_order_frame_major_then_channel(self, tmp_path):
        pixels = np.zeros((2, 2, 2, 2))
        pixels[0, :, :, 0] = 0.0
        pixels[0, :, :, 1] = 1 / 3
        pixels[1, :, :, 0] = 2 / 3
        pixels[1, :, :, 1] = 1.0
        save_stack_tiff(pixels, tmp_path / "s.tif")
        import tifffile

        pages = tifffile.imread(tmp_path / "s.tif")
        # page index = t * C + c
        assert pages[0].max() == 0
        assert pages[1].min() == pages[1].max() == round(65535 / 3)
        assert pages[3].min() == 65535

    def test_page_count_not_divisible(self, tmp_path):
        pixels = np.zeros((3, 4, 4, 1))
        save_stack_tiff(pixels, tmp_path / "s.tif")  # 3 pages
        write_sidecar(tmp_path, channels=["a", "b"])  # C=2
        with pytest.raises(InvalidInput, match="pages"):
            load_stack(tmp_path / "s.tif", tmp_path / "stack.json")

    def test_load_is_deterministic(self, tmp_path):
        pixels = np.random.default_rng(2).random((2, 8, 8, 1))
        save_stack_tiff(pixels, tmp_path / "s.tif")
        write_sidecar(tmp_path)
        a = load_stack(tmp_path / "s.tif", tmp_path / "stack.json")
        b = load_stack(tmp_path / "s.tif", tmp_path / "stack.json")
        assert np.array_equal(a.pixels, b.pixels)


class TestLabelStack:
    def test_raw_round_trip(self, tmp_path):
        labels = np.array(
            [[[0, 1], [1, 2]], [[0, 0], [3, 3]]], dtype=np.int32
        )
        save_label_stack_raw(labels, tmp_path / "l.raw")
        back = load_label_stack(tmp_path / "l.raw")
        assert back.dtype == np.int32
        assert np.array_equal(back, labels)

    def test_rejects_fractional_values(self, tmp_path):
        save_stack_raw(
            np.full((1, 2, 2, 1), 0.5, dtype="<f4"), tmp_path / "l.raw"
        )
        with pytest.raises(InvalidInput):
            load_label_stack(tmp_path / "l.raw")

    def test_rejects_negative_values(self, tmp_path):
        save_stack_raw(
            np.full((1, 2, 2, 1), -1.0, dtype="<f4"), tmp_path / "l.raw"
        )
        with pytest.raises(InvalidInput):
            load_label_stack(tmp_path / "l.raw")
