"""Connected components, boundary tracing, filters and overlay files."""

from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from colonykit.errors import (
    DimensionMismatch,
    InconsistentInput,
    InvalidInput,
)
from colonykit.segmentation import (
    Overlay,
    ingest_label_masks,
    polygon_area,
    read_overlay,
    segment_threshold,
    size_filter,
    trace_boundary,
    write_overlay,
)
from colonykit.units import quantity

from .conftest import make_stack


def flood_fill_components(mask: np.ndarray) -> list[set[tuple[int, int]]]:
    """Independent 8-connected components oracle: breadth-first search."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    components = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            group = set()
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                cr, cc = queue.popleft()
                group.add((cr, cc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = cr + dr, cc + dc
                        if (
                            0 <= nr < h
                            and 0 <= nc < w
                            and mask[nr, nc]
                            and not seen[nr, nc]
                        ):
                            seen[nr, nc] = True
                            queue.append((nr, nc))
            components.append(group)
    return components


def frame_stack(mask: np.ndarray):
    return make_stack(mask[None].astype(float))


class TestSegmentThreshold:
    def test_two_disjoint_blocks(self):
        img = np.zeros((10, 10))
        img[1:4, 1:4] = 1.0
        img[6:9, 6:9] = 1.0
        overlay = segment_threshold(frame_stack(img), 0, 0.5, "bright")
        dets = overlay.frames[0]
        assert len(dets) == 2
        assert [d.area_px for d in dets] == [9.0, 9.0]

    def test_all_zero_frame(self):
        overlay = segment_threshold(frame_stack(np.zeros((5, 5))), 0, 0.5)
        assert overlay.frames[0] == ()

    def test_diagonal_pixels_are_one_component(self):
        img = np.zeros((4, 4))
        img[1, 1] = 1.0
        img[2, 2] = 1.0
        overlay = segment_threshold(frame_stack(img), 0, 0.5)
        assert len(overlay.frames[0]) == 1
        assert overlay.frames[0][0].area_px == 2.0

    def test_value_equal_to_threshold_is_kept(self):
        img = np.full((2, 2), 0.5)
        bright = segment_threshold(frame_stack(img), 0, 0.5, "bright")
        dark = segment_threshold(frame_stack(img), 0, 0.5, "dark")
        assert bright.frames[0][0].area_px == 4.0
        assert dark.frames[0][0].area_px == 4.0

    def test_dark_polarity(self):
        img = np.ones((3, 3))
        img[1, 1] = 0.0
        overlay = segment_threshold(frame_stack(img), 0, 0.2, "dark")
        assert len(overlay.frames[0]) == 1
        assert overlay.frames[0][0].area_px == 1.0

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_flood_fill_oracle(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((14, 17)) < 0.35
        overlay = segment_threshold(
            frame_stack(mask.astype(float)), 0, 0.5, "bright"
        )
        got = [
            {(int(r), int(c)) for r, c in det.pixels}
            for det in overlay.frames[0]
        ]
        expected = flood_fill_components(mask)
        assert sorted(map(sorted, got)) == sorted(map(sorted, expected))

    def test_ids_sequential_in_frame_then_first_pixel_order(self):
        img = np.zeros((2, 6, 6))
        img[0, 4, 0] = 1.0  # second in frame 0 (row-major later)
        img[0, 0, 3] = 1.0  # first in frame 0
        img[1, 2, 2] = 1.0
        overlay = segment_threshold(make_stack(img), 0, 0.5)
        flat = list(overlay.all_detections())
        assert [d.detection_id for d in flat] == [1, 2, 3]
        assert tuple(flat[0].pixels[0]) == (0, 3)
        assert tuple(flat[1].pixels[0]) == (4, 0)
        assert flat[2].frame == 1

    def test_deterministic_rerun(self):
        rng = np.random.default_rng(3)
        img = (rng.random((2, 9, 9)) < 0.4).astype(float)
        stack = make_stack(img)
        a = segment_threshold(stack, 0, 0.5)
        b = segment_threshold(stack, 0, 0.5)
        for da, db in zip(a.all_detections(), b.all_detections()):
            assert da.detection_id == db.detection_id
            assert np.array_equal(da.pixels, db.pixels)
            assert np.array_equal(da.contour, db.contour)

    def test_centroid_is_pixel_center_mean(self):
        img = np.zeros((5, 7))
        img[1:3, 3:5] = 1.0  # rows 1..2, cols 3..4
        overlay = segment_threshold(frame_stack(img), 0, 0.5)
        assert overlay.frames[0][0].centroid_px == (3.5, 1.5)

    def test_disjoint_pixels_within_frame(self):
        rng = np.random.default_rng(5)
        mask = rng.random((12, 12)) < 0.5
        overlay = segment_threshold(frame_stack(mask.astype(float)), 0, 0.5)
        seen: set[tuple[int, int]] = set()
        total = 0
        for det in overlay.frames[0]:
            pix = {(int(r), int(c)) for r, c in det.pixels}
            assert not pix & seen
            seen |= pix
            total += len(pix)
        assert total == int(mask.sum())
        assert total <= mask.size

    def test_bad_threshold_rejected(self):
        with pytest.raises(InvalidInput):
            segment_threshold(frame_stack(np.zeros((2, 2))), 0, 1.5)

    def test_bad_polarity_rejected(self):
        with pytest.raises(InvalidInput):
            segment_threshold(frame_stack(np.zeros((2, 2))), 0, 0.5, "light")


class TestTraceBoundary:
    def test_single_pixel_square(self):
        contour = trace_boundary(np.array([[2, 3]]))
        assert contour.shape == (4, 2)
        assert set(map(tuple, contour)) == {
            (3.0, 2.0), (4.0, 2.0), (4.0, 3.0), (3.0, 3.0)
        }
        assert polygon_area(contour) == 1.0

    def test_rectangle_collapses_collinear_corners(self):
        pixels = np.array([(r, c) for r in range(2) for c in range(5)])
        contour = trace_boundary(pixels)
        assert contour.shape == (4, 2)
        assert polygon_area(contour) == 10.0

    def test_diagonal_pinch_single_closed_walk(self):
        contour = trace_boundary(np.array([[0, 0], [1, 1]]))
        # both unit squares traversed through the shared corner
        assert polygon_area(contour) == 2.0
        assert np.count_nonzero(
            (contour[:, 0] == 1.0) & (contour[:, 1] == 1.0)
        ) == 2

    @pytest.mark.parametrize("seed", range(8))
    def test_hole_free_blob_area_equals_pixel_count(self, seed):
        # grow a random connected blob; crack contour encloses exactly it
        rng = np.random.default_rng(seed)
        pixels = {(5, 5)}
        while len(pixels) < 12:
            r, c = list(pixels)[rng.integers(len(pixels))]
            dr, dc = rng.integers(-1, 2, size=2)
            if 0 <= r + dr < 12 and 0 <= c + dc < 12:
                pixels.add((r + dr, c + dc))
        mask = np.zeros((12, 12))
        for r, c in pixels:
            mask[r, c] = 1.0
        overlay = segment_threshold(frame_stack(mask), 0, 0.5)
        for det in overlay.frames[0]:
            assert polygon_area(det.contour) == pytest.approx(det.area_px)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInput):
            trace_boundary(np.empty((0, 2)))


class TestPolygonArea:
    def test_unit_square(self):
        square = [(0, 0), (1, 0), (1, 1), (0, 1)]
        assert polygon_area(np.array(square)) == 1.0

    def test_triangle(self):
        assert polygon_area(np.array([(0, 0), (4, 0), (0, 3)])) == 6.0

    def test_orientation_free(self):
        square = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
        assert polygon_area(square[::-1]) == 1.0

    def test_too_few_vertices(self):
        with pytest.raises(InvalidInput):
            polygon_area(np.array([(0, 0), (1, 1)]))


class TestIngestLabelMasks:
    def test_two_labels(self):
        labels = np.array([[[0, 1], [1, 2]]])
        overlay = ingest_label_masks(labels)
        dets = overlay.frames[0]
        assert [d.area_px for d in dets] == [2.0, 1.0]
        assert overlay.warnings == ()

    def test_all_zero(self):
        overlay = ingest_label_masks(np.zeros((1, 3, 3), dtype=int))
        assert overlay.frames[0] == ()

    def test_split_label_re_derived(self):
        labels = np.zeros((1, 3, 5), dtype=int)
        labels[0, 1, 0] = 7
        labels[0, 1, 4] = 7
        overlay = ingest_label_masks(labels)
        assert len(overlay.frames[0]) == 2
        assert overlay.warnings == (
            "frame 0: label 7 split into 2 components",
        )

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_components_oracle(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 4, size=(1, 10, 10))
        overlay = ingest_label_masks(labels)
        got = sorted(
            sorted((int(r), int(c)) for r, c in det.pixels)
            for det in overlay.frames[0]
        )
        expected = []
        for value in (1, 2, 3):
            for group in flood_fill_components(labels[0] == value):
                expected.append(sorted(group))
        assert got == sorted(expected)

    def test_rejects_fractional(self):
        with pytest.raises(InvalidInput):
            ingest_label_masks(np.full((1, 2, 2), 0.5))

    def test_rejects_negative(self):
        with pytest.raises(InvalidInput):
            ingest_label_masks(np.full((1, 2, 2), -1))

    def test_labels_not_carried_across_frames(self):
        labels = np.ones((2, 2, 2), dtype=int)
        overlay = ingest_label_masks(labels)
        ids = [d.detection_id for d in overlay.all_detections()]
        assert ids == [1, 2]  # fresh id per frame, no reuse


class TestSizeFilter:
    def build_overlay(self, areas_px):
        img = np.zeros((20, 50))
        col = 0
        for i, area in enumerate(areas_px):
            img[1, col:col + area] = 1.0
            col += area + 2
        return segment_threshold(frame_stack(img), 0, 0.5)

    def test_band_keeps_middle(self):
        # pixel size 1 um: areas 0.5 um2 cannot be built from whole
        # pixels, use {0.5, 2, 50} um2 via pixel size 0.5 -> px areas 2, 8, 200
        overlay = self.build_overlay([2, 8, 40])
        kept = size_filter(
            overlay,
            quantity(1, "um2"),
            quantity(10, "um2"),
            quantity(0.5, "um"),
        )
        dets = list(kept.all_detections())
        assert len(dets) == 1
        assert dets[0].area_px == 8.0

    def test_identity_bounds(self):
        overlay = self.build_overlay([2, 8, 40])
        kept = size_filter(overlay, quantity(0, "um2"), None, quantity(0.5, "um"))
        assert [d.detection_id for d in kept.all_detections()] == [1, 2, 3]

    def test_survivor_ids_unchanged(self):
        overlay = self.build_overlay([2, 8, 40])
        kept = size_filter(
            overlay, quantity(1, "um2"), quantity(10, "um2"), quantity(0.5, "um")
        )
        assert [d.detection_id for d in kept.all_detections()] == [2]

    def test_length_bounds_rejected(self):
        overlay = self.build_overlay([2])
        with pytest.raises(DimensionMismatch):
            size_filter(overlay, quantity(1, "um"), quantity(10, "um"),
                        quantity(0.5, "um"))

    def test_min_above_max_rejected(self):
        overlay = self.build_overlay([2])
        with pytest.raises(InvalidInput):
            size_filter(overlay, quantity(10, "um2"), quantity(1, "um2"),
                        quantity(0.5, "um"))


class TestOverlayContainer:
    def test_duplicate_ids_rejected(self):
        img = np.zeros((3, 3))
        img[0, 0] = 1.0
        det = segment_threshold(frame_stack(img), 0, 0.5).frames[0][0]
        with pytest.raises(InvalidInput):
            Overlay([[det, det]], 3, 3)

    def test_frame_mismatch_rejected(self):
        img = np.zeros((3, 3))
        img[0, 0] = 1.0
        det = segment_threshold(frame_stack(img), 0, 0.5).frames[0][0]
        with pytest.raises(InvalidInput):
            Overlay([[], [det]], 3, 3)  # det says frame 0, filed under 1

    def test_counts(self):
        img = np.zeros((2, 5, 5))
        img[0, 0, 0] = 1.0
        img[0, 3, 3] = 1.0
        img[1, 1, 1] = 1.0
        overlay = segment_threshold(make_stack(img), 0, 0.5)
        assert overlay.counts().tolist() == [2, 1]


class TestOverlayFiles:
    def make_overlay(self):
        rng = np.random.default_rng(11)
        img = (rng.random((3, 12, 13)) < 0.25).astype(float)
        return segment_threshold(make_stack(img), 0, 0.5)

    def test_round_trip(self, tmp_path):
        overlay = self.make_overlay()
        write_overlay(overlay, tmp_path / "o.jsonl", tmp_path / "m.rle")
        back = read_overlay(
            tmp_path / "o.jsonl", tmp_path / "m.rle",
            overlay.height, overlay.width, n_frames=overlay.n_frames,
        )
        assert back.n_frames == overlay.n_frames
        for da, db in zip(overlay.all_detections(), back.all_detections()):
            assert da.detection_id == db.detection_id
            assert da.frame == db.frame
            assert da.area_px == db.area_px
            assert np.array_equal(da.pixels, db.pixels)
            assert np.array_equal(da.contour, db.contour)
            assert da.centroid_px == db.centroid_px

    def test_write_is_deterministic(self, tmp_path):
        overlay = self.make_overlay()
        write_overlay(overlay, tmp_path / "a.jsonl", tmp_path / "a.rle")
        write_overlay(overlay, tmp_path / "b.jsonl", tmp_path / "b.rle")
        assert (tmp_path / "a.jsonl").read_bytes() == \
            (tmp_path / "b.jsonl").read_bytes()
        assert (tmp_path / "a.rle").read_bytes() == \
            (tmp_path / "b.rle").read_bytes()

    def test_rle_format_shape(self, tmp_path):
        img = np.zeros((1, 3, 4))
        img[0, 1, 1:3] = 1.0
        overlay = segment_threshold(make_stack(img), 0, 0.5)
        write_overlay(overlay, tmp_path / "o.jsonl", tmp_path / "m.rle")
        # row-major index of (1,1) in a width-4 frame is 5, run of 2
        assert (tmp_path / "m.rle").read_text() == "0 1: 5,2\n"

    def test_mismatched_ids_rejected(self, tmp_path):
        overlay = self.make_overlay()
        write_overlay(overlay, tmp_path / "o.jsonl", tmp_path / "m.rle")
        rle = (tmp_path / "m.rle").read_text().splitlines()
        (tmp_path / "m.rle").write_text("\n".join(rle[:-1]) + "\n")
        with pytest.raises(InconsistentInput):
            read_overlay(tmp_path / "o.jsonl", tmp_path / "m.rle",
                         overlay.height, overlay.width)

    def test_area_mask_disagreement_rejected(self, tmp_path):
        img = np.zeros((1, 3, 4))
        img[0, 1, 1:3] = 1.0
        overlay = segment_threshold(make_stack(img), 0, 0.5)
        write_overlay(overlay, tmp_path / "o.jsonl", tmp_path / "m.rle")
        (tmp_path / "m.rle").write_text("0 1: 5,3\n")
        with pytest.raises(InconsistentInput):
            read_overlay(tmp_path / "o.jsonl", tmp_path / "m.rle", 3, 4)

    def test_out_of_frame_mask_rejected(self, tmp_path):
        img = np.zeros((1, 3, 4))
        img[0, 1, 1:3] = 1.0
        overlay = segment_threshold(make_stack(img), 0, 0.5)
        write_overlay(overlay, tmp_path / "o.jsonl", tmp_path / "m.rle")
        (tmp_path / "m.rle").write_text("0 1: 11,2\n")
        with pytest.raises(InconsistentInput):
            read_overlay(tmp_path / "o.jsonl", tmp_path / "m.rle", 3, 4)
