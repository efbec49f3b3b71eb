"""Per-frame cell detection on image stacks.

Detections are 8-connected pixel components. Each one carries its pixel
set, a polygon tracing the outer boundary, the pixel count as area and
the pixel-coordinate centroid. Boundary polygons live on the corner
lattice: pixel (row r, col c) occupies the unit square [c, c+1] x
[r, r+1], so a single pixel at the origin yields the square
(0,0),(1,0),(1,1),(0,1). Contour vertices are (x, y) pairs with x along
columns and y along rows.

Detection ids are assigned once per movie, in (frame, first pixel in
row-major order) order, starting at 1. Re-running segmentation on the
same stack reproduces them exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .errors import DimensionMismatch, InconsistentInput, InvalidInput
from .imagestack import ImageStack
from .units import AREA, Quantity

__all__ = [
    "CellDetection",
    "Overlay",
    "ThresholdSegmenter",
    "LabelMaskSegmenter",
    "segment_threshold",
    "ingest_label_masks",
    "size_filter",
    "trace_boundary",
    "polygon_area",
    "write_overlay",
    "read_overlay",
]

_EIGHT = np.ones((3, 3), dtype=np.int8)

# direction encoding for boundary walking: right, down, left, up
_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True, eq=False)
class CellDetection:
    """One segmented cell in one frame."""

    detection_id: int
    frame: int
    pixels: np.ndarray  # (N, 2) int32 rows, cols; row-major sorted
    contour: np.ndarray  # (M, 2) float (x, y) corner-lattice polygon
    area_px: float
    centroid_px: tuple[float, float]  # (x, y)

    def __repr__(self) -> str:
        return (
            f"CellDetection(id={self.detection_id}, frame={self.frame}, "
            f"area_px={self.area_px:g})"
        )


class Overlay:
    """All detections of a movie, grouped by frame."""

    def __init__(
        self,
        frames: Sequence[Sequence[CellDetection]],
        height: int,
        width: int,
        warnings: Sequence[str] = (),
    ) -> None:
        self.frames: tuple[tuple[CellDetection, ...], ...] = tuple(
            tuple(dets) for dets in frames
        )
        self.height = int(height)
        self.width = int(width)
        self.warnings: tuple[str, ...] = tuple(warnings)
        by_id: dict[int, CellDetection] = {}
        for t, dets in enumerate(self.frames):
            for det in dets:
                if det.frame != t:
                    raise InvalidInput(
                        f"detection {det.detection_id} filed under frame {t} "
                        f"but says frame {det.frame}"
                    )
                if det.detection_id in by_id:
                    raise InvalidInput(
                        f"duplicate detection id {det.detection_id}"
                    )
                by_id[det.detection_id] = det
        self.by_id = by_id

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_detections(self) -> int:
        return len(self.by_id)

    def all_detections(self) -> Iterator[CellDetection]:
        for dets in self.frames:
            yield from dets

    def counts(self) -> np.ndarray:
        return np.array([len(dets) for dets in self.frames], dtype=np.int64)

    def __repr__(self) -> str:
        return (
            f"Overlay(frames={self.n_frames}, detections={self.n_detections})"
        )


def trace_boundary(pixels: np.ndarray) -> np.ndarray:
    """Trace the outer boundary polygon of one 8-connected pixel set.

    Walks the directed crack edges between foreground and background.
    Where two diagonal pixels pinch at a shared corner the walk takes
    the counterclockwise (screen sense) branch, which keeps the whole
    component on a single closed walk. Collinear runs are collapsed.
    Returns an (M, 2) float array of (x, y) corners.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[1] != 2 or pixels.shape[0] == 0:
        raise InvalidInput("pixel set must be a non-empty (N, 2) array")
    occupied = {(int(r), int(c)) for r, c in pixels}

    outgoing: dict[tuple[int, int], list[tuple[int, tuple[int, int]]]] = {}
    for r, c in occupied:
        if (r - 1, c) not in occupied:
            outgoing.setdefault((c, r), []).append((0, (c + 1, r)))
        if (r, c + 1) not in occupied:
            outgoing.setdefault((c + 1, r), []).append((1, (c + 1, r + 1)))
        if (r + 1, c) not in occupied:
            outgoing.setdefault((c + 1, r + 1), []).append((2, (c, r + 1)))
        if (r, c - 1) not in occupied:
            outgoing.setdefault((c, r + 1), []).append((3, (c, r)))

    start = min(v for v, edges in outgoing.items() if edges)
    verts: list[tuple[int, int]] = []
    dirs: list[int] = []
    current = start
    in_dir = -1
    while True:
        edges = outgoing[current]
        if len(edges) == 1:
            d, nxt = edges.pop()
        else:
            # pinch corner: prefer the counterclockwise turn
            want = (in_dir - 1) % 4
            pick = 0
            for i, (d, _) in enumerate(edges):
                if d == want:
                    pick = i
                    break
            d, nxt = edges.pop(pick)
        verts.append(current)
        dirs.append(d)
        current = nxt
        in_dir = d
        if current == start:
            break

    m = len(verts)
    corners = [
        verts[i] for i in range(m) if dirs[i] != dirs[(i - 1) % m]
    ]
    return np.array(corners, dtype=float)


def polygon_area(contour: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as (M, 2) (x, y) vertices."""
    contour = np.asarray(contour, dtype=float)
    if contour.ndim != 2 or contour.shape[1] != 2:
        raise InvalidInput("contour must be an (M, 2) array")
    if contour.shape[0] < 3:
        raise InvalidInput("polygon needs at least 3 vertices")
    x = contour[:, 0]
    y = contour[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def _pixel_groups(labeled: np.ndarray, n_components: int) -> list[np.ndarray]:
    """Flat pixel indices per component, ordered by first row-major pixel."""
    flat = labeled.ravel()
    nonzero = np.flatnonzero(flat)
    if nonzero.size == 0:
        return []
    values = flat[nonzero]
    order = np.argsort(values, kind="stable")
    sorted_idx = nonzero[order]
    sorted_vals = values[order]
    starts = np.searchsorted(sorted_vals, np.arange(1, n_components + 1))
    ends = np.append(starts[1:], sorted_vals.size)
    groups = [sorted_idx[s:e] for s, e in zip(starts, ends) if e > s]
    groups.sort(key=lambda g: int(g[0]))
    return groups


def _detection_from_flat(
    flat_idx: np.ndarray, width: int, detection_id: int, frame: int
) -> CellDetection:
    rows = (flat_idx // width).astype(np.int32)
    cols = (flat_idx % width).astype(np.int32)
    pixels = np.column_stack([rows, cols])
    pixels.setflags(write=False)
    contour = trace_boundary(pixels)
    contour.setflags(write=False)
    centroid = (float(cols.mean()), float(rows.mean()))
    return CellDetection(
        detection_id=detection_id,
        frame=frame,
        pixels=pixels,
        contour=contour,
        area_px=float(flat_idx.size),
        centroid_px=centroid,
    )


def _segment_masks(masks: Sequence[np.ndarray], width: int) -> list[list[CellDetection]]:
    frames: list[list[CellDetection]] = []
    next_id = 1
    for t, mask in enumerate(masks):
        labeled, n = ndimage.label(mask, structure=_EIGHT)
        dets: list[CellDetection] = []
        for group in _pixel_groups(labeled, n):
            dets.append(_detection_from_flat(group, width, next_id, t))
            next_id += 1
        frames.append(dets)
    return frames


class ThresholdSegmenter(BaseEstimator):
    """Fixed-threshold segmenter over one channel.

    Parameters
    ----------
    channel : int or str
        Channel index or name to threshold.
    threshold : float
        Cut value in normalized intensity, within [0, 1].
    polarity : str
        "bright" keeps pixels at or above the threshold, "dark" at or
        below it.
    """

    def __init__(
        self,
        channel: int | str = 0,
        threshold: float = 0.5,
        polarity: str = "bright",
    ) -> None:
        self.channel = channel
        self.threshold = threshold
        self.polarity = polarity

    def _validate(self, stack: ImageStack) -> int:
        if not isinstance(stack, ImageStack):
            raise InvalidInput("segmenter expects an ImageStack")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInput(
                f"threshold must lie in [0, 1], got {self.threshold}"
            )
        if self.polarity not in ("bright", "dark"):
            raise InvalidInput(
                f"polarity must be 'bright' or 'dark', got {self.polarity!r}"
            )
        return stack.channel_index(self.channel)

    def fit(self, stack: ImageStack, y=None) -> "ThresholdSegmenter":
        self._validate(stack)
        return self

    def transform(self, stack: ImageStack) -> Overlay:
        channel = self._validate(stack)
        images = stack.pixels[:, :, :, channel]
        if self.polarity == "bright":
            masks = images >= self.threshold
        else:
            masks = images <= self.threshold
        frames = _segment_masks(list(masks), stack.width)
        return Overlay(frames, stack.height, stack.width)

    def fit_transform(self, stack: ImageStack, y=None) -> Overlay:
        return self.fit(stack).transform(stack)


def segment_threshold(
    stack: ImageStack,
    channel: int | str = 0,
    threshold: float = 0.5,
    polarity: str = "bright",
) -> Overlay:
    """Threshold one channel and collect 8-connected components."""
    return ThresholdSegmenter(channel, threshold, polarity).fit_transform(stack)


class LabelMaskSegmenter(BaseEstimator):
    """Adapter that ingests externally produced label masks."""

    def fit(self, labels: np.ndarray, y=None) -> "LabelMaskSegmenter":
        return self

    def transform(self, labels: np.ndarray) -> Overlay:
        return ingest_label_masks(labels)

    def fit_transform(self, labels: np.ndarray, y=None) -> Overlay:
        return self.transform(labels)


def ingest_label_masks(labels: np.ndarray) -> Overlay:
    """Convert a (T, H, W) integer label stack into an Overlay.

    Connectivity is re-derived: a label painted as several 8-connected
    components is split into that many detections, and each split frame
    is reported in the overlay warnings. Zero is background.
    """
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise InvalidInput(
            f"label stack must be 3-D (T, H, W), got shape {labels.shape}"
        )
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if np.any(labels != np.rint(labels)):
            raise InvalidInput("label stack must hold integers")
        labels = labels.astype(np.int64)
    if labels.size and labels.min() < 0:
        raise InvalidInput("label values must be non-negative")
    t_len, height, width = labels.shape
    frames: list[list[CellDetection]] = []
    warnings: list[str] = []
    next_id = 1
    for t in range(t_len):
        frame_labels = labels[t]
        values = np.unique(frame_labels)
        values = values[values > 0]
        groups: list[np.ndarray] = []
        for value in values:
            mask = frame_labels == value
            relabeled, n = ndimage.label(mask, structure=_EIGHT)
            parts = _pixel_groups(relabeled, n)
            if len(parts) > 1:
                warnings.append(
                    f"frame {t}: label {int(value)} split into "
                    f"{len(parts)} components"
                )
            groups.extend(parts)
        groups.sort(key=lambda g: int(g[0]))
        dets: list[CellDetection] = []
        for group in groups:
            dets.append(_detection_from_flat(group, width, next_id, t))
            next_id += 1
        frames.append(dets)
    return Overlay(frames, height, width, warnings)


def size_filter(
    overlay: Overlay,
    min_area: Quantity,
    max_area: Quantity | None,
    pixel_size: Quantity,
) -> Overlay:
    """Drop detections outside [min_area, max_area]; ids are kept.

    Areas are compared in physical units: pixel count times the squared
    pixel size. ``max_area=None`` means no upper bound.
    """
    if min_area.dimension != AREA:
        raise DimensionMismatch(f"min_area must be an area, got {min_area.unit!r}")
    if max_area is not None and max_area.dimension != AREA:
        raise DimensionMismatch(f"max_area must be an area, got {max_area.unit!r}")
    px_area = pixel_size * pixel_size
    if px_area.dimension != AREA:
        raise DimensionMismatch(
            f"pixel_size must be a length, got {pixel_size.unit!r}"
        )
    lo = min_area.value
    hi = np.inf if max_area is None else max_area.value
    if lo > hi:
        raise InvalidInput(f"min_area {lo} exceeds max_area {hi}")
    frames = []
    for dets in overlay.frames:
        kept = [
            det
            for det in dets
            if lo <= det.area_px * px_area.value <= hi
        ]
        frames.append(kept)
    return Overlay(frames, overlay.height, overlay.width, overlay.warnings)


def _rle_encode(flat_idx: np.ndarray) -> str:
    breaks = np.flatnonzero(np.diff(flat_idx) != 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [flat_idx.size - 1]])
    return ";".join(
        f"{int(flat_idx[s])},{int(e - s + 1)}" for s, e in zip(starts, ends)
    )


def write_overlay(
    overlay: Overlay, jsonl_path: str | Path, rle_path: str | Path
) -> None:
    """Write detections as JSON lines plus run-length encoded masks.

    The JSONL file has one object per detection (id, frame, area_px,
    centroid, contour). The RLE file has one ASCII line per detection:
    ``frame id: start,len;start,len;...`` over row-major pixel indices.
    """
    json_lines = []
    rle_lines = []
    width = overlay.width
    for det in overlay.all_detections():
        obj = {
            "area_px": det.area_px,
            "centroid": [det.centroid_px[0], det.centroid_px[1]],
            "contour": [[int(x), int(y)] for x, y in det.contour],
            "frame": det.frame,
            "id": det.detection_id,
        }
        json_lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
        flat = det.pixels[:, 0].astype(np.int64) * width + det.pixels[:, 1]
        rle_lines.append(f"{det.frame} {det.detection_id}: {_rle_encode(flat)}")
    Path(jsonl_path).write_text("\n".join(json_lines) + ("\n" if json_lines else ""))
    Path(rle_path).write_text("\n".join(rle_lines) + ("\n" if rle_lines else ""))


def read_overlay(
    jsonl_path: str | Path,
    rle_path: str | Path,
    height: int,
    width: int,
    n_frames: int | None = None,
) -> Overlay:
    """Rebuild an Overlay from its JSONL + RLE export."""
    records: dict[int, dict] = {}
    for line in Path(jsonl_path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records[int(obj["id"])] = obj
    masks: dict[int, tuple[int, np.ndarray]] = {}
    for line in Path(rle_path).read_text().splitlines():
        if not line.strip():
            continue
        head, _, runs_text = line.partition(":")
        frame_str, id_str = head.split()
        runs = []
        for chunk in runs_text.strip().split(";"):
            start_str, len_str = chunk.split(",")
            start, length = int(start_str), int(len_str)
            runs.append(np.arange(start, start + length, dtype=np.int64))
        masks[int(id_str)] = (int(frame_str), np.concatenate(runs))
    if set(records) != set(masks):
        raise InconsistentInput(
            "overlay JSONL and RLE files list different detection ids"
        )
    dets: list[CellDetection] = []
    for det_id in sorted(records):
        obj = records[det_id]
        frame, flat = masks[det_id]
        if frame != int(obj["frame"]):
            raise InconsistentInput(
                f"detection {det_id} frame differs between JSONL and RLE"
            )
        if flat.size != int(obj["area_px"]):
            raise InconsistentInput(
                f"detection {det_id} mask size {flat.size} does not match "
                f"area_px {obj['area_px']}"
            )
        if flat.size and (flat.min() < 0 or flat.max() >= height * width):
            raise InconsistentInput(
                f"detection {det_id} mask falls outside a {height}x{width} frame"
            )
        rows = (flat // width).astype(np.int32)
        cols = (flat % width).astype(np.int32)
        pixels = np.column_stack([rows, cols])
        pixels.setflags(write=False)
        contour = np.array(obj["contour"], dtype=float).reshape(-1, 2)
        contour.setflags(write=False)
        dets.append(
            CellDetection(
                detection_id=det_id,
                frame=frame,
                pixels=pixels,
                contour=contour,
                area_px=float(obj["area_px"]),
                centroid_px=(
                    float(obj["centroid"][0]),
                    float(obj["centroid"][1]),
                ),
            )
        )
    t_max = max((d.frame for d in dets), default=-1)
    total = max(n_frames or 0, t_max + 1)
    frames: list[list[CellDetection]] = [[] for _ in range(total)]
    for det in sorted(dets, key=lambda d: (d.frame, d.detection_id)):
        frames[det.frame].append(det)
    return Overlay(frames, height, width)
