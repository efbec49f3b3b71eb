"""Unit-aware feature tables for detections and tracklets.

Column names embed their unit token (``area_um2``, ``birth_h``,
``medfluor_gfp_au``) so CSV exports stay self-describing. All physical
values are canonical: micrometers squared for areas, hours for times,
arbitrary units for fluorescence. The ``label`` column ties detection
rows to tracklet rows; label 0 means "not part of any tracklet".
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InconsistentInput, InvalidInput
from .imagestack import ImageStack
from .segmentation import Overlay
from .textio import fmt_float as _fmt
from .tracking import TrackletGraph

__all__ = [
    "DetectionTable",
    "TrackletTable",
    "extract_detection_features",
    "extract_tracklet_features",
]


def _check_channel_names(names: Iterable[str]) -> tuple[str, ...]:
    names = tuple(names)
    for name in names:
        if not name or any(ch in name for ch in ",\n\r"):
            raise InvalidInput(f"channel name {name!r} is not CSV-safe")
    if len(set(names)) != len(names):
        raise InvalidInput("fluorescence channel names must be unique")
    return names


class DetectionTable:
    """One row per detection: position, area, time and mean fluorescence."""

    def __init__(
        self,
        ids: np.ndarray,
        frames: np.ndarray,
        times_h: np.ndarray,
        labels: np.ndarray,
        areas_um2: np.ndarray,
        cx_um: np.ndarray,
        cy_um: np.ndarray,
        fluor_au: Mapping[str, np.ndarray] | None = None,
    ) -> None:
        self.ids = np.asarray(ids, dtype=np.int64)
        self.frames = np.asarray(frames, dtype=np.int64)
        self.times_h = np.asarray(times_h, dtype=float)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.areas_um2 = np.asarray(areas_um2, dtype=float)
        self.cx_um = np.asarray(cx_um, dtype=float)
        self.cy_um = np.asarray(cy_um, dtype=float)
        fluor_au = dict(fluor_au or {})
        _check_channel_names(fluor_au)
        self.fluor_au = {k: np.asarray(v, dtype=float) for k, v in fluor_au.items()}
        n = self.ids.size
        columns = [
            self.frames,
            self.times_h,
            self.labels,
            self.areas_um2,
            self.cx_um,
            self.cy_um,
            *self.fluor_au.values(),
        ]
        if any(col.shape != (n,) for col in columns):
            raise InvalidInput("detection table columns must share one length")
        if n and len(np.unique(self.ids)) != n:
            raise InvalidInput("detection ids must be unique")
        self._row_of = {int(i): k for k, i in enumerate(self.ids)}

    def __len__(self) -> int:
        return int(self.ids.size)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(self.fluor_au)

    def header(self) -> list[str]:
        return [
            "id",
            "frame",
            "time_h",
            "label",
            "area_um2",
            "cx_um",
            "cy_um",
            *(f"fluor_{name}_au" for name in self.fluor_au),
        ]

    def row_of_id(self, detection_id: int) -> int:
        try:
            return self._row_of[int(detection_id)]
        except KeyError:
            raise InconsistentInput(
                f"detection id {detection_id} not present in the table"
            ) from None

    def rows_of_label(self, label: int) -> np.ndarray:
        """Row indices of one tracklet, ordered by frame."""
        idx = np.flatnonzero(self.labels == label)
        return idx[np.argsort(self.frames[idx], kind="stable")]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            fluor_cols = list(self.fluor_au.values())
            for k in range(len(self)):
                writer.writerow(
                    [
                        int(self.ids[k]),
                        int(self.frames[k]),
                        _fmt(self.times_h[k]),
                        int(self.labels[k]),
                        _fmt(self.areas_um2[k]),
                        _fmt(self.cx_um[k]),
                        _fmt(self.cy_um[k]),
                        *(_fmt(col[k]) for col in fluor_cols),
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "DetectionTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidInput(f"{path} is empty") from None
            fixed = ["id", "frame", "time_h", "label", "area_um2", "cx_um", "cy_um"]
            if header[: len(fixed)] != fixed:
                raise InvalidInput(f"{path} has unexpected header {header!r}")
            channels = []
            for col in header[len(fixed) :]:
                if not (col.startswith("fluor_") and col.endswith("_au")):
                    raise InvalidInput(f"{path} has unexpected column {col!r}")
                channels.append(col[len("fluor_") : -len("_au")])
            rows = [row for row in reader if row]
        n = len(rows)
        ids = np.empty(n, dtype=np.int64)
        frames = np.empty(n, dtype=np.int64)
        times = np.empty(n, dtype=float)
        labels = np.empty(n, dtype=np.int64)
        areas = np.empty(n, dtype=float)
        cx = np.empty(n, dtype=float)
        cy = np.empty(n, dtype=float)
        fluor = {name: np.empty(n, dtype=float) for name in channels}
        for k, row in enumerate(rows):
            ids[k] = int(row[0])
            frames[k] = int(row[1])
            times[k] = float(row[2])
            labels[k] = int(row[3])
            areas[k] = float(row[4])
            cx[k] = float(row[5])
            cy[k] = float(row[6])
            for c, name in enumerate(channels):
                fluor[name][k] = float(row[7 + c])
        return cls(ids, frames, times, labels, areas, cx, cy, fluor)


class TrackletTable:
    """One row per tracklet: lifetime, areas, fate, median fluorescence."""

    def __init__(
        self,
        labels: np.ndarray,
        parents: np.ndarray,
        birth_h: np.ndarray,
        end_h: np.ndarray,
        birth_area_um2: np.ndarray,
        end_area_um2: np.ndarray,
        fates: tuple[str, ...],
        n_detections: np.ndarray,
        medfluor_au: Mapping[str, np.ndarray] | None = None,
    ) -> None:
        self.labels = np.asarray(labels, dtype=np.int64)
        self.parents = np.asarray(parents, dtype=np.int64)
        self.birth_h = np.asarray(birth_h, dtype=float)
        self.end_h = np.asarray(end_h, dtype=float)
        self.birth_area_um2 = np.asarray(birth_area_um2, dtype=float)
        self.end_area_um2 = np.asarray(end_area_um2, dtype=float)
        self.fates = tuple(fates)
        self.n_detections = np.asarray(n_detections, dtype=np.int64)
        medfluor_au = dict(medfluor_au or {})
        _check_channel_names(medfluor_au)
        self.medfluor_au = {
            k: np.asarray(v, dtype=float) for k, v in medfluor_au.items()
        }
        n = self.labels.size
        columns = [
            self.parents,
            self.birth_h,
            self.end_h,
            self.birth_area_um2,
            self.end_area_um2,
            self.n_detections,
            *self.medfluor_au.values(),
        ]
        if any(col.shape != (n,) for col in columns) or len(self.fates) != n:
            raise InvalidInput("tracklet table columns must share one length")
        if n and len(np.unique(self.labels)) != n:
            raise InvalidInput("tracklet labels must be unique")
        self._row_of = {int(l): k for k, l in enumerate(self.labels)}

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def lifetime_h(self) -> np.ndarray:
        return self.end_h - self.birth_h

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(self.medfluor_au)

    def row_of_label(self, label: int) -> int:
        try:
            return self._row_of[int(label)]
        except KeyError:
            raise InconsistentInput(
                f"tracklet label {label} not present in the table"
            ) from None

    def header(self) -> list[str]:
        return [
            "label",
            "parent",
            "birth_h",
            "end_h",
            "lifetime_h",
            "birth_area_um2",
            "end_area_um2",
            "fate",
            "n_detections",
            *(f"medfluor_{name}_au" for name in self.medfluor_au),
        ]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            med_cols = list(self.medfluor_au.values())
            lifetime = self.lifetime_h
            for k in range(len(self)):
                writer.writerow(
                    [
                        int(self.labels[k]),
                        int(self.parents[k]),
                        _fmt(self.birth_h[k]),
                        _fmt(self.end_h[k]),
                        _fmt(lifetime[k]),
                        _fmt(self.birth_area_um2[k]),
                        _fmt(self.end_area_um2[k]),
                        self.fates[k],
                        int(self.n_detections[k]),
                        *(_fmt(col[k]) for col in med_cols),
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrackletTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidInput(f"{path} is empty") from None
            fixed = [
                "label",
                "parent",
                "birth_h",
                "end_h",
                "lifetime_h",
                "birth_area_um2",
                "end_area_um2",
                "fate",
                "n_detections",
            ]
            if header[: len(fixed)] != fixed:
                raise InvalidInput(f"{path} has unexpected header {header!r}")
            channels = []
            for col in header[len(fixed) :]:
                if not (col.startswith("medfluor_") and col.endswith("_au")):
                    raise InvalidInput(f"{path} has unexpected column {col!r}")
                channels.append(col[len("medfluor_") : -len("_au")])
            rows = [row for row in reader if row]
        n = len(rows)
        labels = np.empty(n, dtype=np.int64)
        parents = np.empty(n, dtype=np.int64)
        birth = np.empty(n, dtype=float)
        end = np.empty(n, dtype=float)
        birth_area = np.empty(n, dtype=float)
        end_area = np.empty(n, dtype=float)
        fates = []
        n_det = np.empty(n, dtype=np.int64)
        med = {name: np.empty(n, dtype=float) for name in channels}
        for k, row in enumerate(rows):
            labels[k] = int(row[0])
            parents[k] = int(row[1])
            birth[k] = float(row[2])
            end[k] = float(row[3])
            birth_area[k] = float(row[5])
            end_area[k] = float(row[6])
            fates.append(row[7])
            n_det[k] = int(row[8])
            for c, name in enumerate(channels):
                med[name][k] = float(row[9 + c])
        return cls(
            labels, parents, birth, end, birth_area, end_area, tuple(fates),
            n_det, med,
        )


def extract_detection_features(
    overlay: Overlay,
    stack: ImageStack,
    tracklet_graph: TrackletGraph | None = None,
    fluor_channels: Iterable[int | str] | None = None,
) -> DetectionTable:
    """Measure every detection of an overlay against its stack.

    Areas and centroids are converted to physical units with the stack's
    pixel size; fluorescence is the mean normalized intensity over the
    detection's pixels, reported per requested channel. When a tracklet
    graph is given, each row carries its tracklet label (0 = untracked).
    """
    if overlay.n_frames > stack.n_frames:
        raise InconsistentInput(
            f"overlay has {overlay.n_frames} frames, stack only "
            f"{stack.n_frames}"
        )
    if (overlay.height, overlay.width) != (stack.height, stack.width):
        raise InconsistentInput(
            f"overlay shape {(overlay.height, overlay.width)} does not match "
            f"stack shape {(stack.height, stack.width)}"
        )
    if fluor_channels is None:
        channel_ids = list(range(stack.n_channels))
    else:
        channel_ids = [stack.channel_index(ch) for ch in fluor_channels]
    channel_names = [stack.metadata.channel_names[c] for c in channel_ids]

    label_of: dict[int, int] = {}
    if tracklet_graph is not None:
        for tr in tracklet_graph.tracklets():
            for det_id in tr.detections:
                label_of[det_id] = tr.label

    px = stack.metadata.pixel_size_um
    interval = stack.metadata.frame_interval_h
    dets = list(overlay.all_detections())
    n = len(dets)
    ids = np.empty(n, dtype=np.int64)
    frames = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    areas = np.empty(n, dtype=float)
    cx = np.empty(n, dtype=float)
    cy = np.empty(n, dtype=float)
    fluor = {name: np.empty(n, dtype=float) for name in channel_names}
    for k, det in enumerate(dets):
        ids[k] = det.detection_id
        frames[k] = det.frame
        labels[k] = label_of.get(det.detection_id, 0)
        areas[k] = det.area_px * px * px
        cx[k] = det.centroid_px[0] * px
        cy[k] = det.centroid_px[1] * px
        rows = det.pixels[:, 0]
        cols = det.pixels[:, 1]
        for c, name in zip(channel_ids, channel_names):
            values = stack.pixels[det.frame, rows, cols, c]
            fluor[name][k] = float(values.astype(np.float64).mean())
    times = frames * interval
    return DetectionTable(ids, frames, times, labels, areas, cx, cy, fluor)


def extract_tracklet_features(
    tracklet_graph: TrackletGraph, detections: DetectionTable
) -> TrackletTable:
    """Summarize each tracklet from its detection rows.

    Median fluorescence is the median over the tracklet's per-detection
    means. Root tracklets get parent 0 in the table.
    """
    tracklets = tracklet_graph.tracklets()
    n = len(tracklets)
    labels = np.empty(n, dtype=np.int64)
    parents = np.empty(n, dtype=np.int64)
    birth = np.empty(n, dtype=float)
    end = np.empty(n, dtype=float)
    birth_area = np.empty(n, dtype=float)
    end_area = np.empty(n, dtype=float)
    fates = []
    n_det = np.empty(n, dtype=np.int64)
    med = {name: np.empty(n, dtype=float) for name in detections.channel_names}
    for k, tr in enumerate(tracklets):
        rows = [detections.row_of_id(d) for d in tr.detections]
        labels[k] = tr.label
        parents[k] = 0 if tr.parent_label is None else tr.parent_label
        birth[k] = detections.times_h[rows[0]]
        end[k] = detections.times_h[rows[-1]]
        birth_area[k] = detections.areas_um2[rows[0]]
        end_area[k] = detections.areas_um2[rows[-1]]
        fates.append(tr.fate)
        n_det[k] = len(rows)
        for name in med:
            med[name][k] = float(np.median(detections.fluor_au[name][rows]))
    return TrackletTable(
        labels, parents, birth, end, birth_area, end_area, tuple(fates),
        n_det, med,
    )
