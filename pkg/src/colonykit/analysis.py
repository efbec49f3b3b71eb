"""Growth and population analyses over feature tables.

Three population measures share one shape, a per-frame series:

* CC, the cell count;
* TCA, the area of the convex hull around all detected cells;
* TSCA, the summed area of the detected cells.

Exponential growth rates come from an ordinary least-squares fit of
log(value) against time in hours, so the rate unit is 1/h regardless of
the measure. Per-cell instantaneous growth rates (IGR) are forward
difference quotients of a tracklet's area, optionally smoothed with a
Gaussian kernel along the frame axis.

Co-culture handling: tracklets are split into two strains by 2-means
clustering of their median fluorescence in two channels, after
discarding tracklets dim in both.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d
from sklearn.base import BaseEstimator

from .errors import (
    DegenerateInput,
    InsufficientData,
    InvalidInput,
)
from .features import DetectionTable, TrackletTable
from .segmentation import Overlay, polygon_area
from .textio import fmt_float as _fmt
from .tracking import FATE_DIVIDED, FATE_LOST, Tracklet, TrackletGraph
from .units import AREA, DIMENSIONLESS, RATE, Quantity, QuantitySeries

__all__ = [
    "GrowthFit",
    "population_series",
    "tca_series",
    "convex_hull",
    "hull_area",
    "fit_loglinear",
    "TwoMeans",
    "kmeans2",
    "StrainAssignment",
    "classify_strains",
    "per_strain_growth",
    "IGRSeries",
    "igr",
    "tracklet_igr",
    "write_igr_csv",
    "read_igr_csv",
    "full_cycle_filter",
    "min_length_filter",
]


@dataclass(frozen=True)
class GrowthFit:
    """Result of one log-linear growth fit."""

    mu: Quantity  # exponential rate, 1/h
    log_intercept: float  # natural log of the fitted value at t = 0
    r_squared: float
    n_points: int
    n_dropped: int  # non-positive values excluded from the fit
    measure: str

    @property
    def mu_per_h(self) -> float:
        return self.mu.to("1/h")

    def to_json_obj(self) -> dict:
        return {
            "log_intercept": self.log_intercept,
            "mu_per_h": self.mu_per_h,
            "n": self.n_points,
            "n_dropped": self.n_dropped,
            "r2": self.r_squared,
        }

    @classmethod
    def from_json_obj(cls, measure: str, obj: dict) -> "GrowthFit":
        try:
            return cls(
                mu=Quantity(float(obj["mu_per_h"]), RATE),
                log_intercept=float(obj.get("log_intercept", 0.0)),
                r_squared=float(obj["r2"]),
                n_points=int(obj["n"]),
                n_dropped=int(obj.get("n_dropped", 0)),
                measure=measure,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"bad growth fit entry for {measure}: {exc}")


def _derive_interval(detections: DetectionTable) -> float:
    moving = detections.frames > 0
    if not np.any(moving):
        raise InvalidInput(
            "frame_interval_h is required when no detection sits past frame 0"
        )
    frames = detections.frames[moving].astype(float)
    times = detections.times_h[moving]
    interval = float(times[0] / frames[0])
    if not np.allclose(times, frames * interval, rtol=1e-9, atol=1e-12):
        raise InvalidInput("detection times are not an even frame grid")
    return interval


def population_series(
    detections: DetectionTable,
    *,
    n_frames: int | None = None,
    frame_interval_h: float | None = None,
) -> dict[str, QuantitySeries]:
    """Per-frame cell count (CC) and total cell area (TSCA).

    Frames with no detections contribute zeros, so pass ``n_frames``
    when trailing frames may be empty. The frame interval is taken from
    the table's time column when not given explicitly.
    """
    if n_frames is None:
        if len(detections) == 0:
            raise InsufficientData(
                "empty detection table needs an explicit n_frames"
            )
        n_frames = int(detections.frames.max()) + 1
    n_frames = int(n_frames)
    if n_frames < 1:
        raise InvalidInput("n_frames must be at least 1")
    if len(detections) and int(detections.frames.max()) >= n_frames:
        raise InvalidInput(
            f"table references frame {int(detections.frames.max())} outside "
            f"0..{n_frames - 1}"
        )
    if frame_interval_h is None:
        frame_interval_h = _derive_interval(detections)
    if not frame_interval_h > 0:
        raise InvalidInput("frame_interval_h must be positive")
    times = np.arange(n_frames, dtype=float) * frame_interval_h
    counts = np.bincount(detections.frames, minlength=n_frames).astype(float)
    tsca = np.bincount(
        detections.frames, weights=detections.areas_um2, minlength=n_frames
    )
    return {
        "CC": QuantitySeries(times, counts, DIMENSIONLESS, "CC"),
        "TSCA": QuantitySeries(times, tsca, AREA, "TSCA"),
    }


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull by monotone chain; returns CCW vertices, no repeat.

    Degenerate inputs (all points collinear or fewer than 3 distinct)
    return the distinct points themselves.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInput("points must be an (N, 2) array")
    pts = np.unique(pts, axis=0)
    n = pts.shape[0]
    if n < 3:
        return pts

    def cross(o, a, b) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=float)


def hull_area(points: np.ndarray) -> float:
    """Area of the convex hull of a point set; 0 for degenerate sets."""
    hull = convex_hull(points)
    if hull.shape[0] < 3:
        return 0.0
    return polygon_area(hull)


def tca_series(
    overlay: Overlay, pixel_size_um: float, frame_interval_h: float
) -> QuantitySeries:
    """Per-frame total colony area: hull around all boundary vertices.

    Frames without detections contribute zero area.
    """
    if not pixel_size_um > 0:
        raise InvalidInput("pixel_size_um must be positive")
    if not frame_interval_h > 0:
        raise InvalidInput("frame_interval_h must be positive")
    values = []
    for dets in overlay.frames:
        if not dets:
            values.append(0.0)
            continue
        vertices = np.concatenate([d.contour for d in dets], axis=0)
        values.append(hull_area(vertices) * pixel_size_um * pixel_size_um)
    times = np.arange(overlay.n_frames, dtype=float) * frame_interval_h
    return QuantitySeries(times, values, AREA, "TCA")


def fit_loglinear(series: QuantitySeries, measure: str | None = None) -> GrowthFit:
    """OLS fit of log(value) against time, in hours.

    Non-positive values cannot enter the log and are dropped; their
    count is reported. Fewer than two usable points is an error.
    """
    mask = series.values > 0
    n_dropped = int(mask.size - mask.sum())
    x = series.times_h[mask]
    y = np.log(series.values[mask])
    if x.size < 2:
        raise InsufficientData(
            f"log-linear fit needs at least 2 positive points, got {x.size}"
        )
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    r2 = float(min(1.0, max(0.0, r2)))
    return GrowthFit(
        mu=Quantity(float(slope), RATE),
        log_intercept=float(intercept),
        r_squared=r2,
        n_points=int(x.size),
        n_dropped=n_dropped,
        measure=series.name if measure is None else measure,
    )


class TwoMeans(BaseEstimator):
    """Plain k-means with k = 2 and a deterministic start.

    Initial centers are the two points at the extremes of the first
    principal coordinate (ties resolved by lowest row index), so runs
    are reproducible without any random state. Lloyd iterations stop
    when assignments no longer change; an emptied cluster keeps its
    previous center.
    """

    def __init__(self, max_iter: int = 100) -> None:
        self.max_iter = max_iter

    def fit(self, X: np.ndarray) -> "TwoMeans":
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be at least 1")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 2:
            raise InvalidInput("2-means needs a 2-D array with at least 2 rows")
        if not np.all(np.isfinite(X)):
            raise InvalidInput("2-means input must be finite")
        if np.unique(X, axis=0).shape[0] < 2:
            raise DegenerateInput("2-means needs at least 2 distinct points")
        centered = X - X.mean(axis=0)
        cov = centered.T @ centered
        eigvals, eigvecs = np.linalg.eigh(cov)
        axis = eigvecs[:, -1]
        pivot = int(np.argmax(np.abs(axis)))
        if axis[pivot] < 0:
            axis = -axis
        projection = centered @ axis
        centers = np.vstack(
            [X[int(np.argmin(projection))], X[int(np.argmax(projection))]]
        ).astype(float)
        assign = np.full(X.shape[0], -1, dtype=np.int64)
        n_iter = 0
        for n_iter in range(1, int(self.max_iter) + 1):
            delta = X[:, None, :] - centers[None, :, :]
            dist2 = (delta**2).sum(axis=2)
            new_assign = np.argmin(dist2, axis=1)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
            for k in range(2):
                members = X[assign == k]
                if members.shape[0]:
                    centers[k] = members.mean(axis=0)
        delta = X[:, None, :] - centers[None, :, :]
        dist2 = (delta**2).sum(axis=2)
        self.cluster_centers_ = centers
        self.labels_ = assign
        self.inertia_ = float(dist2[np.arange(X.shape[0]), assign].sum())
        self.n_iter_ = n_iter
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        delta = X[:, None, :] - self.cluster_centers_[None, :, :]
        return np.argmin((delta**2).sum(axis=2), axis=1)

    def fit_predict(self, X: np.ndarray) -> np.ndarray:
        return self.fit(X).labels_


def kmeans2(points: np.ndarray, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points into two groups; returns (labels, centers)."""
    model = TwoMeans(max_iter=max_iter).fit(points)
    return model.labels_, model.cluster_centers_


@dataclass(frozen=True)
class StrainAssignment:
    """Tracklet-to-strain mapping from fluorescence clustering."""

    assignment: dict[int, int]  # tracklet label -> strain index (0 or 1)
    centers: np.ndarray  # (2, 2) cluster centers in the two channels
    channels: tuple[str, str]
    discarded: tuple[int, ...]  # labels dim in both channels

    def labels_of(self, strain: int) -> tuple[int, ...]:
        return tuple(
            sorted(l for l, s in self.assignment.items() if s == strain)
        )


def classify_strains(
    tracklets: TrackletTable,
    channels: tuple[str, str],
    nonfluor_threshold_au: float = 0.0,
) -> StrainAssignment:
    """Split tracklets into two strains by median fluorescence.

    Tracklets whose medians fall below the threshold in BOTH channels
    are discarded as non-fluorescent debris before clustering. Strain 0
    is the cluster with the higher center in the first channel.
    """
    if len(channels) != 2 or channels[0] == channels[1]:
        raise InvalidInput("strain classification needs two distinct channels")
    for name in channels:
        if name not in tracklets.medfluor_au:
            raise InvalidInput(
                f"channel {name!r} not in tracklet table; available: "
                f"{list(tracklets.channel_names)}"
            )
    med_a = tracklets.medfluor_au[channels[0]]
    med_b = tracklets.medfluor_au[channels[1]]
    dim = (med_a < nonfluor_threshold_au) & (med_b < nonfluor_threshold_au)
    discarded = tuple(int(l) for l in tracklets.labels[dim])
    kept = ~dim
    kept_labels = tracklets.labels[kept]
    if kept_labels.size < 2:
        raise DegenerateInput(
            "fewer than 2 tracklets passed the fluorescence threshold"
        )
    X = np.column_stack([med_a[kept], med_b[kept]])
    cluster, centers = kmeans2(X)
    if len(np.unique(cluster)) < 2:
        raise DegenerateInput("2-means produced an empty strain")
    # strain 0 = higher center in the first channel
    order = sorted(range(2), key=lambda k: (-centers[k, 0], centers[k, 1]))
    remap = {old: new for new, old in enumerate(order)}
    assignment = {
        int(label): remap[int(c)] for label, c in zip(kept_labels, cluster)
    }
    return StrainAssignment(
        assignment=assignment,
        centers=centers[order],
        channels=(channels[0], channels[1]),
        discarded=discarded,
    )


def per_strain_growth(
    detections: DetectionTable,
    assignment: StrainAssignment,
    *,
    n_frames: int | None = None,
    frame_interval_h: float | None = None,
) -> dict[int, GrowthFit]:
    """Fit TSCA growth separately per strain."""
    fits: dict[int, GrowthFit] = {}
    for strain in (0, 1):
        labels = assignment.labels_of(strain)
        mask = np.isin(detections.labels, labels)
        sub = DetectionTable(
            detections.ids[mask],
            detections.frames[mask],
            detections.times_h[mask],
            detections.labels[mask],
            detections.areas_um2[mask],
            detections.cx_um[mask],
            detections.cy_um[mask],
            {k: v[mask] for k, v in detections.fluor_au.items()},
        )
        series = population_series(
            sub, n_frames=n_frames, frame_interval_h=frame_interval_h
        )["TSCA"]
        fits[strain] = fit_loglinear(series, measure=f"TSCA_strain{strain}")
    return fits


@dataclass(frozen=True)
class IGRSeries:
    """Instantaneous growth rate of one tracklet."""

    label: int
    times_h: np.ndarray  # left endpoint of each difference interval
    values_um2_per_h: np.ndarray
    sigma_frames: float


def igr(
    areas_um2: np.ndarray,
    frame_interval_h: float,
    sigma_frames: float = 4.0,
    *,
    label: int = 0,
    birth_time_h: float = 0.0,
) -> IGRSeries:
    """Instantaneous growth rate from consecutive area samples.

    The raw rate is the forward difference quotient
    ``(a[t+1] - a[t]) / frame_interval_h`` attributed to the earlier
    frame. With ``sigma_frames > 0`` it is smoothed by a Gaussian kernel
    (reflect padding, kernel truncated at 4 sigma); zero sigma returns
    the raw quotients unchanged.
    """
    areas = np.asarray(areas_um2, dtype=float)
    if areas.ndim != 1:
        raise InvalidInput("areas must be a 1-D array")
    if areas.size < 2:
        raise InsufficientData("IGR needs at least 2 area samples")
    if not np.all(np.isfinite(areas)):
        raise InvalidInput("areas must be finite")
    if not frame_interval_h > 0:
        raise InvalidInput("frame_interval_h must be positive")
    if sigma_frames < 0:
        raise InvalidInput("sigma_frames must be non-negative")
    raw = np.diff(areas) / frame_interval_h
    if sigma_frames > 0:
        values = gaussian_filter1d(
            raw, sigma=float(sigma_frames), mode="reflect", truncate=4.0
        )
    else:
        values = raw
    times = birth_time_h + np.arange(raw.size, dtype=float) * frame_interval_h
    return IGRSeries(
        label=int(label),
        times_h=times,
        values_um2_per_h=values,
        sigma_frames=float(sigma_frames),
    )


def tracklet_igr(
    detections: DetectionTable,
    labels: list[int],
    frame_interval_h: float,
    sigma_frames: float = 4.0,
) -> list[IGRSeries]:
    """IGR series for the given tracklet labels, in label order."""
    out = []
    for label in sorted(labels):
        rows = detections.rows_of_label(label)
        if rows.size == 0:
            raise InsufficientData(f"tracklet {label} has no detections")
        out.append(
            igr(
                detections.areas_um2[rows],
                frame_interval_h,
                sigma_frames,
                label=label,
                birth_time_h=float(detections.times_h[rows[0]]),
            )
        )
    return out


def write_igr_csv(series_list: list[IGRSeries], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "time_h", "igr_um2_per_h"])
        for series in series_list:
            for t, v in zip(series.times_h, series.values_um2_per_h):
                writer.writerow([series.label, _fmt(t), _fmt(v)])


def read_igr_csv(path: str | Path) -> list[IGRSeries]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label", "time_h", "igr_um2_per_h"]:
            raise InvalidInput(f"{path} has unexpected header {header!r}")
        grouped: dict[int, list[tuple[float, float]]] = {}
        for row in reader:
            if not row:
                continue
            grouped.setdefault(int(row[0]), []).append(
                (float(row[1]), float(row[2]))
            )
    out = []
    for label in sorted(grouped):
        pairs = grouped[label]
        out.append(
            IGRSeries(
                label=label,
                times_h=np.array([p[0] for p in pairs]),
                values_um2_per_h=np.array([p[1] for p in pairs]),
                sigma_frames=float("nan"),
            )
        )
    return out


def full_cycle_filter(graph: TrackletGraph) -> list[int]:
    """Labels of tracklets observed birth to division (both parents known).

    A tracklet spans a full cycle when it has a parent (so its birth was
    observed) and its fate is division (so its end was observed).
    """
    return [
        tr.label
        for tr in graph.tracklets()
        if tr.parent_label is not None and tr.fate == FATE_DIVIDED
    ]


def min_length_filter(graph: TrackletGraph, min_frames: int) -> TrackletGraph:
    """Drop tracklets shorter than ``min_frames`` frames.

    Children of a removed tracklet become roots. A surviving division
    parent that lost a child cannot stay "divided": its remaining child
    is detached to a root and the parent's fate becomes "lost". Labels
    of surviving tracklets are preserved.
    """
    if min_frames < 1:
        raise InvalidInput("min_frames must be at least 1")
    removed = {
        tr.label for tr in graph.tracklets() if tr.n_frames < int(min_frames)
    }
    survivors = [tr for tr in graph.tracklets() if tr.label not in removed]
    kept_children: dict[int, int] = {}
    for tr in survivors:
        if tr.parent_label is not None and tr.parent_label not in removed:
            kept_children[tr.parent_label] = (
                kept_children.get(tr.parent_label, 0) + 1
            )
    rebuilt = []
    for tr in survivors:
        parent = tr.parent_label
        if parent is not None and parent in removed:
            parent = None
        if parent is not None and kept_children.get(parent, 0) < 2:
            parent = None
        fate = tr.fate
        if tr.fate == FATE_DIVIDED and kept_children.get(tr.label, 0) < 2:
            fate = FATE_LOST
        rebuilt.append(
            Tracklet(
                label=tr.label,
                detections=tr.detections,
                birth_frame=tr.birth_frame,
                fate=fate,
                parent_label=parent,
            )
        )
    return TrackletGraph(rebuilt)
