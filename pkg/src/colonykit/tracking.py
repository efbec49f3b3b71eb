"""Tracking-by-detection with division handling.

Links are chosen per consecutive frame pair by a linear assignment
problem. The cost of linking detection i (frame t) to j (frame t+1) is

    dist(i, j) / max_link_distance + area_weight * |a_j - a_i| / a_i

with pairs farther apart than ``max_link_distance`` forbidden. Leaving a
detection unlinked costs a fixed 1.0 on either side. A second stage
turns leftover detections into division daughters: they may attach to
the nearest already-linked source within the distance gate, provided the
two daughters' summed area stays within a relative tolerance of the
source area, and each source gains at most one extra daughter.

The per-detection graph is then contracted into tracklets (maximal
division-free chains) that form a forest with explicit fates.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from .errors import InvalidGraph, InvalidInput
from .imagestack import StackMetadata
from .segmentation import Overlay

__all__ = [
    "LapResult",
    "lap_solve",
    "LapTracker",
    "track",
    "TrackingGraph",
    "Tracklet",
    "TrackletGraph",
    "build_tracklets",
    "write_tracklets",
    "read_tracklets",
    "FATE_DIVIDED",
    "FATE_LOST",
    "FATE_MOVIE_END",
]

FATE_DIVIDED = "divided"
FATE_LOST = "lost"
FATE_MOVIE_END = "movie_end"
_FATES = (FATE_DIVIDED, FATE_LOST, FATE_MOVIE_END)

# cost marking a forbidden pair; any pair costing more than twice the
# no-assign cost is never chosen, so this only needs to be large
_FORBIDDEN = 1e6


@dataclass(frozen=True)
class LapResult:
    """Solution of one assignment problem."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def lap_solve(cost: np.ndarray, no_assign_cost: float) -> LapResult:
    """Solve a rectangular assignment problem with an opt-out.

    Any row or column may stay unmatched at ``no_assign_cost`` each. The
    returned total is the sum of chosen pair costs plus the opt-out cost
    of every unmatched row and column. Minimality is exact, achieved by
    augmenting to an (R+C) square matrix whose diagonal dummy blocks
    carry the opt-out cost.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InvalidInput(f"cost must be a 2-D matrix, got ndim {cost.ndim}")
    if not np.all(np.isfinite(cost)):
        raise InvalidInput("cost matrix entries must be finite")
    no_assign_cost = float(no_assign_cost)
    if not np.isfinite(no_assign_cost) or no_assign_cost < 0:
        raise InvalidInput("no_assign_cost must be finite and non-negative")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return LapResult((), (n_rows + n_cols) * no_assign_cost)
    size = n_rows + n_cols
    grid = np.full((size, size), np.inf)
    grid[:n_rows, :n_cols] = cost
    grid[np.arange(n_rows), n_cols + np.arange(n_rows)] = no_assign_cost
    grid[n_rows + np.arange(n_cols), np.arange(n_cols)] = no_assign_cost
    grid[n_rows:, n_cols:] = 0.0
    rows, cols = linear_sum_assignment(grid)
    pairs = tuple(
        (int(r), int(c))
        for r, c in zip(rows, cols)
        if r < n_rows and c < n_cols
    )
    matched = len(pairs)
    total = float(
        sum(cost[r, c] for r, c in pairs)
        + (n_rows - matched + n_cols - matched) * no_assign_cost
    )
    return LapResult(pairs, total)


class TrackingGraph:
    """Detection-level links: in-degree <= 1, out-degree <= 2."""

    def __init__(self) -> None:
        self._frame: dict[int, int] = {}
        self._children: dict[int, list[int]] = {}
        self._parent: dict[int, int] = {}

    def add_detection(self, detection_id: int, frame: int) -> None:
        if detection_id in self._frame:
            raise InvalidGraph(f"duplicate detection {detection_id}")
        self._frame[int(detection_id)] = int(frame)

    def add_link(self, src: int, dst: int) -> None:
        if src not in self._frame or dst not in self._frame:
            raise InvalidGraph(f"link {src}->{dst} references unknown detections")
        if self._frame[dst] != self._frame[src] + 1:
            raise InvalidGraph(
                f"link {src}->{dst} must span consecutive frames, got "
                f"{self._frame[src]} -> {self._frame[dst]}"
            )
        if dst in self._parent:
            raise InvalidGraph(f"detection {dst} already has a parent")
        kids = self._children.setdefault(src, [])
        if len(kids) >= 2:
            raise InvalidGraph(f"detection {src} already has two children")
        kids.append(dst)
        self._parent[dst] = src

    def frame_of(self, detection_id: int) -> int:
        return self._frame[detection_id]

    def detections(self) -> list[int]:
        return sorted(self._frame)

    def children(self, detection_id: int) -> tuple[int, ...]:
        return tuple(sorted(self._children.get(detection_id, ())))

    def parent(self, detection_id: int) -> int | None:
        return self._parent.get(detection_id)

    @property
    def n_links(self) -> int:
        return len(self._parent)

    def links(self) -> list[tuple[int, int]]:
        return sorted((src, dst) for dst, src in self._parent.items())


class LapTracker(BaseEstimator):
    """Frame-to-frame linker with two-stage division attachment.

    Parameters
    ----------
    max_link_distance_um : float
        Hard gate on centroid displacement between consecutive frames.
    area_weight : float
        Weight of the relative area change term in the link cost.
    division_area_tolerance : float
        Relative tolerance on (daughter areas sum) vs mother area when
        attaching a second daughter.
    enable_divisions : bool
        Switch the second stage off to get plain one-to-one tracking.
    """

    def __init__(
        self,
        max_link_distance_um: float = 15.0,
        area_weight: float = 0.5,
        division_area_tolerance: float = 0.3,
        enable_divisions: bool = True,
    ) -> None:
        self.max_link_distance_um = max_link_distance_um
        self.area_weight = area_weight
        self.division_area_tolerance = division_area_tolerance
        self.enable_divisions = enable_divisions

    def _validate(self) -> None:
        if not self.max_link_distance_um > 0:
            raise InvalidInput("max_link_distance_um must be positive")
        if self.area_weight < 0:
            raise InvalidInput("area_weight must be non-negative")
        if self.division_area_tolerance < 0:
            raise InvalidInput("division_area_tolerance must be non-negative")

    def track(self, overlay: Overlay, metadata: StackMetadata) -> TrackingGraph:
        self._validate()
        px = metadata.pixel_size_um
        gate = float(self.max_link_distance_um)
        weight = float(self.area_weight)
        tol = float(self.division_area_tolerance)

        graph = TrackingGraph()
        for det in overlay.all_detections():
            graph.add_detection(det.detection_id, det.frame)

        for t in range(overlay.n_frames - 1):
            sources = overlay.frames[t]
            targets = overlay.frames[t + 1]
            if not sources or not targets:
                continue
            src_xy = np.array([d.centroid_px for d in sources], float) * px
            dst_xy = np.array([d.centroid_px for d in targets], float) * px
            src_area = np.array([d.area_px for d in sources], float)
            dst_area = np.array([d.area_px for d in targets], float)
            delta = src_xy[:, None, :] - dst_xy[None, :, :]
            dist = np.sqrt((delta**2).sum(axis=2))
            rel_area = np.abs(dst_area[None, :] - src_area[:, None]) / src_area[
                :, None
            ]
            cost = dist / gate + weight * rel_area
            cost[dist > gate] = _FORBIDDEN
            result = lap_solve(cost, 1.0)
            linked: dict[int, int] = {}
            for i, j in result.pairs:
                if dist[i, j] > gate:
                    continue
                graph.add_link(sources[i].detection_id, targets[j].detection_id)
                linked[i] = j
            if not self.enable_divisions or not linked:
                continue
            taken = set(linked.values())
            candidates: list[tuple[float, int, int]] = []
            for j in range(len(targets)):
                if j in taken:
                    continue
                for i in linked:
                    if dist[i, j] <= gate:
                        candidates.append((float(dist[i, j]), j, i))
            candidates.sort()
            has_extra: set[int] = set()
            used: set[int] = set()
            for _, j, i in candidates:
                if j in used or i in has_extra:
                    continue
                pair_area = dst_area[linked[i]] + dst_area[j]
                if abs(pair_area - src_area[i]) <= tol * src_area[i]:
                    graph.add_link(
                        sources[i].detection_id, targets[j].detection_id
                    )
                    used.add(j)
                    has_extra.add(i)
        return graph


def track(
    overlay: Overlay,
    metadata: StackMetadata,
    max_link_distance_um: float = 15.0,
    area_weight: float = 0.5,
    division_area_tolerance: float = 0.3,
    enable_divisions: bool = True,
) -> TrackingGraph:
    """Track an overlay into a detection-level lineage graph."""
    tracker = LapTracker(
        max_link_distance_um=max_link_distance_um,
        area_weight=area_weight,
        division_area_tolerance=division_area_tolerance,
        enable_divisions=enable_divisions,
    )
    return tracker.track(overlay, metadata)


@dataclass(frozen=True)
class Tracklet:
    """A division-free chain of detections, one per consecutive frame."""

    label: int
    detections: tuple[int, ...]
    birth_frame: int
    fate: str
    parent_label: int | None = None

    @property
    def end_frame(self) -> int:
        return self.birth_frame + len(self.detections) - 1

    @property
    def n_frames(self) -> int:
        return len(self.detections)

    def __post_init__(self) -> None:
        if self.label < 1:
            raise InvalidGraph(f"tracklet labels start at 1, got {self.label}")
        if not self.detections:
            raise InvalidGraph(f"tracklet {self.label} has no detections")
        if self.fate not in _FATES:
            raise InvalidGraph(
                f"tracklet {self.label} fate {self.fate!r} not in {_FATES}"
            )


class TrackletGraph:
    """A forest of tracklets; divisions produce exactly two children."""

    def __init__(self, tracklets: Iterable[Tracklet]) -> None:
        by_label: dict[int, Tracklet] = {}
        for tr in tracklets:
            if tr.label in by_label:
                raise InvalidGraph(f"duplicate tracklet label {tr.label}")
            by_label[tr.label] = tr
        children: dict[int, list[int]] = {label: [] for label in by_label}
        for tr in by_label.values():
            if tr.parent_label is None:
                continue
            parent = by_label.get(tr.parent_label)
            if parent is None:
                raise InvalidGraph(
                    f"tracklet {tr.label} names missing parent {tr.parent_label}"
                )
            if parent.label == tr.label:
                raise InvalidGraph(f"tracklet {tr.label} is its own parent")
            if tr.birth_frame != parent.end_frame + 1:
                raise InvalidGraph(
                    f"tracklet {tr.label} born at {tr.birth_frame}, parent "
                    f"{parent.label} ends at {parent.end_frame}"
                )
            children[parent.label].append(tr.label)
        for label, kids in children.items():
            tr = by_label[label]
            if tr.fate == FATE_DIVIDED and len(kids) != 2:
                raise InvalidGraph(
                    f"divided tracklet {label} has {len(kids)} children"
                )
            if tr.fate != FATE_DIVIDED and kids:
                raise InvalidGraph(
                    f"tracklet {label} has children but fate {tr.fate!r}"
                )
        self._tracklets = dict(sorted(by_label.items()))
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}

    def __len__(self) -> int:
        return len(self._tracklets)

    def __contains__(self, label: int) -> bool:
        return label in self._tracklets

    def __getitem__(self, label: int) -> Tracklet:
        return self._tracklets[label]

    def labels(self) -> list[int]:
        return list(self._tracklets)

    def tracklets(self) -> list[Tracklet]:
        return list(self._tracklets.values())

    def children(self, label: int) -> tuple[int, ...]:
        return self._children[label]

    def roots(self) -> list[int]:
        return [t.label for t in self._tracklets.values() if t.parent_label is None]

    def n_divisions(self) -> int:
        return sum(1 for t in self._tracklets.values() if t.fate == FATE_DIVIDED)

    def canonical_signature(self) -> str:
        """Label-independent fingerprint of the forest.

        Two graphs get the same signature exactly when there is a
        label renaming that maps one onto the other, preserving frame
        extents and parent/child structure.
        """

        def sig(label: int) -> str:
            tr = self._tracklets[label]
            kids = sorted(sig(k) for k in self._children[label])
            return f"({tr.birth_frame},{tr.end_frame}[{','.join(kids)}])"

        return ";".join(sorted(sig(r) for r in self.roots()))

    def to_json_obj(self) -> dict:
        items = []
        for tr in self._tracklets.values():
            items.append(
                {
                    "detections": list(tr.detections),
                    "fate": tr.fate,
                    "frames": list(range(tr.birth_frame, tr.end_frame + 1)),
                    "label": tr.label,
                    "parent": tr.parent_label,
                }
            )
        return {"tracklets": items}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TrackletGraph":
        if not isinstance(obj, dict) or "tracklets" not in obj:
            raise InvalidGraph("tracklet JSON must hold a 'tracklets' list")
        tracklets = []
        for item in obj["tracklets"]:
            frames = item["frames"]
            detections = item["detections"]
            if len(frames) != len(detections):
                raise InvalidGraph(
                    f"tracklet {item.get('label')} has {len(frames)} frames "
                    f"but {len(detections)} detections"
                )
            if frames != list(range(frames[0], frames[0] + len(frames))):
                raise InvalidGraph(
                    f"tracklet {item.get('label')} frames are not consecutive"
                )
            tracklets.append(
                Tracklet(
                    label=int(item["label"]),
                    detections=tuple(int(d) for d in detections),
                    birth_frame=int(frames[0]),
                    fate=item["fate"],
                    parent_label=(
                        None if item["parent"] is None else int(item["parent"])
                    ),
                )
            )
        return cls(tracklets)


def build_tracklets(graph: TrackingGraph, overlay: Overlay) -> TrackletGraph:
    """Contract a detection-level graph into a tracklet forest.

    Labels are assigned in (birth frame, first detection id) order,
    starting at 1. A tracklet ending on the last movie frame gets fate
    ``movie_end``; ending earlier without dividing means ``lost``.
    """
    for det_id in graph.detections():
        if det_id not in overlay.by_id:
            raise InvalidGraph(
                f"graph references detection {det_id} missing from overlay"
            )
    last_frame = overlay.n_frames - 1
    roots = sorted(
        (d for d in graph.detections() if graph.parent(d) is None),
        key=lambda d: (graph.frame_of(d), d),
    )
    chains: list[dict] = []
    queue: deque[tuple[int, int | None]] = deque((r, None) for r in roots)
    while queue:
        start, parent_idx = queue.popleft()
        chain = [start]
        current = start
        while True:
            kids = graph.children(current)
            if len(kids) != 1:
                break
            current = kids[0]
            chain.append(current)
        index = len(chains)
        if len(kids) == 2:
            fate = FATE_DIVIDED
            for kid in kids:
                queue.append((kid, index))
        else:
            fate = (
                FATE_MOVIE_END
                if graph.frame_of(chain[-1]) == last_frame
                else FATE_LOST
            )
        chains.append(
            {
                "detections": chain,
                "birth_frame": graph.frame_of(chain[0]),
                "fate": fate,
                "parent_idx": parent_idx,
            }
        )
    order = sorted(
        range(len(chains)),
        key=lambda i: (chains[i]["birth_frame"], chains[i]["detections"][0]),
    )
    label_of = {idx: rank + 1 for rank, idx in enumerate(order)}
    tracklets = []
    for idx in order:
        chain = chains[idx]
        parent_idx = chain["parent_idx"]
        tracklets.append(
            Tracklet(
                label=label_of[idx],
                detections=tuple(chain["detections"]),
                birth_frame=chain["birth_frame"],
                fate=chain["fate"],
                parent_label=None if parent_idx is None else label_of[parent_idx],
            )
        )
    return TrackletGraph(tracklets)


def write_tracklets(graph: TrackletGraph, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(graph.to_json_obj(), sort_keys=True, indent=2) + "\n"
    )


def read_tracklets(path: str | Path) -> TrackletGraph:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidGraph(f"tracklet file {path} is not valid JSON: {exc}")
    return TrackletGraph.from_json_obj(obj)
