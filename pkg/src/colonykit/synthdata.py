"""Synthetic colonies with exact ground truth.

Cells grow exponentially and split when they pass a per-cell division
threshold. Geometry is deliberately simple so that truth is unambiguous:
the image is divided into horizontal lanes and every cell owns a
contiguous block of lanes. A cell is drawn as a rectangle (one lane
tall) centered on the middle lane of its block and on a common x
center; on division the block is split in half and each daughter takes
one half. Blocks of fewer than four lanes may not divide (the scenario
overflows instead), which keeps every daughter strictly closer to its
own mother than to any other cell and makes perfect tracking the unique
optimum.

All randomness comes from one SplitMix64 stream consumed in a fixed
order, so a scenario is a pure function of its JSON description.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ScenarioOverflow
from .features import DetectionTable, TrackletTable, extract_tracklet_features
from .imagestack import (
    ImageStack,
    StackMetadata,
    save_label_stack_raw,
    save_sidecar,
    save_stack_raw,
)
from .rng import SplitMix64
from .textio import write_json
from .tracking import (
    FATE_DIVIDED,
    FATE_MOVIE_END,
    Tracklet,
    TrackletGraph,
)
from .units import quantity

__all__ = [
    "StrainSpec",
    "SimScenario",
    "TruthCell",
    "GroundTruth",
    "SimResult",
    "simulate",
    "truth_tables",
    "recommended_link_distance_um",
    "write_simulation",
]


@dataclass(frozen=True)
class StrainSpec:
    """Growth rate and fluorescence signature of one strain."""

    mu_star_per_h: float
    fluor_means_au: tuple[float, ...] = ()
    fluor_std_au: float = 0.0

    def __post_init__(self) -> None:
        if not self.mu_star_per_h > 0:
            raise InvalidInput("mu_star_per_h must be positive")
        if self.fluor_std_au < 0:
            raise InvalidInput("fluor_std_au must be non-negative")
        for mean in self.fluor_means_au:
            if not 0.0 <= mean <= 1.0:
                raise InvalidInput("fluor_means_au must lie in [0, 1]")


@dataclass(frozen=True)
class SimScenario:
    """Complete description of one synthetic movie."""

    seed: int
    strains: tuple[StrainSpec, ...]
    n_initial_cells: int = 1
    a0_um2: float = 1.0
    a_div_um2: float = 2.0
    div_noise_std: float = 0.0
    frame_interval_h: float = 0.25
    n_frames: int = 20
    pixel_size_um: float = 0.1
    height_px: int = 128
    width_px: int = 64
    rate_schedule: tuple[tuple[float, float], ...] = ()
    origin_id: str = ""
    lane_height_px: int = 4
    lane_gap_px: int = 2
    margin_px: int = 2
    phase_level: float = 0.9

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise InvalidInput("seed must be non-negative")
        if not self.strains:
            raise InvalidInput("strains must name at least one strain")
        n_fluor = {len(s.fluor_means_au) for s in self.strains}
        if len(n_fluor) != 1:
            raise InvalidInput("strains must define the same fluor channels")
        if self.n_initial_cells < 1:
            raise InvalidInput("n_initial_cells must be at least 1")
        if not 0 < self.a0_um2 < self.a_div_um2:
            raise InvalidInput("need 0 < a0_um2 < a_div_um2")
        if self.div_noise_std < 0:
            raise InvalidInput("div_noise_std must be non-negative")
        if not self.frame_interval_h > 0:
            raise InvalidInput("frame_interval_h must be positive")
        if self.n_frames < 1:
            raise InvalidInput("n_frames must be at least 1")
        if not self.pixel_size_um > 0:
            raise InvalidInput("pixel_size_um must be positive")
        if self.height_px < 8 or self.width_px < 8:
            raise InvalidInput("height_px and width_px must be at least 8")
        last = -math.inf
        for t_switch, mult in self.rate_schedule:
            if t_switch <= last:
                raise InvalidInput("rate_schedule times must strictly increase")
            if not mult > 0:
                raise InvalidInput("rate_schedule multipliers must be positive")
            last = t_switch
        if self.lane_height_px < 1 or self.lane_gap_px < 1 or self.margin_px < 1:
            raise InvalidInput("lane geometry values must be at least 1 px")
        if not 0.0 < self.phase_level <= 1.0:
            raise InvalidInput("phase_level must lie in (0, 1]")

    @property
    def n_fluor(self) -> int:
        return len(self.strains[0].fluor_means_au)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return ("phase",) + tuple(f"fluor{i}" for i in range(self.n_fluor))

    @property
    def resolved_origin_id(self) -> str:
        return self.origin_id or f"sim-{self.seed:016x}"

    def metadata(self) -> StackMetadata:
        return StackMetadata(
            pixel_size=quantity(self.pixel_size_um, "um"),
            frame_interval=quantity(self.frame_interval_h, "h"),
            channel_names=self.channel_names,
            origin_id=self.resolved_origin_id,
        )

    def to_json_obj(self) -> dict:
        return {
            "a0_um2": self.a0_um2,
            "a_div_um2": self.a_div_um2,
            "div_noise_std": self.div_noise_std,
            "frame_interval_min": self.frame_interval_h * 60.0,
            "height_px": self.height_px,
            "lane_gap_px": self.lane_gap_px,
            "lane_height_px": self.lane_height_px,
            "margin_px": self.margin_px,
            "n_frames": self.n_frames,
            "n_initial_cells": self.n_initial_cells,
            "origin_id": self.origin_id,
            "phase_level": self.phase_level,
            "pixel_size_um": self.pixel_size_um,
            "rate_schedule": [list(pair) for pair in self.rate_schedule],
            "seed": self.seed,
            "strains": [
                {
                    "fluor_means_au": list(s.fluor_means_au),
                    "fluor_std_au": s.fluor_std_au,
                    "mu_star_per_h": s.mu_star_per_h,
                }
                for s in self.strains
            ],
            "width_px": self.width_px,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SimScenario":
        if not isinstance(obj, dict):
            raise InvalidInput("scenario must be a JSON object")
        required = {"seed", "strains", "n_frames", "frame_interval_min"}
        missing = required - set(obj)
        if missing:
            raise InvalidInput(f"scenario missing keys: {sorted(missing)}")
        known = {
            "seed", "strains", "n_initial_cells", "a0_um2", "a_div_um2",
            "div_noise_std", "frame_interval_min", "n_frames",
            "pixel_size_um", "height_px", "width_px", "rate_schedule",
            "origin_id", "lane_height_px", "lane_gap_px", "margin_px",
            "phase_level",
        }
        unknown = set(obj) - known
        if unknown:
            raise InvalidInput(f"scenario has unknown keys: {sorted(unknown)}")
        strains = []
        for s in obj["strains"]:
            strains.append(
                StrainSpec(
                    mu_star_per_h=float(s["mu_star_per_h"]),
                    fluor_means_au=tuple(
                        float(v) for v in s.get("fluor_means_au", ())
                    ),
                    fluor_std_au=float(s.get("fluor_std_au", 0.0)),
                )
            )
        kwargs = dict(
            seed=int(obj["seed"]),
            strains=tuple(strains),
            n_frames=int(obj["n_frames"]),
            frame_interval_h=float(obj["frame_interval_min"]) / 60.0,
        )
        for key in (
            "n_initial_cells", "height_px", "width_px",
            "lane_height_px", "lane_gap_px", "margin_px",
        ):
            if key in obj:
                kwargs[key] = int(obj[key])
        for key in (
            "a0_um2", "a_div_um2", "div_noise_std", "pixel_size_um",
            "phase_level",
        ):
            if key in obj:
                kwargs[key] = float(obj[key])
        if "origin_id" in obj:
            kwargs["origin_id"] = str(obj["origin_id"])
        if "rate_schedule" in obj:
            kwargs["rate_schedule"] = tuple(
                (float(t), float(m)) for t, m in obj["rate_schedule"]
            )
        return cls(**kwargs)


@dataclass
class TruthCell:
    """Exact life record of one simulated cell."""

    cell_id: int
    strain: int
    parent: int  # 0 = initial cell
    birth_frame: int
    block: tuple[int, int]  # lane block [lo, hi)
    fate: str = FATE_MOVIE_END
    frames: list[int] = field(default_factory=list)
    areas_um2: list[float] = field(default_factory=list)
    centroids_px: list[tuple[float, float]] = field(default_factory=list)
    rects: list[tuple[int, int, int, int]] = field(default_factory=list)


@dataclass
class GroundTruth:
    """Everything the pipeline should recover from a simulated movie."""

    cells: dict[int, TruthCell]
    lineage: TrackletGraph
    det_ids: dict[tuple[int, int], int]  # (frame, cell id) -> detection id
    cc: np.ndarray
    tsca_um2: np.ndarray
    pixel_size_um: float
    frame_interval_h: float

    def to_json_obj(self) -> dict:
        return {
            "cc": [int(v) for v in self.cc],
            "cells": [
                {
                    "areas_um2": cell.areas_um2,
                    "birth_frame": cell.birth_frame,
                    "block": list(cell.block),
                    "cell_id": cell.cell_id,
                    "centroids_px": [list(c) for c in cell.centroids_px],
                    "fate": cell.fate,
                    "frames": cell.frames,
                    "parent": cell.parent,
                    "rects": [list(r) for r in cell.rects],
                    "strain": cell.strain,
                }
                for _, cell in sorted(self.cells.items())
            ],
            "frame_interval_h": self.frame_interval_h,
            "lineage": self.lineage.to_json_obj(),
            "pixel_size_um": self.pixel_size_um,
            "tsca_um2": [float(v) for v in self.tsca_um2],
        }


@dataclass
class SimResult:
    scenario: SimScenario
    stack: ImageStack
    label_stack: np.ndarray  # (T, H, W) int32 cell ids
    truth: GroundTruth


def _layout(scenario: SimScenario) -> tuple[int, int]:
    """Number of lanes and the (power of two) initial block size."""
    pitch = scenario.lane_height_px + scenario.lane_gap_px
    usable = scenario.height_px - 2 * scenario.margin_px + scenario.lane_gap_px
    n_lanes = usable // pitch
    if n_lanes < scenario.n_initial_cells:
        raise ScenarioOverflow(
            f"{n_lanes} lanes cannot hold {scenario.n_initial_cells} initial "
            "cells"
        )
    per_cell = n_lanes // scenario.n_initial_cells
    block = 1 << (per_cell.bit_length() - 1)
    return n_lanes, block


def recommended_link_distance_um(scenario: SimScenario) -> float:
    """A gate that admits every true link of the scenario.

    The largest frame-to-frame jump is a first-generation division:
    daughters land a quarter of the initial lane block away from the
    mother. Two extra pixels absorb centroid drift from rounding.
    """
    _, block = _layout(scenario)
    pitch = scenario.lane_height_px + scenario.lane_gap_px
    return scenario.pixel_size_um * (pitch * block / 4.0 + 2.0)


def _rate_integral(
    schedule: tuple[tuple[float, float], ...], t0: float, t1: float
) -> float:
    """Integral over [t0, t1] of the piecewise-constant rate multiplier."""
    breaks = [t0]
    for t_switch, _ in schedule:
        if t0 < t_switch < t1:
            breaks.append(t_switch)
    breaks.append(t1)
    total = 0.0
    for left, right in zip(breaks[:-1], breaks[1:]):
        mult = 1.0
        for t_switch, m in schedule:
            if t_switch <= left:
                mult = m
        total += mult * (right - left)
    return total


def simulate(scenario: SimScenario) -> SimResult:
    """Run a scenario into a stack, a label stack and its ground truth."""
    n_lanes, block0 = _layout(scenario)
    pitch = scenario.lane_height_px + scenario.lane_gap_px
    lane_h = scenario.lane_height_px
    height, width = scenario.height_px, scenario.width_px
    n_fluor = scenario.n_fluor
    px_area = scenario.pixel_size_um**2
    x_center = width // 2
    rng = SplitMix64(scenario.seed)

    def draw_threshold() -> float:
        if scenario.div_noise_std > 0:
            return scenario.a_div_um2 * rng.lognormal(0.0, scenario.div_noise_std)
        return scenario.a_div_um2

    cells: dict[int, TruthCell] = {}
    area_of: dict[int, float] = {}
    threshold_of: dict[int, float] = {}
    next_id = 1
    for k in range(scenario.n_initial_cells):
        cid = next_id
        next_id += 1
        cells[cid] = TruthCell(
            cell_id=cid,
            strain=k % len(scenario.strains),
            parent=0,
            birth_frame=0,
            block=(k * block0, (k + 1) * block0),
        )
        area_of[cid] = scenario.a0_um2
        threshold_of[cid] = draw_threshold()
    alive = sorted(cells)

    labels = np.zeros((scenario.n_frames, height, width), dtype=np.int32)
    pixels = np.zeros(
        (scenario.n_frames, height, width, 1 + n_fluor), dtype=np.float32
    )
    cc = np.zeros(scenario.n_frames, dtype=np.int64)
    tsca = np.zeros(scenario.n_frames, dtype=float)

    for t in range(scenario.n_frames):
        for cid in alive:
            cell = cells[cid]
            lo, hi = cell.block
            lane = lo + (hi - lo) // 2
            y0 = scenario.margin_px + lane * pitch
            area_px = area_of[cid] / px_area
            length = max(1, int(round(area_px / lane_h)))
            x0 = x_center - length // 2
            if x0 < 1 or x0 + length > width - 1:
                raise ScenarioOverflow(
                    f"frame {t}: cell {cid} is {length} px long, which does "
                    f"not fit a width of {width} px"
                )
            labels[t, y0 : y0 + lane_h, x0 : x0 + length] = cid
            pixels[t, y0 : y0 + lane_h, x0 : x0 + length, 0] = (
                scenario.phase_level
            )
            strain = scenario.strains[cell.strain]
            for f in range(n_fluor):
                base = strain.fluor_means_au[f]
                if strain.fluor_std_au > 0:
                    noise = rng.normals(lane_h * length)
                    values = np.clip(
                        base + strain.fluor_std_au * noise, 0.0, 1.0
                    ).reshape(lane_h, length)
                else:
                    values = np.full((lane_h, length), base)
                pixels[t, y0 : y0 + lane_h, x0 : x0 + length, 1 + f] = values
            cell.frames.append(t)
            cell.areas_um2.append(area_of[cid])
            cell.centroids_px.append(
                (x0 + length / 2.0 - 0.5, y0 + lane_h / 2.0 - 0.5)
            )
            cell.rects.append((y0, x0, lane_h, length))
            tsca[t] += area_of[cid]
        cc[t] = len(alive)

        if t == scenario.n_frames - 1:
            break
        t0 = t * scenario.frame_interval_h
        t1 = (t + 1) * scenario.frame_interval_h
        survivors: list[int] = []
        for cid in alive:
            cell = cells[cid]
            mu_star = scenario.strains[cell.strain].mu_star_per_h
            area_of[cid] *= math.exp(
                mu_star * _rate_integral(scenario.rate_schedule, t0, t1)
            )
            if area_of[cid] < threshold_of[cid]:
                survivors.append(cid)
                continue
            lo, hi = cell.block
            size = hi - lo
            if size < 4:
                raise ScenarioOverflow(
                    f"frame {t + 1}: cell {cid} wants to divide but its lane "
                    f"block holds only {size} lanes"
                )
            mid = lo + size // 2
            cell.fate = FATE_DIVIDED
            half = area_of[cid] / 2.0
            for sub_block in ((lo, mid), (mid, hi)):
                did = next_id
                next_id += 1
                cells[did] = TruthCell(
                    cell_id=did,
                    strain=cell.strain,
                    parent=cid,
                    birth_frame=t + 1,
                    block=sub_block,
                )
                area_of[did] = half
                threshold_of[did] = draw_threshold()
                survivors.append(did)
            del area_of[cid], threshold_of[cid]
        alive = sorted(survivors)

    det_ids: dict[tuple[int, int], int] = {}
    counter = 1
    for t in range(scenario.n_frames):
        present = [
            c
            for c in cells.values()
            if c.birth_frame <= t < c.birth_frame + len(c.frames)
        ]
        present.sort(key=lambda c: c.block[0])
        for cell in present:
            det_ids[(t, cell.cell_id)] = counter
            counter += 1

    tracklets = []
    for cid, cell in sorted(cells.items()):
        tracklets.append(
            Tracklet(
                label=cid,
                detections=tuple(det_ids[(t, cid)] for t in cell.frames),
                birth_frame=cell.birth_frame,
                fate=cell.fate,
                parent_label=cell.parent if cell.parent else None,
            )
        )
    lineage = TrackletGraph(tracklets)

    truth = GroundTruth(
        cells=cells,
        lineage=lineage,
        det_ids=det_ids,
        cc=cc,
        tsca_um2=tsca,
        pixel_size_um=scenario.pixel_size_um,
        frame_interval_h=scenario.frame_interval_h,
    )
    stack = ImageStack(pixels, scenario.metadata())
    return SimResult(
        scenario=scenario, stack=stack, label_stack=labels, truth=truth
    )


def truth_tables(result: SimResult) -> tuple[DetectionTable, TrackletTable]:
    """Noise-free feature tables straight from the ground truth."""
    scenario = result.scenario
    truth = result.truth
    order = sorted(truth.det_ids.items(), key=lambda kv: kv[1])
    n = len(order)
    ids = np.empty(n, dtype=np.int64)
    frames = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    areas = np.empty(n, dtype=float)
    cx = np.empty(n, dtype=float)
    cy = np.empty(n, dtype=float)
    fluor = {
        name: np.empty(n, dtype=float)
        for name in scenario.channel_names[1:]
    }
    for k, ((t, cid), det_id) in enumerate(order):
        cell = truth.cells[cid]
        at = t - cell.birth_frame
        ids[k] = det_id
        frames[k] = t
        labels[k] = cid
        areas[k] = cell.areas_um2[at]
        cx[k] = cell.centroids_px[at][0] * scenario.pixel_size_um
        cy[k] = cell.centroids_px[at][1] * scenario.pixel_size_um
        means = scenario.strains[cell.strain].fluor_means_au
        for f, name in enumerate(fluor):
            fluor[name][k] = means[f]
    times = frames * scenario.frame_interval_h
    detections = DetectionTable(ids, frames, times, labels, areas, cx, cy, fluor)
    tracklets = extract_tracklet_features(truth.lineage, detections)
    return detections, tracklets


def write_simulation(result: SimResult, out_dir: str | Path) -> dict[str, Path]:
    """Write stack.raw, stack.json, labels.raw, truth.json, scenario.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "stack": out / "stack.raw",
        "sidecar": out / "stack.json",
        "labels": out / "labels.raw",
        "truth": out / "truth.json",
        "scenario": out / "scenario.json",
    }
    save_stack_raw(result.stack.pixels, paths["stack"])
    save_sidecar(result.stack.metadata, paths["sidecar"])
    save_label_stack_raw(result.label_stack, paths["labels"])
    write_json(result.truth.to_json_obj(), paths["truth"])
    write_json(result.scenario.to_json_obj(), paths["scenario"])
    return paths
