"""End-to-end workflow for one replicate and batches of replicates.

One replicate runs load -> segment -> size filter -> track -> lineage ->
features -> analyses -> exports -> plots, writing everything under its
own directory. A batch fans replicates out over a thread pool and then
aggregates the per-replicate growth fits; outputs are byte-identical
regardless of worker count because no state is shared and aggregation
sorts by origin id.

Statuses: "ok", "failed:analysis:missing_channel" (co-culture asked
for channels the stack does not have; the other analyses and exports
still run) and "failed:<stage>".
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    GrowthFit,
    classify_strains,
    fit_loglinear,
    full_cycle_filter,
    min_length_filter,
    per_strain_growth,
    population_series,
    tca_series,
    tracklet_igr,
    write_igr_csv,
)
from .errors import BatchFailed, InvalidInput
from .features import extract_detection_features, extract_tracklet_features
from .imagestack import load_label_stack, load_stack
from .report import (
    render_growth,
    render_igr,
    render_lineage,
    render_rate_distribution,
)
from .segmentation import ingest_label_masks, segment_threshold, size_filter, write_overlay
from .textio import fmt_float, sha256_of_obj, write_json
from .tracking import build_tracklets, track, write_tracklets
from .units import quantity

__all__ = [
    "SegmentationConfig",
    "SizeFilterConfig",
    "TrackingConfig",
    "AnalysisConfig",
    "LineageFilterConfig",
    "IgrConfig",
    "CoCultureConfig",
    "WorkflowParams",
    "ReplicateSpec",
    "BatchConfig",
    "ReplicateReport",
    "AggregateReport",
    "run_workflow",
    "run_batch",
]


def _require_keys(obj: dict, known: set[str], where: str) -> None:
    unknown = set(obj) - known
    if unknown:
        raise InvalidInput(f"{where} has unknown keys: {sorted(unknown)}")


@dataclass(frozen=True)
class SegmentationConfig:
    mode: str = "threshold"  # "threshold" or "labels"
    channel: int | str = 0
    threshold: float = 0.5
    polarity: str = "bright"

    def __post_init__(self) -> None:
        if self.mode not in ("threshold", "labels"):
            raise InvalidInput(
                f"segmentation.mode must be 'threshold' or 'labels', "
                f"got {self.mode!r}"
            )
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInput("segmentation.threshold must lie in [0, 1]")
        if self.polarity not in ("bright", "dark"):
            raise InvalidInput("segmentation.polarity must be 'bright' or 'dark'")

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "mode": self.mode,
            "polarity": self.polarity,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SegmentationConfig":
        _require_keys(obj, {"mode", "channel", "threshold", "polarity"},
                      "params.segmentation")
        return cls(
            mode=obj.get("mode", "threshold"),
            channel=obj.get("channel", 0),
            threshold=float(obj.get("threshold", 0.5)),
            polarity=obj.get("polarity", "bright"),
        )


@dataclass(frozen=True)
class SizeFilterConfig:
    min_area_um2: float = 0.0
    max_area_um2: float | None = None

    def __post_init__(self) -> None:
        if self.min_area_um2 < 0:
            raise InvalidInput("size_filter.min_area_um2 must be non-negative")
        if self.max_area_um2 is not None and (
            self.max_area_um2 < self.min_area_um2
        ):
            raise InvalidInput(
                "size_filter.max_area_um2 must be at least min_area_um2"
            )

    def to_dict(self) -> dict:
        return {
            "max_area_um2": self.max_area_um2,
            "min_area_um2": self.min_area_um2,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SizeFilterConfig":
        _require_keys(obj, {"min_area_um2", "max_area_um2"}, "params.size_filter")
        max_area = obj.get("max_area_um2")
        return cls(
            min_area_um2=float(obj.get("min_area_um2", 0.0)),
            max_area_um2=None if max_area is None else float(max_area),
        )


@dataclass(frozen=True)
class TrackingConfig:
    max_link_distance_um: float = 15.0
    area_weight: float = 0.5
    division_area_tolerance: float = 0.3
    enable_divisions: bool = True

    def __post_init__(self) -> None:
        if not self.max_link_distance_um > 0:
            raise InvalidInput("tracking.max_link_distance_um must be positive")
        if self.area_weight < 0:
            raise InvalidInput("tracking.area_weight must be non-negative")
        if self.division_area_tolerance < 0:
            raise InvalidInput(
                "tracking.division_area_tolerance must be non-negative"
            )

    def to_dict(self) -> dict:
        return {
            "area_weight": self.area_weight,
            "division_area_tolerance": self.division_area_tolerance,
            "enable_divisions": self.enable_divisions,
            "max_link_distance_um": self.max_link_distance_um,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrackingConfig":
        _require_keys(
            obj,
            {
                "max_link_distance_um", "area_weight",
                "division_area_tolerance", "enable_divisions",
            },
            "params.tracking",
        )
        return cls(
            max_link_distance_um=float(obj.get("max_link_distance_um", 15.0)),
            area_weight=float(obj.get("area_weight", 0.5)),
            division_area_tolerance=float(
                obj.get("division_area_tolerance", 0.3)
            ),
            enable_divisions=bool(obj.get("enable_divisions", True)),
        )


@dataclass(frozen=True)
class AnalysisConfig:
    growth_measures: bool = True
    co_culture: bool = False
    single_cell_igr: bool = False

    def __post_init__(self) -> None:
        if not (self.growth_measures or self.co_culture or self.single_cell_igr):
            raise InvalidInput("at least one analysis must be enabled")

    def to_dict(self) -> dict:
        return {
            "co_culture": self.co_culture,
            "growth_measures": self.growth_measures,
            "single_cell_igr": self.single_cell_igr,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnalysisConfig":
        _require_keys(
            obj, {"growth_measures", "co_culture", "single_cell_igr"},
            "params.analysis",
        )
        return cls(
            growth_measures=bool(obj.get("growth_measures", True)),
            co_culture=bool(obj.get("co_culture", False)),
            single_cell_igr=bool(obj.get("single_cell_igr", False)),
        )


@dataclass(frozen=True)
class LineageFilterConfig:
    # tracklets shorter than min_frames are treated as spurious
    min_frames: int = 3
    full_cycle_only: bool = True

    def __post_init__(self) -> None:
        if self.min_frames < 1:
            raise InvalidInput("lineage_filter.min_frames must be at least 1")

    def to_dict(self) -> dict:
        return {
            "full_cycle_only": self.full_cycle_only,
            "min_frames": self.min_frames,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LineageFilterConfig":
        _require_keys(obj, {"min_frames", "full_cycle_only"},
                      "params.lineage_filter")
        return cls(
            min_frames=int(obj.get("min_frames", 3)),
            full_cycle_only=bool(obj.get("full_cycle_only", True)),
        )


@dataclass(frozen=True)
class IgrConfig:
    sigma_frames: float = 4.0

    def __post_init__(self) -> None:
        if self.sigma_frames < 0:
            raise InvalidInput("igr.sigma_frames must be non-negative")

    def to_dict(self) -> dict:
        return {"sigma_frames": self.sigma_frames}

    @classmethod
    def from_dict(cls, obj: dict) -> "IgrConfig":
        _require_keys(obj, {"sigma_frames"}, "params.igr")
        return cls(sigma_frames=float(obj.get("sigma_frames", 4.0)))


@dataclass(frozen=True)
class CoCultureConfig:
    channels: tuple[str, str] | None = None
    nonfluor_threshold_au: float = 0.0

    def __post_init__(self) -> None:
        if self.channels is not None and (
            len(self.channels) != 2 or self.channels[0] == self.channels[1]
        ):
            raise InvalidInput(
                "co_culture.channels must name two distinct channels"
            )
        if self.nonfluor_threshold_au < 0:
            raise InvalidInput(
                "co_culture.nonfluor_threshold_au must be non-negative"
            )

    def to_dict(self) -> dict:
        return {
            "channels": None if self.channels is None else list(self.channels),
            "nonfluor_threshold_au": self.nonfluor_threshold_au,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CoCultureConfig":
        _require_keys(obj, {"channels", "nonfluor_threshold_au"},
                      "params.co_culture")
        channels = obj.get("channels")
        return cls(
            channels=None if channels is None else tuple(channels),
            nonfluor_threshold_au=float(obj.get("nonfluor_threshold_au", 0.0)),
        )


@dataclass(frozen=True)
class WorkflowParams:
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    size_filter: SizeFilterConfig = field(default_factory=SizeFilterConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    lineage_filter: LineageFilterConfig = field(
        default_factory=LineageFilterConfig
    )
    igr: IgrConfig = field(default_factory=IgrConfig)
    co_culture: CoCultureConfig = field(default_factory=CoCultureConfig)
    fluor_channels: tuple[str, ...] = ()
    phases: tuple[tuple[float, float, str], ...] = ()

    def __post_init__(self) -> None:
        if self.analysis.co_culture and self.co_culture.channels is None:
            raise InvalidInput(
                "co_culture.channels is required when analysis.co_culture is on"
            )
        for phase in self.phases:
            if len(phase) != 3 or not float(phase[1]) > float(phase[0]):
                raise InvalidInput(
                    "phases must be (t_start_h, t_end_h, name) with "
                    "t_end_h > t_start_h"
                )

    def to_dict(self) -> dict:
        return {
            "analysis": self.analysis.to_dict(),
            "co_culture": self.co_culture.to_dict(),
            "fluor_channels": list(self.fluor_channels),
            "igr": self.igr.to_dict(),
            "lineage_filter": self.lineage_filter.to_dict(),
            "phases": [list(p) for p in self.phases],
            "segmentation": self.segmentation.to_dict(),
            "size_filter": self.size_filter.to_dict(),
            "tracking": self.tracking.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "WorkflowParams":
        _require_keys(
            obj,
            {
                "segmentation", "size_filter", "tracking", "analysis",
                "lineage_filter", "igr", "co_culture", "fluor_channels",
                "phases",
            },
            "params",
        )
        phases = tuple(
            (float(p[0]), float(p[1]), str(p[2]))
            for p in obj.get("phases", ())
        )
        return cls(
            segmentation=SegmentationConfig.from_dict(
                obj.get("segmentation", {})
            ),
            size_filter=SizeFilterConfig.from_dict(obj.get("size_filter", {})),
            tracking=TrackingConfig.from_dict(obj.get("tracking", {})),
            analysis=AnalysisConfig.from_dict(obj.get("analysis", {})),
            lineage_filter=LineageFilterConfig.from_dict(
                obj.get("lineage_filter", {})
            ),
            igr=IgrConfig.from_dict(obj.get("igr", {})),
            co_culture=CoCultureConfig.from_dict(obj.get("co_culture", {})),
            fluor_channels=tuple(obj.get("fluor_channels", ())),
            phases=phases,
        )


@dataclass(frozen=True)
class ReplicateSpec:
    origin_id: str
    stack_path: str
    sidecar_path: str
    labels_path: str | None = None

    def __post_init__(self) -> None:
        if not self.origin_id:
            raise InvalidInput("replicate origin_id must be non-empty")

    def to_dict(self) -> dict:
        return {
            "labels": self.labels_path,
            "origin_id": self.origin_id,
            "sidecar": self.sidecar_path,
            "stack": self.stack_path,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ReplicateSpec":
        _require_keys(obj, {"origin_id", "stack", "sidecar", "labels"},
                      "replicate")
        for key in ("origin_id", "stack", "sidecar"):
            if key not in obj:
                raise InvalidInput(f"replicate missing key {key!r}")
        return cls(
            origin_id=str(obj["origin_id"]),
            stack_path=str(obj["stack"]),
            sidecar_path=str(obj["sidecar"]),
            labels_path=(
                None if obj.get("labels") is None else str(obj["labels"])
            ),
        )


@dataclass(frozen=True)
class BatchConfig:
    replicates: tuple[ReplicateSpec, ...]
    params: WorkflowParams

    def __post_init__(self) -> None:
        if not self.replicates:
            raise InvalidInput("batch needs at least one replicate")
        ids = [r.origin_id for r in self.replicates]
        if len(set(ids)) != len(ids):
            raise InvalidInput("replicate origin_ids must be unique")

    @classmethod
    def from_dict(cls, obj: dict) -> "BatchConfig":
        _require_keys(obj, {"replicates", "params"}, "batch config")
        if "replicates" not in obj:
            raise InvalidInput("batch config missing key 'replicates'")
        replicates = tuple(
            ReplicateSpec.from_dict(r) for r in obj["replicates"]
        )
        params = WorkflowParams.from_dict(obj.get("params", {}))
        return cls(replicates=replicates, params=params)


@dataclass
class ReplicateReport:
    origin_id: str
    status: str
    error: str | None = None
    warnings: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    counts: dict = field(default_factory=dict)
    fits: dict[str, GrowthFit] = field(default_factory=dict)
    strains: dict | None = None
    igr_labels: tuple[int, ...] = ()
    outputs: dict[str, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "counts": self.counts,
            "error": self.error,
            "fits": {
                name: fit.to_json_obj() for name, fit in sorted(self.fits.items())
            },
            "igr_labels": list(self.igr_labels),
            "notes": list(self.notes),
            "origin_id": self.origin_id,
            "outputs": {k: self.outputs[k] for k in sorted(self.outputs)},
            "provenance": self.provenance,
            "status": self.status,
            "strains": self.strains,
            "warnings": list(self.warnings),
        }


def run_workflow(
    replicate: ReplicateSpec, params: WorkflowParams, out_dir: str | Path
) -> ReplicateReport:
    """Run the full pipeline for one replicate, writing into ``out_dir``.

    Never raises for pipeline-stage problems: failures are captured in
    the returned report (status ``failed:<stage>``) and in report.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plots_dir = out / "plots"
    plots_dir.mkdir(exist_ok=True)
    report = ReplicateReport(origin_id=replicate.origin_id, status="ok")
    report.provenance = {
        "config_sha256": sha256_of_obj(
            {"params": params.to_dict(), "replicate": replicate.to_dict()}
        ),
        "package_version": __version__,
    }

    def finish() -> ReplicateReport:
        report_path = out / "report.json"
        write_json(report.to_json_obj(), report_path)
        report.outputs["report"] = report_path.name
        return report

    stage = "load"
    try:
        stack = load_stack(replicate.stack_path, replicate.sidecar_path)
        meta = stack.metadata

        stage = "segment"
        seg = params.segmentation
        if seg.mode == "labels":
            if replicate.labels_path is None:
                raise InvalidInput(
                    "segmentation.mode is 'labels' but the replicate has no "
                    "labels path"
                )
            label_stack = load_label_stack(replicate.labels_path)
            if label_stack.shape != (stack.n_frames, stack.height, stack.width):
                raise InvalidInput(
                    f"label stack shape {label_stack.shape} does not match "
                    f"stack ({stack.n_frames}, {stack.height}, {stack.width})"
                )
            overlay = ingest_label_masks(label_stack)
        else:
            overlay = segment_threshold(
                stack, seg.channel, seg.threshold, seg.polarity
            )
        report.warnings += overlay.warnings

        stage = "size_filter"
        sf = params.size_filter
        overlay = size_filter(
            overlay,
            quantity(sf.min_area_um2, "um2"),
            None if sf.max_area_um2 is None else quantity(sf.max_area_um2, "um2"),
            meta.pixel_size,
        )

        stage = "track"
        tr = params.tracking
        graph = track(
            overlay,
            meta,
            max_link_distance_um=tr.max_link_distance_um,
            area_weight=tr.area_weight,
            division_area_tolerance=tr.division_area_tolerance,
            enable_divisions=tr.enable_divisions,
        )

        stage = "lineage"
        lineage = build_tracklets(graph, overlay)
        if params.lineage_filter.min_frames > 1:
            lineage = min_length_filter(
                lineage, params.lineage_filter.min_frames
            )

        stage = "features"
        fluor = params.fluor_channels or None
        detections = extract_detection_features(overlay, stack, lineage, fluor)
        tracklets = extract_tracklet_features(lineage, detections)
        if detections.channel_names:
            report.notes += (
                "fluorescence columns are raw normalized means, no "
                "background correction",
            )
        report.counts = {
            "height": stack.height,
            "n_detections": len(detections),
            "n_divisions": lineage.n_divisions(),
            "n_frames": stack.n_frames,
            "n_tracklets": len(tracklets),
            "width": stack.width,
        }
        report.provenance["frame_interval_h"] = meta.frame_interval_h
        report.provenance["pixel_size_um"] = meta.pixel_size_um

        stage = "analysis"
        interval = meta.frame_interval_h
        series = {}
        igr_series = []
        if params.analysis.growth_measures:
            series = population_series(
                detections,
                n_frames=stack.n_frames,
                frame_interval_h=interval,
            )
            series["TCA"] = tca_series(overlay, meta.pixel_size_um, interval)
            for name in ("CC", "TCA", "TSCA"):
                report.fits[name] = fit_loglinear(series[name], measure=name)
        if params.analysis.co_culture:
            channels = params.co_culture.channels
            have = set(tracklets.channel_names)
            if not set(channels) <= have:
                report.status = "failed:analysis:missing_channel"
                report.error = (
                    f"co-culture channels {sorted(set(channels) - have)} "
                    f"not measured; available: {sorted(have)}"
                )
            else:
                assignment = classify_strains(
                    tracklets, channels, params.co_culture.nonfluor_threshold_au
                )
                strain_fits = per_strain_growth(
                    detections,
                    assignment,
                    n_frames=stack.n_frames,
                    frame_interval_h=interval,
                )
                for strain, fit in strain_fits.items():
                    report.fits[fit.measure] = fit
                report.strains = {
                    "centers": [
                        [float(v) for v in row] for row in assignment.centers
                    ],
                    "channels": list(assignment.channels),
                    "discarded": list(assignment.discarded),
                    "n_strain0": len(assignment.labels_of(0)),
                    "n_strain1": len(assignment.labels_of(1)),
                }
        if params.analysis.single_cell_igr:
            if params.lineage_filter.full_cycle_only:
                labels = full_cycle_filter(lineage)
            else:
                labels = [
                    t.label for t in lineage.tracklets() if t.n_frames >= 2
                ]
            igr_series = tracklet_igr(
                detections, labels, interval, params.igr.sigma_frames
            )
            report.igr_labels = tuple(s.label for s in igr_series)

        stage = "export"
        detections.to_csv(out / "detections.csv")
        report.outputs["detections"] = "detections.csv"
        tracklets.to_csv(out / "tracklets.csv")
        report.outputs["tracklets"] = "tracklets.csv"
        write_tracklets(lineage, out / "tracklets.json")
        report.outputs["tracklets_json"] = "tracklets.json"
        write_overlay(overlay, out / "overlay.jsonl", out / "masks.rle")
        report.outputs["overlay"] = "overlay.jsonl"
        report.outputs["masks"] = "masks.rle"
        write_json(
            {name: fit.to_json_obj() for name, fit in sorted(report.fits.items())},
            out / "fits.json",
        )
        report.outputs["fits"] = "fits.json"
        if igr_series:
            write_igr_csv(igr_series, out / "igr.csv")
            report.outputs["igr"] = "igr.csv"

        stage = "plots"
        for name, fit in sorted(report.fits.items()):
            if name.startswith("TSCA_strain"):
                continue
            svg = render_growth(series[name], fit)
            path = plots_dir / f"growth_{name}.svg"
            path.write_text(svg)
            report.outputs[f"plot_growth_{name}"] = f"plots/{path.name}"
        if len(lineage):
            color = None
            label = ""
            if igr_series:
                color = {
                    s.label: float(np.mean(s.values_um2_per_h))
                    for s in igr_series
                }
                label = "mean IGR (um2/h)"
            svg = render_lineage(lineage, interval, color, label)
            (plots_dir / "lineage.svg").write_text(svg)
            report.outputs["plot_lineage"] = "plots/lineage.svg"
        if igr_series:
            svg = render_igr(igr_series, params.phases)
            (plots_dir / "igr.svg").write_text(svg)
            report.outputs["plot_igr"] = "plots/igr.svg"
    except Exception as exc:  # noqa: BLE001 - boundary converts to status
        report.status = f"failed:{stage}"
        report.error = f"{type(exc).__name__}: {exc}"
        return finish()
    return finish()


@dataclass
class AggregateReport:
    measures: dict  # measure -> {mu_mean_per_h, mu_std_per_h, n, per_replicate}
    statuses: dict[str, str]
    n_replicates: int
    n_failed: int
    provenance: dict

    def to_json_obj(self) -> dict:
        return {
            "measures": self.measures,
            "n_failed": self.n_failed,
            "n_replicates": self.n_replicates,
            "provenance": self.provenance,
            "statuses": self.statuses,
        }


def run_batch(
    config: BatchConfig, out_dir: str | Path, jobs: int = 1
) -> AggregateReport:
    """Run every replicate (optionally in parallel) and aggregate rates.

    Raises BatchFailed when no replicate produced any fits. Output files
    do not depend on ``jobs``.
    """
    if jobs < 1:
        raise InvalidInput("jobs must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(replicate: ReplicateSpec) -> ReplicateReport:
        return run_workflow(replicate, config.params, out / replicate.origin_id)

    if jobs == 1 or len(config.replicates) == 1:
        reports = [one(r) for r in config.replicates]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, config.replicates))

    reports.sort(key=lambda r: r.origin_id)
    statuses = {r.origin_id: r.status for r in reports}
    n_failed = sum(1 for r in reports if r.status.startswith("failed"))
    usable = [r for r in reports if r.fits]
    if not usable:
        raise BatchFailed(
            f"all {len(reports)} replicates failed: "
            + "; ".join(f"{r.origin_id} {r.status}" for r in reports)
        )

    measure_names = sorted({name for r in usable for name in r.fits})
    measures: dict[str, dict] = {}
    for name in measure_names:
        entries = [
            (r.origin_id, r.fits[name]) for r in usable if name in r.fits
        ]
        mus = np.array([fit.mu_per_h for _, fit in entries], dtype=float)
        measures[name] = {
            "mu_mean_per_h": float(mus.mean()),
            "mu_std_per_h": float(mus.std(ddof=1)) if mus.size > 1 else 0.0,
            "n": int(mus.size),
            "per_replicate": [
                {
                    "mu_per_h": fit.mu_per_h,
                    "origin_id": origin,
                    "r2": fit.r_squared,
                }
                for origin, fit in entries
            ],
        }

    aggregate = AggregateReport(
        measures=measures,
        statuses=statuses,
        n_replicates=len(reports),
        n_failed=n_failed,
        provenance={
            "config_sha256": sha256_of_obj(
                {
                    "params": config.params.to_dict(),
                    "replicates": [r.to_dict() for r in config.replicates],
                }
            ),
            "package_version": __version__,
        },
    )
    agg_dir = out / "aggregate"
    agg_dir.mkdir(exist_ok=True)
    write_json(aggregate.to_json_obj(), agg_dir / "aggregate.json")
    lines = ["origin_id,measure,mu_per_h,r2,n_points"]
    for name in measure_names:
        for entry in measures[name]["per_replicate"]:
            origin = entry["origin_id"]
            fit = next(r.fits[name] for r in usable if r.origin_id == origin)
            lines.append(
                f"{origin},{name},{fmt_float(fit.mu_per_h)},"
                f"{fmt_float(fit.r_squared)},{fit.n_points}"
            )
    (agg_dir / "growth_rates.csv").write_text("\n".join(lines) + "\n")
    plots_dir = agg_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    for name in measure_names:
        entries = [
            (e["origin_id"], e["mu_per_h"])
            for e in measures[name]["per_replicate"]
        ]
        svg = render_rate_distribution(entries)
        (plots_dir / f"rates_{name}.svg").write_text(svg)
    return aggregate
