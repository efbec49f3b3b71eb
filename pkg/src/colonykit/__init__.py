"""Single-cell time-lapse analytics for microbial colony movies.

The pipeline runs in five steps: load a 2D+t stack, segment cells,
link detections into lineages, extract unit-aware features, and fit
growth models. A batch layer fans the pipeline out over replicates,
and a synthetic-colony simulator provides movies with exact ground
truth for validation.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BatchFailed,
    ColonyKitError,
    DegenerateInput,
    DimensionMismatch,
    DivisionByZero,
    EmptyPlot,
    InconsistentInput,
    InsufficientData,
    InvalidGraph,
    InvalidInput,
    InvalidMetadata,
    ScenarioOverflow,
)
from .units import (
    AREA,
    AREA_RATE,
    DIMENSIONLESS,
    INTENSITY,
    LENGTH,
    RATE,
    TIME,
    Dimension,
    Quantity,
    QuantitySeries,
    parse_unit,
    px_to_physical,
    quantity,
    unit_token,
)
from .imagestack import (
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
from .segmentation import (
    CellDetection,
    LabelMaskSegmenter,
    Overlay,
    ThresholdSegmenter,
    ingest_label_masks,
    read_overlay,
    segment_threshold,
    size_filter,
    write_overlay,
)
from .tracking import (
    LapTracker,
    Tracklet,
    TrackletGraph,
    TrackingGraph,
    build_tracklets,
    lap_solve,
    read_tracklets,
    track,
    write_tracklets,
)
from .features import (
    DetectionTable,
    TrackletTable,
    extract_detection_features,
    extract_tracklet_features,
)
from .analysis import (
    GrowthFit,
    IGRSeries,
    StrainAssignment,
    TwoMeans,
    classify_strains,
    convex_hull,
    fit_loglinear,
    full_cycle_filter,
    hull_area,
    igr,
    kmeans2,
    min_length_filter,
    per_strain_growth,
    population_series,
    read_igr_csv,
    tca_series,
    tracklet_igr,
    write_igr_csv,
)
from .synthdata import (
    GroundTruth,
    SimResult,
    SimScenario,
    StrainSpec,
    recommended_link_distance_um,
    simulate,
    write_simulation,
)
from .report import (
    render_growth,
    render_igr,
    render_lineage,
    render_rate_distribution,
)
from .batch import (
    AggregateReport,
    BatchConfig,
    ReplicateReport,
    ReplicateSpec,
    WorkflowParams,
    run_batch,
    run_workflow,
)
from .rng import SplitMix64

__all__ = [
    "__version__",
    # errors
    "ColonyKitError",
    "BatchFailed",
    "DegenerateInput",
    "DimensionMismatch",
    "DivisionByZero",
    "EmptyPlot",
    "InconsistentInput",
    "InsufficientData",
    "InvalidGraph",
    "InvalidInput",
    "InvalidMetadata",
    "ScenarioOverflow",
    # units
    "Dimension",
    "Quantity",
    "QuantitySeries",
    "parse_unit",
    "quantity",
    "unit_token",
    "px_to_physical",
    "DIMENSIONLESS",
    "LENGTH",
    "AREA",
    "TIME",
    "RATE",
    "INTENSITY",
    "AREA_RATE",
    # images
    "ImageStack",
    "StackMetadata",
    "load_stack",
    "load_sidecar",
    "save_sidecar",
    "save_stack_raw",
    "save_stack_tiff",
    "load_label_stack",
    "save_label_stack_raw",
    # segmentation
    "CellDetection",
    "Overlay",
    "ThresholdSegmenter",
    "LabelMaskSegmenter",
    "segment_threshold",
    "ingest_label_masks",
    "size_filter",
    "write_overlay",
    "read_overlay",
    # tracking
    "LapTracker",
    "TrackingGraph",
    "Tracklet",
    "TrackletGraph",
    "lap_solve",
    "track",
    "build_tracklets",
    "write_tracklets",
    "read_tracklets",
    # features
    "DetectionTable",
    "TrackletTable",
    "extract_detection_features",
    "extract_tracklet_features",
    # analysis
    "GrowthFit",
    "IGRSeries",
    "StrainAssignment",
    "TwoMeans",
    "kmeans2",
    "classify_strains",
    "convex_hull",
    "hull_area",
    "fit_loglinear",
    "population_series",
    "tca_series",
    "per_strain_growth",
    "igr",
    "tracklet_igr",
    "write_igr_csv",
    "read_igr_csv",
    "full_cycle_filter",
    "min_length_filter",
    # synthetic data
    "StrainSpec",
    "SimScenario",
    "SimResult",
    "GroundTruth",
    "simulate",
    "write_simulation",
    "recommended_link_distance_um",
    # report
    "render_growth",
    "render_lineage",
    "render_igr",
    "render_rate_distribution",
    # batch
    "WorkflowParams",
    "ReplicateSpec",
    "BatchConfig",
    "ReplicateReport",
    "AggregateReport",
    "run_workflow",
    "run_batch",
    # rng
    "SplitMix64",
]
