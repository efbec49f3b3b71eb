"""Command-line interface.

Subcommands:

* ``analyze``  - run the full pipeline on one replicate
* ``batch``    - run many replicates and aggregate their growth rates
* ``simulate`` - render a synthetic scenario to disk with ground truth
* ``report``   - re-render figures from a finished replicate directory

Exit codes: 0 success, 1 runtime failure (a pipeline stage or missing
data file), 2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import (
    GrowthFit,
    population_series,
    read_igr_csv,
    tca_series,
)
from .batch import (
    BatchConfig,
    ReplicateSpec,
    WorkflowParams,
    run_batch,
    run_workflow,
)
from .errors import BatchFailed, ColonyKitError, InvalidInput
from .features import DetectionTable
from .imagestack import load_sidecar
from .report import render_growth, render_igr, render_lineage
from .segmentation import read_overlay
from .synthdata import SimScenario, simulate, write_simulation
from .tracking import read_tracklets

_LOG = logging.getLogger("colonykit")


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InvalidInput(f"config not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"config {p} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise InvalidInput(f"config {p} must hold a JSON object")
    return obj


def _apply_overrides(obj: dict, overrides: list[str]) -> None:
    """Apply ``--set dotted.key=value`` entries onto a config dict."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InvalidInput(f"--set needs KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = obj
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = {}
                node[part] = nxt
            if not isinstance(nxt, dict):
                raise InvalidInput(
                    f"--set cannot descend into {part!r} of {key!r}"
                )
            node = nxt
        node[parts[-1]] = value


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        obj = _load_config(args.config)
        _apply_overrides(obj, args.set or [])
        if "replicate" not in obj:
            raise InvalidInput("analyze config missing key 'replicate'")
        replicate = ReplicateSpec.from_dict(obj["replicate"])
        params = WorkflowParams.from_dict(obj.get("params", {}))
        # surface metadata problems as configuration errors up front
        load_sidecar(replicate.sidecar_path)
    except ColonyKitError as exc:
        return _fail(2, str(exc))
    report = run_workflow(replicate, params, args.out)
    _LOG.info("replicate %s: %s", report.origin_id, report.status)
    if report.status.startswith("failed"):
        stage = report.status.split(":", 1)[-1]
        return _fail(1, f"stage {stage}: {report.error}")
    print(f"{report.origin_id}: ok ({args.out})")
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    try:
        obj = _load_config(args.config)
        _apply_overrides(obj, args.set or [])
        config = BatchConfig.from_dict(obj)
        if args.jobs < 1:
            raise InvalidInput("--jobs must be at least 1")
    except ColonyKitError as exc:
        return _fail(2, str(exc))
    try:
        aggregate = run_batch(config, args.out, jobs=args.jobs)
    except BatchFailed as exc:
        return _fail(1, str(exc))
    for origin, status in aggregate.statuses.items():
        _LOG.info("replicate %s: %s", origin, status)
    print(
        f"batch: {aggregate.n_replicates - aggregate.n_failed}/"
        f"{aggregate.n_replicates} replicates ok ({args.out})"
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        obj = _load_config(args.config)
        _apply_overrides(obj, args.set or [])
        scenario = SimScenario.from_json_obj(obj)
    except ColonyKitError as exc:
        return _fail(2, str(exc))
    except (KeyError, TypeError, ValueError) as exc:
        return _fail(2, f"invalid scenario: {exc}")
    try:
        result = simulate(scenario)
        paths = write_simulation(result, args.out)
    except ColonyKitError as exc:
        return _fail(1, str(exc))
    final_cc = int(result.truth.cc[-1])
    print(
        f"{scenario.resolved_origin_id}: {scenario.n_frames} frames, "
        f"{final_cc} final cells ({paths['stack'].parent})"
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rep_dir = Path(args.config)
    if not rep_dir.is_dir():
        return _fail(2, f"not a replicate directory: {rep_dir}")
    out = Path(args.out)
    try:
        report_path = rep_dir / "report.json"
        if not report_path.exists():
            raise FileNotFoundError(report_path)
        report = json.loads(report_path.read_text())
        fits_path = rep_dir / "fits.json"
        if not fits_path.exists():
            raise FileNotFoundError(fits_path)
        fits_raw = json.loads(fits_path.read_text())
        det_path = rep_dir / "detections.csv"
        if not det_path.exists():
            raise FileNotFoundError(det_path)
        detections = DetectionTable.from_csv(det_path)
    except FileNotFoundError as exc:
        return _fail(1, f"missing file: {exc.args[0]}")
    except (json.JSONDecodeError, ColonyKitError) as exc:
        return _fail(1, f"unreadable replicate data: {exc}")

    counts = report.get("counts", {})
    prov = report.get("provenance", {})
    n_frames = counts.get("n_frames")
    interval = prov.get("frame_interval_h")
    pixel_size = prov.get("pixel_size_um")
    out.mkdir(parents=True, exist_ok=True)
    try:
        series = population_series(
            detections, n_frames=n_frames, frame_interval_h=interval
        )
        overlay_path = rep_dir / "overlay.jsonl"
        masks_path = rep_dir / "masks.rle"
        if (
            overlay_path.exists()
            and masks_path.exists()
            and pixel_size
            and counts.get("height")
            and counts.get("width")
        ):
            overlay = read_overlay(
                overlay_path, masks_path, counts["height"], counts["width"],
                n_frames=n_frames,
            )
            series["TCA"] = tca_series(
                overlay, pixel_size, interval or 1.0
            )
        rendered = []
        for name, raw in sorted(fits_raw.items()):
            if name not in series:
                continue
            fit = GrowthFit.from_json_obj(name, raw)
            (out / f"growth_{name}.svg").write_text(
                render_growth(series[name], fit)
            )
            rendered.append(f"growth_{name}.svg")
        tracklets_path = rep_dir / "tracklets.json"
        if tracklets_path.exists():
            lineage = read_tracklets(tracklets_path)
            if len(lineage):
                (out / "lineage.svg").write_text(
                    render_lineage(lineage, interval or 1.0)
                )
                rendered.append("lineage.svg")
        igr_path = rep_dir / "igr.csv"
        if igr_path.exists():
            igr_series = read_igr_csv(igr_path)
            if igr_series:
                (out / "igr.svg").write_text(render_igr(igr_series))
                rendered.append("igr.svg")
    except ColonyKitError as exc:
        return _fail(1, str(exc))
    print(f"re-rendered {len(rendered)} figure(s) into {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colonykit",
        description=(
            "Single-cell time-lapse analytics: segmentation, lineage "
            "tracking and growth quantification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_set: bool = True) -> None:
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--out", required=True, help="output directory")
        if with_set:
            p.add_argument(
                "--set",
                action="append",
                metavar="KEY=VALUE",
                help="override a config entry via dotted path "
                "(e.g. params.tracking.max_link_distance_um=5)",
            )
        p.add_argument(
            "--log",
            default="warn",
            choices=["error", "warn", "info", "debug"],
            help="log level (stderr)",
        )

    p_analyze = sub.add_parser("analyze", help="run the pipeline on one stack")
    common(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_batch = sub.add_parser("batch", help="run and aggregate many replicates")
    common(p_batch)
    p_batch.add_argument(
        "--jobs", type=int, default=1, help="parallel workers (threads)"
    )
    p_batch.set_defaults(func=cmd_batch)

    p_sim = sub.add_parser("simulate", help="render a synthetic scenario")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_report = sub.add_parser(
        "report", help="re-render figures from a replicate directory"
    )
    p_report.add_argument(
        "--config", required=True,
        help="path to a finished replicate output directory",
    )
    p_report.add_argument("--out", required=True, help="directory for figures")
    p_report.add_argument(
        "--log",
        default="warn",
        choices=["error", "warn", "info", "debug"],
        help="log level (stderr)",
    )
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {"warn": "WARNING"}.get(args.log, args.log.upper())
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
