"""Command-line surface: locate, eval-depth, dedup, match, simulate, report.

Configuration comes from an optional TOML file (--config) with flat keys
matching the flag names; explicit flags override the file.  Every
subcommand validates its full configuration and input paths before
writing anything.  Exit codes: 0 success, 1 validation error, 2 I/O or
format error.  MAPCORE_LOG sets the log level (stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import (
    DAMAGE_INTERVAL_EDGES,
    PipelineConfig,
    SIGN_INTERVAL_EDGES,
    apply_overrides,
    load_config,
)
from .errors import EmptyReportError, FormatError, MapcoreError, ValidationError
from .evaluation import (
    CoordErrorStats,
    ErrorReport,
    SemanticGroup,
    EVAL_GROUPS,
    bin_labels,
    combine_reports,
    coord_error_stats,
    depth_errors,
    project_cloud,
    write_box_plot_svg,
)
from .geometry import EarthModel, geo_distance
from .matching import load_references, match_annotations, match_database
from .pipeline import process_image, read_detections_jsonl, write_records_geojson, read_records_geojson
from .rasters import load_cloud, load_depth, load_labels, load_meta
from .simulate import make_street_scenes, write_dataset

logger = logging.getLogger("mapcore")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        cfg = _config_from_args(args)
        return args.handler(args, cfg)
    except ValidationError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, EmptyReportError, OSError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MapcoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _setup_logging() -> None:
    level = os.environ.get("MAPCORE_LOG", "WARNING").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapcore",
        description="Geolocate urban objects from street-view depth rasters.",
    )
    parser.add_argument("--version", action="version", version=f"mapcore {__version__}")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file; flags override its keys")
        p.add_argument("--meta", help="recording metadata CSV")
        p.add_argument("--depth-dir", help="directory of depth rasters")
        p.add_argument("--detections", help="detections JSONL file")
        p.add_argument("--labels-dir", help="directory of semantic label PNGs")
        p.add_argument("--cloud-dir", help="directory of point clouds")
        p.add_argument("--truth-depth-dir", help="directory of ground-truth depth rasters")
        p.add_argument("--refs", help="reference GeoJSON/CSV")
        p.add_argument("--records", help="object records GeoJSON")
        p.add_argument("--radius", type=float, help="dedup / database-match radius, m")
        p.add_argument("--max-dist", type=float, help="annotation match ceiling, m")
        p.add_argument("--bearing-tol", type=float, help="database bearing tolerance, deg")
        p.add_argument("--bins", help="bin edges, comma separated meters")
        p.add_argument("--valid-range", help="depth validity MIN,MAX meters")
        p.add_argument("--earth-radius", type=float, help="spherical Earth radius, m")
        p.add_argument("--depth-format", choices=("raw", "pfm"))
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="concurrent image workers")
        p.add_argument("--no-timestamp", action="store_true", default=None,
                       help="omit the generated_at field for byte-stable output")

    p_locate = sub.add_parser("locate", help="turn detections + depth into GeoJSON records")
    add_common(p_locate)
    p_locate.set_defaults(handler=_cmd_locate)

    p_eval = sub.add_parser("eval-depth", help="depth error report vs point clouds")
    add_common(p_eval)
    p_eval.set_defaults(handler=_cmd_eval_depth)

    p_dedup = sub.add_parser("dedup", help="merge duplicate records")
    add_common(p_dedup)
    p_dedup.add_argument("--mode", choices=("chain", "strict"), default="chain")
    p_dedup.set_defaults(handler=_cmd_dedup)

    p_match = sub.add_parser("match", help="match records against references")
    add_common(p_match)
    p_match.add_argument("--mode", choices=("annotations", "database"), default="annotations")
    p_match.set_defaults(handler=_cmd_match)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset with ground truth")
    add_common(p_sim)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--images", type=int, default=5)
    p_sim.add_argument("--billboards", type=int, default=8)
    p_sim.add_argument("--noise-sigma", type=float, default=0.0)
    p_sim.add_argument("--image-size", default="1280x800", help="WxH pixels")
    p_sim.set_defaults(handler=_cmd_simulate)

    p_report = sub.add_parser("report", help="human-readable summary tables")
    add_common(p_report)
    p_report.add_argument("--eval-json", help="depth error report JSON")
    p_report.add_argument("--match-json", help="match result JSON")
    p_report.add_argument("--coord-json", help="coordinate-error stats JSON")
    p_report.add_argument("--svg", action="store_true", help="emit box-plot SVG")
    p_report.set_defaults(handler=_cmd_report)

    return parser


_CONFIG_FLAGS = (
    "meta", "depth_dir", "detections", "labels_dir", "cloud_dir", "truth_depth_dir",
    "refs", "records", "out", "depth_format", "valid_range", "earth_radius",
    "radius", "max_dist", "bearing_tol", "bins", "workers", "no_timestamp",
)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        name: getattr(args, name)
        for name in _CONFIG_FLAGS
        if getattr(args, name, None) is not None
    }
    apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _timestamp(cfg: PipelineConfig) -> str | None:
    if cfg.no_timestamp:
        return None
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _require(cfg: PipelineConfig, *names: str) -> None:
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise ValidationError(f"missing required option(s): {', '.join('--' + n.replace('_', '-') for n in missing)}")


def _require_exists(*paths: str) -> None:
    for p in paths:
        if p and not Path(p).exists():
            raise FormatError(f"input not found: {p}")


def _out_dir(cfg: PipelineConfig) -> Path:
    _require(cfg, "out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _earth(cfg: PipelineConfig) -> EarthModel:
    return EarthModel(radius_m=cfg.earth_radius)


def _depth_path(cfg: PipelineConfig, image_id: str) -> Path:
    suffix = ".pfm" if cfg.depth_format == "pfm" else ".raw"
    return Path(cfg.depth_dir) / f"{image_id}{suffix}"


# ---------------------------------------------------------------------------
# subcommands

def _cmd_locate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    _require(cfg, "meta", "depth_dir", "detections")
    _require_exists(cfg.meta, cfg.depth_dir, cfg.detections)
    em = _earth(cfg)

    metas = load_meta(cfg.meta)
    detections = read_detections_jsonl(cfg.detections)
    for meta in metas:
        _require_exists(str(_depth_path(cfg, meta.image_id)))
    out = _out_dir(cfg)

    def run_one(meta):
        dm = load_depth(_depth_path(cfg, meta.image_id), cfg.valid_range, cfg.depth_format)
        return process_image(meta, dm, detections.get(meta.image_id, []), em)

    ordered = sorted(metas, key=lambda m: m.image_id)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_one, ordered))
    else:
        results = [run_one(m) for m in ordered]

    records, skipped = [], []
    for recs, skips in results:
        records.extend(recs)
        skipped.extend(skips)

    write_records_geojson(records, out / "records.geojson")
    skip_payload = {
        "skipped": [
            {"detection_id": s.detection_id, "class": s.class_id, "reason": s.reason}
            for s in skipped
        ]
    }
    ts = _timestamp(cfg)
    if ts:
        skip_payload["generated_at"] = ts
    (out / "skipped.json").write_text(json.dumps(skip_payload, indent=2, sort_keys=True) + "\n")
    print(f"located {len(records)} objects ({len(skipped)} skipped) -> {out / 'records.geojson'}")
    return 0


def _cmd_eval_depth(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    _require(cfg, "meta", "depth_dir")
    if not cfg.cloud_dir and not cfg.truth_depth_dir:
        raise ValidationError("eval-depth needs --cloud-dir or --truth-depth-dir")
    _require_exists(cfg.meta, cfg.depth_dir, cfg.cloud_dir or "", cfg.truth_depth_dir or "",
                    cfg.labels_dir or "")
    metas = load_meta(cfg.meta)
    reports = []
    for meta in metas:
        pred_path = _depth_path(cfg, meta.image_id)
        _require_exists(str(pred_path))
        pred = load_depth(pred_path, cfg.valid_range, cfg.depth_format)
        if cfg.truth_depth_dir:
            truth_path = Path(cfg.truth_depth_dir) / pred_path.name
            _require_exists(str(truth_path))
            truth = load_depth(truth_path, cfg.valid_range, cfg.depth_format)
        else:
            cloud_path = Path(cfg.cloud_dir) / f"{meta.image_id}.xyz"
            if not cloud_path.exists():
                cloud_path = cloud_path.with_suffix(".ply")
            _require_exists(str(cloud_path))
            truth = project_cloud(load_cloud(cloud_path), meta.intrinsics)
        sem = None
        if cfg.labels_dir:
            label_path = Path(cfg.labels_dir) / f"{meta.image_id}.png"
            _require_exists(str(label_path))
            sem = load_labels(label_path)
        try:
            reports.append(depth_errors(pred, truth, sem, cfg.bins))
        except EmptyReportError:
            logger.warning("no evaluable pixels for %s", meta.image_id)
    if not reports:
        raise EmptyReportError("no image produced an evaluable report")
    out = _out_dir(cfg)
    combined = combine_reports(reports)
    combined.write_json(out / "depth_errors.json", _timestamp(cfg))
    combined.write_csv(out / "depth_errors.csv")
    print(f"evaluated {combined.total_pixels} pixels over {len(reports)} images -> "
          f"{out / 'depth_errors.json'}")
    return 0


def _cmd_dedup(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    from .matching import dedup as dedup_records

    _require(cfg, "records")
    _require_exists(cfg.records)
    records = read_records_geojson(cfg.records)
    out = _out_dir(cfg)
    merged = dedup_records(records, cfg.radius, _earth(cfg), mode=args.mode)
    write_records_geojson(merged, out / "deduped.geojson")
    print(f"dedup: {len(records)} -> {len(merged)} records ({out / 'deduped.geojson'})")
    return 0


def _cmd_match(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    _require(cfg, "records", "refs")
    _require_exists(cfg.records, cfg.refs)
    em = _earth(cfg)
    records = read_records_geojson(cfg.records)
    refs = load_references(cfg.refs)
    out = _out_dir(cfg)

    interval_edges = cfg.bins if cfg.bins != PipelineConfig().bins else SIGN_INTERVAL_EDGES
    if args.mode == "database":
        result = match_database(records, refs, cfg.radius if cfg.radius != PipelineConfig().radius
                                else cfg.max_dist, cfg.bearing_tol, em, interval_edges)
    else:
        result = match_annotations(records, refs, cfg.max_dist, em, interval_edges)

    ts = _timestamp(cfg)
    result.write_json(out / "match.json", ts)
    result.write_pairs_csv(out / "match_pairs.csv")

    # per-interval stats over the true camera-object distance, when the
    # records carry their camera position
    by_id = {r.object_id: r for r in records}
    ref_by_id = {r.ref_id: r for r in refs}
    errors, true_dists = [], []
    for pair in result.pairs:
        rec = by_id[pair.pred_id]
        if rec.camera is None:
            continue
        errors.append(pair.distance_m)
        true_dists.append(geo_distance(rec.camera, ref_by_id[pair.ref_id].point, em))
    if errors:
        stats = coord_error_stats(errors, true_dists, interval_edges)
        stats.write_json(out / "coord_stats.json", ts)
        stats.write_csv(out / "coord_stats.csv")
    print(f"matched {len(result.pairs)} of {len(refs)} references "
          f"(found fraction {result.found_fraction:.3f}) -> {out / 'match.json'}")
    return 0


def _cmd_simulate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    try:
        width, height = (int(v) for v in args.image_size.lower().split("x"))
    except ValueError:
        raise ValidationError(f"--image-size must look like 1280x800, got {args.image_size!r}")
    scenes = make_street_scenes(
        n_images=args.images,
        billboards_per_image=args.billboards,
        seed=args.seed,
        image_size=(width, height),
        noise_sigma=args.noise_sigma,
        em=_earth(cfg),
    )
    summary = write_dataset(scenes, out, cfg.depth_format, _earth(cfg), cfg.valid_range)
    print(f"simulated {summary['images']} images / {summary['objects']} objects -> {out}")
    return 0


def _cmd_report(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    out = _out_dir(cfg)
    lines: list[str] = []
    if args.eval_json:
        _require_exists(args.eval_json)
        lines += _render_eval_table(json.loads(Path(args.eval_json).read_text()))
        lines.append("")
    if args.match_json:
        _require_exists(args.match_json)
        lines += _render_match_table(json.loads(Path(args.match_json).read_text()))
        lines.append("")
    if args.coord_json:
        _require_exists(args.coord_json)
        coord = json.loads(Path(args.coord_json).read_text())
        lines += _render_coord_table(coord)
        lines.append("")
        if args.svg:
            stats = _coord_stats_from_dict(coord)
            write_box_plot_svg(stats, out / "coord_box_plot.svg",
                               title="position error vs camera distance")
    if not lines:
        raise ValidationError("report needs at least one of --eval-json/--match-json/--coord-json")
    ts = _timestamp(cfg)
    if ts:
        lines.append(f"generated_at: {ts}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _render_eval_table(data: dict) -> list[str]:
    edges = data["bin_edges_m"]
    labels = ["total", *bin_labels(edges), *(g.value for g in EVAL_GROUPS)]
    cells = {(c["bin"], c["group"]): c for c in data["cells"]}
    totals = {t["group"]: t for t in data["totals"]}

    def fmt(c) -> tuple[str, str]:
        if c is None or c["mae_m"] is None:
            return "-", "-"
        return f"{c['mae_m']:.2f}", f"{c['are']:.3f}"

    head = f"{'scope':<14}{'MAE':>8}{'ARE':>8}{'pixels':>10}"
    lines = ["depth error report", head, "-" * len(head)]
    for label in labels:
        if label == "total":
            cell = totals["all"]
        elif label in {g.value for g in EVAL_GROUPS}:
            cell = totals.get(label)
        else:
            cell = cells.get((label, "all"))
        mae, are = fmt(cell)
        pixels = cell["pixels"] if cell else 0
        lines.append(f"{label:<14}{mae:>8}{are:>8}{pixels:>10}")
    return lines


def _render_match_table(data: dict) -> list[str]:
    s = data["summary"]
    lines = ["match summary"]
    lines.append(f"  found: {s['matched']} of {s['references']} references "
                 f"({100.0 * s['found_fraction']:.1f}%)")
    if s["mean_distance_m"] is not None:
        lines.append(f"  avg distance (m): {s['mean_distance_m']:.2f} "
                     f"(median {s['median_distance_m']:.2f})")
    for label, mean in s.get("interval_mean_m", {}).items():
        lines.append(f"    {label}: {mean:.2f}")
    return lines


def _render_coord_table(data: dict) -> list[str]:
    lines = ["coordinate error vs true camera-object distance"]
    head = f"{'interval':<12}{'n':>6}{'mean':>8}{'median':>8}{'q1':>8}{'q3':>8}"
    lines += [head, "-" * len(head)]
    for s in [data["overall"], *data["intervals"]]:
        if s["count"] == 0:
            lines.append(f"{s['label']:<12}{0:>6}{'-':>8}{'-':>8}{'-':>8}{'-':>8}")
        else:
            lines.append(
                f"{s['label']:<12}{s['count']:>6}{s['mean_m']:>8.2f}{s['median_m']:>8.2f}"
                f"{s['q1_m']:>8.2f}{s['q3_m']:>8.2f}"
            )
    return lines


def _coord_stats_from_dict(data: dict) -> CoordErrorStats:
    from .evaluation import IntervalStat

    def stat(d: dict) -> IntervalStat:
        return IntervalStat(
            label=d["label"], count=d["count"], mean_m=d["mean_m"],
            median_m=d["median_m"], q1_m=d["q1_m"], q3_m=d["q3_m"],
            min_m=d["min_m"], max_m=d["max_m"],
        )

    return CoordErrorStats(
        interval_edges=tuple(data["interval_edges_m"]),
        overall=stat(data["overall"]),
        intervals=[stat(s) for s in data["intervals"]],
    )


if __name__ == "__main__":
    sys.exit(main())
