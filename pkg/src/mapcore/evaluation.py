"""Depth-quality evaluation against LiDAR projections and coordinate-error
statistics.

Depth errors compare a predicted depth raster to a ground-truth raster
(typically a projected point cloud) over the pixels valid in both, with
moving objects excluded by semantic class.  Errors are reported as MAE
(meters) and ARE (|pred - truth| / truth, dimensionless) per distance bin
and per semantic group; binning uses the truth depth with half-open
[lo, hi) edges.

Semantic groups aggregate Cityscapes classes:

* flat: road, sidewalk, parking, rail track
* construction: building, wall, fence, guard rail, bridge, tunnel
* object: pole, polegroup, traffic sign, traffic light
* nature: vegetation, terrain

People and vehicle classes, sky, and void are excluded from evaluation
(moving objects are absent from the reference clouds, sky has no surface).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyReportError, ValidationError
from .rasters import DepthMap, PointCloud, SemanticMap
from .geometry import Intrinsics

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_BIN_EDGES = (5.0, 10.0, 20.0)


class SemanticGroup(Enum):
    FLAT = "flat"
    CONSTRUCTION = "construction"
    OBJECT = "object"
    NATURE = "nature"
    EXCLUDED = "excluded"


EVAL_GROUPS = (
    SemanticGroup.FLAT,
    SemanticGroup.CONSTRUCTION,
    SemanticGroup.OBJECT,
    SemanticGroup.NATURE,
)

# Full Cityscapes class names per group, including classes that exist only
# at annotation level (parking, rail track, guard rail, bridge, tunnel,
# polegroup) and never appear among the 19 train IDs.
SEMANTIC_GROUP_BY_NAME: dict[str, SemanticGroup] = {
    "road": SemanticGroup.FLAT,
    "sidewalk": SemanticGroup.FLAT,
    "parking": SemanticGroup.FLAT,
    "rail track": SemanticGroup.FLAT,
    "building": SemanticGroup.CONSTRUCTION,
    "wall": SemanticGroup.CONSTRUCTION,
    "fence": SemanticGroup.CONSTRUCTION,
    "guard rail": SemanticGroup.CONSTRUCTION,
    "bridge": SemanticGroup.CONSTRUCTION,
    "tunnel": SemanticGroup.CONSTRUCTION,
    "pole": SemanticGroup.OBJECT,
    "polegroup": SemanticGroup.OBJECT,
    "traffic light": SemanticGroup.OBJECT,
    "traffic sign": SemanticGroup.OBJECT,
    "vegetation": SemanticGroup.NATURE,
    "terrain": SemanticGroup.NATURE,
    # excluded: people and vehicles move, sky has no surface
    "person": SemanticGroup.EXCLUDED,
    "rider": SemanticGroup.EXCLUDED,
    "car": SemanticGroup.EXCLUDED,
    "truck": SemanticGroup.EXCLUDED,
    "bus": SemanticGroup.EXCLUDED,
    "caravan": SemanticGroup.EXCLUDED,
    "trailer": SemanticGroup.EXCLUDED,
    "train": SemanticGroup.EXCLUDED,
    "motorcycle": SemanticGroup.EXCLUDED,
    "bicycle": SemanticGroup.EXCLUDED,
    "license plate": SemanticGroup.EXCLUDED,
    "sky": SemanticGroup.EXCLUDED,
    "void": SemanticGroup.EXCLUDED,
}

# The 19 Cityscapes train IDs, in order (train id == index).
CITYSCAPES_TRAIN_ID_NAMES = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle",
    "bicycle",
)

VOID_TRAIN_ID = 255


def group_of(train_id: int) -> SemanticGroup:
    """Semantic group of a Cityscapes train ID; void and anything out of
    range count as excluded."""
    if 0 <= train_id < len(CITYSCAPES_TRAIN_ID_NAMES):
        return SEMANTIC_GROUP_BY_NAME[CITYSCAPES_TRAIN_ID_NAMES[train_id]]
    return SemanticGroup.EXCLUDED


def _group_code_lut() -> np.ndarray:
    """uint8 lookup: train id (0..255) -> index into EVAL_GROUPS, or 255
    for excluded."""
    lut = np.full(256, 255, dtype=np.uint8)
    for tid in range(len(CITYSCAPES_TRAIN_ID_NAMES)):
        g = group_of(tid)
        if g is not SemanticGroup.EXCLUDED:
            lut[tid] = EVAL_GROUPS.index(g)
    return lut


_GROUP_LUT = _group_code_lut()


# ---------------------------------------------------------------------------
# error report

def bin_labels(edges: Sequence[float]) -> list[str]:
    labels = [f"<{_fmt(edges[0])}m"]
    labels += [f"{_fmt(lo)}-{_fmt(hi)}m" for lo, hi in zip(edges, edges[1:])]
    labels.append(f">{_fmt(edges[-1])}m")
    return labels


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass
class ErrorReport:
    """MAE/ARE aggregates per (distance bin x semantic group) cell.

    Internally holds error sums and counts so that reports from separate
    images merge exactly (count-weighted).  Column layout of the arrays:
    one column per evaluable group plus a final "all evaluated pixels"
    column, which is what the bin totals come from whether or not a
    semantic raster was supplied.
    """

    bin_edges: tuple[float, ...]
    abs_err_sum: np.ndarray      # float64, shape (n_bins, n_groups + 1)
    rel_err_sum: np.ndarray
    count: np.ndarray            # int64, same shape

    ALL_COLUMN = len(EVAL_GROUPS)

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) + 1

    @property
    def total_pixels(self) -> int:
        return int(self.count[:, self.ALL_COLUMN].sum())

    def _cell(self, sums: np.ndarray, bin_idx: int | None, col: int) -> float:
        if bin_idx is None:
            s = sums[:, col].sum()
            n = self.count[:, col].sum()
        else:
            s = sums[bin_idx, col]
            n = self.count[bin_idx, col]
        return float(s / n) if n else float("nan")

    def mae(self, bin_idx: int | None = None, group: SemanticGroup | None = None) -> float:
        """Mean absolute error in meters; bin_idx/group None = marginal."""
        col = self.ALL_COLUMN if group is None else EVAL_GROUPS.index(group)
        return self._cell(self.abs_err_sum, bin_idx, col)

    def are(self, bin_idx: int | None = None, group: SemanticGroup | None = None) -> float:
        """Mean absolute relative error (dimensionless)."""
        col = self.ALL_COLUMN if group is None else EVAL_GROUPS.index(group)
        return self._cell(self.rel_err_sum, bin_idx, col)

    def pixels(self, bin_idx: int | None = None, group: SemanticGroup | None = None) -> int:
        col = self.ALL_COLUMN if group is None else EVAL_GROUPS.index(group)
        if bin_idx is None:
            return int(self.count[:, col].sum())
        return int(self.count[bin_idx, col])

    def merge(self, other: "ErrorReport") -> "ErrorReport":
        """Exact count-weighted combination (associative and commutative)."""
        if other.bin_edges != self.bin_edges:
            raise ValidationError("cannot merge reports with different bin edges")
        return ErrorReport(
            bin_edges=self.bin_edges,
            abs_err_sum=self.abs_err_sum + other.abs_err_sum,
            rel_err_sum=self.rel_err_sum + other.rel_err_sum,
            count=self.count + other.count,
        )

    def to_dict(self) -> dict:
        labels = bin_labels(self.bin_edges)
        cells = []
        for b, label in enumerate(labels):
            for g in (*EVAL_GROUPS, None):
                n = self.pixels(b, g)
                cells.append({
                    "bin": label,
                    "group": g.value if g else "all",
                    "mae_m": _nan_none(self.mae(b, g)),
                    "are": _nan_none(self.are(b, g)),
                    "pixels": n,
                })
        totals = []
        for g in (*EVAL_GROUPS, None):
            totals.append({
                "group": g.value if g else "all",
                "mae_m": _nan_none(self.mae(None, g)),
                "are": _nan_none(self.are(None, g)),
                "pixels": self.pixels(None, g),
            })
        return {
            "bin_edges_m": list(self.bin_edges),
            "cells": cells,
            "totals": totals,
            "evaluated_pixels": self.total_pixels,
        }

    def write_json(self, path: str | Path, timestamp: str | None = None) -> None:
        payload = self.to_dict()
        if timestamp is not None:
            payload["generated_at"] = timestamp
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["bin", "group", "mae_m", "are", "pixels"])
            d = self.to_dict()
            for cell in d["cells"]:
                writer.writerow([cell["bin"], cell["group"],
                                 _csv_num(cell["mae_m"]), _csv_num(cell["are"]), cell["pixels"]])
            for t in d["totals"]:
                writer.writerow(["total", t["group"],
                                 _csv_num(t["mae_m"]), _csv_num(t["are"]), t["pixels"]])


def _nan_none(x: float):
    return None if isinstance(x, float) and x != x else x


def _csv_num(x):
    return "" if x is None else repr(x)


def depth_errors(
    pred: DepthMap,
    truth: DepthMap,
    sem: SemanticMap | None = None,
    bin_edges: Sequence[float] = DEFAULT_DEPTH_BIN_EDGES,
) -> ErrorReport:
    """Compare predicted depth to ground truth over mutually valid pixels.

    Pixels in excluded semantic groups (people, vehicles, sky, void) are
    dropped entirely when a semantic raster is given.  Raises
    EmptyReportError when nothing is left to evaluate.
    """
    if pred.values.shape != truth.values.shape:
        raise ValidationError(
            f"shape mismatch: pred {pred.values.shape} vs truth {truth.values.shape}"
        )
    edges = tuple(float(e) for e in bin_edges)
    if list(edges) != sorted(set(edges)):
        raise ValidationError(f"bin edges must be strictly increasing, got {bin_edges}")

    evaluated = pred.valid & truth.valid
    if sem is not None:
        if sem.labels.shape != pred.values.shape:
            raise ValidationError(
                f"semantic raster shape {sem.labels.shape} does not match {pred.values.shape}"
            )
        group_code = _GROUP_LUT[sem.labels]
        evaluated &= group_code != 255
    if not evaluated.any():
        raise EmptyReportError("no valid pixels to evaluate")

    p = pred.values[evaluated].astype(np.float64)
    t = truth.values[evaluated].astype(np.float64)
    abs_err = np.abs(p - t)
    rel_err = abs_err / t
    bins = np.digitize(t, edges)            # [lo, hi) half-open on truth depth

    n_bins = len(edges) + 1
    n_cols = len(EVAL_GROUPS) + 1
    abs_sum = np.zeros((n_bins, n_cols))
    rel_sum = np.zeros((n_bins, n_cols))
    count = np.zeros((n_bins, n_cols), dtype=np.int64)

    if sem is not None:
        # excluded pixels are already gone, so every code indexes a group
        gcols = _GROUP_LUT[sem.labels][evaluated].astype(np.int64)
        np.add.at(abs_sum, (bins, gcols), abs_err)
        np.add.at(rel_sum, (bins, gcols), rel_err)
        np.add.at(count, (bins, gcols), 1)
    all_col = np.full(p.shape, len(EVAL_GROUPS), dtype=np.int64)
    np.add.at(abs_sum, (bins, all_col), abs_err)
    np.add.at(rel_sum, (bins, all_col), rel_err)
    np.add.at(count, (bins, all_col), 1)

    return ErrorReport(bin_edges=edges, abs_err_sum=abs_sum, rel_err_sum=rel_sum, count=count)


def combine_reports(reports: Iterable[ErrorReport], per_image: bool = False) -> ErrorReport:
    """Pool per-pixel by default; per_image=True averages per-image cell
    errors instead (each image weighted equally where it has pixels)."""
    reports = list(reports)
    if not reports:
        raise EmptyReportError("no reports to combine")
    if not per_image:
        out = reports[0]
        for r in reports[1:]:
            out = out.merge(r)
        return out
    # per-image averaging: represent each image's cell means with count 1
    edges = reports[0].bin_edges
    abs_sum = np.zeros_like(reports[0].abs_err_sum)
    rel_sum = np.zeros_like(reports[0].rel_err_sum)
    count = np.zeros_like(reports[0].count)
    for r in reports:
        if r.bin_edges != edges:
            raise ValidationError("cannot combine reports with different bin edges")
        has = r.count > 0
        with np.errstate(invalid="ignore"):
            abs_sum[has] += (r.abs_err_sum / r.count)[has]
            rel_sum[has] += (r.rel_err_sum / r.count)[has]
        count += has.astype(np.int64)
    return ErrorReport(bin_edges=edges, abs_err_sum=abs_sum, rel_err_sum=rel_sum, count=count)


# ---------------------------------------------------------------------------
# point-cloud projection

def project_cloud(cloud: PointCloud, k: Intrinsics) -> DepthMap:
    """Pinhole-project camera-frame points into a z-buffer depth raster.

    u = cx + fx*X/Z, v = cy + fy*Y/Z for Z > 0; each point splats into the
    single nearest pixel and the smallest Z per pixel wins.  Uncovered
    pixels are invalid.  Stored values are the z-buffer depth Z, matching
    the convention of the depth models this raster is compared against.
    """
    zbuf = np.full((k.height, k.width), np.inf, dtype=np.float64)
    pts = cloud.points
    if len(pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        front = z > 0
        x, y, z = x[front], y[front], z[front]
        u = np.floor(k.cx + k.fx * x / z + 0.5).astype(np.int64)
        v = np.floor(k.cy + k.fy * y / z + 0.5).astype(np.int64)
        inside = (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
        np.minimum.at(zbuf, (v[inside], u[inside]), z[inside])
    covered = np.isfinite(zbuf)
    values = np.where(covered, zbuf, 0.0).astype(np.float32)
    return DepthMap(values=values, valid=covered, valid_range=(0.0, np.inf))


# ---------------------------------------------------------------------------
# masks

def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks.

    Two empty masks count as a perfect match (1.0) so that per-image
    averages never divide by zero.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


# ---------------------------------------------------------------------------
# coordinate-error statistics

@dataclass(frozen=True)
class IntervalStat:
    """Summary of position errors inside one camera-distance interval."""

    label: str
    count: int
    mean_m: float | None
    median_m: float | None
    q1_m: float | None
    q3_m: float | None
    min_m: float | None
    max_m: float | None


@dataclass
class CoordErrorStats:
    """Mean position error overall and per camera-object distance interval,
    with quartiles for box plots."""

    interval_edges: tuple[float, ...]
    overall: IntervalStat
    intervals: list[IntervalStat]

    def to_dict(self) -> dict:
        def stat(s: IntervalStat) -> dict:
            return {
                "label": s.label, "count": s.count,
                "mean_m": s.mean_m, "median_m": s.median_m,
                "q1_m": s.q1_m, "q3_m": s.q3_m, "min_m": s.min_m, "max_m": s.max_m,
            }
        return {
            "interval_edges_m": list(self.interval_edges),
            "overall": stat(self.overall),
            "intervals": [stat(s) for s in self.intervals],
        }

    def write_json(self, path: str | Path, timestamp: str | None = None) -> None:
        payload = self.to_dict()
        if timestamp is not None:
            payload["generated_at"] = timestamp
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["interval", "count", "mean_m", "median_m",
                             "q1_m", "q3_m", "min_m", "max_m"])
            for s in [self.overall, *self.intervals]:
                writer.writerow([
                    s.label, s.count,
                    *("" if v is None else repr(v)
                      for v in (s.mean_m, s.median_m, s.q1_m, s.q3_m, s.min_m, s.max_m)),
                ])


def _interval_stat(label: str, errors: np.ndarray) -> IntervalStat:
    if errors.size == 0:
        return IntervalStat(label, 0, None, None, None, None, None, None)
    q1, med, q3 = np.percentile(errors, [25.0, 50.0, 75.0])
    return IntervalStat(
        label=label,
        count=int(errors.size),
        mean_m=float(errors.mean()),
        median_m=float(med),
        q1_m=float(q1),
        q3_m=float(q3),
        min_m=float(errors.min()),
        max_m=float(errors.max()),
    )


def coord_error_stats(
    errors_m: Sequence[float],
    camera_distances_m: Sequence[float],
    interval_edges: Sequence[float],
) -> CoordErrorStats:
    """Bin matched-pair position errors by camera-object distance.

    ``errors_m`` and ``camera_distances_m`` are aligned; edges are
    strictly increasing and produce half-open [lo, hi) intervals with
    open-ended first and last bins.
    """
    edges = tuple(float(e) for e in interval_edges)
    if list(edges) != sorted(set(edges)) or not edges:
        raise ValidationError(f"interval edges must be strictly increasing, got {interval_edges}")
    errors = np.asarray(errors_m, dtype=np.float64)
    dists = np.asarray(camera_distances_m, dtype=np.float64)
    if errors.shape != dists.shape:
        raise ValidationError("errors and distances must be aligned")
    labels = bin_labels(edges)
    which = np.digitize(dists, edges)
    intervals = [_interval_stat(labels[i], errors[which == i]) for i in range(len(labels))]
    return CoordErrorStats(
        interval_edges=edges,
        overall=_interval_stat("total", errors),
        intervals=intervals,
    )


# ---------------------------------------------------------------------------
# box-plot SVG (deterministic, no plotting dependency)

def write_box_plot_svg(stats: CoordErrorStats, path: str | Path, title: str = "") -> None:
    """Write whisker box plots of per-interval position error as a small
    standalone SVG (deterministic bytes for fixed input)."""
    boxes = [s for s in stats.intervals if s.count > 0]
    width, height = 640, 360
    mleft, mright, mtop, mbot = 60, 20, 40, 50
    plot_w = width - mleft - mright
    plot_h = height - mtop - mbot
    top = max((s.max_m for s in boxes), default=1.0) or 1.0
    top *= 1.05

    def sx(i: int) -> float:
        return mleft + plot_w * (i + 0.5) / max(len(boxes), 1)

    def sy(v: float) -> float:
        return mtop + plot_h * (1.0 - v / top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{mleft}" y1="{mtop}" x2="{mleft}" y2="{mtop+plot_h}" stroke="black"/>',
        f'<line x1="{mleft}" y1="{mtop+plot_h}" x2="{mleft+plot_w}" y2="{mtop+plot_h}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = top * frac
        parts.append(
            f'<text x="{mleft-6}" y="{sy(v)+4:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>'
        )
        parts.append(
            f'<line x1="{mleft-3}" y1="{sy(v):.1f}" x2="{mleft}" y2="{sy(v):.1f}" stroke="black"/>'
        )
    half = min(24.0, plot_w / (2.5 * max(len(boxes), 1)))
    for i, s in enumerate(boxes):
        cx = sx(i)
        parts += [
            f'<line x1="{cx:.1f}" y1="{sy(s.min_m):.1f}" x2="{cx:.1f}" y2="{sy(s.q1_m):.1f}" stroke="black"/>',
            f'<line x1="{cx:.1f}" y1="{sy(s.q3_m):.1f}" x2="{cx:.1f}" y2="{sy(s.max_m):.1f}" stroke="black"/>',
            f'<line x1="{cx-half:.1f}" y1="{sy(s.min_m):.1f}" x2="{cx+half:.1f}" y2="{sy(s.min_m):.1f}" stroke="black"/>',
            f'<line x1="{cx-half:.1f}" y1="{sy(s.max_m):.1f}" x2="{cx+half:.1f}" y2="{sy(s.max_m):.1f}" stroke="black"/>',
            f'<rect x="{cx-half:.1f}" y="{sy(s.q3_m):.1f}" width="{2*half:.1f}" '
            f'height="{max(sy(s.q1_m)-sy(s.q3_m), 0.5):.1f}" fill="#9ecae1" stroke="black"/>',
            f'<line x1="{cx-half:.1f}" y1="{sy(s.median_m):.1f}" x2="{cx+half:.1f}" y2="{sy(s.median_m):.1f}" stroke="black" stroke-width="2"/>',
            f'<text x="{cx:.1f}" y="{mtop+plot_h+16}" text-anchor="middle" font-size="10">{s.label}</text>',
            f'<text x="{cx:.1f}" y="{mtop+plot_h+30}" text-anchor="middle" font-size="9">n={s.count}</text>',
        ]
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
