"""Turn detections plus a depth raster into georeferenced object records.

One record per locatable detection: the detection's depth is sampled from
the raster (bounding boxes read the center pixel, masks average their
valid pixels), pushed through the pixel-to-geocoordinate chain, and
flagged reliable when the estimated camera-object distance stays under
20 m.  Mask detections additionally carry an extent: the two horizontally
outermost valid mask pixels located with their own per-pixel depths,
which brackets wide objects such as a long graffiti patch.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RELIABLE_MAX_DISTANCE_M
from .errors import NoDepthError, ValidationError
from .geometry import (
    DEFAULT_EARTH,
    EarthModel,
    GeoPoint,
    PixelCoord,
    locate_pixel,
)
from .rasters import DepthMap, RecordingMeta, load_mask

logger = logging.getLogger(__name__)


@dataclass
class Detection:
    """A detected object: class plus either a bounding box or a mask.

    bbox corners are inclusive pixel indices (x0, y0, x1, y1); a mask is a
    boolean raster of the full image size.
    """

    class_id: str
    bbox: tuple[int, int, int, int] | None = None
    mask: np.ndarray | None = None
    score: float | None = None
    detection_id: str | None = None

    def __post_init__(self) -> None:
        if (self.bbox is None) == (self.mask is None):
            raise ValidationError("detection needs exactly one of bbox or mask")
        if self.bbox is not None:
            x0, y0, x1, y1 = self.bbox
            if x1 < x0 or y1 < y0:
                raise ValidationError(f"bbox corners not ordered: {self.bbox}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.ndim != 2:
                raise ValidationError("mask must be 2-D")


@dataclass(frozen=True)
class ObjectRecord:
    """A localized object with provenance and reliability flag."""

    object_id: str
    class_id: str
    point: GeoPoint
    image_id: str
    bearing_eff_deg: float
    distance_m: float
    reliable: bool
    extent: tuple[GeoPoint, GeoPoint] | None = None
    camera: GeoPoint | None = None
    source_images: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.distance_m <= 0:
            raise ValidationError("camera-object distance must be positive")
        if self.extent is not None:
            from .geometry import geo_distance

            for end in self.extent:
                if geo_distance(self.point, end) > 2.0 * self.distance_m:
                    raise ValidationError(
                        f"extent endpoint of {self.object_id} lies beyond twice the "
                        f"camera-object distance ({self.distance_m} m)"
                    )
        if not self.source_images:
            object.__setattr__(self, "source_images", (self.image_id,))


@dataclass(frozen=True)
class SkippedDetection:
    """Why a detection produced no record."""

    detection_id: str
    class_id: str
    reason: str


def _round_half_up(value: float) -> int:
    import math

    return int(math.floor(value + 0.5))


def _bbox_center(det: Detection) -> tuple[int, int]:
    x0, y0, x1, y1 = det.bbox
    return _round_half_up((x0 + x1) / 2.0), _round_half_up((y0 + y1) / 2.0)


def _check_in_bounds(det: Detection, dm: DepthMap) -> None:
    if det.bbox is not None:
        x0, y0, x1, y1 = det.bbox
        if x0 < 0 or y0 < 0 or x1 >= dm.width or y1 >= dm.height:
            raise ValidationError(
                f"bbox {det.bbox} exceeds image {dm.width}x{dm.height}"
            )
    else:
        if det.mask.shape != (dm.height, dm.width):
            raise ValidationError(
                f"mask shape {det.mask.shape} does not match depth {dm.height}x{dm.width}"
            )


def _sample_depth(
    dm: DepthMap, det: Detection, mask_reduce: str = "mean"
) -> tuple[PixelCoord, float]:
    """Depth-sampling pixel and depth value for a detection.

    bbox: the depth at the bbox center pixel, falling back to the mean of
    valid pixels in the surrounding 3x3 window when the center itself is
    invalid.  mask: the mean (or median) over valid masked pixels, sampled
    at the rounded centroid of those pixels.
    """
    if det.bbox is not None:
        cx, cy = _bbox_center(det)
        if dm.valid[cy, cx]:
            return PixelCoord(float(cx), float(cy)), float(dm.values[cy, cx])
        y0, y1 = max(cy - 1, 0), min(cy + 2, dm.height)
        x0, x1 = max(cx - 1, 0), min(cx + 2, dm.width)
        window_valid = dm.valid[y0:y1, x0:x1]
        if window_valid.any():
            value = float(dm.values[y0:y1, x0:x1][window_valid].astype(np.float64).mean())
            return PixelCoord(float(cx), float(cy)), value
        raise NoDepthError("bbox center and its 3x3 neighborhood have no valid depth")

    selected = det.mask & dm.valid
    if not selected.any():
        raise NoDepthError("mask covers no valid depth pixel")
    values = dm.values[selected].astype(np.float64)
    if mask_reduce == "mean":
        depth = float(values.mean())
    elif mask_reduce == "median":
        depth = float(np.median(values))
    else:
        raise ValidationError(f"mask_reduce must be 'mean' or 'median', got {mask_reduce!r}")
    ys, xs = np.nonzero(selected)
    px = _round_half_up(float(xs.mean()))
    py = _round_half_up(float(ys.mean()))
    return PixelCoord(float(px), float(py)), depth


def object_depth(dm: DepthMap, det: Detection, mask_reduce: str = "mean") -> float:
    """Camera-object distance in meters for a detection."""
    _check_in_bounds(det, dm)
    return _sample_depth(dm, det, mask_reduce)[1]


def _mask_extent_pixels(det: Detection, dm: DepthMap) -> list[tuple[int, int]]:
    """Leftmost and rightmost valid mask pixels, one per outer column; the
    row is the rounded mean row of valid pixels in that column."""
    selected = det.mask & dm.valid
    cols = np.nonzero(selected.any(axis=0))[0]
    out = []
    for col in (cols[0], cols[-1]):
        rows = np.nonzero(selected[:, col])[0]
        out.append((int(col), _round_half_up(float(rows.mean()))))
    return out


def locate_object(
    det: Detection,
    dm: DepthMap,
    meta: RecordingMeta,
    em: EarthModel = DEFAULT_EARTH,
    mask_reduce: str = "mean",
    object_id: str | None = None,
) -> ObjectRecord:
    """Locate one detection; raises NoDepthError when nothing under it is
    valid and propagates geometry errors."""
    _check_in_bounds(det, dm)
    pixel, depth = _sample_depth(dm, det, mask_reduce)
    located = locate_pixel(pixel, depth, meta.pose, meta.intrinsics, em)

    extent = None
    if det.mask is not None:
        (xl, yl), (xr, yr) = _mask_extent_pixels(det, dm)
        if (xl, yl) != (xr, yr):
            left = locate_pixel(
                PixelCoord(float(xl), float(yl)), float(dm.values[yl, xl]),
                meta.pose, meta.intrinsics, em,
            )
            right = locate_pixel(
                PixelCoord(float(xr), float(yr)), float(dm.values[yr, xr]),
                meta.pose, meta.intrinsics, em,
            )
            extent = (left.point, right.point)

    return ObjectRecord(
        object_id=object_id or det.detection_id or f"{meta.image_id}:{det.class_id}",
        class_id=det.class_id,
        point=located.point,
        image_id=meta.image_id,
        bearing_eff_deg=located.angles.bearing_eff,
        distance_m=depth,
        reliable=depth < RELIABLE_MAX_DISTANCE_M,
        extent=extent,
        camera=GeoPoint(meta.pose.lat, meta.pose.lon),
    )


def process_image(
    meta: RecordingMeta,
    dm: DepthMap,
    detections: list[Detection],
    em: EarthModel = DEFAULT_EARTH,
    mask_reduce: str = "mean",
) -> tuple[list[ObjectRecord], list[SkippedDetection]]:
    """Locate every detection of one image; skipped ones come back with a
    reason instead of failing the batch."""
    if (dm.height, dm.width) != (meta.intrinsics.height, meta.intrinsics.width):
        raise ValidationError(
            f"depth raster {dm.width}x{dm.height} does not match intrinsics "
            f"{meta.intrinsics.width}x{meta.intrinsics.height} for {meta.image_id}"
        )
    records: list[ObjectRecord] = []
    skipped: list[SkippedDetection] = []
    for i, det in enumerate(detections):
        det_id = det.detection_id or f"{meta.image_id}:{i}"
        try:
            records.append(
                locate_object(det, dm, meta, em, mask_reduce, object_id=det_id)
            )
        except (NoDepthError, ValidationError) as exc:
            logger.info("skipping %s (%s): %s", det_id, det.class_id, exc)
            skipped.append(SkippedDetection(det_id, det.class_id, str(exc)))
    return records, skipped


# ---------------------------------------------------------------------------
# detection input (JSON lines) and record output (GeoJSON)

def read_detections_jsonl(path: str | Path) -> dict[str, list[Detection]]:
    """Read detections grouped by image id.

    One JSON object per line: {"image_id": ..., "detections": [{"class": ...,
    "bbox": [x0, y0, x1, y1] | "mask_path": ..., "score": ...}]}.  Mask
    paths resolve relative to the JSONL file.
    """
    path = Path(path)
    base = path.parent
    out: dict[str, list[Detection]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                image_id = entry["image_id"]
                raw_dets = entry["detections"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad detection entry: {exc}") from exc
            dets = []
            for i, rd in enumerate(raw_dets):
                try:
                    cls = rd["class"]
                except (KeyError, TypeError) as exc:
                    raise ValidationError(f"{path}:{lineno}: detection missing class") from exc
                bbox = rd.get("bbox")
                mask = None
                if rd.get("mask_path"):
                    mask = load_mask(base / rd["mask_path"])
                dets.append(Detection(
                    class_id=str(cls),
                    bbox=tuple(int(v) for v in bbox) if bbox else None,
                    mask=mask,
                    score=rd.get("score"),
                    detection_id=rd.get("id") or f"{image_id}:{i}",
                ))
            out.setdefault(image_id, []).extend(dets)
    return out


def records_to_geojson(records: list[ObjectRecord]) -> dict:
    """GeoJSON FeatureCollection: one Point feature per record, plus one
    LineString feature per record that carries an extent."""
    features = []
    for r in records:
        props = {
            "object_id": r.object_id,
            "class": r.class_id,
            "image_id": r.image_id,
            "distance_m": r.distance_m,
            "bearing_eff_deg": r.bearing_eff_deg,
            "reliable": r.reliable,
            "source_images": list(r.source_images),
        }
        if r.camera is not None:
            props["camera_lat"] = r.camera.lat
            props["camera_lon"] = r.camera.lon
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [r.point.lon, r.point.lat]},
            "properties": props,
        })
        if r.extent is not None:
            features.append({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.lon, p.lat] for p in r.extent],
                },
                "properties": {"object_id": r.object_id, "kind": "extent"},
            })
    return {"type": "FeatureCollection", "features": features}


def write_records_geojson(records: list[ObjectRecord], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(records_to_geojson(records), indent=2, sort_keys=True) + "\n"
    )


def read_records_geojson(path: str | Path) -> list[ObjectRecord]:
    """Read Point features back into records; extent LineStrings reattach
    by object id."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        features = data["features"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: not a GeoJSON FeatureCollection: {exc}") from exc

    extents: dict[str, tuple[GeoPoint, GeoPoint]] = {}
    for feat in features:
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") == "LineString" and props.get("kind") == "extent":
            coords = geom["coordinates"]
            extents[props["object_id"]] = (
                GeoPoint(coords[0][1], coords[0][0]),
                GeoPoint(coords[-1][1], coords[-1][0]),
            )

    records = []
    for feat in features:
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            continue
        props = feat.get("properties") or {}
        try:
            lon, lat = geom["coordinates"][:2]
            camera = None
            if "camera_lat" in props:
                camera = GeoPoint(props["camera_lat"], props["camera_lon"])
            records.append(ObjectRecord(
                object_id=str(props["object_id"]),
                class_id=str(props["class"]),
                point=GeoPoint(lat, lon),
                image_id=str(props.get("image_id", "")),
                bearing_eff_deg=float(props.get("bearing_eff_deg", 0.0)),
                distance_m=float(props["distance_m"]),
                reliable=bool(props["reliable"]),
                extent=extents.get(str(props["object_id"])),
                camera=camera,
                source_images=tuple(props.get("source_images") or ()),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed record feature: {exc}") from exc
    return records
