"""Deterministic synthetic street scenes with exact ground truth.

The renderer shares the locate chain's ray model: the ray of pixel
(col, row) has compass azimuth bearing + atan((col-cx)/fx) and elevation
pitch + atan((cy-row)/fy).  Surfaces:

* ground plane at elevation 0: rays below the horizon hit it at slant
  distance camera_height / sin(depression), labeled road;
* billboards: camera-facing rectangles (constant viewing distance across
  their face), labeled traffic sign, nearest surface winning per pixel;
* everything else is sky: a huge sentinel value that any sane validity
  range rejects.

Ground-truth geocoordinates are authored first (rejection-sampled in
latitude/longitude); the renderer derives angles from coordinates with
the inverse trigonometry only, so end-to-end tests check the forward
chain against independently fixed targets.  The point cloud contains the
true 3-D surface points of every valid pixel in the camera frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import (
    DEFAULT_EARTH,
    CameraPose,
    EarthModel,
    GeoPoint,
    Intrinsics,
    enu_offset,
    geo_distance,
    wrap_angle_diff,
)
from .pipeline import Detection
from .rasters import (
    DepthMap,
    PointCloud,
    RecordingMeta,
    SemanticMap,
    save_cloud_xyz,
    save_depth,
    save_labels,
    save_mask,
    save_meta,
)

SKY_SENTINEL_M = 1.0e9

ROAD_TRAIN_ID = 0
TRAFFIC_SIGN_TRAIN_ID = 7
SKY_TRAIN_ID = 10

SIGN_CLASSES = ("101", "206", "274-30", "306", "625-11")


@dataclass(frozen=True)
class Billboard:
    """Camera-facing rectangle standing in for a sign or similar object."""

    class_id: str
    point: GeoPoint              # geographic position of the face center
    width_m: float
    height_m: float
    base_elevation_m: float = 0.0

    def __post_init__(self) -> None:
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValidationError("billboard dimensions must be positive")


@dataclass
class SceneSpec:
    """Everything needed to render one synthetic image deterministically."""

    image_id: str
    pose: CameraPose
    intrinsics: Intrinsics
    camera_height_m: float
    billboards: list[Billboard] = field(default_factory=list)
    seed: int = 0
    noise_sigma: float = 0.0     # multiplicative depth noise fraction
    cloud_stride: int = 1

    def __post_init__(self) -> None:
        if self.camera_height_m <= 0:
            raise ValidationError("camera height must be positive")
        if self.noise_sigma < 0:
            raise ValidationError("noise sigma must be >= 0")
        if self.cloud_stride < 1:
            raise ValidationError("cloud stride must be >= 1")


@dataclass(frozen=True)
class TruthObject:
    object_id: str
    class_id: str
    point: GeoPoint


@dataclass
class SceneRender:
    """Rendered scene: rasters, cloud, exact detections, and ground truth."""

    depth: DepthMap
    labels: SemanticMap
    cloud: PointCloud
    detections: list[Detection]
    truth: list[TruthObject]
    omitted: list[str]
    meta: RecordingMeta


def render_scene(
    spec: SceneSpec,
    em: EarthModel = DEFAULT_EARTH,
    valid_range: tuple[float, float] = (0.1, 200.0),
) -> SceneRender:
    k = spec.intrinsics
    pose = spec.pose
    cols = np.arange(k.width, dtype=np.float64)
    rows = np.arange(k.height, dtype=np.float64)
    alpha_x_deg = np.degrees(np.arctan((cols - k.cx) / k.fx))           # (W,)
    alpha_y_deg = np.degrees(np.arctan((k.cy - rows) / k.fy))           # (H,)
    bearing_eff_col = pose.bearing + alpha_x_deg
    pitch_eff_row = pose.pitch + alpha_y_deg

    # ground plane: slant along the ray, constant per row in this ray model
    depth = np.full((k.height, k.width), np.inf)
    winner = np.full((k.height, k.width), -1, dtype=np.int32)           # -2 = ground
    below = pitch_eff_row < 0.0
    ground_slant = np.full(k.height, np.inf)
    ground_slant[below] = spec.camera_height_m / np.sin(np.radians(-pitch_eff_row[below]))
    depth[below, :] = ground_slant[below, None]
    winner[below, :] = -2

    omitted: list[str] = []
    kept: list[tuple[int, Billboard]] = []
    for i, bb in enumerate(spec.billboards):
        d_east, d_north = enu_offset(GeoPoint(pose.lat, pose.lon), bb.point, em)
        d_h = math.hypot(d_east, d_north)
        if d_h == 0.0:
            omitted.append(f"{spec.image_id}:{i} ({bb.class_id}): coincides with camera")
            continue
        bearing_to = math.degrees(math.atan2(d_east, d_north))
        if abs(wrap_angle_diff(bearing_to - pose.bearing)) >= 90.0:
            omitted.append(f"{spec.image_id}:{i} ({bb.class_id}): behind camera")
            continue
        z_center = bb.base_elevation_m + bb.height_m / 2.0
        slant = math.hypot(d_h, z_center - spec.camera_height_m)
        half_width_deg = math.degrees(math.atan2(bb.width_m / 2.0, d_h))
        elev_bot = math.degrees(math.atan2(bb.base_elevation_m - spec.camera_height_m, d_h))
        elev_top = math.degrees(
            math.atan2(bb.base_elevation_m + bb.height_m - spec.camera_height_m, d_h)
        )
        col_hit = np.abs(_wrap_array(bearing_eff_col - bearing_to)) <= half_width_deg
        row_hit = (pitch_eff_row >= elev_bot) & (pitch_eff_row <= elev_top)
        hit = row_hit[:, None] & col_hit[None, :] & (slant < depth)
        depth[hit] = slant
        winner[hit] = i
        kept.append((i, bb))

    labels = np.full((k.height, k.width), SKY_TRAIN_ID, dtype=np.uint8)
    labels[winner == -2] = ROAD_TRAIN_ID
    labels[winner >= 0] = TRAFFIC_SIGN_TRAIN_ID

    values = np.where(np.isfinite(depth), depth, SKY_SENTINEL_M)
    depth_map = DepthMap.from_values(values.astype(np.float32), valid_range)

    detections: list[Detection] = []
    truth: list[TruthObject] = []
    for i, bb in kept:
        # masks come from the final winner grid, so later/nearer surfaces
        # have already carved out their pixels
        mask = winner == i
        if not (mask & depth_map.valid).any():
            omitted.append(
                f"{spec.image_id}:{i} ({bb.class_id}): no visible pixel "
                "(occluded, outside the frame, or beyond the valid depth range)"
            )
            continue
        object_id = f"{spec.image_id}:{i}"
        detections.append(Detection(class_id=bb.class_id, mask=mask, detection_id=object_id))
        truth.append(TruthObject(object_id=object_id, class_id=bb.class_id, point=bb.point))

    cloud = _surface_cloud(depth_map, alpha_x_deg, alpha_y_deg, spec.cloud_stride)
    meta = RecordingMeta(
        image_id=spec.image_id, pose=pose, intrinsics=k, timestamp=None, source="synthetic"
    )
    return SceneRender(
        depth=depth_map,
        labels=SemanticMap(labels=labels),
        cloud=cloud,
        detections=detections,
        truth=truth,
        omitted=omitted,
        meta=meta,
    )


def _wrap_array(deg: np.ndarray) -> np.ndarray:
    wrapped = np.mod(deg, 360.0)
    wrapped[wrapped > 180.0] -= 360.0
    return wrapped


def _surface_cloud(
    depth_map: DepthMap, alpha_x_deg: np.ndarray, alpha_y_deg: np.ndarray, stride: int
) -> PointCloud:
    """True 3-D surface points (camera frame) for every valid pixel, with
    optional striding.  The camera-frame ray of a pixel is
    (tan ax, -tan ay, 1) / norm, so the point sits at slant * ray."""
    valid = depth_map.valid[::stride, ::stride]
    slant = depth_map.values[::stride, ::stride].astype(np.float64)
    tx = np.tan(np.radians(alpha_x_deg))[::stride]
    ty = np.tan(np.radians(alpha_y_deg))[::stride]
    txg, tyg = np.meshgrid(tx, ty)
    norm = np.sqrt(1.0 + txg**2 + tyg**2)
    scale = slant / norm
    pts = np.stack(
        [scale * txg, -scale * tyg, scale], axis=-1
    )[valid]
    return PointCloud(points=pts.reshape(-1, 3))


def perturb_depth(dm: DepthMap, sigma: float, seed: int) -> DepthMap:
    """Multiply every valid pixel by (1 + sigma * g), g standard normal
    from a generator seeded with ``seed``; deterministic per input."""
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    g = np.random.default_rng(seed).standard_normal(dm.values.shape)
    values = dm.values.astype(np.float64)
    values[dm.valid] *= 1.0 + sigma * g[dm.valid]
    return DepthMap(
        values=values.astype(np.float32), valid=dm.valid.copy(), valid_range=dm.valid_range
    )


# ---------------------------------------------------------------------------
# deterministic scene generation

def make_street_scenes(
    n_images: int = 10,
    billboards_per_image: int = 10,
    seed: int = 0,
    image_size: tuple[int, int] = (1280, 800),
    focal_px: float = 1100.0,
    camera_height_m: float = 2.2,
    depth_range_m: tuple[float, float] = (7.0, 28.0),
    origin: GeoPoint = GeoPoint(48.13, 11.56),
    noise_sigma: float = 0.0,
    cloud_stride: int = 4,
    em: EarthModel = DEFAULT_EARTH,
) -> list[SceneSpec]:
    """Author a deterministic multi-image dataset.

    Billboard coordinates are rejection-sampled from a lat/lon box around
    each camera, one bearing slot per billboard so nothing occludes, with
    classes cycling so no two same-class objects come near the 3 m
    deduplication radius.
    """
    rng = np.random.default_rng(seed)
    width, height = image_size
    k = Intrinsics(fx=focal_px, fy=focal_px, width=width, height=height)
    hfov_half = math.degrees(math.atan((width / 2.0) / focal_px))
    usable_half = 0.88 * hfov_half
    slot_width = 2.0 * usable_half / billboards_per_image

    # distinct same-class objects must stay clear of the 3 m dedup radius,
    # also across images whose fields of view overlap
    placed_by_class: dict[str, list[GeoPoint]] = {}
    min_same_class_sep_m = 3.5

    scenes = []
    for img in range(n_images):
        # cameras stride north along the street; authored directly
        cam_lat = origin.lat + img * 0.00045
        cam_lon = origin.lon + (img % 3) * 0.00005
        bearing = float(rng.uniform(0.0, 360.0))
        pose = CameraPose(lat=cam_lat, lon=cam_lon, bearing=bearing, pitch=0.0)
        billboards = []
        for slot in range(billboards_per_image):
            slot_center = -usable_half + (slot + 0.5) * slot_width
            class_id = SIGN_CLASSES[slot % len(SIGN_CLASSES)]
            board = _sample_billboard(
                rng, pose, k, camera_height_m, depth_range_m,
                slot_center, slot_width, class_id, em,
                placed_by_class.get(class_id, []), min_same_class_sep_m,
            )
            placed_by_class.setdefault(class_id, []).append(board.point)
            billboards.append(board)
        scenes.append(
            SceneSpec(
                image_id=f"sim_{img:04d}",
                pose=pose,
                intrinsics=k,
                camera_height_m=camera_height_m,
                billboards=billboards,
                seed=seed + img,
                noise_sigma=noise_sigma,
                cloud_stride=cloud_stride,
            )
        )
    return scenes


def _sample_billboard(
    rng: np.random.Generator,
    pose: CameraPose,
    k: Intrinsics,
    camera_height_m: float,
    depth_range_m: tuple[float, float],
    slot_center_deg: float,
    slot_width_deg: float,
    class_id: str,
    em: EarthModel,
    same_class_points: list[GeoPoint] = (),
    min_same_class_sep_m: float = 0.0,
) -> Billboard:
    """Rejection-sample a billboard whose angular box sits inside its slot
    and keeps clear of already-placed same-class objects."""
    d_min, d_max = depth_range_m
    width_m = float(rng.uniform(0.5, 0.7))
    height_m = float(rng.uniform(0.8, 1.2))
    base_elev = float(rng.uniform(0.6, 1.4))
    # ~1e-5 deg per meter; box comfortably covers the depth range
    box_deg = 1.35e-5 * d_max * 1.5
    camera = GeoPoint(pose.lat, pose.lon)
    for _ in range(20000):
        point = GeoPoint(
            camera.lat + float(rng.uniform(-box_deg, box_deg)),
            camera.lon + float(rng.uniform(-box_deg, box_deg)),
        )
        d_east, d_north = enu_offset(camera, point, em)
        d_h = math.hypot(d_east, d_north)
        if not d_min <= d_h <= d_max:
            continue
        bearing_to = math.degrees(math.atan2(d_east, d_north))
        offset = wrap_angle_diff(bearing_to - pose.bearing)
        half_width_deg = math.degrees(math.atan2(width_m / 2.0, d_h))
        if abs(wrap_angle_diff(offset - slot_center_deg)) + half_width_deg > slot_width_deg * 0.46:
            continue
        vfov_half = math.degrees(math.atan((k.height / 2.0) / k.fy))
        elev_bot = math.degrees(math.atan2(base_elev - camera_height_m, d_h))
        elev_top = math.degrees(math.atan2(base_elev + height_m - camera_height_m, d_h))
        if elev_bot - pose.pitch < -0.9 * vfov_half or elev_top - pose.pitch > 0.9 * vfov_half:
            continue
        if min_same_class_sep_m > 0 and any(
            geo_distance(point, other, em) < min_same_class_sep_m
            for other in same_class_points
        ):
            continue
        return Billboard(
            class_id=class_id,
            point=point,
            width_m=width_m,
            height_m=height_m,
            base_elevation_m=base_elev,
        )
    raise ValidationError("billboard sampling failed; slot constraints too tight")


# ---------------------------------------------------------------------------
# dataset writing

def write_dataset(
    scenes: list[SceneSpec],
    out_dir: str | Path,
    depth_format: str = "raw",
    em: EarthModel = DEFAULT_EARTH,
    valid_range: tuple[float, float] = (0.1, 200.0),
) -> dict:
    """Render scenes and write the full directory consumed by the rest of
    the pipeline: depth rasters (noise applied when configured), label
    rasters, point clouds, detection masks + JSONL, metadata CSV, and the
    ground-truth GeoJSON.  Returns a small written-files summary."""
    out = Path(out_dir)
    for sub in ("depth", "labels", "clouds", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    metas = []
    truth_features = []
    detection_lines = []
    n_objects = 0
    for spec in scenes:
        render = render_scene(spec, em, valid_range)
        depth = render.depth
        if spec.noise_sigma > 0:
            depth = perturb_depth(depth, spec.noise_sigma, spec.seed)
        suffix = ".pfm" if depth_format == "pfm" else ".raw"
        save_depth(depth, out / "depth" / f"{spec.image_id}{suffix}", depth_format)
        save_labels(render.labels, out / "labels" / f"{spec.image_id}.png")
        save_cloud_xyz(render.cloud, out / "clouds" / f"{spec.image_id}.xyz")

        det_entries = []
        for j, det in enumerate(render.detections):
            mask_name = f"{spec.image_id}_{j:03d}.png"
            save_mask(det.mask, out / "masks" / mask_name)
            det_entries.append({
                "class": det.class_id,
                "mask_path": f"masks/{mask_name}",
                "id": det.detection_id,
            })
        detection_lines.append(json.dumps(
            {"image_id": spec.image_id, "detections": det_entries}, sort_keys=True
        ))
        for t in render.truth:
            truth_features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [t.point.lon, t.point.lat]},
                "properties": {"id": t.object_id, "class": t.class_id},
            })
        n_objects += len(render.truth)
        metas.append(render.meta)

    save_meta(metas, out / "metadata.csv")
    (out / "detections.jsonl").write_text("\n".join(detection_lines) + "\n")
    (out / "truth.geojson").write_text(json.dumps(
        {"type": "FeatureCollection", "features": truth_features}, indent=2, sort_keys=True
    ) + "\n")
    return {"images": len(scenes), "objects": n_objects, "out": str(out)}
