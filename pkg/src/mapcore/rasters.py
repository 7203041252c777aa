"""Raster, point-cloud, and recording-metadata I/O.

Bit-specified formats:

* depth, raw: ``<name>.raw`` of little-endian float32, row-major, plus a
  JSON sidecar ``<name>.json`` with ``{"width": W, "height": H, "unit": "m"}``.
* depth, PFM: grayscale ``Pf`` header, width/height line, scale line
  (negative scale = little-endian), rows stored bottom-to-top.
* semantic labels: 8-bit grayscale PNG of Cityscapes train IDs
  (0..18, 255 = void).
* binary masks: 1-bit PNG.
* point clouds: ASCII ``X Y Z`` rows (camera frame: X right, Y down,
  Z forward), plus a reader for the binary little-endian PLY subset with
  exactly float x/y/z vertex properties.
* recording metadata: CSV with header image_id, lat, lon, bearing_deg,
  pitch_deg, fx_px, fy_px, width, height, timestamp, source.

Loaders are reentrant; the returned containers are plain arrays plus
frozen metadata and can be shared across threads.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError
from .geometry import CameraPose, Intrinsics

logger = logging.getLogger(__name__)

# Depth validity is (min, max] in meters: min exclusive, max inclusive.
# Sky pixels in model output are typically written as a huge value and
# fall outside any sane range; per-source caps (e.g. 100 m models) are
# handled by passing a different range.
DEFAULT_VALID_RANGE = (0.1, 200.0)

META_CSV_HEADER = [
    "image_id", "lat", "lon", "bearing_deg", "pitch_deg",
    "fx_px", "fy_px", "width", "height", "timestamp", "source",
]


@dataclass
class DepthMap:
    """Per-pixel metric distance raster with a validity mask."""

    values: np.ndarray                     # float32, shape (H, W), meters
    valid: np.ndarray                      # bool, shape (H, W)
    valid_range: tuple[float, float] = DEFAULT_VALID_RANGE

    def __post_init__(self) -> None:
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise ValidationError("values and valid mask must share a 2-D shape")
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)

    @classmethod
    def from_values(
        cls, values: np.ndarray, valid_range: tuple[float, float] = DEFAULT_VALID_RANGE
    ) -> "DepthMap":
        """Build a map, deriving validity from the range: finite and
        min < v <= max."""
        lo, hi = valid_range
        if not lo < hi:
            raise ValidationError(f"valid_range must have min < max, got {valid_range}")
        arr = np.asarray(values, dtype=np.float32)
        valid = np.isfinite(arr) & (arr > lo) & (arr <= hi)
        return cls(values=arr, valid=valid, valid_range=valid_range)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class SemanticMap:
    """Cityscapes train-ID label raster (0..18, 255 = void)."""

    labels: np.ndarray                     # uint8, shape (H, W)

    def __post_init__(self) -> None:
        if self.labels.ndim != 2:
            raise ValidationError("label raster must be 2-D")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass
class PointCloud:
    """Points in the camera frame: X right, Y down, Z forward, meters."""

    points: np.ndarray                     # float64, shape (N, 3)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError("point cloud must have shape (N, 3)")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point cloud contains non-finite coordinates")
        self.points = np.ascontiguousarray(pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class RecordingMeta:
    """One recording: image id, pose, intrinsics, and provenance."""

    image_id: str
    pose: CameraPose
    intrinsics: Intrinsics
    timestamp: str | None = None
    source: str | None = None


# ---------------------------------------------------------------------------
# depth rasters

def save_depth_raw(dm: DepthMap, path: str | Path) -> None:
    """Write little-endian float32 values plus the JSON sidecar."""
    path = Path(path)
    data = dm.values.astype("<f4", copy=False)
    path.write_bytes(data.tobytes())
    sidecar = {"width": dm.width, "height": dm.height, "unit": "m"}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_depth_raw(
    path: str | Path, valid_range: tuple[float, float] = DEFAULT_VALID_RANGE
) -> DepthMap:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise FormatError(f"missing JSON sidecar for {path}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
        width = int(sidecar["width"])
        height = int(sidecar["height"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed sidecar {sidecar_path}: {exc}") from exc
    if sidecar.get("unit", "m") != "m":
        raise FormatError(f"unsupported depth unit {sidecar.get('unit')!r} in {sidecar_path}")
    raw = path.read_bytes()
    expected = width * height * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: {len(raw)} bytes but sidecar says {width}x{height} ({expected} bytes)"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(height, width)
    return DepthMap.from_values(values, valid_range)


def save_depth_pfm(dm: DepthMap, path: str | Path) -> None:
    """Write a grayscale PFM (scale -1.0 = little-endian, rows bottom-up)."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{dm.width} {dm.height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(dm.values[::-1].astype("<f4", copy=False).tobytes())


def load_depth_pfm(
    path: str | Path, valid_range: tuple[float, float] = DEFAULT_VALID_RANGE
) -> DepthMap:
    path = Path(path)
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            raise FormatError(f"{path}: color PFM is not a depth raster")
        if header != b"Pf":
            raise FormatError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed PFM dimensions line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except ValueError as exc:
            raise FormatError(f"{path}: malformed PFM header: {exc}") from exc
        if width < 1 or height < 1 or scale == 0.0:
            raise FormatError(f"{path}: invalid PFM header values")
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(width * height * 4)
        if len(raw) != width * height * 4:
            raise FormatError(f"{path}: truncated PFM payload")
    values = np.frombuffer(raw, dtype=dtype).reshape(height, width)[::-1]
    return DepthMap.from_values(values, valid_range)


def save_depth(dm: DepthMap, path: str | Path, fmt: str | None = None) -> None:
    fmt = fmt or _depth_format_for(path)
    if fmt == "pfm":
        save_depth_pfm(dm, path)
    elif fmt == "raw":
        save_depth_raw(dm, path)
    else:
        raise ValidationError(f"unknown depth format {fmt!r} (expected 'pfm' or 'raw')")


def load_depth(
    path: str | Path,
    valid_range: tuple[float, float] = DEFAULT_VALID_RANGE,
    fmt: str | None = None,
) -> DepthMap:
    fmt = fmt or _depth_format_for(path)
    if fmt == "pfm":
        return load_depth_pfm(path, valid_range)
    if fmt == "raw":
        return load_depth_raw(path, valid_range)
    raise ValidationError(f"unknown depth format {fmt!r} (expected 'pfm' or 'raw')")


def _depth_format_for(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return "pfm"
    if suffix == ".raw":
        return "raw"
    raise ValidationError(f"cannot infer depth format from {path!r}; pass fmt=")


# ---------------------------------------------------------------------------
# labels and masks

def save_labels(sm: SemanticMap, path: str | Path) -> None:
    Image.fromarray(sm.labels, mode="L").save(Path(path), format="PNG")


def load_labels(path: str | Path) -> SemanticMap:
    path = Path(path)
    try:
        img = Image.open(path)
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise FormatError(f"cannot read label PNG {path}: {exc}") from exc
    with img:
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    unknown = (arr > 18) & (arr != 255)
    if unknown.any():
        logger.warning(
            "%s: %d pixels carry unknown label ids; mapped to void", path, int(unknown.sum())
        )
        arr = arr.copy()
        arr[unknown] = 255
    return SemanticMap(labels=arr)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).save(Path(path), format="PNG", bits=1)


def load_mask(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        img = Image.open(path)
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise FormatError(f"cannot read mask PNG {path}: {exc}") from exc
    with img:
        return np.asarray(img.convert("1"), dtype=bool)


# ---------------------------------------------------------------------------
# point clouds

def save_cloud_xyz(cloud: PointCloud, path: str | Path) -> None:
    with open(Path(path), "w", encoding="ascii") as f:
        for x, y, z in cloud.points.tolist():
            f.write(f"{x!r} {y!r} {z!r}\n")


def load_cloud_xyz(path: str | Path) -> PointCloud:
    path = Path(path)
    points = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                points.append([float(parts[0]), float(parts[1]), float(parts[2])])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric row: {exc}") from exc
    return PointCloud(points=np.array(points, dtype=np.float64).reshape(-1, 3))


def load_cloud_ply(path: str | Path) -> PointCloud:
    """Binary little-endian PLY subset: vertex element with float x, y, z."""
    path = Path(path)
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise FormatError(f"{path}: not a PLY file")
        fmt = f.readline().split()
        if len(fmt) < 2 or fmt[0] != b"format" or fmt[1] != b"binary_little_endian":
            raise FormatError(f"{path}: only binary_little_endian PLY is supported")
        count = None
        props: list[bytes] = []
        while True:
            line = f.readline()
            if not line:
                raise FormatError(f"{path}: truncated PLY header")
            parts = line.split()
            if not parts or parts[0] == b"comment":
                continue
            if parts[0] == b"element":
                if parts[1] != b"vertex":
                    raise FormatError(f"{path}: unsupported element {parts[1]!r}")
                count = int(parts[2])
            elif parts[0] == b"property":
                if parts[1] != b"float":
                    raise FormatError(f"{path}: only float vertex properties are supported")
                props.append(parts[2])
            elif parts[0] == b"end_header":
                break
        if count is None or props != [b"x", b"y", b"z"]:
            raise FormatError(f"{path}: PLY vertices must be exactly float x, y, z")
        raw = f.read(count * 12)
        if len(raw) != count * 12:
            raise FormatError(f"{path}: truncated PLY payload")
    points = np.frombuffer(raw, dtype="<f4").reshape(count, 3).astype(np.float64)
    return PointCloud(points=points)


def load_cloud(path: str | Path) -> PointCloud:
    if Path(path).suffix.lower() == ".ply":
        return load_cloud_ply(path)
    return load_cloud_xyz(path)


def enu_to_camera_frame(
    enu_points: np.ndarray, bearing_deg: float, pitch_deg: float
) -> PointCloud:
    """Rotate points given as (east, north, up) offsets from the camera into
    the camera frame (X right, Y down, Z forward).

    For georeferenced clouds: subtract the camera's ENU position first.
    """
    pts = np.asarray(enu_points, dtype=np.float64).reshape(-1, 3)
    b = math.radians(bearing_deg)
    p = math.radians(pitch_deg)
    forward = np.array([math.sin(b) * math.cos(p), math.cos(b) * math.cos(p), math.sin(p)])
    right = np.array([math.cos(b), -math.sin(b), 0.0])
    up = np.cross(right, forward)
    cam = np.stack(
        [pts @ right, pts @ (-up), pts @ forward], axis=1
    )
    return PointCloud(points=cam)


# ---------------------------------------------------------------------------
# recording metadata

def save_meta(metas: list[RecordingMeta], path: str | Path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(META_CSV_HEADER)
        for m in metas:
            writer.writerow([
                m.image_id,
                repr(m.pose.lat), repr(m.pose.lon),
                repr(m.pose.bearing), repr(m.pose.pitch),
                repr(m.intrinsics.fx), repr(m.intrinsics.fy),
                m.intrinsics.width, m.intrinsics.height,
                m.timestamp or "", m.source or "",
            ])


def load_meta(path: str | Path) -> list[RecordingMeta]:
    path = Path(path)
    metas = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty metadata file") from None
        if [h.strip() for h in header] != META_CSV_HEADER:
            raise FormatError(
                f"{path}: unexpected header {header!r}; expected {META_CSV_HEADER!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(META_CSV_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(META_CSV_HEADER)} columns")
            try:
                pose = CameraPose(
                    lat=float(row[1]), lon=float(row[2]),
                    bearing=float(row[3]), pitch=float(row[4]),
                )
                intr = Intrinsics(
                    fx=float(row[5]), fy=float(row[6]),
                    width=int(row[7]), height=int(row[8]),
                )
            except (ValueError, ValidationError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            metas.append(RecordingMeta(
                image_id=row[0],
                pose=pose,
                intrinsics=intr,
                timestamp=row[9].strip() or None,
                source=row[10].strip() or None,
            ))
    return metas
