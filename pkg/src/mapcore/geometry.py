"""Pixel-to-geocoordinate math on a spherical Earth.

Conventions used throughout the library:

* Image frame: x is the column (0 at the left edge, increasing right),
  y is the row (0 at the top, increasing down).  Pixel centers sit at
  integer coordinates; the principal point defaults to (W/2, H/2).
* Bearings are compass bearings in degrees, clockwise from north.  The
  equivalent east-referenced math angle is (90 deg - bearing), which is
  why the east displacement carries sin(bearing) and the north one
  cos(bearing).
* Pitch is degrees above the horizon, positive up.  Because image rows
  grow downward, the vertical normalized coordinate is flipped:
  y_norm = (H/2 - y) / fy, so a pixel above the center yields a positive
  vertical angle that adds to the camera pitch.
* Displacements are meters east/north of the camera on the local tangent
  plane; the geographic conversion divides by the (configurable,
  spherical) Earth radius, with cos(latitude) scaling the longitude.

All angles cross API boundaries in degrees except ``AngularOffsets``,
which is in radians straight out of the arctangent.  Everything here is
a pure function over frozen value types and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    AboveHorizonError,
    InvalidDepthError,
    NotVisibleError,
    PixelOutOfBoundsError,
    PoleProximityError,
    ValidationError,
)

MEAN_EARTH_RADIUS_M = 6_371_008.8

# cos(lat) degenerates at the poles; refuse the conversion beyond this.
MAX_USABLE_LATITUDE_DEG = 89.9


def normalize_bearing(deg: float) -> float:
    """Wrap a compass bearing to [0, 360)."""
    if 0.0 <= deg < 360.0:
        return deg                  # in range: keep every bit
    return deg % 360.0


def normalize_longitude(deg: float) -> float:
    """Wrap a longitude to (-180, 180].

    In-range values pass through untouched: wrapping via ``% 360`` would
    round through the [256, 512) binade and shave ~250 ulp off small
    longitudes, which is meters of noise at the nanometer scales the
    round-trip tests watch.
    """
    if -180.0 < deg <= 180.0:
        return deg
    wrapped = deg % 360.0
    if wrapped > 180.0:
        wrapped -= 360.0
    return wrapped


def wrap_angle_diff(deg: float) -> float:
    """Wrap an angle difference to (-180, 180]."""
    if -180.0 < deg <= 180.0:
        return deg
    wrapped = deg % 360.0
    if wrapped > 180.0:
        wrapped -= 360.0
    return wrapped


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters: focal lengths in pixels and image size.

    ``cx``/``cy`` override the principal point; by default it sits at the
    image center (W/2, H/2), which is what the coordinate chain assumes.
    """

    fx: float
    fy: float
    width: int
    height: int
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width and 0.0 <= y < self.height


@dataclass(frozen=True)
class PixelCoord:
    """Image position in pixels (x = column, y = row, origin top-left)."""

    x: float
    y: float


@dataclass(frozen=True)
class AngularOffsets:
    """Ray angles relative to the optical axis, radians.

    alpha_x is positive to the right of the axis, alpha_y positive above
    it.  Both are arctangents of normalized pixel coordinates and hence
    always within (-pi/2, pi/2).
    """

    alpha_x: float
    alpha_y: float

    def __post_init__(self) -> None:
        if not (abs(self.alpha_x) < math.pi / 2 and abs(self.alpha_y) < math.pi / 2):
            raise ValidationError("angular offsets must lie within (-pi/2, pi/2)")


@dataclass(frozen=True)
class CameraPose:
    """Geographic position and orientation of a recording.

    bearing follows the compass convention (0 = north, clockwise
    positive) and is normalized to [0, 360) on construction; longitude is
    normalized to (-180, 180].
    """

    lat: float
    lon: float
    bearing: float
    pitch: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat}")
        if not abs(self.pitch) < 90.0:
            raise ValidationError(f"|pitch| must be < 90 deg, got {self.pitch}")
        object.__setattr__(self, "bearing", normalize_bearing(self.bearing))
        object.__setattr__(self, "lon", normalize_longitude(self.lon))


@dataclass(frozen=True)
class EffectiveAngles:
    """Camera orientation after adding a pixel's angular offsets (degrees)."""

    bearing_eff: float
    pitch_eff: float

    @property
    def displaceable(self) -> bool:
        """Whether the ray still has a horizontal component (|pitch| < 90)."""
        return abs(self.pitch_eff) < 90.0


@dataclass(frozen=True)
class EnuDisplacement:
    """Meters east and north of the camera on the local tangent plane."""

    d_east: float
    d_north: float
    d_horizontal: float


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 style geographic point in degrees, lon normalized to (-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat}")
        object.__setattr__(self, "lon", normalize_longitude(self.lon))


@dataclass(frozen=True)
class EarthModel:
    """Spherical Earth of configurable radius (meters)."""

    radius_m: float = MEAN_EARTH_RADIUS_M

    def __post_init__(self) -> None:
        if self.radius_m <= 0:
            raise ValidationError("Earth radius must be positive")


DEFAULT_EARTH = EarthModel()


@dataclass(frozen=True)
class LocatedPixel:
    """Result of pushing one pixel through the full chain."""

    point: GeoPoint
    angles: EffectiveAngles
    displacement: EnuDisplacement


def pixel_to_angles(p: PixelCoord, k: Intrinsics) -> AngularOffsets:
    """Angular offsets of a pixel's viewing ray relative to the optical axis.

    Normalizes the pixel by the focal lengths and takes arctangents.  The
    vertical coordinate is flipped (rows grow downward) so that a pixel
    above the image center comes out with a positive alpha_y.
    """
    if not k.contains(p.x, p.y):
        raise PixelOutOfBoundsError(
            f"pixel ({p.x}, {p.y}) outside image {k.width}x{k.height}"
        )
    x_norm = (p.x - k.cx) / k.fx
    y_norm = (k.cy - p.y) / k.fy
    return AngularOffsets(alpha_x=math.atan(x_norm), alpha_y=math.atan(y_norm))


def effective_angles(pose: CameraPose, a: AngularOffsets) -> EffectiveAngles:
    """Add a pixel's angular offsets to the camera orientation.

    A rightward pixel offset rotates the ray clockwise, i.e. increases the
    compass bearing.  The result may carry |pitch_eff| >= 90 for extreme
    inputs; downstream displacement raises on that, this op only reports.
    """
    bearing_eff = normalize_bearing(pose.bearing + math.degrees(a.alpha_x))
    pitch_eff = pose.pitch + math.degrees(a.alpha_y)
    return EffectiveAngles(bearing_eff=bearing_eff, pitch_eff=pitch_eff)


def angles_to_displacement(d: float, e: EffectiveAngles) -> EnuDisplacement:
    """Project a ray of length d meters onto the local east/north plane."""
    if d <= 0:
        raise InvalidDepthError(f"depth must be positive, got {d}")
    if not e.displaceable:
        raise AboveHorizonError(
            f"|effective pitch| >= 90 deg ({e.pitch_eff}); ray has no horizontal part"
        )
    pitch_rad = math.radians(e.pitch_eff)
    bearing_rad = math.radians(e.bearing_eff)
    d_horizontal = d * math.cos(pitch_rad)
    return EnuDisplacement(
        d_east=d_horizontal * math.sin(bearing_rad),
        d_north=d_horizontal * math.cos(bearing_rad),
        d_horizontal=d_horizontal,
    )


def displacement_to_geo(
    disp: EnuDisplacement, origin: GeoPoint, em: EarthModel = DEFAULT_EARTH
) -> GeoPoint:
    """Convert an east/north displacement into a geographic point."""
    if abs(origin.lat) >= MAX_USABLE_LATITUDE_DEG:
        raise PoleProximityError(
            f"origin latitude {origin.lat} too close to a pole for lon scaling"
        )
    dlat = math.degrees(disp.d_north / em.radius_m)
    dlon = math.degrees(disp.d_east / (em.radius_m * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat=origin.lat + dlat, lon=origin.lon + dlon)


def enu_offset(
    origin: GeoPoint, target: GeoPoint, em: EarthModel = DEFAULT_EARTH
) -> tuple[float, float]:
    """(d_east, d_north) meters from origin to target; exact inverse of
    :func:`displacement_to_geo` about the origin."""
    if abs(origin.lat) >= MAX_USABLE_LATITUDE_DEG:
        raise PoleProximityError(
            f"origin latitude {origin.lat} too close to a pole for lon scaling"
        )
    d_north = em.radius_m * math.radians(target.lat - origin.lat)
    d_east = (
        em.radius_m
        * math.cos(math.radians(origin.lat))
        * math.radians(wrap_angle_diff(target.lon - origin.lon))
    )
    return d_east, d_north


def locate_pixel(
    p: PixelCoord,
    d: float,
    pose: CameraPose,
    k: Intrinsics,
    em: EarthModel = DEFAULT_EARTH,
) -> LocatedPixel:
    """Full chain: pixel + depth + pose -> geographic point.

    Composition of pixel_to_angles, effective_angles,
    angles_to_displacement and displacement_to_geo.  The effective angles
    are returned alongside the point; database matching needs them.
    """
    offsets = pixel_to_angles(p, k)
    angles = effective_angles(pose, offsets)
    disp = angles_to_displacement(d, angles)
    point = displacement_to_geo(disp, GeoPoint(pose.lat, pose.lon), em)
    return LocatedPixel(point=point, angles=angles, displacement=disp)


def inverse_locate(
    target: GeoPoint,
    pose: CameraPose,
    k: Intrinsics,
    em: EarthModel = DEFAULT_EARTH,
    height_above_camera_m: float = 0.0,
) -> tuple[PixelCoord, float]:
    """Pixel and depth at which :func:`locate_pixel` reproduces ``target``.

    Assumes the target sits at camera height; pass
    ``height_above_camera_m`` (positive up) for targets off that plane.
    Raises NotVisibleError when the target is behind the camera (bearing
    difference of 90 deg or more) or projects outside the frame.
    """
    d_east, d_north = enu_offset(GeoPoint(pose.lat, pose.lon), target, em)
    d_horizontal = math.hypot(d_east, d_north)
    if d_horizontal == 0.0:
        raise NotVisibleError("target coincides with the camera position")

    bearing_to = math.degrees(math.atan2(d_east, d_north))
    alpha_x_deg = wrap_angle_diff(bearing_to - pose.bearing)
    if abs(alpha_x_deg) >= 90.0:
        raise NotVisibleError(
            f"target at bearing {normalize_bearing(bearing_to):.1f} deg is behind the "
            f"camera facing {pose.bearing:.1f} deg"
        )

    pitch_eff_deg = math.degrees(math.atan2(height_above_camera_m, d_horizontal))
    alpha_y_deg = pitch_eff_deg - pose.pitch
    if abs(alpha_y_deg) >= 90.0:
        raise NotVisibleError("target requires a vertical offset beyond the frustum")

    x = k.cx + k.fx * math.tan(math.radians(alpha_x_deg))
    y = k.cy - k.fy * math.tan(math.radians(alpha_y_deg))
    if not k.contains(x, y):
        raise NotVisibleError(
            f"target projects to ({x:.1f}, {y:.1f}), outside image {k.width}x{k.height}"
        )
    depth = math.hypot(d_horizontal, height_above_camera_m)
    return PixelCoord(x=x, y=y), depth


def geo_distance(a: GeoPoint, b: GeoPoint, em: EarthModel = DEFAULT_EARTH) -> float:
    """Haversine great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * em.radius_m * math.asin(min(1.0, math.sqrt(h)))


def geo_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial compass bearing from a to b, degrees in [0, 360)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlmb = math.radians(b.lon - a.lon)
    y = math.sin(dlmb) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlmb)
    return normalize_bearing(math.degrees(math.atan2(y, x)))
