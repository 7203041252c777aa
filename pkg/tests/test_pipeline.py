import json
import math

import numpy as np
import pytest

from mapcore.errors import NoDepthError, ValidationError
from mapcore.geometry import (
    CameraPose,
    GeoPoint,
    Intrinsics,
    enu_offset,
    geo_distance,
)
from mapcore.pipeline import (
    Detection,
    ObjectRecord,
    locate_object,
    object_depth,
    process_image,
    read_detections_jsonl,
    read_records_geojson,
    records_to_geojson,
    write_records_geojson,
)
from mapcore.rasters import DepthMap, RecordingMeta, save_mask
from mapcore.simulate import Billboard, SceneSpec, render_scene

K = Intrinsics(fx=960.0, fy=960.0, width=640, height=480)
META = RecordingMeta(
    image_id="img",
    pose=CameraPose(lat=48.0, lon=11.0, bearing=0.0, pitch=0.0),
    intrinsics=K,
)


def _uniform_depth(value=10.0, width=640, height=480):
    return DepthMap.from_values(np.full((height, width), value, dtype=np.float32))


def test_object_depth_uniform_bbox():
    det = Detection(class_id="206", bbox=(100, 100, 199, 159))
    assert object_depth(_uniform_depth(10.0), det) == 10.0


def test_object_depth_mask_mean():
    dm = _uniform_depth(99.0, 8, 8)
    dm.values[2, 2] = 4.0
    dm.values[2, 3] = 6.0
    mask = np.zeros((8, 8), dtype=bool)
    mask[2, 2:4] = True
    assert object_depth(dm, Detection(class_id="206", mask=mask)) == 5.0


def test_object_depth_mask_skips_invalid():
    dm = _uniform_depth(99.0, 8, 8)
    dm.values[2, 2] = 4.0
    dm.values[2, 3] = 6.0
    dm.values[2, 4] = 50.0
    dm.valid[2, 4] = False
    mask = np.zeros((8, 8), dtype=bool)
    mask[2, 2:5] = True
    assert object_depth(dm, Detection(class_id="206", mask=mask)) == 5.0


def test_object_depth_mask_median_option():
    dm = _uniform_depth(99.0, 8, 8)
    dm.values[1, 1:4] = [4.0, 5.0, 100.0]
    mask = np.zeros((8, 8), dtype=bool)
    mask[1, 1:4] = True
    det = Detection(class_id="206", mask=mask)
    assert object_depth(dm, det, mask_reduce="median") == 5.0


def test_object_depth_center_fallback_3x3():
    dm = _uniform_depth(10.0, 16, 16)
    dm.valid[8, 8] = False          # bbox center invalid
    dm.values[7:10, 7:10] = 12.0
    dm.values[8, 8] = 1e9
    det = Detection(class_id="206", bbox=(6, 6, 10, 10))
    assert object_depth(dm, det) == pytest.approx(12.0)


def test_object_depth_no_valid_pixels():
    dm = _uniform_depth(10.0, 8, 8)
    dm.valid[:] = False
    with pytest.raises(NoDepthError):
        object_depth(dm, Detection(class_id="206", bbox=(2, 2, 5, 5)))


def test_object_depth_bbox_out_of_bounds():
    with pytest.raises(ValidationError):
        object_depth(_uniform_depth(10.0, 8, 8), Detection(class_id="206", bbox=(0, 0, 8, 5)))


def test_detection_needs_exactly_one_shape():
    with pytest.raises(ValidationError):
        Detection(class_id="206")
    with pytest.raises(ValidationError):
        Detection(class_id="206", bbox=(0, 0, 1, 1), mask=np.ones((2, 2), dtype=bool))


def test_record_rejects_runaway_extent():
    with pytest.raises(ValidationError):
        ObjectRecord(
            object_id="x", class_id="206", point=GeoPoint(48.0, 11.0),
            image_id="img", bearing_eff_deg=0.0, distance_m=5.0, reliable=True,
            extent=(GeoPoint(48.0, 11.0), GeoPoint(48.001, 11.0)),  # ~111 m away
        )


def test_locate_object_center_bbox_100m_north():
    det = Detection(class_id="206", bbox=(320, 240, 320, 240))
    record = locate_object(det, _uniform_depth(100.0), META)
    assert record.point.lon == pytest.approx(11.0, abs=1e-12)
    assert geo_distance(GeoPoint(48.0, 11.0), record.point) == pytest.approx(100.0, abs=1e-6)
    assert record.reliable is False
    assert record.camera == GeoPoint(48.0, 11.0)


def test_reliability_flag_boundary():
    det = Detection(class_id="206", bbox=(320, 240, 320, 240))
    assert locate_object(det, _uniform_depth(19.99), META).reliable is True
    assert locate_object(det, _uniform_depth(20.0), META).reliable is False


def test_single_pixel_mask_equals_degenerate_bbox():
    mask = np.zeros((480, 640), dtype=bool)
    mask[100, 200] = True
    dm = _uniform_depth(15.0)
    rec_mask = locate_object(Detection(class_id="206", mask=mask), dm, META)
    rec_bbox = locate_object(Detection(class_id="206", bbox=(200, 100, 200, 100)), dm, META)
    assert rec_mask.point == rec_bbox.point
    assert rec_mask.distance_m == rec_bbox.distance_m
    assert rec_mask.bearing_eff_deg == rec_bbox.bearing_eff_deg


def test_coordinate_error_linear_in_depth_perturbation():
    # near-equator pose: at high latitudes the haversine metric itself
    # varies along the track at ~1e-6 relative, masking the chain's linearity
    meta = RecordingMeta(
        image_id="img",
        pose=CameraPose(lat=0.001, lon=11.0, bearing=217.0, pitch=0.0),
        intrinsics=K,
    )
    det = Detection(class_id="206", bbox=(450, 240, 450, 240))  # center row: pitch_eff = 0
    base = locate_object(det, _uniform_depth(30.0), meta)
    e1 = geo_distance(base.point, locate_object(det, _uniform_depth(31.0), meta).point)
    for k in (2.0, 5.0, 10.0):
        ek = geo_distance(base.point, locate_object(det, _uniform_depth(30.0 + k), meta).point)
        assert ek / e1 == pytest.approx(k, rel=1e-9)


# ---------------------------------------------------------------------------
# simulator-backed checks

def _simple_scene(billboard: Billboard, image_id="sim"):
    return SceneSpec(
        image_id=image_id,
        pose=CameraPose(lat=48.13, lon=11.56, bearing=0.0, pitch=0.0),
        intrinsics=Intrinsics(fx=1100.0, fy=1100.0, width=1280, height=800),
        camera_height_m=2.2,
        billboards=[billboard],
        cloud_stride=8,
    )


def _authored_point(north_m_approx: float) -> GeoPoint:
    # author the coordinate directly; ~9e-6 deg per meter of latitude
    return GeoPoint(48.13 + north_m_approx * 8.99e-6, 11.56)


def test_locate_object_matches_billboard_truth():
    point = _authored_point(18.0)
    scene = _simple_scene(Billboard(
        class_id="206", point=point, width_m=0.8, height_m=1.0, base_elevation_m=1.0,
    ))
    render = render_scene(scene)
    assert len(render.detections) == 1
    record = locate_object(render.detections[0], render.depth, render.meta)
    assert geo_distance(record.point, point) < 0.01


def test_mask_extent_of_wide_wall():
    point = _authored_point(10.0)
    scene = _simple_scene(Billboard(
        class_id="wall-art", point=point, width_m=4.0, height_m=1.5, base_elevation_m=1.0,
    ))
    render = render_scene(scene)
    record = locate_object(render.detections[0], render.depth, render.meta)
    assert record.extent is not None
    width = geo_distance(record.extent[0], record.extent[1])
    # constant-distance face: endpoints sit on the viewing arc, so the
    # expected separation is the chord 2*s*cos(pitch)*sin(atan(w/2 / d_h))
    de, dn = enu_offset(GeoPoint(48.13, 11.56), point)
    d_h = math.hypot(de, dn)
    z_off = 1.0 + 0.75 - 2.2
    slant = math.hypot(d_h, z_off)
    expected = 2.0 * slant * math.cos(math.atan2(z_off, d_h)) * math.sin(math.atan2(2.0, d_h))
    assert width == pytest.approx(expected, abs=0.05)
    assert 3.5 < width < 4.05


def test_process_image_empty():
    records, skipped = process_image(META, _uniform_depth(10.0), [])
    assert records == [] and skipped == []


def test_process_image_sky_detection_skipped():
    point = _authored_point(15.0)
    scene = _simple_scene(Billboard(
        class_id="206", point=point, width_m=0.8, height_m=1.0, base_elevation_m=1.0,
    ))
    render = render_scene(scene)
    sky_det = Detection(class_id="206", bbox=(5, 5, 20, 20))  # top corner: sky
    records, skipped = process_image(
        render.meta, render.depth, [*render.detections, sky_det]
    )
    assert len(records) == 1
    assert len(skipped) == 1
    assert "valid depth" in skipped[0].reason


def test_process_image_dimension_mismatch():
    with pytest.raises(ValidationError):
        process_image(META, _uniform_depth(10.0, width=320, height=200), [])


def test_process_image_bijective_on_simulated_detections():
    from mapcore.simulate import make_street_scenes

    scenes = make_street_scenes(n_images=2, billboards_per_image=8, seed=5)
    for spec in scenes:
        render = render_scene(spec)
        records, skipped = process_image(render.meta, render.depth, render.detections)
        assert not skipped
        assert sorted(r.object_id for r in records) == sorted(t.object_id for t in render.truth)


# ---------------------------------------------------------------------------
# serialization

def test_detections_jsonl_round_trip(tmp_path):
    mask = np.zeros((6, 6), dtype=bool)
    mask[2:4, 3:5] = True
    (tmp_path / "masks").mkdir()
    save_mask(mask, tmp_path / "masks" / "m0.png")
    lines = [
        {"image_id": "a", "detections": [
            {"class": "206", "bbox": [1, 2, 3, 4], "score": 0.9},
            {"class": "274-30", "mask_path": "masks/m0.png"},
        ]},
        {"image_id": "b", "detections": []},
    ]
    path = tmp_path / "dets.jsonl"
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    loaded = read_detections_jsonl(path)
    assert set(loaded) == {"a", "b"}
    assert loaded["a"][0].bbox == (1, 2, 3, 4)
    assert loaded["a"][0].score == 0.9
    assert np.array_equal(loaded["a"][1].mask, mask)
    assert loaded["b"] == []


def test_detections_jsonl_rejects_garbage(tmp_path):
    path = tmp_path / "dets.jsonl"
    path.write_text("not json\n")
    with pytest.raises(ValidationError):
        read_detections_jsonl(path)


def test_records_geojson_round_trip(tmp_path):
    records = [
        ObjectRecord(
            object_id="a:0", class_id="206", point=GeoPoint(48.1, 11.2),
            image_id="a", bearing_eff_deg=12.5, distance_m=14.0, reliable=True,
            camera=GeoPoint(48.0, 11.0),
            extent=(GeoPoint(48.1, 11.19995), GeoPoint(48.1, 11.20005)),
        ),
        ObjectRecord(
            object_id="b:0", class_id="274-30", point=GeoPoint(48.2, 11.3),
            image_id="b", bearing_eff_deg=350.0, distance_m=25.0, reliable=False,
        ),
    ]
    path = tmp_path / "records.geojson"
    write_records_geojson(records, path)
    back = read_records_geojson(path)
    assert len(back) == 2
    assert back[0].object_id == "a:0"
    assert back[0].point == records[0].point
    assert back[0].camera == records[0].camera
    assert back[0].extent == records[0].extent
    assert back[0].reliable is True
    assert back[1].camera is None
    assert back[1].reliable is False
    geo = records_to_geojson(records)
    kinds = [f["geometry"]["type"] for f in geo["features"]]
    assert kinds.count("Point") == 2
    assert kinds.count("LineString") == 1
