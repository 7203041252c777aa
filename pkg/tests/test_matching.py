import math

import numpy as np
import pytest

from mapcore.errors import FormatError, ValidationError
from mapcore.geometry import (
    EnuDisplacement,
    GeoPoint,
    displacement_to_geo,
    geo_distance,
)
from mapcore.matching import (
    MatchResult,
    RefEntry,
    dedup,
    load_references,
    match_annotations,
    match_database,
)
from mapcore.pipeline import ObjectRecord

ORIGIN = GeoPoint(48.13, 11.56)


def _point(east_m: float, north_m: float) -> GeoPoint:
    return displacement_to_geo(
        EnuDisplacement(east_m, north_m, math.hypot(east_m, north_m)), ORIGIN
    )


def _record(object_id, class_id="206", east=0.0, north=0.0, image_id=None,
            bearing_eff=0.0, distance=10.0, camera=None) -> ObjectRecord:
    return ObjectRecord(
        object_id=object_id,
        class_id=class_id,
        point=_point(east, north),
        image_id=image_id or object_id.split(":")[0],
        bearing_eff_deg=bearing_eff,
        distance_m=distance,
        reliable=distance < 20.0,
        camera=camera,
    )


# ---------------------------------------------------------------------------
# dedup

def test_dedup_merges_pair_at_centroid():
    records = [_record("a:0", east=0.0), _record("b:0", east=2.0)]
    out = dedup(records, radius_m=3.0)
    assert len(out) == 1
    midpoint = _point(1.0, 0.0)
    assert geo_distance(out[0].point, midpoint) < 1e-6
    assert out[0].source_images == ("a", "b")


def test_dedup_boundary_pair_kept():
    records = [_record("a:0", east=0.0), _record("b:0", east=3.5)]
    out = dedup(records, radius_m=3.0)
    assert len(out) == 2


def test_dedup_class_gate():
    records = [_record("a:0", class_id="206", east=0.0),
               _record("b:0", class_id="274-30", east=1.0)]
    out = dedup(records, radius_m=3.0)
    assert len(out) == 2


def test_dedup_idempotent():
    records = [
        _record("a:0", east=0.0), _record("b:0", east=2.0),
        _record("c:0", east=30.0), _record("d:0", east=31.0),
    ]
    once = dedup(records, radius_m=3.0)
    twice = dedup(once, radius_m=3.0)
    assert once == twice
    assert len(once) == 2


def test_dedup_permutation_invariant():
    rng = np.random.default_rng(17)
    records = [
        _record(f"r{i}:0", class_id="206", east=float(rng.uniform(0, 30)),
                north=float(rng.uniform(0, 30)))
        for i in range(20)
    ]
    base = dedup(records, radius_m=3.0)
    for _ in range(5):
        perm = list(rng.permutation(len(records)))
        shuffled = [records[i] for i in perm]
        out = dedup(shuffled, radius_m=3.0)
        key = lambda recs: sorted(tuple(sorted(r.source_images)) for r in recs)
        assert key(out) == key(base)
        for a, b in zip(sorted(out, key=lambda r: sorted(r.source_images)),
                        sorted(base, key=lambda r: sorted(r.source_images))):
            assert geo_distance(a.point, b.point) < 1e-9 * max(1.0, 3.0)


def test_dedup_chain_vs_strict():
    # a-b and b-c within radius, a-c beyond: chain merges all three,
    # strict complete-linkage keeps the diameter within the radius
    records = [_record("a:0", east=0.0), _record("b:0", east=2.5), _record("c:0", east=5.0)]
    chained = dedup(records, radius_m=3.0, mode="chain")
    assert len(chained) == 1
    strict = dedup(records, radius_m=3.0, mode="strict")
    assert len(strict) == 2
    sizes = sorted(len(r.source_images) for r in strict)
    assert sizes == [1, 2]


def test_dedup_count_never_grows():
    rng = np.random.default_rng(3)
    records = [
        _record(f"r{i}:0", class_id=("206" if i % 2 else "306"),
                east=float(rng.uniform(0, 12)), north=float(rng.uniform(0, 12)))
        for i in range(30)
    ]
    out = dedup(records, radius_m=3.0)
    assert len(out) <= len(records)


def test_dedup_fields_from_nearest_to_centroid():
    records = [
        _record("a:0", east=0.0, distance=8.0, bearing_eff=10.0),
        _record("b:0", east=2.0, distance=12.0, bearing_eff=20.0),
        _record("c:0", east=2.2, distance=14.0, bearing_eff=30.0),
    ]
    out = dedup(records, radius_m=3.0)
    assert len(out) == 1
    # centroid is at east 1.4; nearest member is b:0 at east 2.0
    assert out[0].distance_m == 12.0
    assert out[0].bearing_eff_deg == 20.0
    assert out[0].source_images == ("a", "b", "c")


def test_dedup_rejects_bad_radius():
    with pytest.raises(ValidationError):
        dedup([], radius_m=0.0)


# ---------------------------------------------------------------------------
# annotation matching

def _ref(ref_id, class_id="206", east=0.0, north=0.0) -> RefEntry:
    return RefEntry(ref_id=ref_id, class_id=class_id, point=_point(east, north))


def test_match_within_ten_meters():
    result = match_annotations([_record("p:0")], [_ref("r0", east=9.9)])
    assert len(result.pairs) == 1
    assert result.found_fraction == 1.0
    assert result.pairs[0].distance_m == pytest.approx(9.9, abs=1e-6)


def test_match_beyond_ten_meters():
    result = match_annotations([_record("p:0")], [_ref("r0", east=10.1)])
    assert result.pairs == []
    assert result.unmatched_predictions == ["p:0"]
    assert result.unmatched_references == ["r0"]
    assert result.found_fraction == 0.0


def test_match_picks_nearest():
    result = match_annotations(
        [_record("p:0")], [_ref("far", east=5.0), _ref("near", east=3.0)]
    )
    assert result.pairs[0].ref_id == "near"


def test_match_class_gate():
    result = match_annotations([_record("p:0", class_id="206")],
                               [_ref("r0", class_id="274-30", east=1.0)])
    assert result.pairs == []


def test_match_one_to_one_globally_greedy():
    # two predictions near one reference: only the closer one matches
    preds = [_record("p:0", east=1.0), _record("p:1", east=2.0)]
    result = match_annotations(preds, [_ref("r0", east=0.0)])
    assert len(result.pairs) == 1
    assert result.pairs[0].pred_id == "p:0"
    assert result.unmatched_predictions == ["p:1"]
    # reference consumption is injective
    assert len({p.ref_id for p in result.pairs}) == len(result.pairs)


def test_match_summary_intervals():
    preds = [
        _record("p:0", east=0.5, distance=7.0),
        _record("p:1", east=30.0, distance=15.0),
    ]
    refs = [_ref("r0", east=0.0), _ref("r1", east=31.0)]
    result = match_annotations(preds, refs)
    assert result.found_fraction == 1.0
    assert result.interval_mean_m["<10m"] == pytest.approx(0.5, abs=1e-6)
    assert result.interval_mean_m["10-20m"] == pytest.approx(1.0, abs=1e-6)
    assert result.mean_distance_m == pytest.approx(0.75, abs=1e-6)


def test_match_empty_refs_vacuous():
    result = match_annotations([_record("p:0")], [])
    assert result.found_fraction == 1.0
    assert result.mean_distance_m is None


# ---------------------------------------------------------------------------
# database matching

def test_database_match_bearing_gate():
    camera = ORIGIN
    # record looking due north at an object 4 m further north
    rec = _record("p:0", east=0.0, north=20.0, bearing_eff=0.0, camera=camera)
    close_entry = RefEntry("db0", "206", _point(0.0, 24.0))       # bearing ~0
    result = match_database([rec], [close_entry], radius_m=10.0, bearing_tol_deg=5.0)
    assert len(result.pairs) == 1

    side_entry = RefEntry("db1", "206", _point(5.5, 21.0))        # ~15 deg off
    result = match_database([rec], [side_entry], radius_m=10.0, bearing_tol_deg=5.0)
    assert result.pairs == []


def test_database_match_nearest_candidate_wins():
    camera = ORIGIN
    rec = _record("p:0", east=0.0, north=20.0, bearing_eff=0.0, camera=camera)
    entries = [
        RefEntry("db_far", "206", _point(0.0, 26.0)),
        RefEntry("db_near", "206", _point(0.0, 23.0)),
    ]
    result = match_database([rec], entries, radius_m=10.0, bearing_tol_deg=5.0)
    assert result.pairs[0].ref_id == "db_near"


def test_database_match_requires_camera(caplog):
    rec = _record("p:0", east=0.0, north=20.0, camera=None)
    entry = RefEntry("db0", "206", _point(0.0, 21.0))
    with caplog.at_level("WARNING"):
        result = match_database([rec], [entry])
    assert result.pairs == []
    assert any("camera provenance" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# reference loading and result serialization

def test_load_references_geojson(tmp_path):
    import json

    path = tmp_path / "refs.geojson"
    path.write_text(json.dumps({
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature",
             "geometry": {"type": "Point", "coordinates": [11.56, 48.13]},
             "properties": {"id": "s1", "class": "206"}},
        ],
    }))
    refs = load_references(path)
    assert refs == [RefEntry("s1", "206", GeoPoint(48.13, 11.56))]


def test_load_references_csv(tmp_path):
    path = tmp_path / "refs.csv"
    path.write_text("id,class,lat,lon\ns1,206,48.13,11.56\ns2,306,48.14,11.57\n")
    refs = load_references(path)
    assert len(refs) == 2
    assert refs[1].class_id == "306"


def test_load_references_bad_header(tmp_path):
    path = tmp_path / "refs.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        load_references(path)


def test_match_result_serialization(tmp_path):
    result = match_annotations([_record("p:0", east=1.0)], [_ref("r0", east=0.0)])
    result.write_json(tmp_path / "m.json")
    result.write_pairs_csv(tmp_path / "m.csv")
    import json

    data = json.loads((tmp_path / "m.json").read_text())
    assert data["summary"]["found_fraction"] == 1.0
    assert data["pairs"][0]["ref_id"] == "r0"
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "pred_id,ref_id,distance_m"
    assert len(lines) == 2
