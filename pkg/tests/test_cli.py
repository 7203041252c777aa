import json
from pathlib import Path

import pytest

from mapcore.cli import main
from mapcore.config import (
    DAMAGE_INTERVAL_EDGES,
    DEFAULT_BEARING_TOL_DEG,
    DEFAULT_DEDUP_RADIUS_M,
    DEFAULT_DEPTH_BIN_EDGES,
    DEFAULT_MATCH_MAX_DIST_M,
    PipelineConfig,
    SIGN_INTERVAL_EDGES,
    load_config,
)
from mapcore.errors import ValidationError


def _simulate(tmp_path, **kw) -> Path:
    ds = tmp_path / "ds"
    argv = ["simulate", "--out", str(ds), "--images", str(kw.get("images", 2)),
            "--billboards", str(kw.get("billboards", 4)),
            "--seed", str(kw.get("seed", 3)), "--image-size", kw.get("size", "640x400")]
    if kw.get("noise"):
        argv += ["--noise-sigma", str(kw["noise"])]
    assert main(argv) == 0
    return ds


def test_simulate_locate_match_found_all(tmp_path, capsys):
    ds = _simulate(tmp_path)
    out = tmp_path / "located"
    assert main([
        "locate", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--detections", str(ds / "detections.jsonl"), "--out", str(out),
    ]) == 0
    records = json.loads((out / "records.geojson").read_text())
    points = [f for f in records["features"] if f["geometry"]["type"] == "Point"]
    assert len(points) == 8

    dd = tmp_path / "deduped"
    assert main([
        "dedup", "--records", str(out / "records.geojson"), "--out", str(dd),
    ]) == 0

    mt = tmp_path / "matched"
    assert main([
        "match", "--records", str(dd / "deduped.geojson"), "--refs", str(ds / "truth.geojson"),
        "--out", str(mt),
    ]) == 0
    result = json.loads((mt / "match.json").read_text())
    assert result["summary"]["found_fraction"] == 1.0
    assert (mt / "match_pairs.csv").exists()
    assert (mt / "coord_stats.json").exists()


def test_eval_depth_identical_maps_zero_error(tmp_path):
    ds = _simulate(tmp_path)
    out = tmp_path / "eval"
    # truth rasters = the prediction rasters themselves
    assert main([
        "eval-depth", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--truth-depth-dir", str(ds / "depth"), "--labels-dir", str(ds / "labels"),
        "--out", str(out),
    ]) == 0
    data = json.loads((out / "depth_errors.json").read_text())
    for cell in data["cells"]:
        if cell["pixels"]:
            assert cell["mae_m"] == 0.0
            assert cell["are"] == 0.0


def test_eval_depth_against_clouds(tmp_path):
    ds = _simulate(tmp_path, images=1, billboards=3)
    out = tmp_path / "eval"
    assert main([
        "eval-depth", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--cloud-dir", str(ds / "clouds"), "--labels-dir", str(ds / "labels"),
        "--out", str(out),
    ]) == 0
    data = json.loads((out / "depth_errors.json").read_text())
    assert data["evaluated_pixels"] > 0


def test_dedup_merges_three_meter_fixture(tmp_path):
    ds = _simulate(tmp_path, images=1, billboards=2)
    out = tmp_path / "loc"
    assert main([
        "locate", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--detections", str(ds / "detections.jsonl"), "--out", str(out),
    ]) == 0
    # duplicate every record shifted ~2 m east; radius 3 merges the copies
    records = json.loads((out / "records.geojson").read_text())
    features = [f for f in records["features"] if f["geometry"]["type"] == "Point"]
    clones = []
    for f in features:
        c = json.loads(json.dumps(f))
        c["properties"]["object_id"] += ":clone"
        c["geometry"]["coordinates"][0] += 2.0 / 74000.0   # ~2 m of longitude at 48 N
        clones.append(c)
    records["features"] = features + clones
    merged_in = tmp_path / "with_dupes.geojson"
    merged_in.write_text(json.dumps(records))
    dd = tmp_path / "dd"
    assert main(["dedup", "--records", str(merged_in), "--radius", "3", "--out", str(dd)]) == 0
    out_records = json.loads((dd / "deduped.geojson").read_text())
    out_points = [f for f in out_records["features"] if f["geometry"]["type"] == "Point"]
    assert len(out_points) == len(features)


def test_cli_exit_codes(tmp_path):
    # missing required option -> validation error (1)
    assert main(["locate", "--out", str(tmp_path / "x")]) == 1
    # nonexistent input -> I/O error (2)
    assert main([
        "locate", "--meta", str(tmp_path / "nope.csv"), "--depth-dir", str(tmp_path),
        "--detections", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x"),
    ]) == 2
    # invalid flag value -> validation error (1)
    assert main(["simulate", "--out", str(tmp_path / "y"), "--image-size", "potato"]) == 1


def test_cli_no_partial_writes_on_validation_error(tmp_path):
    out = tmp_path / "never"
    assert main([
        "match", "--records", str(tmp_path / "missing.geojson"),
        "--refs", str(tmp_path / "missing.csv"), "--out", str(out),
    ]) == 2
    assert not out.exists()


def test_reports_byte_identical_with_no_timestamp(tmp_path):
    ds = _simulate(tmp_path, images=1, billboards=3)
    outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert main([
            "eval-depth", "--meta", str(ds / "metadata.csv"),
            "--depth-dir", str(ds / "depth"), "--truth-depth-dir", str(ds / "depth"),
            "--out", str(out), "--no-timestamp",
        ]) == 0
        outs.append((out / "depth_errors.json").read_bytes())
    assert outs[0] == outs[1]


def test_report_renders_tables_and_svg(tmp_path, capsys):
    ds = _simulate(tmp_path)
    loc, mt = tmp_path / "loc", tmp_path / "mt"
    assert main([
        "locate", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--detections", str(ds / "detections.jsonl"), "--out", str(loc),
    ]) == 0
    assert main([
        "match", "--records", str(loc / "records.geojson"),
        "--refs", str(ds / "truth.geojson"), "--out", str(mt),
    ]) == 0
    ev = tmp_path / "ev"
    assert main([
        "eval-depth", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
        "--truth-depth-dir", str(ds / "depth"), "--out", str(ev),
    ]) == 0
    rp = tmp_path / "rp"
    assert main([
        "report", "--eval-json", str(ev / "depth_errors.json"),
        "--match-json", str(mt / "match.json"),
        "--coord-json", str(mt / "coord_stats.json"),
        "--svg", "--out", str(rp),
    ]) == 0
    text = (rp / "report.txt").read_text()
    assert "depth error report" in text
    assert "match summary" in text
    assert "<10m" in text
    assert (rp / "coord_box_plot.svg").read_text().startswith("<svg")


def test_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text('radius = 5.0\nmax_dist = 8.0\nworkers = 2\n')
    cfg = load_config(cfg_path)
    assert cfg.radius == 5.0
    assert cfg.max_dist == 8.0
    assert cfg.workers == 2


def test_config_defaults_are_protocol_constants():
    cfg = PipelineConfig()
    assert cfg.bins == DEFAULT_DEPTH_BIN_EDGES == (5.0, 10.0, 20.0)
    assert SIGN_INTERVAL_EDGES == (10.0, 20.0)
    assert DAMAGE_INTERVAL_EDGES == (2.0, 4.0, 6.0, 8.0, 10.0)
    assert cfg.radius == DEFAULT_DEDUP_RADIUS_M == 3.0
    assert cfg.max_dist == DEFAULT_MATCH_MAX_DIST_M == 10.0
    assert cfg.bearing_tol == DEFAULT_BEARING_TOL_DEG == 5.0


def test_config_validation():
    cfg = PipelineConfig(radius=-1.0)
    with pytest.raises(ValidationError):
        cfg.validate()
    cfg = PipelineConfig(bins=(5.0, 5.0))
    with pytest.raises(ValidationError):
        cfg.validate()
    cfg = PipelineConfig(valid_range=(10.0, 1.0))
    with pytest.raises(ValidationError):
        cfg.validate()


def test_locate_workers_deterministic(tmp_path):
    ds = _simulate(tmp_path, images=3, billboards=3)
    outs = []
    for name, workers in (("w1", "1"), ("w4", "4")):
        out = tmp_path / name
        assert main([
            "locate", "--meta", str(ds / "metadata.csv"), "--depth-dir", str(ds / "depth"),
            "--detections", str(ds / "detections.jsonl"), "--out", str(out),
            "--workers", workers, "--no-timestamp",
        ]) == 0
        outs.append((out / "records.geojson").read_bytes())
    assert outs[0] == outs[1]
