"""Full pipeline on a synthetic street: simulate, locate, dedup, match.

The simulator writes the same file formats the real pipeline consumes
(depth rasters, label PNGs, point clouds, detection masks, metadata CSV,
truth GeoJSON), so this is the end-to-end smoke test for everything at
once, with exact ground truth to score against.
"""

import json
import statistics
import tempfile
from pathlib import Path

from mapcore import (
    RefEntry,
    dedup,
    geo_distance,
    load_depth,
    load_meta,
    make_street_scenes,
    match_annotations,
    process_image,
    read_detections_jsonl,
    write_dataset,
)
from mapcore.geometry import GeoPoint

out = Path(tempfile.mkdtemp(prefix="mapcore_demo_")) / "dataset"
scenes = make_street_scenes(n_images=6, billboards_per_image=8, seed=42)
summary = write_dataset(scenes, out)
print(f"wrote {summary['images']} images with {summary['objects']} signs to {out}")

# consume the dataset exactly like the CLI would
metas = load_meta(out / "metadata.csv")
detections = read_detections_jsonl(out / "detections.jsonl")

records = []
for meta in metas:
    depth = load_depth(out / "depth" / f"{meta.image_id}.raw")
    recs, skipped = process_image(meta, depth, detections[meta.image_id])
    assert not skipped
    records.extend(recs)
print(f"located {len(records)} objects")

merged = dedup(records, radius_m=3.0)
print(f"after dedup: {len(merged)} records")

truth = json.loads((out / "truth.geojson").read_text())
refs = [
    RefEntry(
        ref_id=f["properties"]["id"],
        class_id=f["properties"]["class"],
        point=GeoPoint(f["geometry"]["coordinates"][1], f["geometry"]["coordinates"][0]),
    )
    for f in truth["features"]
]
result = match_annotations(merged, refs, max_dist_m=10.0)

errors_cm = [p.distance_m * 100 for p in result.pairs]
print(f"found fraction: {result.found_fraction:.3f}")
print(f"coordinate error: median {statistics.median(errors_cm):.2f} cm, "
      f"max {max(errors_cm):.2f} cm")
