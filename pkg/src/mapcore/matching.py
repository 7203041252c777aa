"""Merge duplicate detections across images and match against references.

Deduplication clusters same-class records by union-find over pairs closer
than the radius (transitive closure: chains can exceed the radius; a
complete-linkage mode caps the cluster diameter instead).  Each cluster
collapses to one record at the coordinate centroid, with the scalar
fields of the member nearest to that centroid and the provenance of all
merged images.

Matching is globally greedy with one-to-one reference consumption:
candidate pairs sorted by distance, nearest first, ties broken by lower
id, so no reference can absorb more than one prediction.  Annotation
matching gates on class and a maximum distance; database matching
additionally requires the bearing from the record's camera to the entry
to agree with the record's effective bearing within a tolerance.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import (
    DEFAULT_BEARING_TOL_DEG,
    DEFAULT_DEDUP_RADIUS_M,
    DEFAULT_MATCH_MAX_DIST_M,
    SIGN_INTERVAL_EDGES,
)
from .errors import FormatError, ValidationError
from .geometry import (
    DEFAULT_EARTH,
    EarthModel,
    GeoPoint,
    displacement_to_geo,
    EnuDisplacement,
    enu_offset,
    geo_bearing,
    geo_distance,
    wrap_angle_diff,
)
from .pipeline import ObjectRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefEntry:
    """A reference object from an annotation set or an asset database."""

    ref_id: str
    class_id: str
    point: GeoPoint


@dataclass(frozen=True)
class MatchPair:
    pred_id: str
    ref_id: str
    distance_m: float


@dataclass
class MatchResult:
    pairs: list[MatchPair]
    unmatched_predictions: list[str]
    unmatched_references: list[str]
    found_fraction: float
    mean_distance_m: float | None
    median_distance_m: float | None
    interval_mean_m: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pairs": [
                {"pred_id": p.pred_id, "ref_id": p.ref_id, "distance_m": p.distance_m}
                for p in self.pairs
            ],
            "unmatched_predictions": list(self.unmatched_predictions),
            "unmatched_references": list(self.unmatched_references),
            "summary": {
                "found_fraction": self.found_fraction,
                "matched": len(self.pairs),
                "references": len(self.pairs) + len(self.unmatched_references),
                "predictions": len(self.pairs) + len(self.unmatched_predictions),
                "mean_distance_m": self.mean_distance_m,
                "median_distance_m": self.median_distance_m,
                "interval_mean_m": dict(self.interval_mean_m),
            },
        }

    def write_json(self, path: str | Path, timestamp: str | None = None) -> None:
        payload = self.to_dict()
        if timestamp is not None:
            payload["generated_at"] = timestamp
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_pairs_csv(self, path: str | Path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["pred_id", "ref_id", "distance_m"])
            for p in self.pairs:
                writer.writerow([p.pred_id, p.ref_id, repr(p.distance_m)])


# ---------------------------------------------------------------------------
# deduplication

class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _near_pairs(
    indexed: list[tuple[int, ObjectRecord]], radius_m: float, em: EarthModel
) -> list[tuple[int, int]]:
    """Index pairs within radius, pruned by a latitude window."""
    by_lat = sorted(indexed, key=lambda ir: ir[1].point.lat)
    lat_window = math.degrees(radius_m / em.radius_m) * 1.001
    pairs = []
    for a in range(len(by_lat)):
        ia, ra = by_lat[a]
        for b in range(a + 1, len(by_lat)):
            ib, rb = by_lat[b]
            if rb.point.lat - ra.point.lat > lat_window:
                break
            if geo_distance(ra.point, rb.point, em) <= radius_m:
                pairs.append((ia, ib))
    return pairs


def dedup(
    records: list[ObjectRecord],
    radius_m: float = DEFAULT_DEDUP_RADIUS_M,
    em: EarthModel = DEFAULT_EARTH,
    mode: str = "chain",
) -> list[ObjectRecord]:
    """Collapse same-class records within the radius to one record each.

    mode="chain" (default) merges by transitive closure, which is
    order-independent but can chain clusters beyond the radius;
    mode="strict" uses complete linkage so no cluster exceeds the radius
    in diameter.
    """
    if radius_m <= 0:
        raise ValidationError(f"dedup radius must be positive, got {radius_m}")
    if mode not in ("chain", "strict"):
        raise ValidationError(f"dedup mode must be 'chain' or 'strict', got {mode!r}")

    by_class: dict[str, list[tuple[int, ObjectRecord]]] = {}
    for i, r in enumerate(records):
        by_class.setdefault(r.class_id, []).append((i, r))

    cluster_of = list(range(len(records)))
    for indexed in by_class.values():
        if mode == "chain":
            uf = _UnionFind(len(records))
            for a, b in _near_pairs(indexed, radius_m, em):
                uf.union(a, b)
            for i, _ in indexed:
                cluster_of[i] = uf.find(i)
        else:
            for i, root in _complete_linkage(indexed, radius_m, em).items():
                cluster_of[i] = root

    clusters: dict[int, list[int]] = {}
    for i in range(len(records)):
        clusters.setdefault(cluster_of[i], []).append(i)

    merged = []
    for root in sorted(clusters):
        members = [records[i] for i in sorted(clusters[root])]
        merged.append(members[0] if len(members) == 1 else _merge_cluster(members, em))
    return merged


def _complete_linkage(
    indexed: list[tuple[int, ObjectRecord]], radius_m: float, em: EarthModel
) -> dict[int, int]:
    """Agglomerate while every cross-cluster pair stays within the radius;
    closest clusters merge first, ties by lowest member index."""
    clusters: dict[int, list[int]] = {i: [i] for i, _ in indexed}
    rec = {i: r for i, r in indexed}
    while True:
        best = None
        roots = sorted(clusters)
        for x in range(len(roots)):
            for y in range(x + 1, len(roots)):
                a, b = roots[x], roots[y]
                dmax = max(
                    geo_distance(rec[i].point, rec[j].point, em)
                    for i in clusters[a]
                    for j in clusters[b]
                )
                if dmax <= radius_m and (best is None or dmax < best[0]):
                    best = (dmax, a, b)
        if best is None:
            break
        _, a, b = best
        clusters[a].extend(clusters[b])
        del clusters[b]
    return {i: root for root, members in clusters.items() for i in members}


def _merge_cluster(members: list[ObjectRecord], em: EarthModel) -> ObjectRecord:
    anchor = members[0].point
    east = north = 0.0
    for m in members:
        de, dn = enu_offset(anchor, m.point, em)
        east += de
        north += dn
    east /= len(members)
    north /= len(members)
    centroid = displacement_to_geo(
        EnuDisplacement(east, north, math.hypot(east, north)), anchor, em
    )
    nearest = min(members, key=lambda m: (geo_distance(m.point, centroid, em), m.object_id))
    images = []
    for m in members:
        for img in m.source_images:
            if img not in images:
                images.append(img)
    return replace(nearest, point=centroid, source_images=tuple(images))


# ---------------------------------------------------------------------------
# matching

def _greedy_one_to_one(
    candidates: list[tuple[float, str, str]],
    pred_ids: list[str],
    ref_ids: list[str],
) -> tuple[list[MatchPair], list[str], list[str]]:
    """Assign nearest-first with one-to-one consumption on both sides."""
    pairs = []
    taken_pred: set[str] = set()
    taken_ref: set[str] = set()
    for dist, pid, rid in sorted(candidates):
        if pid in taken_pred or rid in taken_ref:
            continue
        pairs.append(MatchPair(pred_id=pid, ref_id=rid, distance_m=dist))
        taken_pred.add(pid)
        taken_ref.add(rid)
    unmatched_preds = [p for p in pred_ids if p not in taken_pred]
    unmatched_refs = [r for r in ref_ids if r not in taken_ref]
    return pairs, unmatched_preds, unmatched_refs


def _summarize(
    pairs: list[MatchPair],
    unmatched_preds: list[str],
    unmatched_refs: list[str],
    preds_by_id: dict[str, ObjectRecord],
    interval_edges: tuple[float, ...],
) -> MatchResult:
    n_refs = len(pairs) + len(unmatched_refs)
    distances = [p.distance_m for p in pairs]
    from .evaluation import bin_labels

    interval_mean: dict[str, float] = {}
    if pairs and interval_edges:
        labels = bin_labels(interval_edges)
        buckets: dict[str, list[float]] = {}
        for p in pairs:
            est = preds_by_id[p.pred_id].distance_m
            idx = sum(est >= e for e in interval_edges)
            buckets.setdefault(labels[idx], []).append(p.distance_m)
        interval_mean = {label: statistics.fmean(v) for label, v in sorted(buckets.items())}
    return MatchResult(
        pairs=pairs,
        unmatched_predictions=unmatched_preds,
        unmatched_references=unmatched_refs,
        found_fraction=(len(pairs) / n_refs) if n_refs else 1.0,
        mean_distance_m=statistics.fmean(distances) if distances else None,
        median_distance_m=statistics.median(distances) if distances else None,
        interval_mean_m=interval_mean,
    )


def match_annotations(
    preds: list[ObjectRecord],
    refs: list[RefEntry],
    max_dist_m: float = DEFAULT_MATCH_MAX_DIST_M,
    em: EarthModel = DEFAULT_EARTH,
    interval_edges: tuple[float, ...] = SIGN_INTERVAL_EDGES,
) -> MatchResult:
    """Match each prediction to the closest same-class annotation within
    the distance ceiling (inclusive), one reference per prediction."""
    if max_dist_m <= 0:
        raise ValidationError(f"max_dist must be positive, got {max_dist_m}")
    refs_by_class: dict[str, list[RefEntry]] = {}
    for r in refs:
        refs_by_class.setdefault(r.class_id, []).append(r)
    candidates = []
    for p in preds:
        for r in refs_by_class.get(p.class_id, ()):
            dist = geo_distance(p.point, r.point, em)
            if dist <= max_dist_m:
                candidates.append((dist, p.object_id, r.ref_id))
    pairs, up, ur = _greedy_one_to_one(
        candidates, [p.object_id for p in preds], [r.ref_id for r in refs]
    )
    return _summarize(pairs, up, ur, {p.object_id: p for p in preds}, interval_edges)


def match_database(
    records: list[ObjectRecord],
    db_entries: list[RefEntry],
    radius_m: float = DEFAULT_MATCH_MAX_DIST_M,
    bearing_tol_deg: float = DEFAULT_BEARING_TOL_DEG,
    em: EarthModel = DEFAULT_EARTH,
    interval_edges: tuple[float, ...] = SIGN_INTERVAL_EDGES,
) -> MatchResult:
    """Match records against database entries, gating on class, radius, and
    the record's effective bearing: the direction from the record's camera
    to the entry must agree within the tolerance.

    Records without camera provenance cannot apply the bearing gate and
    are skipped with a diagnostic.
    """
    if radius_m <= 0 or bearing_tol_deg <= 0:
        raise ValidationError("radius and bearing_tol must be positive")
    entries_by_class: dict[str, list[RefEntry]] = {}
    for e in db_entries:
        entries_by_class.setdefault(e.class_id, []).append(e)
    candidates = []
    for rec in records:
        if rec.camera is None:
            logger.warning(
                "record %s has no camera provenance; skipped in database matching",
                rec.object_id,
            )
            continue
        for e in entries_by_class.get(rec.class_id, ()):
            dist = geo_distance(rec.point, e.point, em)
            if dist > radius_m:
                continue
            bearing_to_entry = geo_bearing(rec.camera, e.point)
            if abs(wrap_angle_diff(bearing_to_entry - rec.bearing_eff_deg)) > bearing_tol_deg:
                continue
            candidates.append((dist, rec.object_id, e.ref_id))
    pairs, up, ur = _greedy_one_to_one(
        candidates, [r.object_id for r in records], [e.ref_id for e in db_entries]
    )
    return _summarize(pairs, up, ur, {r.object_id: r for r in records}, interval_edges)


# ---------------------------------------------------------------------------
# reference loading

def load_references(path: str | Path) -> list[RefEntry]:
    """References as GeoJSON Points (properties id, class) or CSV with
    header id, class, lat, lon."""
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        return _load_references_geojson(path)
    if path.suffix.lower() == ".csv":
        return _load_references_csv(path)
    raise ValidationError(f"unsupported reference format: {path}")


def _load_references_geojson(path: Path) -> list[RefEntry]:
    try:
        data = json.loads(path.read_text())
        features = data["features"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a GeoJSON FeatureCollection: {exc}") from exc
    refs = []
    for feat in features:
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            continue
        props = feat.get("properties") or {}
        try:
            lon, lat = geom["coordinates"][:2]
            refs.append(RefEntry(
                ref_id=str(props["id"]),
                class_id=str(props["class"]),
                point=GeoPoint(lat, lon),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed reference feature: {exc}") from exc
    return refs


def _load_references_csv(path: Path) -> list[RefEntry]:
    refs = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty reference file") from None
        if header != ["id", "class", "lat", "lon"]:
            raise FormatError(f"{path}: expected header id,class,lat,lon, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                refs.append(RefEntry(
                    ref_id=row[0], class_id=row[1],
                    point=GeoPoint(float(row[2]), float(row[3])),
                ))
            except (IndexError, ValueError, ValidationError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return refs
