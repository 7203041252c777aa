"""Export depth rasters and a metadata template for an image directory.

Output formats match the mapcore exchange contracts exactly:

* per image: ``<stem>.raw`` of little-endian float32 meters, row-major,
  plus ``<stem>.json`` sidecar ``{"width": W, "height": H, "unit": "m"}``;
* one ``meta_template.csv`` with the columns the pipeline's metadata
  loader expects; image dimensions and focal length (the model's estimate
  when it makes one, otherwise the provided value) are filled in, pose
  columns stay blank for the caller to complete.

Source images are only ever read; the output directory is the single
write target.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .models import AdapterError, DepthPrediction, load_model

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

META_TEMPLATE_HEADER = [
    "image_id", "lat", "lon", "bearing_deg", "pitch_deg",
    "fx_px", "fy_px", "width", "height", "timestamp", "source",
]


@dataclass
class AdapterConfig:
    model: str
    image_dir: str | Path
    out_dir: str | Path
    focal_px: float | None = None
    device: str = "cpu"
    constant_depth_m: float = 7.0


@dataclass
class ExportResult:
    written: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)   # (file, reason)


def _write_raw(depth: np.ndarray, path: Path) -> None:
    data = np.ascontiguousarray(depth, dtype="<f4")
    path.write_bytes(data.tobytes())
    sidecar = {"width": depth.shape[1], "height": depth.shape[0], "unit": "m"}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))


def export_depth(config: AdapterConfig) -> ExportResult:
    """Run the model over every image and write rasters plus the metadata
    template.  Per-file failures are collected, not fatal; an AdapterError
    is raised only when nothing could be exported."""
    image_dir = Path(config.image_dir)
    if not image_dir.is_dir():
        raise AdapterError(f"image directory not found: {image_dir}")
    images = sorted(
        p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not images:
        raise AdapterError(f"no images ({', '.join(IMAGE_SUFFIXES)}) in {image_dir}")

    model = load_model(
        config.model, config.focal_px, config.device, config.constant_depth_m
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = ExportResult()
    meta_rows = []
    for image_path in images:
        try:
            with Image.open(image_path) as img:
                array = np.asarray(img.convert("RGB"))
            prediction: DepthPrediction = model.predict(array)
            raw_path = out_dir / f"{image_path.stem}.raw"
            _write_raw(prediction.depth_m, raw_path)
        except AdapterError as exc:
            logger.error("%s: %s", image_path.name, exc)
            result.failed.append((image_path.name, str(exc)))
            continue
        except OSError as exc:
            logger.error("%s: unreadable image: %s", image_path.name, exc)
            result.failed.append((image_path.name, f"unreadable image: {exc}"))
            continue
        focal = prediction.predicted_focal_px
        if focal is None:
            focal = config.focal_px
        h, w = prediction.depth_m.shape
        meta_rows.append([
            image_path.stem, "", "", "", "",
            "" if focal is None else repr(float(focal)),
            "" if focal is None else repr(float(focal)),
            w, h, "", model.name,
        ])
        result.written.append(raw_path.name)

    if not result.written:
        raise AdapterError(
            "no image could be exported: "
            + "; ".join(f"{name}: {reason}" for name, reason in result.failed)
        )

    with open(out_dir / "meta_template.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(META_TEMPLATE_HEADER)
        writer.writerows(meta_rows)
    return result
