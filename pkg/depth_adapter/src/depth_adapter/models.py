"""Depth model registry.

Two weight-free test doubles ship with the package:

* ``stub``: a deterministic luminance-derived pseudo-depth, useful for CI
  and format round-trip checks; it also "estimates" a focal length
  (1.5x the provided one) to exercise the metadata pass-through.
* ``constant``: every pixel at a fixed distance.

The real model families load through HuggingFace transformers when the
optional dependencies and weights are available; they are consumed as
opaque checkpoints, never reimplemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AdapterError(Exception):
    """Adapter-level failure (model load, unreadable image, bad config)."""


class ModelUnavailableError(AdapterError):
    """The requested model's dependencies or weights are missing."""


@dataclass
class DepthPrediction:
    depth_m: np.ndarray                 # float32, (H, W), meters
    predicted_focal_px: float | None    # set when the model estimates one


class StubModel:
    """Deterministic pseudo-depth from image luminance; no weights needed."""

    name = "stub"
    estimates_focal = True

    def __init__(self, focal_px: float | None = None) -> None:
        self.focal_px = focal_px

    def predict(self, image: np.ndarray) -> DepthPrediction:
        rgb = image.astype(np.float64)
        if rgb.ndim == 2:
            luma = rgb
        else:
            luma = 0.2126 * rgb[..., 0] + 0.7152 * rgb[..., 1] + 0.0722 * rgb[..., 2]
        depth = (3.0 + 0.15 * luma).astype(np.float32)
        focal = 1.5 * self.focal_px if self.focal_px else 1.2 * image.shape[1]
        return DepthPrediction(depth_m=depth, predicted_focal_px=float(focal))


class ConstantModel:
    """Every pixel at one fixed distance; the simplest test double."""

    name = "constant"
    estimates_focal = False

    def __init__(self, depth_m: float = 7.0) -> None:
        if depth_m <= 0:
            raise AdapterError(f"constant depth must be positive, got {depth_m}")
        self.depth_m = depth_m

    def predict(self, image: np.ndarray) -> DepthPrediction:
        h, w = image.shape[:2]
        return DepthPrediction(
            depth_m=np.full((h, w), self.depth_m, dtype=np.float32),
            predicted_focal_px=None,
        )


class TransformersDepthModel:
    """Metric depth estimation through a HuggingFace checkpoint."""

    estimates_focal = False

    def __init__(self, name: str, checkpoint: str, device: str = "cpu") -> None:
        self.name = name
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelUnavailableError(
                f"model {name!r} needs the optional dependencies: "
                "pip install 'depth-adapter[models]'"
            ) from exc
        try:
            self._pipe = pipeline("depth-estimation", model=checkpoint, device=device)
        except Exception as exc:
            raise ModelUnavailableError(
                f"cannot load checkpoint {checkpoint!r} for {name!r}: {exc}"
            ) from exc

    def predict(self, image: np.ndarray) -> DepthPrediction:
        from PIL import Image

        result = self._pipe(Image.fromarray(image))
        depth = np.asarray(result["predicted_depth"], dtype=np.float32)
        if depth.shape != image.shape[:2]:
            from PIL import Image as PILImage

            depth = np.asarray(
                PILImage.fromarray(depth).resize(
                    (image.shape[1], image.shape[0]), PILImage.BILINEAR
                ),
                dtype=np.float32,
            )
        return DepthPrediction(depth_m=depth, predicted_focal_px=None)


_HF_CHECKPOINTS = {
    "depth-anything": "depth-anything/Depth-Anything-V2-Metric-Outdoor-Small-hf",
    "depth-pro": "apple/DepthPro-hf",
    "unidepth": "lpiccinelli/unidepth-v2-vits14",
    "metric3d": "JUGGHM/Metric3D",
}


def load_model(name: str, focal_px: float | None = None, device: str = "cpu",
               constant_depth_m: float = 7.0):
    """Instantiate a model by registry name."""
    if name == "stub":
        return StubModel(focal_px=focal_px)
    if name == "constant":
        return ConstantModel(depth_m=constant_depth_m)
    if name in _HF_CHECKPOINTS:
        return TransformersDepthModel(name, _HF_CHECKPOINTS[name], device)
    raise AdapterError(
        f"unknown model {name!r}; available: stub, constant, {', '.join(_HF_CHECKPOINTS)}"
    )
