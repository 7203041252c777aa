"""Command line: `depth-adapter export --model NAME --images DIR --out DIR`."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import AdapterConfig, export_depth
from .models import AdapterError


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="depth-adapter",
        description="Export metric depth rasters for an image directory.",
    )
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("export", help="run a depth model over a directory")
    p.add_argument("--model", required=True,
                   help="stub, constant, depth-anything, depth-pro, unidepth, metric3d")
    p.add_argument("--images", required=True, help="input image directory (read-only)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--focal", type=float, default=None, help="focal length in pixels")
    p.add_argument("--device", default="cpu", help="device selector for real models")
    p.add_argument("--constant-depth", type=float, default=7.0,
                   help="depth in meters for the constant model")

    args = parser.parse_args(argv)
    if args.command != "export":
        parser.print_help()
        return 1
    try:
        result = export_depth(AdapterConfig(
            model=args.model,
            image_dir=args.images,
            out_dir=args.out,
            focal_px=args.focal,
            device=args.device,
            constant_depth_m=args.constant_depth,
        ))
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, reason in result.failed:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    print(f"exported {len(result.written)} raster(s) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
