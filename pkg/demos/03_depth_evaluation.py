"""Score a noisy depth raster against LiDAR-style ground truth.

The rendered scene provides both sides of the comparison: the point cloud
plays the LiDAR reference (projected into a z-buffer raster), and a
perturbed copy of the depth map plays the model prediction.  Errors come
out as MAE/ARE per distance bin and per semantic group, with people,
vehicles, and sky excluded.
"""

import tempfile
from pathlib import Path

from mapcore import (
    SemanticGroup,
    coord_error_stats,
    depth_errors,
    make_street_scenes,
    perturb_depth,
    project_cloud,
    render_scene,
    write_box_plot_svg,
)
from mapcore.evaluation import EVAL_GROUPS, bin_labels

spec = make_street_scenes(n_images=1, billboards_per_image=8, seed=3,
                          cloud_stride=1)[0]
scene = render_scene(spec)

truth = project_cloud(scene.cloud, spec.intrinsics)          # LiDAR stand-in
pred = perturb_depth(truth, sigma=0.06, seed=9)              # "model output"

report = depth_errors(pred, truth, scene.labels)
labels = bin_labels(report.bin_edges)

print(f"evaluated pixels: {report.total_pixels}")
print(f"{'scope':<14}{'MAE (m)':>10}{'ARE':>8}{'pixels':>10}")
print("-" * 42)
print(f"{'total':<14}{report.mae():>10.3f}{report.are():>8.3f}{report.pixels():>10}")
for b, label in enumerate(labels):
    if report.pixels(b):
        print(f"{label:<14}{report.mae(b):>10.3f}{report.are(b):>8.3f}{report.pixels(b):>10}")
for group in EVAL_GROUPS:
    if report.pixels(None, group):
        print(f"{group.value:<14}{report.mae(None, group):>10.3f}"
              f"{report.are(None, group):>8.3f}{report.pixels(None, group):>10}")

# per-interval position-error box plot from a toy set of matched pairs
stats = coord_error_stats(
    errors_m=[0.4, 0.9, 1.3, 2.2, 2.8, 4.1, 5.0, 3.4],
    camera_distances_m=[4.0, 6.0, 9.0, 14.0, 18.0, 22.0, 27.0, 25.0],
    interval_edges=(5.0, 10.0, 20.0),
)
svg_path = Path(tempfile.mkdtemp(prefix="mapcore_demo_")) / "box_plot.svg"
write_box_plot_svg(stats, svg_path, title="position error vs camera distance")
print(f"\nwrote box plot to {svg_path}")
