"""mapcore: locate urban objects from single street-view images.

Combines camera pose, pinhole angular geometry, and metric depth rasters
to compute object geocoordinates; deduplicates and matches the results
against annotations or asset databases; and evaluates depth quality
against LiDAR-projected ground truth.
"""

__version__ = "0.1.0"

from .errors import (
    MapcoreError,
    ValidationError,
    PixelOutOfBoundsError,
    AboveHorizonError,
    InvalidDepthError,
    PoleProximityError,
    NotVisibleError,
    NoDepthError,
    FormatError,
    EmptyReportError,
)
from .geometry import (
    MEAN_EARTH_RADIUS_M,
    AngularOffsets,
    CameraPose,
    EarthModel,
    EffectiveAngles,
    EnuDisplacement,
    GeoPoint,
    Intrinsics,
    LocatedPixel,
    PixelCoord,
    angles_to_displacement,
    displacement_to_geo,
    effective_angles,
    enu_offset,
    geo_bearing,
    geo_distance,
    inverse_locate,
    locate_pixel,
    pixel_to_angles,
)
from .rasters import (
    DEFAULT_VALID_RANGE,
    DepthMap,
    PointCloud,
    RecordingMeta,
    SemanticMap,
    load_cloud,
    load_depth,
    load_labels,
    load_mask,
    load_meta,
    save_cloud_xyz,
    save_depth,
    save_labels,
    save_mask,
    save_meta,
)
from .pipeline import (
    Detection,
    ObjectRecord,
    SkippedDetection,
    locate_object,
    object_depth,
    process_image,
    read_detections_jsonl,
    read_records_geojson,
    records_to_geojson,
    write_records_geojson,
)
from .matching import (
    MatchPair,
    MatchResult,
    RefEntry,
    dedup,
    load_references,
    match_annotations,
    match_database,
)
from .evaluation import (
    CoordErrorStats,
    ErrorReport,
    SemanticGroup,
    combine_reports,
    coord_error_stats,
    depth_errors,
    group_of,
    mask_iou,
    project_cloud,
    write_box_plot_svg,
)
from .simulate import (
    Billboard,
    SceneSpec,
    SceneRender,
    TruthObject,
    make_street_scenes,
    perturb_depth,
    render_scene,
    write_dataset,
)
from .config import (
    DAMAGE_INTERVAL_EDGES,
    DEFAULT_BEARING_TOL_DEG,
    DEFAULT_DEDUP_RADIUS_M,
    DEFAULT_DEPTH_BIN_EDGES,
    DEFAULT_MATCH_MAX_DIST_M,
    PipelineConfig,
    RELIABLE_MAX_DISTANCE_M,
    SIGN_INTERVAL_EDGES,
    load_config,
)
