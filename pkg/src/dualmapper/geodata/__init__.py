"""Geographic inputs: projection, rasters, splits, tiles and corruptions."""
from .projection import GeoRegion, METERS_PER_DEGREE, project, unproject
from .raster import (
    DEFAULT_TRAJ_CAP,
    RasterGrid,
    RasterSummary,
    RoadPolyline,
    TrajectoryPoint,
    rasterize_trajectories,
    render_ground_truth,
    render_segments,
    scale_traj,
)
from .sampling import (
    TILE_SIZE,
    CornerSampler,
    FixedTileSampler,
    Rect,
    RegionRasters,
    RegionSampler,
    SplitLayout,
    TileSample,
    epoch_size,
    sample_tile,
    training_area,
)
from .transforms import AttackSpec, add_gps_noise, apply_info_loss, blur_image, degrade, quadrant_slices

__all__ = [
    "AttackSpec",
    "CornerSampler",
    "DEFAULT_TRAJ_CAP",
    "FixedTileSampler",
    "GeoRegion",
    "METERS_PER_DEGREE",
    "RasterGrid",
    "RasterSummary",
    "Rect",
    "RegionRasters",
    "RegionSampler",
    "RoadPolyline",
    "SplitLayout",
    "TILE_SIZE",
    "TileSample",
    "TrajectoryPoint",
    "add_gps_noise",
    "apply_info_loss",
    "blur_image",
    "degrade",
    "epoch_size",
    "project",
    "quadrant_slices",
    "rasterize_trajectories",
    "render_ground_truth",
    "render_segments",
    "sample_tile",
    "scale_traj",
    "training_area",
    "unproject",
]
