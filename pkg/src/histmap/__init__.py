"""Online vectorized map construction with per-instance history rasters.

The library tracks map elements (pedestrian crossings, lane dividers, road
boundaries) across frames, keeps a decaying bird's-eye-view history map for
each instance, and scores results per frame or on a merged global map.
"""

__version__ = "0.1.0"

from .geometry import Category, GeometryError, MapElement, Polygon, Polyline, Pose2, chamfer, compose, transform  # noqa: E402
from .raster import GridSpec, HistoryMap, RasterError, decay_update, rasterize, valid_mask, warp  # noqa: E402
from .tracker import QueryAssociator, Tracker, TrackerConfig, TrackerError  # noqa: E402

__all__ = [
    "Category", "GeometryError", "MapElement", "Polygon", "Polyline", "Pose2", "chamfer", "compose",
    "transform", "GridSpec", "HistoryMap", "RasterError", "decay_update", "rasterize", "valid_mask",
    "warp", "QueryAssociator", "Tracker", "TrackerConfig", "TrackerError", "__version__",
]
