from .frame import FRAME_THRESHOLDS, chamfer_matrix, frame_map, sequence_frame_map
from .globaleval import (
    IOU_THRESHOLDS,
    TAU_DIS,
    TAU_VALID,
    GlobalEvalError,
    GlobalMap,
    ap_polygon_global,
    ap_polyline_global,
    farthest_point_sampling,
    fit_polyline,
    g_map,
    global_grid,
    mask_iou,
    merge_predictions,
    raster_global_gt,
)
from .matching import CostMatrix, MatchError, MatchResult, average_precision, global_instance_match, greedy_match
from .report import EvalReport

__all__ = [
    "FRAME_THRESHOLDS", "IOU_THRESHOLDS", "TAU_DIS", "TAU_VALID",
    "CostMatrix", "EvalReport", "GlobalEvalError", "GlobalMap", "MatchError", "MatchResult",
    "ap_polygon_global", "ap_polyline_global", "average_precision", "chamfer_matrix",
    "farthest_point_sampling", "fit_polyline", "frame_map", "g_map", "global_grid",
    "global_instance_match", "greedy_match", "mask_iou", "merge_predictions",
    "raster_global_gt", "sequence_frame_map",
]
