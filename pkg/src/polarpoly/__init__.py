"""Polar polygon geometry, supervision targets, matching and evaluation."""

from .approx import ApproxResult, approximability_score, error_landscape, rank_by_approximability
from .config import RunConfig, load_config
from .errors import DegenerateGeometryWarning, DimensionError, DomainError, ParameterError, PolarPolyError
from .estimators import PolarContourEncoder
from .evaluation import EvalReport, evaluate, evaluate_subset, load_annotations, load_detections
from .geometry import (
    AngleSet,
    Contour,
    PolarParams,
    Polygon,
    exact_polygon_iou,
    point_in_contour,
    ray_contour_intersect,
    reconstruct_polygon,
)
from .matching import CostMatrix, build_cost_matrix, hungarian, one_to_many_assign
from .raster import SoftMask, rasterize, soft_iou
from .sampling import SamplingGrid, box_sampling_locations, grid_coverage_stats, polar_sampling_locations
from .supervision import CostWeights, LayerPrediction, dist_loss, fd_gradient, pats_targets, rmask_loss, total_loss

__version__ = "0.1.0"
