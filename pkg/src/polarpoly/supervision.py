"""Position-aware targets, polygon losses and finite-difference checks.

Targets for the radial distances are always recomputed by ray casting from
the *current* predicted starting point and are treated as constants with
respect to the prediction.
"""

from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateGeometryWarning, DimensionError, DomainError, ParameterError
from .geometry import (
    AngleSet,
    Contour,
    PolarParams,
    classify_points,
    distance_to_boundary,
    polygon_vertices,
    ray_contour_intersect,
    ray_distances,
    signed_area,
)
from .raster import DEFAULT_RESOLUTION, rasterize, soft_iou, union_frame

DEFAULT_DEPTH = 6
FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0


@dataclass(frozen=True)
class CostWeights:
    """Loss / matching-cost coefficients."""

    lambda_class: float = 2.0
    lambda_dist: float = 5.0
    lambda_rmask: float = 2.0
    lambda_inner: float = 5.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be a finite nonnegative number, got {value}")

    def scaled(self, factor: float) -> "CostWeights":
        return CostWeights(*(factor * v for v in asdict(self).values()))

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "CostWeights":
        values = [float(v) for v in values]
        if len(values) not in (3, 4):
            raise ParameterError("weights take 3 (class, dist, rmask) or 4 (+ inner) values")
        return cls(*values)


@dataclass(frozen=True)
class LayerPrediction:
    """Output of one decoder layer for one query."""

    layer_index: int
    params: PolarParams
    class_scores: np.ndarray
    depth: int = DEFAULT_DEPTH

    def __post_init__(self):
        if not 1 <= self.layer_index <= self.depth:
            raise ParameterError(f"layer_index must lie in 1..{self.depth}, got {self.layer_index}")
        scores = np.asarray(self.class_scores, dtype=float).reshape(-1)
        if np.any((scores < 0) | (scores > 1)):
            raise ParameterError("class scores must lie in [0, 1]")
        object.__setattr__(self, "class_scores", scores)


@dataclass
class LossBreakdown:
    l_class: float
    l_dist: float
    l_rmask: float
    total: float
    flags: list = field(default_factory=list)


def pats_targets(contour: Contour, predicted_start, angles: AngleSet) -> np.ndarray:
    """Ground-truth radial distances seen from the predicted starting point."""
    return ray_contour_intersect(contour, np.array(predicted_start, dtype=float), angles)


def interior_pole(contour: Contour, grid_n: int = 32) -> np.ndarray:
    """Centroid if it is strictly inside, else the lattice point farthest from the boundary."""
    c = contour.centroid
    if classify_points(contour.vertices, c[None])[0] == 1:
        return c
    x0, y0, x1, y1 = contour.bounds
    xs = x0 + (np.arange(grid_n) + 0.5) * (x1 - x0) / grid_n
    ys = y0 + (np.arange(grid_n) + 0.5) * (y1 - y0) / grid_n
    pts = np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)
    inside = classify_points(contour.vertices, pts) == 1
    if not inside.any():
        raise DomainError("no interior lattice point found")
    pts = pts[inside]
    return pts[np.argmax(distance_to_boundary(contour.vertices, pts))]


def reference_targets(contour: Contour, start, angles: AngleSet) -> tuple[np.ndarray, bool]:
    """PATS targets, falling back to the contour's interior pole for outside starts.

    Returns ``(targets, inside)``; ``inside`` is False when the fallback fired.
    """
    s = np.asarray(start, dtype=float)
    if classify_points(contour.vertices, s[None])[0] == 1:
        return ray_distances(contour, s[None], angles)[0], True
    return ray_distances(contour, interior_pole(contour)[None], angles)[0], False


def dist_loss(target, predicted) -> float:
    """Mean absolute difference of radial distances."""
    t = np.asarray(target, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if t.shape != p.shape:
        raise DimensionError(f"target has {t.size} distances, prediction has {p.size}")
    return float(np.abs(t - p).mean())


def _rmask_from_vertices(contour: Contour, verts: np.ndarray, resolution: int, mode: str) -> float:
    if abs(signed_area(verts)) <= 1e-12:
        warnings.warn("degenerate prediction in rmask_loss", DegenerateGeometryWarning, stacklevel=3)
        return 1.0
    frame = union_frame([verts, contour.vertices], resolution, resolution)
    pred = rasterize(verts, resolution, resolution, frame, mode)
    return 1.0 - soft_iou(pred, _gt_mask(contour, frame, resolution, mode))


@functools.lru_cache(maxsize=256)
def _gt_mask(contour: Contour, frame, resolution: int, mode: str):
    # contours are immutable, so identity-keyed caching is safe
    return rasterize(contour, resolution, resolution, frame, mode)


def rmask_loss(contour: Contour, predicted: PolarParams, angles: AngleSet,
               resolution: int = DEFAULT_RESOLUTION, mode: str = "supersample") -> float:
    """``1 - soft IoU`` of the rasterized prediction and contour.

    Both shapes are rasterized at ``resolution x resolution`` over the
    padded bounding box of their union. An all-zero prediction scores 1.0.
    """
    if predicted.K != angles.K:
        raise DimensionError(f"got {predicted.K} distances for an angle set of K={angles.K}")
    verts = polygon_vertices(predicted.start, predicted.distances, angles)
    return _rmask_from_vertices(contour, verts, resolution, mode)


def focal_class_loss(scores, category: int, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> float:
    """Sigmoid focal loss on the ground-truth category score."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if not 0 <= category < scores.size:
        raise ParameterError(f"unknown category index {category} for {scores.size} scores")
    p = float(np.clip(scores[category], 1e-12, 1.0))
    return alpha * (1.0 - p) ** gamma * -math.log(p)


def combine_terms(l_class: float, l_dist: float, l_rmask: float, weights: CostWeights) -> float:
    return weights.lambda_class * l_class + weights.lambda_dist * l_dist + weights.lambda_rmask * l_rmask


def total_loss(pred: LayerPrediction, contour: Contour, gt_category: int, weights: CostWeights,
               angles: AngleSet, resolution: int = DEFAULT_RESOLUTION,
               class_loss: Callable = focal_class_loss) -> LossBreakdown:
    """Weighted class + distance + raster-mask loss for one matched pair."""
    l_class = class_loss(pred.class_scores, gt_category)
    targets, inside = reference_targets(contour, pred.params.start, angles)
    flags = [] if inside else ["start_outside"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateGeometryWarning)
        l_rmask = rmask_loss(contour, pred.params, angles, resolution)
    if caught:
        flags.append("degenerate_prediction")
    l_dist = dist_loss(targets, pred.params.distances)
    return LossBreakdown(l_class, l_dist, l_rmask, combine_terms(l_class, l_dist, l_rmask, weights), flags)


def refine_params(previous: PolarParams, delta_start, delta_distances) -> tuple[PolarParams, int]:
    """Residual update of start and distances; negative distances clamp to 0.

    Returns the new parameters and the number of clamped distances. For the
    first layer pass the box centre with zero distances as ``previous``.
    """
    dd = np.asarray(delta_distances, dtype=float).reshape(-1)
    if dd.size != previous.K:
        raise DimensionError(f"got {dd.size} distance updates for K={previous.K}")
    d = previous.distances + dd
    clamped = int(np.count_nonzero(d < 0))
    return PolarParams(previous.start + np.asarray(delta_start, dtype=float), np.maximum(d, 0.0)), clamped


def initial_params(box_center, delta_start, distances) -> tuple[PolarParams, int]:
    """First-layer parameters from a box centre."""
    d = np.asarray(distances, dtype=float).reshape(-1)
    return refine_params(PolarParams(box_center, np.zeros_like(d)), delta_start, d)


@dataclass
class GradientResult:
    """Central-difference gradient over ``[x, y, d_1..d_K]``.

    ``kinks`` marks coordinates whose one-sided slopes disagree (the loss is
    not differentiable there, e.g. an L1 kink); ``outside`` lists coordinates
    whose perturbation moved the start out of the contour; those entries of
    ``gradient`` are NaN.
    """

    gradient: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    kinks: np.ndarray
    outside: list

    @property
    def ambiguous(self) -> bool:
        return bool(self.kinks.any())


def _loss_fn(loss, contour, angles, resolution):
    if callable(loss):
        return loss
    if loss == "dist":
        return lambda p, targets: dist_loss(targets, p[2:])
    if loss == "rmask":
        def f(p, targets):
            verts = polygon_vertices(p[:2], p[2:], angles)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateGeometryWarning)
                return _rmask_from_vertices(contour, verts, resolution, "exact")
        return f
    raise ParameterError(f"unknown loss {loss!r}; expected 'dist', 'rmask' or a callable")


def fd_gradient(loss, at: PolarParams, contour: Contour, step: float = 1e-4,
                angles: AngleSet | None = None, resolution: int = DEFAULT_RESOLUTION,
                kink_tol: float = 1e-3) -> GradientResult:
    """Finite-difference gradient of a polar loss at ``at``.

    ``loss`` is ``"dist"``, ``"rmask"`` (exact-coverage rasterization) or a
    callable ``f(param_vector, targets) -> float``. Targets come from ray
    casting at the unperturbed start and stay fixed for every perturbation.
    """
    if step <= 0:
        raise ParameterError("step must be positive")
    angles = angles or AngleSet(at.K)
    if at.K != angles.K:
        raise DimensionError(f"got {at.K} distances for an angle set of K={angles.K}")
    targets = pats_targets(contour, at.start, angles)
    f = _loss_fn(loss, contour, angles, resolution)
    x = at.as_vector()
    n = x.size
    f0 = f(x, targets)
    fwd = np.empty(n)
    bwd = np.empty(n)
    outside = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        if i < 2:
            moved = np.stack([x[:2] + e[:2], x[:2] - e[:2]])
            if np.any(classify_points(contour.vertices, moved) < 1):
                outside.append(i)
                fwd[i] = bwd[i] = np.nan
                continue
        fwd[i] = (f(x + e, targets) - f0) / step
        bwd[i] = (f0 - f(x - e, targets)) / step
    grad = (fwd + bwd) / 2
    with np.errstate(invalid="ignore"):
        scale = np.maximum(np.maximum(np.abs(fwd), np.abs(bwd)), 1.0)
        kinks = np.abs(fwd - bwd) > kink_tol * scale
    return GradientResult(grad, fwd, bwd, np.nan_to_num(kinks, nan=False).astype(bool), outside)


LOSS_CSV_FIELDS = ("instance_id", "layer", "L_class", "L_dist", "L_rmask", "total")


def write_loss_csv(rows, fh) -> None:
    """Rows of ``(instance_id, layer, LossBreakdown)``."""
    w = csv.writer(fh)
    w.writerow(LOSS_CSV_FIELDS)
    for instance_id, layer, b in rows:
        w.writerow([instance_id, layer, repr(b.l_class), repr(b.l_dist), repr(b.l_rmask), repr(b.total)])
