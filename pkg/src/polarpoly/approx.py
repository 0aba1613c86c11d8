"""How well a contour can be represented by a polar polygon.

The approximability score of a contour is the best IoU reachable by a polar
reconstruction over all interior starting points. It is estimated on a
lattice over the bounding box followed by one 4x finer local pass around the
best lattice point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError
from .geometry import (
    AngleSet,
    Contour,
    Polygon,
    batch_iou,
    classify_points,
    polygon_vertices,
    ray_distances,
)
from .raster import write_pgm
from .supervision import interior_pole

DEFAULT_GRID_N = 64
REFINE_FACTOR = 4


@dataclass
class ApproxResult:
    score: float
    optimal_start: np.ndarray
    optimal_polygon: Polygon
    search_resolution: int
    fragmented: bool = False


@dataclass
class Landscape:
    """Representation error on a lattice; NaN marks points outside the contour."""

    xs: np.ndarray
    ys: np.ndarray
    errors: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.errors[np.isfinite(self.errors)]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["y\\x", *(repr(float(x)) for x in self.xs)])
        for y, row in zip(self.ys, self.errors):
            w.writerow([repr(float(y)), *("" if not np.isfinite(v) else repr(float(v)) for v in row)])

    def write_pgm(self, path) -> None:
        """Heat image: bright = low error, black = outside."""
        write_pgm(np.where(np.isfinite(self.errors), 1.0 - np.nan_to_num(self.errors), 0.0), path)


def _lattice(contour: Contour, n: int):
    x0, y0, x1, y1 = contour.bounds
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    return xs, ys, (x1 - x0) / n, (y1 - y0) / n


def _ious(contour: Contour, starts: np.ndarray, angles: AngleSet) -> np.ndarray:
    d = ray_distances(contour, starts, angles)
    polys = [polygon_vertices(s, di, angles) for s, di in zip(starts, d)]
    return batch_iou(polys, contour)


def _interior(contour: Contour, pts: np.ndarray) -> np.ndarray:
    return pts[classify_points(contour.vertices, pts) == 1]


def approximability_score(contour: Contour, angles: AngleSet | None = None,
                          grid_n: int = DEFAULT_GRID_N, refine: bool = True) -> ApproxResult:
    """Best polar-reconstruction IoU over interior starting points."""
    if grid_n < 4:
        raise ParameterError("grid_n must be >= 4")
    angles = angles or AngleSet()
    xs, ys, hx, hy = _lattice(contour, grid_n)
    # the centroid joins the lattice: symmetric shapes often peak exactly there
    grid = np.vstack([contour.centroid, np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)])
    pts = _interior(contour, grid)
    if len(pts) == 0:
        # sliver contour: probe the centroid / pole instead
        try:
            pts = interior_pole(contour, grid_n=8 * grid_n)[None]
        except DomainError:
            raise DomainError("contour has no interior point to start from") from None
    iou = _ious(contour, pts, angles)
    best = int(np.argmax(iou))
    best_start, best_iou = pts[best], float(iou[best])
    if refine:
        k = np.arange(-REFINE_FACTOR, REFINE_FACTOR + 1) / REFINE_FACTOR
        sub = np.stack(np.meshgrid(best_start[0] + k * hx, best_start[1] + k * hy), -1).reshape(-1, 2)
        sub = _interior(contour, sub)
        if len(sub):
            sub_iou = _ious(contour, sub, angles)
            j = int(np.argmax(sub_iou))
            if sub_iou[j] > best_iou:
                best_start, best_iou = sub[j], float(sub_iou[j])
    d = ray_distances(contour, best_start[None], angles)[0]
    poly = Polygon(polygon_vertices(best_start, d, angles))
    return ApproxResult(best_iou, best_start, poly, grid_n)


def largest_ring(rings) -> tuple[Contour, bool]:
    """Largest-area ring of a possibly fragmented instance, and whether it was fragmented."""
    rings = [r if isinstance(r, Contour) else Contour(r) for r in rings]
    if not rings:
        raise ParameterError("instance has no rings")
    return max(rings, key=lambda r: r.area), len(rings) > 1


def score_instance(geometry, angles: AngleSet | None = None, grid_n: int = DEFAULT_GRID_N) -> ApproxResult:
    """Score a contour or a list of rings (largest ring only, flagged as fragmented)."""
    if isinstance(geometry, Contour):
        return approximability_score(geometry, angles, grid_n)
    ring, fragmented = largest_ring(geometry)
    result = approximability_score(ring, angles, grid_n)
    result.fragmented = fragmented
    return result


def rank_by_approximability(instances, angles: AngleSet | None = None, top_fraction: float = 1.0,
                            grid_n: int = DEFAULT_GRID_N, scores: dict | None = None) -> list:
    """Ids of the top ``ceil(top_fraction * n)`` instances by descending score.

    ``instances`` holds ``(id, contour_or_rings)`` pairs. Equal scores keep
    ascending id order. Precomputed ``scores`` (id -> score) skip the search.
    """
    if not 0 < top_fraction <= 1:
        raise ParameterError("top_fraction must lie in (0, 1]")
    if not instances:
        return []
    if scores is None:
        scores = {i: score_instance(g, angles, grid_n).score for i, g in instances}
    ids = sorted((i for i, _ in instances), key=lambda i: (-scores[i], i))
    return ids[: math.ceil(top_fraction * len(ids))]


def error_landscape(contour: Contour, angles: AngleSet | None = None, grid_n: int = DEFAULT_GRID_N) -> Landscape:
    """Representation error at every interior lattice point."""
    if grid_n < 4:
        raise ParameterError("grid_n must be >= 4")
    angles = angles or AngleSet()
    xs, ys, _, _ = _lattice(contour, grid_n)
    pts = np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)
    inside = classify_points(contour.vertices, pts) == 1
    errors = np.full(len(pts), np.nan)
    if inside.any():
        errors[inside] = 1.0 - _ious(contour, pts[inside], angles)
    return Landscape(xs, ys, errors.reshape(grid_n, grid_n))


SCORE_CSV_FIELDS = ("instance_id", "score", "start_x", "start_y", "K")


def write_scores_csv(rows, fh) -> None:
    """Rows of ``(instance_id, ApproxResult, K)``."""
    w = csv.writer(fh)
    w.writerow(SCORE_CSV_FIELDS)
    for instance_id, r, k in rows:
        w.writerow([instance_id, repr(r.score), repr(float(r.optimal_start[0])), repr(float(r.optimal_start[1])), k])


def read_scores_csv(fh) -> list[dict]:
    out = []
    for row in csv.DictReader(fh):
        if not row["instance_id"] or row["instance_id"].startswith("#"):
            continue
        out.append({"instance_id": row["instance_id"], "score": float(row["score"]),
                    "start": (float(row["start_x"]), float(row["start_y"])), "K": int(row["K"])})
    return out
