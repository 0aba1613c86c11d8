"""Polar polygon geometry.

Angle sets, reconstruction of a polygon from a starting point and radial
distances, ray/contour intersection, point-in-contour tests and exact
polygon area / IoU.

Coordinates are image pixels. Angles are measured from the +x axis towards
+y, and "counter-clockwise" means positive shoelace area.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShapelyPolygon

from .errors import DegenerateGeometryWarning, DimensionError, DomainError, ParameterError

DEFAULT_K = 32

#: on-boundary tolerance used by point classification
BOUNDARY_TOL = 1e-9
#: vertices closer than this are merged when a contour is built
DEDUPE_TOL = 1e-9
#: ray/edge determinant below which the pair is treated as parallel
PARALLEL_EPS = 1e-12

# starts x rays x edges is chunked to keep temporaries bounded
_RAY_CHUNK = 256


def _as_points(vertices) -> np.ndarray:
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionError(f"expected an (N, 2) array of vertices, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("vertices must be finite")
    return pts


def _as_point(p) -> np.ndarray:
    pt = np.asarray(p, dtype=float).reshape(-1)
    if pt.shape != (2,):
        raise DimensionError(f"expected a 2D point, got shape {pt.shape}")
    if not np.all(np.isfinite(pt)):
        raise ParameterError("point must be finite")
    return pt


def signed_area(vertices) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AngleSet:
    """``K`` uniformly spaced ray directions starting at ``phase``."""

    K: int = DEFAULT_K
    phase: float = 0.0
    theta: np.ndarray = field(init=False, repr=False)
    directions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 3:
            raise ParameterError(f"K must be an integer >= 3, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        theta = self.phase + 2.0 * np.pi * np.arange(self.K) / self.K
        object.__setattr__(self, "theta", _readonly(theta))
        object.__setattr__(self, "directions", _readonly(np.stack([np.cos(theta), np.sin(theta)], axis=1)))

    def __eq__(self, other):
        return isinstance(other, AngleSet) and self.K == other.K and self.phase == other.phase

    def __hash__(self):
        return hash((self.K, self.phase))

    def __len__(self):
        return self.K


@dataclass(frozen=True, eq=False)
class Polygon:
    """Closed polygon given by its vertices; may be degenerate."""

    vertices: np.ndarray

    def __post_init__(self):
        v = _as_points(self.vertices)
        if len(v) < 3:
            raise DimensionError(f"a polygon needs at least 3 vertices, got {len(v)}")
        object.__setattr__(self, "vertices", _readonly(v))

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return abs(signed_area(self.vertices))

    def translate(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.vertices + np.array([dx, dy]))


def _canonical_ring(vertices) -> np.ndarray:
    v = _as_points(vertices)
    if len(v) > 1 and np.allclose(v[0], v[-1], atol=DEDUPE_TOL, rtol=0):
        v = v[:-1]
    keep = [0]
    for i in range(1, len(v)):
        if np.max(np.abs(v[i] - v[keep[-1]])) > DEDUPE_TOL:
            keep.append(i)
    v = v[keep]
    if len(v) > 1 and np.max(np.abs(v[0] - v[-1])) <= DEDUPE_TOL:
        v = v[:-1]
    return v


@dataclass(frozen=True, eq=False)
class Contour:
    """A simple closed ring, normalised to counter-clockwise order.

    Repeated vertices are merged; collinear vertices are kept. Raises
    :class:`ParameterError` for rings with fewer than three distinct
    vertices, zero area, or self-intersections.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = _canonical_ring(self.vertices)
        if len(v) < 3:
            raise ParameterError(f"a contour needs at least 3 distinct vertices, got {len(v)}")
        a = signed_area(v)
        if abs(a) <= 1e-12 * max(1.0, float(np.ptp(v)) ** 2):
            raise ParameterError("contour has zero area")
        if not _ShapelyPolygon(v).is_valid:
            raise ParameterError("contour is not simple (self-intersecting)")
        if a < 0:
            v = v[::-1]
        object.__setattr__(self, "vertices", _readonly(v))

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cross.sum() / 2.0
        cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
        cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
        return np.array([cx, cy])

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def translate(self, dx: float, dy: float) -> "Contour":
        return Contour(self.vertices + np.array([dx, dy]))

    def scale(self, factor: float, origin=(0.0, 0.0)) -> "Contour":
        o = np.asarray(origin, dtype=float)
        return Contour((self.vertices - o) * factor + o)


@dataclass(frozen=True, eq=False)
class PolarParams:
    """Starting point plus one nonnegative radial distance per ray."""

    start: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        s = _as_point(self.start)
        d = np.asarray(self.distances, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise ParameterError("distances must be finite")
        if np.any(d < 0):
            raise ParameterError("distances must be nonnegative")
        object.__setattr__(self, "start", _readonly(s))
        object.__setattr__(self, "distances", _readonly(d))

    @property
    def K(self) -> int:
        return len(self.distances)

    def as_vector(self) -> np.ndarray:
        """``[x, y, d_1, ..., d_K]``."""
        return np.concatenate([self.start, self.distances])

    @classmethod
    def from_vector(cls, p) -> "PolarParams":
        p = np.asarray(p, dtype=float)
        return cls(p[:2], p[2:])

    def translate(self, dx: float, dy: float) -> "PolarParams":
        return PolarParams(self.start + np.array([dx, dy]), self.distances)


def _check_k(n: int, angles: AngleSet):
    if n != angles.K:
        raise DimensionError(f"got {n} distances for an angle set of K={angles.K}")


def polygon_vertices(start, distances, angles: AngleSet) -> np.ndarray:
    """Vertex array of the polar polygon, without validation."""
    return np.asarray(start, dtype=float) + np.asarray(distances, dtype=float)[:, None] * angles.directions


def reconstruct_polygon(p: PolarParams, angles: AngleSet) -> Polygon:
    """Place one vertex at ``start + d_k * u_k`` for every ray, in ray order."""
    _check_k(p.K, angles)
    return Polygon(polygon_vertices(p.start, p.distances, angles))


def polygon_area(poly) -> float:
    v = poly.vertices if hasattr(poly, "vertices") else poly
    return abs(signed_area(v))


def _edges(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return vertices, np.roll(vertices, -1, axis=0)


def distance_to_boundary(vertices, points) -> np.ndarray:
    """Euclidean distance from each point to the closed polyline."""
    a, b = _edges(np.asarray(vertices, dtype=float))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    e = b - a
    ee = np.einsum("ij,ij->i", e, e)
    ee = np.where(ee == 0, 1.0, ee)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pij,ij->pi", rel, e) / ee, 0.0, 1.0)
    closest = a[None] + t[..., None] * e[None]
    return np.sqrt(((pts[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


def classify_points(vertices, points, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Winding-number classification: 1 inside, 0 on boundary, -1 outside."""
    v = np.asarray(vertices, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = _edges(v)
    px = pts[:, 0:1]
    py = pts[:, 1:2]
    ax, ay = a[None, :, 0], a[None, :, 1]
    bx, by = b[None, :, 0], b[None, :, 1]
    is_left = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
    up = (ay <= py) & (by > py) & (is_left > 0)
    down = (ay > py) & (by <= py) & (is_left < 0)
    winding = up.sum(axis=1) - down.sum(axis=1)
    out = np.where(winding != 0, 1, -1)
    on_edge = distance_to_boundary(v, pts) <= tol
    out[on_edge] = 0
    return out


def point_in_contour(contour: Contour, p) -> bool:
    """True when ``p`` is inside the contour or on its boundary."""
    return bool(classify_points(contour.vertices, _as_point(p)[None])[0] >= 0)


def _farthest_hits(vertices: np.ndarray, starts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Farthest ray/boundary hit distance for every (start, ray); NaN if none."""
    a, b = _edges(vertices)
    e = b - a
    elen = np.sqrt((e**2).sum(-1))
    u = dirs[None, :, None, :]
    rel = a[None, None, :, :] - starts[:, None, None, :]
    ee = e[None, None, :, :]
    denom = u[..., 0] * ee[..., 1] - u[..., 1] * ee[..., 0]
    cross_rel_e = rel[..., 0] * ee[..., 1] - rel[..., 1] * ee[..., 0]
    cross_rel_u = rel[..., 0] * u[..., 1] - rel[..., 1] * u[..., 0]
    parallel = np.abs(denom) <= PARALLEL_EPS * np.maximum(elen, 1.0)[None, None, :]
    safe = np.where(parallel, 1.0, denom)
    t = cross_rel_e / safe
    v = cross_rel_u / safe
    ok = ~parallel & (v >= -1e-12) & (v <= 1.0 + 1e-12) & (t > 0)
    hit = np.where(ok, t, -np.inf)
    # collinear overlap contributes its farthest endpoint
    collinear = parallel & (np.abs(cross_rel_u) <= PARALLEL_EPS * np.maximum(elen, 1.0)[None, None, :])
    if collinear.any():
        ta = (rel * u).sum(-1)
        tb = ((b[None, None] - starts[:, None, None, :]) * u).sum(-1)
        far = np.maximum(ta, tb)
        hit = np.where(collinear & (far > 0), np.maximum(hit, far), hit)
    best = hit.max(axis=2)
    best[~np.isfinite(best)] = np.nan
    return best


def ray_distances(contour: Contour, starts, angles: AngleSet) -> np.ndarray:
    """Farthest-intersection distances for many starts, shape (S, K).

    No inside check is made; rays that miss the contour yield NaN.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    out = np.empty((len(starts), angles.K))
    for i in range(0, len(starts), _RAY_CHUNK):
        out[i : i + _RAY_CHUNK] = _farthest_hits(contour.vertices, starts[i : i + _RAY_CHUNK], angles.directions)
    return out


def ray_contour_intersect(contour: Contour, start, angles: AngleSet) -> np.ndarray:
    """Distance along each ray from ``start`` to its farthest boundary crossing.

    ``start`` must lie strictly inside the contour.
    """
    s = _as_point(start)
    where = classify_points(contour.vertices, s[None])[0]
    if where < 0:
        raise DomainError(f"start point {tuple(s)} lies outside the contour", point=tuple(s))
    if where == 0:
        raise DomainError(f"start point {tuple(s)} lies on the contour boundary", point=tuple(s))
    return ray_distances(contour, s[None], angles)[0]


def _to_shapely(geom) -> _ShapelyPolygon:
    v = geom.vertices if hasattr(geom, "vertices") else np.asarray(geom, dtype=float)
    poly = _ShapelyPolygon(v)
    if not poly.is_valid:
        poly = shapely.make_valid(poly)
    return poly


def exact_polygon_iou(a, b) -> float:
    """Intersection over union of two polygons by exact clipping.

    Zero-area input returns 0.0 and emits :class:`DegenerateGeometryWarning`.
    """
    pa, pb = _to_shapely(a), _to_shapely(b)
    if pa.area <= 0 or pb.area <= 0:
        warnings.warn("zero-area polygon passed to exact_polygon_iou", DegenerateGeometryWarning, stacklevel=2)
        return 0.0
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def batch_iou(polygons: Sequence, target) -> np.ndarray:
    """Exact IoU of each polygon vertex array against one target."""
    tgt = _to_shapely(target)
    geoms = shapely.polygons([np.asarray(p, dtype=float) for p in polygons])
    bad = ~shapely.is_valid(geoms)
    if bad.any():
        geoms[bad] = shapely.make_valid(geoms[bad])
    inter = shapely.area(shapely.intersection(geoms, tgt))
    areas = shapely.area(geoms)
    union = areas + tgt.area - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    iou[areas <= 0] = 0.0
    return np.clip(iou, 0.0, 1.0)


def regular_polygon(center, radius: float, n: int, phase: float = 0.0) -> np.ndarray:
    """Vertices of a regular ``n``-gon, counter-clockwise."""
    t = phase + 2.0 * np.pi * np.arange(n) / n
    return np.asarray(center, dtype=float) + radius * np.stack([np.cos(t), np.sin(t)], axis=1)


def regular_polygon_area(radius: float, n: int) -> float:
    return 0.5 * n * radius**2 * math.sin(2.0 * math.pi / n)


def as_contour(obj) -> Contour:
    if isinstance(obj, Contour):
        return obj
    return Contour(obj)


def union_bounds(arrays: Iterable[np.ndarray]) -> tuple[float, float, float, float]:
    pts = np.concatenate([np.asarray(a, dtype=float).reshape(-1, 2) for a in arrays])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])
