"""Sampling geometry for polar and box-oriented deformable attention.

Sampling locations are produced in image pixels. Feature-map cells have
their centres at ``(i + 0.5) * stride``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, ParameterError
from .geometry import AngleSet, Contour, PolarParams, classify_points, distance_to_boundary

DEFAULT_T = 4
STRIDES = (8, 16, 32, 64)
NEAR_BOUNDARY_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """``locations[ray_or_head, point] = (x, y)`` plus the feature level of each sample."""

    locations: np.ndarray
    levels: np.ndarray | None = None

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim != 3 or loc.shape[-1] != 2:
            raise DimensionError(f"locations must have shape (heads, points, 2), got {loc.shape}")
        if not np.all(np.isfinite(loc)):
            raise ParameterError("sampling locations must be finite")
        object.__setattr__(self, "locations", loc)
        if self.levels is None:
            object.__setattr__(self, "levels", np.zeros(loc.shape[:2], dtype=int))

    @property
    def points(self) -> np.ndarray:
        return self.locations.reshape(-1, 2)

    def __len__(self):
        return self.locations.shape[0] * self.locations.shape[1]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Channels-first feature tensor ``values[c, row, col]`` at a given stride."""

    values: np.ndarray
    stride: int = 8

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3:
            raise DimensionError("feature map must be (channels, height, width)")
        if self.stride not in STRIDES:
            raise ParameterError(f"stride must be one of {STRIDES}, got {self.stride}")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def check_heads(n_heads: int, angles: AngleSet) -> None:
    """Polar attention pairs exactly one head with each ray."""
    if n_heads != angles.K:
        raise ParameterError(f"polar attention needs one head per ray: {n_heads} heads for K={angles.K}")


def _check_offsets(offsets, shape) -> np.ndarray:
    off = np.asarray(offsets, dtype=float)
    if off.shape != shape:
        raise DimensionError(f"offsets must have shape {shape}, got {off.shape}")
    return off


def fan_base_grid(params: PolarParams, angles: AngleSet, T: int = DEFAULT_T) -> SamplingGrid:
    """``T`` evenly spaced points along every ray, the last one at the ray's endpoint."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    if params.K != angles.K:
        raise DimensionError(f"got {params.K} distances for an angle set of K={angles.K}")
    frac = np.arange(1, T + 1) / T
    steps = params.distances[:, None, None] * frac[None, :, None] * angles.directions[:, None, :]
    return SamplingGrid(params.start + steps)


def polar_sampling_locations(params: PolarParams, angles: AngleSet, T: int = DEFAULT_T,
                             offsets=None) -> SamplingGrid:
    """Fan grid moved by ``offsets * d_k * u_k / T`` (elementwise per axis)."""
    base = fan_base_grid(params, angles, T)
    if offsets is None:
        return base
    off = _check_offsets(offsets, (angles.K, T, 2))
    scale = params.distances[:, None] * angles.directions / T
    return SamplingGrid(base.locations + off * scale[:, None, :])


def box_sampling_locations(center, size, offsets) -> SamplingGrid:
    """Box-oriented sampling: ``center + offsets * (w, h)``."""
    w, h = (float(v) for v in size)
    if w <= 0 or h <= 0:
        raise ParameterError("box width and height must be positive")
    off = np.asarray(offsets, dtype=float)
    if off.ndim == 2:
        off = off[:, None, :]
    if off.ndim != 3 or off.shape[-1] != 2:
        raise DimensionError(f"offsets must have shape (heads, points, 2), got {off.shape}")
    return SamplingGrid(np.asarray(center, dtype=float) + off * np.array([w, h]))


def box_base_offsets(n_heads: int = 8, n_points: int = 16) -> np.ndarray:
    """Initial box-attention offsets before any learning.

    Head ``h`` points along angle ``2*pi*h/n_heads`` (normalised so the
    larger component is 1) and its ``i``-th point sits at ``(i+1)/(2*n_points)``
    of that direction, so the last point reaches the box edge.
    """
    theta = 2 * np.pi * np.arange(n_heads) / n_heads
    d = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    d = d / np.abs(d).max(axis=1, keepdims=True)
    frac = (np.arange(n_points) + 1) / (2 * n_points)
    return d[:, None, :] * frac[None, :, None]


def assign_levels(n_heads: int, n_points: int, n_levels: int = len(STRIDES)) -> np.ndarray:
    """Spread each head's points round-robin over the feature levels."""
    return np.tile(np.arange(n_points) % n_levels, (n_heads, 1))


def with_levels(grid: SamplingGrid, n_levels: int = len(STRIDES)) -> SamplingGrid:
    h, p = grid.locations.shape[:2]
    return SamplingGrid(grid.locations, assign_levels(h, p, n_levels))


def pixels_to_cells(points, stride: int) -> np.ndarray:
    """Continuous cell coordinates; cell ``i`` has its centre at ``i``."""
    return np.asarray(points, dtype=float) / stride - 0.5


def normalized_coords(points, fmap: FeatureMap) -> np.ndarray:
    """Pixel locations in ``[0, 1]`` relative to the map extent."""
    p = np.asarray(points, dtype=float)
    return p / (np.array([fmap.width, fmap.height]) * fmap.stride)


def bilinear_sample(fmap: FeatureMap, at) -> np.ndarray:
    """Bilinear interpolation with zero padding outside the map.

    ``at`` is a pixel location or an (N, 2) array of them; returns
    ``(channels,)`` or ``(N, channels)``.
    """
    pts = np.asarray(at, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    cells = pixels_to_cells(pts, fmap.stride)
    u, v = cells[:, 0], cells[:, 1]
    i0, j0 = np.floor(u).astype(int), np.floor(v).astype(int)
    fu, fv = u - i0, v - j0
    out = np.zeros((len(pts), fmap.channels))
    for di, dj, w in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)), (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        ii, jj = i0 + di, j0 + dj
        ok = (ii >= 0) & (ii < fmap.width) & (jj >= 0) & (jj < fmap.height)
        if ok.any():
            out[ok] += w[ok, None] * fmap.values[:, jj[ok], ii[ok]].T
    return out[0] if single else out


def sample_levels(maps: Sequence[FeatureMap], grid: SamplingGrid) -> np.ndarray:
    """Sample every grid location from the map its level points at; ``(heads, points, channels)``."""
    h, p = grid.locations.shape[:2]
    out = np.zeros((h, p, maps[0].channels))
    for lvl, fmap in enumerate(maps):
        sel = grid.levels == lvl
        if sel.any():
            out[sel] = bilinear_sample(fmap, grid.locations[sel])
    return out


def grid_coverage_stats(grid: SamplingGrid, contour: Contour, band: float | None = None):
    """Fractions of samples near the boundary, inside and outside the contour.

    ``band`` defaults to 5% of the contour diameter. Boundary points count as
    inside; ``interior + exterior == 1`` and the near-boundary fraction
    overlaps both.
    """
    pts = grid.points
    if band is None:
        band = NEAR_BOUNDARY_FRACTION * contour.diameter
    near = distance_to_boundary(contour.vertices, pts) <= band
    inside = classify_points(contour.vertices, pts) >= 0
    n = len(pts)
    return float(near.sum() / n), float(inside.sum() / n), float((~inside).sum() / n)


GRID_CSV_FIELDS = ("ray", "t", "x", "y", "level")


def write_grid_csv(grid: SamplingGrid, fh) -> None:
    w = csv.writer(fh)
    w.writerow(GRID_CSV_FIELDS)
    for k in range(grid.locations.shape[0]):
        for t in range(grid.locations.shape[1]):
            x, y = grid.locations[k, t]
            w.writerow([k, t + 1, repr(float(x)), repr(float(y)), int(grid.levels[k, t])])


def read_grid_csv(fh) -> SamplingGrid:
    rows = list(csv.DictReader(fh))
    if not rows:
        raise ParameterError("empty grid file")
    nk = max(int(r["ray"]) for r in rows) + 1
    nt = max(int(r["t"]) for r in rows)
    loc = np.zeros((nk, nt, 2))
    lev = np.zeros((nk, nt), dtype=int)
    for r in rows:
        k, t = int(r["ray"]), int(r["t"]) - 1
        loc[k, t] = float(r["x"]), float(r["y"])
        lev[k, t] = int(r["level"])
    return SamplingGrid(loc, lev)


def grid_svg(grid: SamplingGrid, contour: Contour | None = None, radius: float | None = None) -> str:
    """SVG overlay of sampling points (coloured by level) over an optional contour."""
    pts = grid.points
    shapes = [pts] if contour is None else [pts, contour.vertices]
    allp = np.concatenate(shapes)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    pad = 0.05 * max(float((hi - lo).max()), 1.0)
    lo, hi = lo - pad, hi + pad
    r = radius if radius is not None else 0.006 * float((hi - lo).max())
    colors = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.4f} {lo[1]:.4f} '
           f'{hi[0] - lo[0]:.4f} {hi[1] - lo[1]:.4f}">']
    if contour is not None:
        path = " ".join(f"{x:.4f},{y:.4f}" for x, y in contour.vertices)
        out.append(f'<polygon points="{path}" fill="none" stroke="black" stroke-width="{r / 2:.4f}"/>')
    for (x, y), lvl in zip(pts, grid.levels.reshape(-1)):
        out.append(f'<circle cx="{x:.4f}" cy="{y:.4f}" r="{r:.4f}" fill="{colors[lvl % len(colors)]}"/>')
    out.append("</svg>")
    return "\n".join(out)
