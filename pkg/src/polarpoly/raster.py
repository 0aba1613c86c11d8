"""Soft-mask rasterization, soft IoU and representation error.

A :class:`SoftMask` stores, for every cell of a ``height x width`` grid, the
fraction of that cell covered by a polygon. Cells live in "cell space",
where cell ``(row j, col i)`` is the unit square ``[i, i+1] x [j, j+1]``;
a :class:`Frame` maps cell space to image pixels.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryWarning, DimensionError, ParameterError
from .geometry import (
    AngleSet,
    Contour,
    PolarParams,
    exact_polygon_iou,
    ray_contour_intersect,
    reconstruct_polygon,
    signed_area,
    union_bounds,
)

DEFAULT_RESOLUTION = 32
SUPERSAMPLE = 4
MODES = ("supersample", "exact")
# edges x columns x rows handled per vectorised block
_CHUNK = 1 << 18


@dataclass(frozen=True, eq=False)
class Frame:
    """Affine map ``pixel = A @ cell + t`` stored as a 2x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 3):
            raise ParameterError(f"frame matrix must be 2x3, got {m.shape}")
        det = np.linalg.det(m[:, :2])
        if not np.isfinite(det) or abs(det) < 1e-15:
            raise ParameterError("frame is not invertible")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_bounds(cls, x0, y0, x1, y1, width, height) -> "Frame":
        """Axis-aligned frame whose ``width x height`` cells tile the box."""
        return cls([[(x1 - x0) / width, 0.0, x0], [0.0, (y1 - y0) / height, y0]])

    @classmethod
    def identity(cls) -> "Frame":
        return cls([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    def to_pixels(self, cells) -> np.ndarray:
        c = np.asarray(cells, dtype=float)
        return c @ self.matrix[:, :2].T + self.matrix[:, 2]

    def to_cells(self, pixels) -> np.ndarray:
        p = np.asarray(pixels, dtype=float) - self.matrix[:, 2]
        return np.linalg.solve(self.matrix[:, :2], p.T).T

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


def union_frame(shapes, width: int, height: int, pad: float = 0.05) -> Frame:
    """Bounding box of all shapes, grown by ``pad`` of its size, split into cells.

    ``pad`` is the total growth; each side moves out by half of it.
    """
    x0, y0, x1, y1 = union_bounds(s.vertices if hasattr(s, "vertices") else s for s in shapes)
    w, h = x1 - x0, y1 - y0
    side = max(w, h, 1e-9)
    # keep a thin shape from producing a zero-height frame
    w, h = max(w, 1e-3 * side), max(h, 1e-3 * side)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    w, h = w * (1 + pad), h * (1 + pad)
    return Frame.from_bounds(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, width, height)


@dataclass(frozen=True, eq=False)
class SoftMask:
    """Per-cell coverage fractions, ``values[row, col]``."""

    values: np.ndarray
    frame: Frame

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError("mask values must be 2D")
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ParameterError("mask values must lie in [0, 1]")
        v = np.clip(v, 0.0, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_pgm(self, path) -> None:
        write_pgm(self, path)


def _even_odd_coverage(v: np.ndarray, width: int, height: int, samples: int) -> np.ndarray:
    # scanline even-odd fill evaluated at samples x samples points per cell
    offs = (np.arange(samples) + 0.5) / samples
    sy = (np.arange(height)[:, None] + offs[None, :]).reshape(-1)
    sx = (np.arange(width)[:, None] + offs[None, :]).reshape(-1)
    a, b = v, np.roll(v, -1, axis=0)
    ay, by = a[:, 1], b[:, 1]
    inside = np.zeros((len(sy), len(sx)), dtype=bool)
    lo, hi = np.minimum(ay, by), np.maximum(ay, by)
    for r, y in enumerate(sy):
        m = (lo <= y) & (hi > y)
        if not m.any():
            continue
        t = (y - ay[m]) / (by[m] - ay[m])
        xs = np.sort(a[m, 0] + t * (b[m, 0] - a[m, 0]))
        inside[r] = np.searchsorted(xs, sx, side="right") % 2 == 1
    return inside.reshape(height, samples, width, samples).mean(axis=(1, 3))


def _exact_coverage(v: np.ndarray, width: int, height: int) -> np.ndarray:
    """Exact area of the polygon inside every unit cell.

    Uses area = -sum over edges of the integral of clamp(y, j, j+1) - j dx,
    restricted to each column; exact for simple polygons.
    """
    orient = 1.0 if signed_area(v) >= 0 else -1.0
    a, b = v, np.roll(v, -1, axis=0)
    x0, y0, x1, y1 = a[:, 0:1], a[:, 1:2], b[:, 0:1], b[:, 1:2]
    cols = np.arange(width)[None, :]
    xa = np.clip(x0, cols, cols + 1)
    xb = np.clip(x1, cols, cols + 1)
    dx = x1 - x0
    slope = np.divide(y1 - y0, dx, out=np.zeros_like(dx), where=dx != 0)
    ya = y0 + slope * (xa - x0)
    yb = y0 + slope * (xb - x0)
    span = xb - xa
    # only (edge, column) pairs that overlap contribute
    ei, ci = np.nonzero(span)
    ya, yb, span = ya[ei, ci], yb[ei, ci], span[ei, ci]
    dy = yb - ya
    cov = np.zeros((height, width))
    step = max(1, _CHUNK // max(1, ya.size))
    for r0 in range(0, height, step):
        j = np.arange(r0, min(height, r0 + step))[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = np.where(dy != 0, (j - ya) / dy, 0.0)
            t_hi = np.where(dy != 0, (j + 1 - ya) / dy, 0.0)
        zeros = np.zeros_like(t_lo)
        ts = np.sort(np.stack([zeros, zeros + 1, np.clip(t_lo, 0, 1), np.clip(t_hi, 0, 1)], -1), -1)
        g = np.clip(ya[..., None] + ts * dy[..., None], j[..., None], j[..., None] + 1) - j[..., None]
        integral = ((g[..., 1:] + g[..., :-1]) * np.diff(ts, axis=-1)).sum(-1) / 2 * span
        flat = (np.arange(len(j))[:, None] * width + ci).reshape(-1)
        rows = np.bincount(flat, weights=integral.reshape(-1), minlength=len(j) * width)
        cov[r0 : r0 + step] = -orient * rows.reshape(len(j), width)
    return np.clip(cov, 0.0, 1.0)


def rasterize(poly, width: int = DEFAULT_RESOLUTION, height: int = DEFAULT_RESOLUTION,
              frame: Frame | None = None, mode: str = "supersample", samples: int = SUPERSAMPLE) -> SoftMask:
    """Fractional cell coverage of ``poly`` (a Polygon, Contour or vertex array).

    ``mode="supersample"`` counts ``samples**2`` even-odd point tests per
    cell; ``mode="exact"`` integrates the covered area analytically, which
    keeps the mask continuous in the vertex positions.
    """
    if width < 2 or height < 2:
        raise ParameterError("mask width and height must be >= 2")
    if mode not in MODES:
        raise ParameterError(f"unknown rasterization mode {mode!r}")
    if frame is None:
        frame = Frame.from_bounds(0, 0, width, height, width, height)
    elif not isinstance(frame, Frame):
        frame = Frame(frame)
    verts = poly.vertices if hasattr(poly, "vertices") else np.asarray(poly, dtype=float)
    cells = frame.to_cells(verts)
    if mode == "exact":
        values = _exact_coverage(cells, width, height)
    else:
        values = _even_odd_coverage(cells, width, height, samples)
    return SoftMask(values, frame)


def soft_iou(a: SoftMask, b: SoftMask) -> float:
    """``sum(min(a, b)) / sum(max(a, b))``; two empty masks count as identical."""
    if a.values.shape != b.values.shape:
        raise DimensionError(f"mask shapes differ: {a.values.shape} vs {b.values.shape}")
    if a.frame != b.frame:
        raise DimensionError("masks were rasterized in different frames")
    union = np.maximum(a.values, b.values).sum()
    if union == 0:
        warnings.warn("soft_iou of two empty masks", DegenerateGeometryWarning, stacklevel=2)
        return 1.0
    return float(np.minimum(a.values, b.values).sum() / union)


def representation_error(contour: Contour, start, angles: AngleSet) -> float:
    """``1 - IoU`` between a contour and its polar reconstruction from ``start``."""
    d = ray_contour_intersect(contour, start, angles)
    poly = reconstruct_polygon(PolarParams(start, d), angles)
    return 1.0 - exact_polygon_iou(poly, contour)


def write_pgm(mask: SoftMask | np.ndarray, path) -> None:
    """Binary 8-bit PGM (P5), rows top to bottom."""
    values = mask.values if isinstance(mask, SoftMask) else np.asarray(mask, dtype=float)
    h, w = values.shape
    data = np.round(np.clip(values, 0, 1) * 255).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ParameterError("not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    data = np.frombuffer(raw[m.end() : m.end() + w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(float) / maxval
