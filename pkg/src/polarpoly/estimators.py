"""scikit-learn compatible wrappers around the polar encoding."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .approx import approximability_score
from .errors import DimensionError, ParameterError
from .geometry import AngleSet, Contour, PolarParams, Polygon, batch_iou, polygon_vertices, ray_distances
from .supervision import interior_pole

START_RULES = ("optimal", "pole")


def check_contours(X) -> list[Contour]:
    """Accept contours, vertex arrays or flat COCO rings; return Contours."""
    if isinstance(X, Contour):
        raise ParameterError("expected a sequence of contours, got a single Contour")
    out = []
    for x in X:
        if isinstance(x, Contour):
            out.append(x)
            continue
        a = np.asarray(x, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 2)
        out.append(Contour(a))
    return out


class PolarContourEncoder(TransformerMixin, BaseEstimator):
    """Encode contours as ``[x, y, d_1..d_K]`` polar parameter vectors.

    Parameters
    ----------
    n_rays : int
        Number of uniformly spaced rays.
    start : {"optimal", "pole"}
        ``"optimal"`` searches for the IoU-maximising start; ``"pole"`` uses
        the centroid (or the deepest lattice point when the centroid is
        outside).
    grid_n : int
        Lattice size of the optimal-start search.
    phase : float
        Angle of the first ray.
    """

    def __init__(self, n_rays=32, start="optimal", grid_n=32, phase=0.0):
        self.n_rays = n_rays
        self.start = start
        self.grid_n = grid_n
        self.phase = phase

    def fit(self, X, y=None):
        if self.start not in START_RULES:
            raise ParameterError(f"start must be one of {START_RULES}")
        check_contours(X)
        self.angles_ = AngleSet(self.n_rays, self.phase)
        self.n_features_out_ = self.n_rays + 2
        return self

    def _start(self, c: Contour) -> np.ndarray:
        if self.start == "pole":
            return interior_pole(c)
        return approximability_score(c, self.angles_, self.grid_n).optimal_start

    def transform(self, X):
        check_is_fitted(self, "angles_")
        rows = []
        for c in check_contours(X):
            s = self._start(c)
            rows.append(np.concatenate([s, ray_distances(c, s[None], self.angles_)[0]]))
        return np.asarray(rows).reshape(-1, self.n_features_out_)

    def inverse_transform(self, P):
        check_is_fitted(self, "angles_")
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[1] != self.n_features_out_:
            raise DimensionError(f"expected {self.n_features_out_} columns, got {P.shape[1]}")
        return [Polygon(polygon_vertices(p[:2], np.maximum(p[2:], 0.0), self.angles_)) for p in P]

    def to_params(self, P) -> list[PolarParams]:
        return [PolarParams.from_vector(p) for p in np.atleast_2d(P)]

    def score(self, X, y=None):
        """Mean IoU between each contour and its reconstruction."""
        contours = check_contours(X)
        polys = self.inverse_transform(self.transform(contours))
        return float(np.mean([batch_iou([p.vertices], c)[0] for p, c in zip(polys, contours)]))
