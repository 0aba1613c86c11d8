"""Prediction/ground-truth assignment.

Cost matrices combine classification, distance, raster-mask and inner
(start-inside-instance) terms. One-to-one assignment uses a shortest
augmenting path Hungarian solver; a one-to-many variant picks several
low-cost predictions per ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .geometry import AngleSet, Contour, classify_points
from .raster import DEFAULT_RESOLUTION
from .supervision import (
    CostWeights,
    LayerPrediction,
    dist_loss,
    focal_class_loss,
    reference_targets,
    rmask_loss,
)

TERMS = ("class", "dist", "rmask", "inner")


@dataclass
class CostMatrix:
    """Total matching cost (rows: predictions, cols: ground truths) plus its terms."""

    total: np.ndarray
    terms: dict = field(default_factory=dict)
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self):
        self.total = np.asarray(self.total, dtype=float)
        if self.total.ndim != 2:
            raise ParameterError("cost matrix must be 2D")
        if not np.all(np.isfinite(self.total)):
            raise ParameterError("cost matrix entries must be finite")

    @property
    def shape(self):
        return self.total.shape

    @classmethod
    def from_terms(cls, terms: dict, weights: CostWeights) -> "CostMatrix":
        """Weighted sum of per-term matrices keyed by ``class/dist/rmask/inner``."""
        unknown = set(terms) - set(TERMS)
        if unknown:
            raise ParameterError(f"unknown cost terms {sorted(unknown)}")
        lam = {"class": weights.lambda_class, "dist": weights.lambda_dist,
               "rmask": weights.lambda_rmask, "inner": weights.lambda_inner}
        mats = {k: np.asarray(v, dtype=float) for k, v in terms.items()}
        shape = next(iter(mats.values())).shape
        total = np.zeros(shape)
        for k, m in mats.items():
            total = total + lam[k] * m
        return cls(total, mats, weights)


@dataclass
class Assignment:
    pairs: list

    @property
    def pred_indices(self):
        return [p for p, _ in self.pairs]

    @property
    def gt_indices(self):
        return [g for _, g in self.pairs]

    def cost(self, matrix) -> float:
        m = matrix.total if isinstance(matrix, CostMatrix) else np.asarray(matrix, dtype=float)
        return float(sum(m[i, j] for i, j in self.pairs))


def inner_cost(contour: Contour, start) -> int:
    """0 when the start is inside the contour or on its boundary, else 1."""
    return int(classify_points(contour.vertices, np.asarray(start, dtype=float)[None])[0] < 0)


def build_cost_matrix(preds: Sequence[LayerPrediction], gts: Sequence[tuple], weights: CostWeights,
                      angles: AngleSet, resolution: int = DEFAULT_RESOLUTION) -> CostMatrix:
    """Matching cost between every prediction and every ``(contour, category)``.

    Outside starts take distance targets from the contour's interior pole and
    pay the inner penalty instead of producing an undefined entry.
    """
    if not preds:
        raise ParameterError("prediction set is empty")
    n, m = len(preds), len(gts)
    terms = {k: np.zeros((n, m)) for k in TERMS}
    for j, (contour, category) in enumerate(gts):
        for i, pred in enumerate(preds):
            s = pred.params.start
            targets, _ = reference_targets(contour, s, angles)
            terms["class"][i, j] = focal_class_loss(pred.class_scores, category)
            terms["dist"][i, j] = dist_loss(targets, pred.params.distances)
            terms["rmask"][i, j] = rmask_loss(contour, pred.params, angles, resolution)
            terms["inner"][i, j] = inner_cost(contour, s)
    return CostMatrix.from_terms(terms, weights)


def hungarian(matrix) -> Assignment:
    """Minimum-cost one-to-one assignment of size ``min(rows, cols)``.

    Among equal-cost alternatives the scan order prefers lower prediction
    indices, so results are deterministic.
    """
    c = matrix.total if isinstance(matrix, CostMatrix) else np.asarray(matrix, dtype=float)
    if c.ndim != 2:
        raise ParameterError("cost matrix must be 2D")
    n_pred, n_gt = c.shape
    if n_pred == 0 or n_gt == 0:
        return Assignment([])
    transposed = n_gt < n_pred
    # rows are the smaller side; columns are scanned in index order
    a = c.T if transposed else c
    n, m = a.shape
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = a[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    pairs = []
    for j in range(1, m + 1):
        if p[j]:
            r, col = int(p[j]) - 1, j - 1
            pairs.append((col, r) if transposed else (r, col))
    pairs.sort()
    return Assignment(pairs)


def one_to_many_assign(matrix, m: int = 4, tau: float | None = None) -> list:
    """Up to ``m`` lowest-cost predictions per ground truth with cost <= ``tau``.

    ``tau=None`` uses twice the median cost of the one-to-one matching. A
    prediction can be selected for several ground truths.
    """
    if m < 1:
        raise ParameterError("m must be >= 1")
    c = matrix.total if isinstance(matrix, CostMatrix) else np.asarray(matrix, dtype=float)
    if c.size == 0:
        return []
    if tau is None:
        matched = hungarian(c)
        tau = 2.0 * float(np.median([c[i, j] for i, j in matched.pairs]))
    pairs = []
    for j in range(c.shape[1]):
        order = np.argsort(c[:, j], kind="stable")
        chosen = [int(i) for i in order[:m] if c[i, j] <= tau]
        pairs.extend((i, j) for i in chosen)
    return sorted(pairs)


ASSIGNMENT_CSV_FIELDS = ("image_id", "pred_idx", "gt_idx", "C_class", "C_dist", "C_rmask", "C_inner", "total")


def write_assignment_csv(rows, fh) -> None:
    """Rows of ``(image_id, CostMatrix, Assignment)``."""
    w = csv.writer(fh)
    w.writerow(ASSIGNMENT_CSV_FIELDS)
    for image_id, cm, assignment in rows:
        for i, j in assignment.pairs:
            term = [repr(float(cm.terms[k][i, j])) if k in cm.terms else "" for k in TERMS]
            w.writerow([image_id, i, j, *term, repr(float(cm.total[i, j]))])
