"""Seeded gradient and invariant checks for the polar losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AngleSet, PolarParams, batch_iou, polygon_vertices
from .shapes import random_convex_polygon, random_interior_point
from .supervision import fd_gradient, pats_targets, refine_params

SUITES = ("all", "dist-only", "rmask-only")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    failing_seeds: tuple = ()


def _shape(seed, scale=20.0):
    rng = np.random.default_rng(seed)
    c = random_convex_polygon(rng, scale=scale)
    s = random_interior_point(c, rng, margin=0.05 * scale)
    return rng, c, s


def check_dist_gradient(seeds, angles: AngleSet, step=1e-3, loss="dist") -> CheckResult:
    """Central differences of the L1 distance loss equal sign(d_hat - d) / K away from kinks."""
    bad, checked = [], 0
    for seed in seeds:
        rng, c, s = _shape(seed)
        d = pats_targets(c, s, angles)
        offset = rng.uniform(0.1, 1.0, angles.K) * rng.choice([-1.0, 1.0], angles.K)
        pred = PolarParams(s, np.maximum(d + offset, 0.0))
        if np.any(np.abs(pred.distances - d) < 10 * step):
            continue
        checked += 1
        g = fd_gradient(loss, pred, c, step, angles)
        expect = np.sign(pred.distances - d) / angles.K
        if g.ambiguous or not np.allclose(g.gradient[2:], expect, atol=1e-6) or np.any(g.gradient[:2] != 0):
            bad.append(seed)
    return CheckResult("dist_gradient", not bad and checked > 0, f"{checked - len(bad)}/{checked} shapes", tuple(bad))


def check_dist_kink(seeds, angles: AngleSet, step=1e-3, loss="dist") -> CheckResult:
    """At d_hat == d every distance coordinate is reported as a kink."""
    bad = []
    for seed in seeds:
        _, c, s = _shape(seed)
        g = fd_gradient(loss, PolarParams(s, pats_targets(c, s, angles)), c, step, angles)
        if not g.kinks[2:].all():
            bad.append(seed)
    return CheckResult("dist_kink", not bad, f"{len(seeds) - len(bad)}/{len(seeds)} shapes", tuple(bad))


def rmask_sign_oracle(contour, pred: PolarParams, angles: AngleSet, step) -> np.ndarray:
    """Sign of d(1 - IoU)/d d_k from exact clipping at d_k +/- step."""
    polys = []
    for k in range(angles.K):
        for sgn in (1.0, -1.0):
            d = pred.distances.copy()
            d[k] += sgn * step
            polys.append(polygon_vertices(pred.start, d, angles))
    iou = batch_iou(polys, contour).reshape(angles.K, 2)
    return np.sign(-(iou[:, 0] - iou[:, 1]))


def check_rmask_signs(seeds, angles: AngleSet, step=1e-2, resolution=32) -> CheckResult:
    """Strictly-inside predictions: raster-loss gradient signs match the exact-clipping oracle."""
    bad = []
    for seed in seeds:
        rng, c, s = _shape(seed)
        d = pats_targets(c, s, angles)
        pred = PolarParams(s, d * rng.uniform(0.4, 0.9, angles.K))
        g = fd_gradient("rmask", pred, c, step, angles, resolution)
        oracle = rmask_sign_oracle(c, pred, angles, step)
        if np.any(g.gradient[2:] > 0) or not np.array_equal(np.sign(g.gradient[2:]), oracle):
            bad.append(seed)
    return CheckResult("rmask_signs", not bad, f"{len(seeds) - len(bad)}/{len(seeds)} shapes", tuple(bad))


def check_translation(seeds, angles: AngleSet) -> CheckResult:
    bad = []
    for seed in seeds:
        rng, c, s = _shape(seed)
        t = rng.uniform(-50, 50, 2)
        a = pats_targets(c, s, angles)
        b = pats_targets(c.translate(*t), s + t, angles)
        if not np.allclose(a, b, atol=1e-9):
            bad.append(seed)
    return CheckResult("pats_translation", not bad, f"{len(seeds) - len(bad)}/{len(seeds)} shapes", tuple(bad))


def check_refine_telescopes(seeds, angles: AngleSet) -> CheckResult:
    bad = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        p0 = PolarParams(rng.uniform(0, 10, 2), rng.uniform(5, 10, angles.K))
        ds = rng.normal(0, 0.5, (6, 2))
        dd = rng.normal(0, 0.5, (6, angles.K))
        p = p0
        for a, b in zip(ds, dd):
            p, _ = refine_params(p, a, b)
        once, _ = refine_params(p0, ds.sum(0), dd.sum(0))
        if not (np.allclose(p.start, once.start) and np.allclose(p.distances, once.distances)):
            bad.append(seed)
    return CheckResult("refine_telescopes", not bad, f"{len(seeds) - len(bad)}/{len(seeds)} cases", tuple(bad))


def _corrupted_dist(p, targets):
    # deliberately wrong: squared error instead of absolute error
    return float(((targets - p[2:]) ** 2).mean())


def run_gradcheck(seed: int = 0, n: int = 20, suite: str = "all", K: int = 32, corrupt: bool = False) -> list[CheckResult]:
    """Run the selected check suite on ``n`` seeded shapes."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    angles = AngleSet(K)
    seeds = [seed * 1000 + i for i in range(n)]
    loss = _corrupted_dist if corrupt else "dist"
    results = []
    if suite in ("all", "dist-only"):
        results.append(check_dist_gradient(seeds, angles, loss=loss))
        results.append(check_dist_kink(seeds, angles, loss=loss))
    if suite in ("all", "rmask-only"):
        results.append(check_rmask_signs(seeds[: max(1, n // 2)], angles))
    if suite == "all":
        results.append(check_translation(seeds, angles))
        results.append(check_refine_telescopes(seeds, angles))
    return results
