"""Seeded synthetic contours for tests, gradient checks and benchmarks."""

from __future__ import annotations

import numpy as np
from shapely.geometry import MultiPoint

from .geometry import Contour, classify_points, distance_to_boundary, regular_polygon

U_SHAPE = [(0, 0), (5, 0), (5, 5), (4, 5), (4, 1), (1, 1), (1, 5), (0, 5)]


def square(x0=0.0, y0=0.0, size=4.0) -> Contour:
    return Contour([(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size)])


def rectangle(x0, y0, x1, y1) -> Contour:
    return Contour([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def u_shape() -> Contour:
    return Contour(U_SHAPE)


def circle(center=(0.0, 0.0), radius=1.0, n=720) -> Contour:
    """Dense regular polygon standing in for a circle."""
    return Contour(regular_polygon(center, radius, n))


def random_star_polygon(rng: np.random.Generator, n=None, center=(0.0, 0.0), rmin=0.3, rmax=1.0) -> Contour:
    """Simple polygon that is star-shaped about ``center``.

    Sorted random angles with random radii; non-convex in general.
    """
    if n is None:
        n = int(rng.integers(5, 16))
    gaps = rng.uniform(0.3, 1.0, n)
    theta = np.cumsum(gaps) / gaps.sum() * 2 * np.pi + rng.uniform(0, 2 * np.pi)
    r = rng.uniform(rmin, rmax, n)
    c = np.asarray(center, dtype=float)
    return Contour(c + r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1))


def random_convex_polygon(rng: np.random.Generator, n_points=None, center=(0.0, 0.0), scale=1.0) -> Contour:
    """Convex hull of random points in an anisotropic, rotated blob."""
    if n_points is None:
        n_points = int(rng.integers(6, 30))
    while True:
        pts = rng.normal(size=(n_points, 2)) * rng.uniform(0.4, 1.0, 2)
        ang = rng.uniform(0, np.pi)
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        pts = pts @ rot.T * scale + np.asarray(center, dtype=float)
        hull = MultiPoint([tuple(p) for p in pts]).convex_hull
        if hull.geom_type == "Polygon" and hull.area > 0.05 * scale**2:
            return Contour(np.asarray(hull.exterior.coords)[:-1])


def random_interior_point(contour: Contour, rng: np.random.Generator, margin=0.0, max_tries=10_000) -> np.ndarray:
    """Uniform point strictly inside ``contour`` and at least ``margin`` from its boundary."""
    x0, y0, x1, y1 = contour.bounds
    for _ in range(max_tries // 64 + 1):
        cand = rng.uniform([x0, y0], [x1, y1], size=(64, 2))
        ok = classify_points(contour.vertices, cand) == 1
        if margin > 0:
            ok &= distance_to_boundary(contour.vertices, cand) > margin
        if ok.any():
            return cand[np.argmax(ok)]
    raise RuntimeError("could not sample an interior point")


def synthetic_coco(seed=0, n_images=50, width=256, height=256, max_instances=4, K=32, noise=0.08):
    """Random COCO-style annotation dict plus polar detections against it.

    Ground truths are convex and star-shaped polygons; each gets one noisy
    polar detection and some images get an extra false positive.
    """
    from .geometry import AngleSet, ray_distances

    rng = np.random.default_rng(seed)
    angles = AngleSet(K)
    images, anns, dets = [], [], []
    ann_id = 1
    for image_id in range(1, n_images + 1):
        images.append({"id": image_id, "width": width, "height": height, "file_name": f"{image_id:06d}.png"})
        for _ in range(int(rng.integers(1, max_instances + 1))):
            center = rng.uniform(0.2, 0.8, 2) * (width, height)
            scale = rng.uniform(0.05, 0.15) * min(width, height)
            if rng.random() < 0.5:
                c = random_convex_polygon(rng, center=center, scale=scale / 1.5)
            else:
                c = random_star_polygon(rng, center=center, rmin=0.5 * scale, rmax=scale)
            cat = int(rng.integers(1, 3))
            anns.append({"id": ann_id, "image_id": image_id, "category_id": cat, "iscrowd": 0,
                         "segmentation": [[float(v) for v in c.vertices.reshape(-1)]]})
            s = random_interior_point(c, rng)
            d = ray_distances(c, s[None], angles)[0] * rng.normal(1.0, noise, K)
            dets.append({"image_id": image_id, "category_id": cat, "score": float(rng.uniform(0.3, 1.0)),
                         "polar": {"x": float(s[0]), "y": float(s[1]), "distances": [float(max(v, 0.0)) for v in d]}})
            ann_id += 1
        if rng.random() < 0.3:
            c = rng.uniform(0.2, 0.8, 2) * (width, height)
            dets.append({"image_id": image_id, "category_id": int(rng.integers(1, 3)),
                         "score": float(rng.uniform(0.0, 0.6)),
                         "polar": {"x": float(c[0]), "y": float(c[1]), "distances": [10.0] * K}})
    coco = {"images": images, "annotations": anns,
            "categories": [{"id": 1, "name": "blob"}, {"id": 2, "name": "star"}]}
    return coco, dets
