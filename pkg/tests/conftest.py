"""Independent oracles shared by the test modules.

None of these call into the package's own geometry kernels.
"""

import itertools
import json

import numpy as np
import pytest
from matplotlib.path import Path as MplPath


def march_farthest(vertices, start, theta, step=1e-3, length=None):
    """Farthest boundary crossing along a ray by dense marching plus bisection."""
    v = np.asarray(vertices, dtype=float)
    s = np.asarray(start, dtype=float)
    u = np.array([np.cos(theta), np.sin(theta)])
    path = MplPath(np.vstack([v, v[:1]]), closed=True)
    if length is None:
        length = 2.0 * np.sqrt(((v[:, None] - v[None]) ** 2).sum(-1)).max() + 1.0
    t = np.arange(0.0, length + step, step)
    inside = path.contains_points(s + t[:, None] * u)
    last = int(np.flatnonzero(inside)[-1])
    lo, hi = t[last], t[min(last + 1, len(t) - 1)]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if path.contains_point(s + mid * u):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def march_all(vertices, start, thetas, **kw):
    return np.array([march_farthest(vertices, start, th, **kw) for th in thetas])


def crossing_number(vertices, p):
    """Plain even-odd ray-crossing test (strict interior only)."""
    v = np.asarray(vertices, dtype=float)
    x, y = p
    inside = False
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def brute_force_min(matrix):
    """Minimum total over all injective row->col (or col->row) maps."""
    c = np.asarray(matrix, dtype=float)
    n, m = c.shape
    if n <= m:
        return min(sum(c[i, j] for i, j in enumerate(p)) for p in itertools.permutations(range(m), n))
    return min(sum(c[i, j] for j, i in enumerate(p)) for p in itertools.permutations(range(n), m))


def shoelace(v):
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def coco(anns, cats=(1,), images=None):
    """Minimal COCO dict from ``(id, image_id, cat, rings)`` tuples."""
    images = images or sorted({a[1] for a in anns}) or [1]
    return {
        "images": [{"id": i, "width": 100, "height": 100} for i in images],
        "categories": [{"id": c, "name": f"c{c}"} for c in cats],
        "annotations": [
            {"id": i, "image_id": im, "category_id": c, "iscrowd": 0,
             "segmentation": [[float(x) for x in np.asarray(r, dtype=float).reshape(-1)] for r in rings]}
            for i, im, c, rings in anns
        ],
    }


@pytest.fixture
def write_json(tmp_path):
    def _write(name, data):
        p = tmp_path / name
        p.write_text(json.dumps(data))
        return str(p)
    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
