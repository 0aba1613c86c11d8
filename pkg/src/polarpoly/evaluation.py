"""COCO-style polygon annotations, detections and mask AP.

Only polygon segmentations are ingested; RLE masks and crowd regions are
skipped and counted. AP follows the COCO protocol: per image and category,
detections are taken in descending score order and greedily matched to the
highest-IoU unmatched ground truth; precision is interpolated at 101 recall
points and averaged over IoU thresholds 0.50:0.05:0.95.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, PolarPolyError
from .geometry import AngleSet, Contour, PolarParams, Polygon, exact_polygon_iou, reconstruct_polygon
from .raster import Frame, rasterize, soft_iou

log = logging.getLogger(__name__)

IOU_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETS = 100
BACKENDS = ("auto", "exact", "raster")


class AnnotationParseError(PolarPolyError, ValueError):
    """Malformed JSON input; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


@dataclass
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    rings: list
    iscrowd: bool = False
    bbox: tuple | None = None

    def __post_init__(self):
        if not self.rings:
            raise ParameterError("an instance needs at least one ring")
        if self.bbox is None:
            pts = np.concatenate([r.vertices for r in self.rings])
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            self.bbox = (float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))

    @property
    def fragmented(self) -> bool:
        return len(self.rings) > 1

    @property
    def contour(self) -> Contour:
        """Largest ring."""
        return max(self.rings, key=lambda r: r.area)


@dataclass
class AnnotationSet:
    """Parsed annotation file. Iterating yields the instances."""

    instances: list
    images: dict = field(default_factory=dict)
    categories: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=lambda: {"rle": 0, "crowd": 0, "short_polygon": 0, "invalid_polygon": 0})

    def __iter__(self):
        return iter(self.instances)

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    @property
    def ids(self) -> list:
        return [a.id for a in self.instances]


@dataclass
class PolygonDetection:
    image_id: int
    category_id: int
    score: float
    polygon: Polygon
    params: PolarParams | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ParameterError(f"detection score must lie in [0, 1], got {self.score}")

    @classmethod
    def from_polar(cls, image_id, category_id, score, params: PolarParams, angles: AngleSet | None = None):
        angles = angles or AngleSet(params.K)
        return cls(image_id, category_id, score, reconstruct_polygon(params, angles), params)


@dataclass
class EvalReport:
    mAP: float
    AP50: float
    AP75: float
    per_category: dict
    counts: dict
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mAP": self.mAP, "AP50": self.AP50, "AP75": self.AP75,
                "per_category": {str(k): v for k, v in self.per_category.items()},
                "counts": self.counts, "flags": self.flags}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["category_id", "AP", "AP50", "AP75"])
        w.writerow(["all", repr(self.mAP), repr(self.AP50), repr(self.AP75)])
        for cat, v in self.per_category.items():
            w.writerow([cat, repr(v["AP"]), repr(v["AP50"]), repr(v["AP75"])])


def _read_json(path):
    raw = Path(path).read_bytes()
    text = raw.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise AnnotationParseError(f"{path}: {exc.msg} at byte offset {offset}", offset) from None


def _ring(flat) -> np.ndarray:
    a = np.asarray(flat, dtype=float).reshape(-1)
    if a.size % 2:
        raise ParameterError("odd number of polygon coordinates")
    return a.reshape(-1, 2)


def parse_annotations(data: dict) -> AnnotationSet:
    out = AnnotationSet([])
    out.images = {im["id"]: im for im in data.get("images", [])}
    out.categories = {c["id"]: c for c in data.get("categories", [])}
    for ann in data.get("annotations", []):
        if ann.get("iscrowd", 0):
            out.skipped["crowd"] += 1
            continue
        seg = ann.get("segmentation")
        if not isinstance(seg, list):
            out.skipped["rle"] += 1
            continue
        rings = []
        for flat in seg:
            pts = _ring(flat)
            if len(pts) < 3:
                out.skipped["short_polygon"] += 1
                continue
            try:
                rings.append(Contour(pts))
            except ParameterError as exc:
                log.warning("annotation %s: dropping ring (%s)", ann.get("id"), exc)
                out.skipped["invalid_polygon"] += 1
        if not rings:
            continue
        if out.categories and ann["category_id"] not in out.categories:
            raise ParameterError(f"annotation {ann.get('id')} has unknown category {ann['category_id']}")
        out.instances.append(InstanceAnnotation(ann["id"], ann["image_id"], ann["category_id"], rings,
                                                False, tuple(ann["bbox"]) if "bbox" in ann else None))
    if out.n_skipped:
        log.warning("skipped %d annotations/rings: %s", out.n_skipped, out.skipped)
    return out


def load_annotations(path) -> AnnotationSet:
    """Read a COCO-style annotation JSON file (polygon segmentations only)."""
    return parse_annotations(_read_json(path))


def parse_detections(items: Iterable[dict]) -> list[PolygonDetection]:
    dets = []
    for i, d in enumerate(items):
        try:
            if "polar" in d:
                p = d["polar"]
                params = PolarParams((p["x"], p["y"]), p["distances"])
                dets.append(PolygonDetection.from_polar(d["image_id"], d["category_id"], float(d["score"]), params))
            elif "polygon" in d:
                dets.append(PolygonDetection(d["image_id"], d["category_id"], float(d["score"]),
                                             Polygon(_ring(d["polygon"]))))
            else:
                raise ParameterError("detection needs a 'polar' or 'polygon' field")
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"detection {i}: malformed ({exc})") from None
    return dets


def load_detections(path) -> list[PolygonDetection]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise AnnotationParseError(f"{path}: detections must be a JSON array")
    return parse_detections(data)


def detection_to_json(det: PolygonDetection) -> dict:
    out = {"image_id": det.image_id, "category_id": det.category_id, "score": det.score}
    if det.params is not None:
        out["polar"] = {"x": float(det.params.start[0]), "y": float(det.params.start[1]),
                        "distances": [float(v) for v in det.params.distances]}
    else:
        out["polygon"] = [float(v) for v in det.polygon.vertices.reshape(-1)]
    return out


def topn_by_score(candidates: Sequence[tuple], n: int) -> list:
    """Payloads of the ``n`` highest-scoring ``(score, payload)`` pairs; ties keep input order."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i][0])
    return [candidates[i][1] for i in order[:n]]


def _raster_iou(gt: InstanceAnnotation, det: PolygonDetection, image: dict | None, resolution: int | None) -> float:
    pts = np.concatenate([det.polygon.vertices, *(r.vertices for r in gt.rings)])
    if image and "width" in image and "height" in image:
        W, H = int(image["width"]), int(image["height"])
    else:
        W, H = int(math.ceil(pts[:, 0].max())) + 1, int(math.ceil(pts[:, 1].max())) + 1
    sx = sy = 1.0
    if resolution:
        sx, sy = W / resolution, H / resolution
        W = H = resolution
    # rasterize only the pixel window that can be covered
    lo = np.floor(pts.min(axis=0) / (sx, sy)).astype(int)
    hi = np.ceil(pts.max(axis=0) / (sx, sy)).astype(int)
    i0, j0 = max(lo[0], 0), max(lo[1], 0)
    i1, j1 = min(hi[0], W), min(hi[1], H)
    if i1 - i0 < 1 or j1 - j0 < 1:
        return 0.0
    w, h = max(i1 - i0, 2), max(j1 - j0, 2)
    frame = Frame([[sx, 0.0, i0 * sx], [0.0, sy, j0 * sy]])
    d = rasterize(det.polygon, w, h, frame).values
    g = np.clip(sum(rasterize(r, w, h, frame).values for r in gt.rings), 0.0, 1.0)
    union = np.maximum(d, g).sum()
    return float(np.minimum(d, g).sum() / union) if union > 0 else 0.0


def _exact_iou(gt: InstanceAnnotation, det: PolygonDetection) -> float:
    if len(gt.rings) == 1:
        return exact_polygon_iou(det.polygon, gt.rings[0])
    from shapely.geometry import Polygon as SP
    from shapely.ops import unary_union

    g = unary_union([SP(r.vertices) for r in gt.rings])
    d = SP(det.polygon.vertices)
    if not d.is_valid:
        d = d.buffer(0)
    inter = g.intersection(d).area
    union = g.area + d.area - inter
    return float(inter / union) if union > 0 else 0.0


def pair_iou(gt: InstanceAnnotation, det: PolygonDetection, backend="auto", image=None, resolution=None) -> float:
    if backend == "exact" or (backend == "auto" and not gt.fragmented):
        return _exact_iou(gt, det)
    return _raster_iou(gt, det, image, resolution)


def _match(ious: np.ndarray, gt_ignore: np.ndarray, thresholds):
    """COCO greedy matching; gts must be sorted with ignored ones last."""
    n_t, (n_d, n_g) = len(thresholds), ious.shape
    dt_match = np.full((n_t, n_d), -1)
    dt_ignore = np.zeros((n_t, n_d), dtype=bool)
    for ti, t in enumerate(thresholds):
        gt_taken = np.zeros(n_g, dtype=bool)
        for d in range(n_d):
            best = min(t, 1 - 1e-10)
            m = -1
            for g in range(n_g):
                if gt_taken[g]:
                    continue
                if m > -1 and not gt_ignore[m] and gt_ignore[g]:
                    break
                if ious[d, g] < best:
                    continue
                best = ious[d, g]
                m = g
            if m == -1:
                continue
            dt_ignore[ti, d] = gt_ignore[m]
            dt_match[ti, d] = m
            gt_taken[m] = True
    return dt_match, dt_ignore


def _average_precision(scores, matched, ignored, n_pos) -> float:
    order = np.argsort(-scores, kind="mergesort")
    tp = (matched[order] >= 0) & ~ignored[order]
    fp = (matched[order] < 0) & ~ignored[order]
    tp_sum = np.cumsum(tp).astype(float)
    fp_sum = np.cumsum(fp).astype(float)
    if len(tp_sum) == 0:
        return 0.0
    rc = tp_sum / n_pos
    pr = tp_sum / np.maximum(tp_sum + fp_sum, np.spacing(1))
    pr = np.maximum.accumulate(pr[::-1])[::-1]
    inds = np.searchsorted(rc, RECALL_POINTS, side="left")
    q = np.where(inds < len(pr), pr[np.minimum(inds, len(pr) - 1)], 0.0)
    return float(q.mean())


def evaluate(gts, dets: Sequence[PolygonDetection], iou_thresholds=IOU_THRESHOLDS,
             raster_resolution: int | None = None, *, max_dets: int = MAX_DETS, backend: str = "auto",
             subset_ids=None) -> EvalReport:
    """Mask AP of polygon detections against polygon ground truth.

    ``backend="auto"`` uses exact polygon IoU for single-ring ground truth
    and rasterization (at image resolution, or ``raster_resolution`` cells
    per side) for fragmented ones. With ``subset_ids`` only those ground
    truths are scored; detections matched to the rest are ignored.
    """
    if backend not in BACKENDS:
        raise ParameterError(f"unknown IoU backend {backend!r}")
    instances = list(gts)
    images = gts.images if isinstance(gts, AnnotationSet) else {}
    categories = dict(gts.categories) if isinstance(gts, AnnotationSet) and gts.categories else {}
    if not categories:
        categories = {a.category_id: {"id": a.category_id} for a in instances}
    for d in dets:
        if d.category_id not in categories:
            raise ParameterError(f"detection category {d.category_id} not in the category table")
    thresholds = [float(t) for t in iou_thresholds]
    keep = None if subset_ids is None else set(subset_ids)
    flags = []
    if keep is not None:
        known = {a.id for a in instances}
        unknown = keep - known
        if unknown:
            raise ParameterError(f"unknown instance ids in subset: {sorted(unknown)[:5]}")
        if not keep:
            flags.append("empty_subset")

    gt_by = defaultdict(list)
    for a in instances:
        gt_by[a.image_id, a.category_id].append(a)
    dt_by = defaultdict(list)
    for i, d in enumerate(dets):
        dt_by[d.image_id, d.category_id].append((i, d))

    per_cat = {c: {"scores": [], "matched": [], "ignored": [], "n_pos": 0} for c in categories}
    for key in sorted(set(gt_by) | set(dt_by)):
        image_id, cat = key
        g = gt_by.get(key, [])
        g_ignore = np.array([keep is not None and a.id not in keep for a in g], dtype=bool)
        g_order = np.argsort(g_ignore, kind="stable")
        g = [g[i] for i in g_order]
        g_ignore = g_ignore[g_order]
        ds = sorted(dt_by.get(key, []), key=lambda t: (-t[1].score, t[0]))[:max_dets]
        ious = np.zeros((len(ds), len(g)))
        for di, (_, d) in enumerate(ds):
            for gi, a in enumerate(g):
                ious[di, gi] = pair_iou(a, d, backend, images.get(image_id), raster_resolution)
        match, ign = _match(ious, g_ignore, thresholds)
        acc = per_cat[cat]
        acc["scores"].append(np.array([d.score for _, d in ds]))
        acc["matched"].append(match)
        acc["ignored"].append(ign)
        acc["n_pos"] += int((~g_ignore).sum())

    ap = np.full((len(thresholds), len(categories)), -1.0)
    for ci, (cat, acc) in enumerate(per_cat.items()):
        if acc["n_pos"] == 0:
            continue
        scores = np.concatenate(acc["scores"]) if acc["scores"] else np.zeros(0)
        for ti in range(len(thresholds)):
            matched = np.concatenate([m[ti] for m in acc["matched"]]) if acc["matched"] else np.zeros(0, int)
            ignored = np.concatenate([m[ti] for m in acc["ignored"]]) if acc["ignored"] else np.zeros(0, bool)
            ap[ti, ci] = _average_precision(scores, matched, ignored, acc["n_pos"])

    def _mean(a):
        a = a[a > -1]
        return float(a.mean()) if a.size else 0.0

    def _at(t):
        for ti, tt in enumerate(thresholds):
            if abs(tt - t) < 1e-9:
                return _mean(ap[ti])
        return 0.0

    per_category = {}
    for ci, cat in enumerate(categories):
        col = ap[:, ci]
        if (col > -1).any():
            per_category[cat] = {"AP": _mean(col), "AP50": _at_col(col, thresholds, 0.5),
                                 "AP75": _at_col(col, thresholds, 0.75)}
    n_eval = sum(acc["n_pos"] for acc in per_cat.values())
    if not dets:
        flags.append("no_detections")
    if n_eval == 0:
        flags.append("empty")
    counts = {"images": len({a.image_id for a in instances} | {d.image_id for d in dets}),
              "gts": len(instances), "evaluated_gts": n_eval, "detections": len(dets)}
    return EvalReport(_mean(ap), _at(0.5), _at(0.75), per_category, counts, flags)


def _at_col(col, thresholds, t) -> float:
    for ti, tt in enumerate(thresholds):
        if abs(tt - t) < 1e-9:
            return float(col[ti]) if col[ti] > -1 else 0.0
    return 0.0


def evaluate_subset(gts, dets, subset_ids, **kwargs) -> EvalReport:
    """Evaluate only the ground truths in ``subset_ids``."""
    return evaluate(gts, dets, subset_ids=list(subset_ids), **kwargs)


def report_from_dict(d: dict) -> EvalReport:
    return EvalReport(d["mAP"], d["AP50"], d["AP75"], {int(k) if str(k).lstrip("-").isdigit() else k: v
                                                       for k, v in d["per_category"].items()},
                      d["counts"], d.get("flags", []))
