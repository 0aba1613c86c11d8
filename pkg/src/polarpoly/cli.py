"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Logs go to stderr; data goes to the named output file or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import approx, evaluation
from .checks import SUITES, run_gradcheck
from .config import RunConfig, load_config, tomllib
from .errors import DimensionError, ParameterError, PolarPolyError
from .geometry import AngleSet, PolarParams, polygon_vertices
from .matching import build_cost_matrix, hungarian, write_assignment_csv
from .sampling import grid_svg, polar_sampling_locations, with_levels, write_grid_csv
from .supervision import LayerPrediction, reference_targets

log = logging.getLogger("polarpoly")


@contextmanager
def _out(path, mode="w"):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, mode, newline="" if mode == "w" else None) as fh:
            yield fh


def _read_json(path):
    if path == "-":
        return json.load(sys.stdin)
    return evaluation._read_json(path)


def _polar_items(data, K: int) -> list[dict]:
    """Validate ``[{id?, x, y, distances}]`` entries against ``K``."""
    if not isinstance(data, list):
        raise ParameterError("polar input must be a JSON array")
    items = []
    for i, d in enumerate(data):
        try:
            start = (float(d["x"]), float(d["y"]))
            dist = [float(v) for v in d["distances"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"entry {i}: malformed polar record ({exc})") from None
        if len(dist) != K:
            raise DimensionError(f"entry {i}: {len(dist)} distances but K={K}")
        items.append({**d, "id": d.get("id", i), "params": PolarParams(start, dist)})
    return sorted(items, key=lambda t: t["id"])


def _svg(polygons, contours=()) -> str:
    pts = [np.asarray(p) for p in (*polygons, *contours)]
    if pts:
        allp = np.concatenate(pts)
        lo, hi = allp.min(0), allp.max(0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.05 * span.max()

    def path(v, style):
        d = " ".join(f"{x:.4f},{y:.4f}" for x, y in v)
        return f'<polygon points="{d}" {style}/>'

    body = [path(c, 'fill="none" stroke="black"') for c in contours]
    body += [path(p, 'fill="steelblue" fill-opacity="0.4" stroke="steelblue"') for p in polygons]
    return (f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0] - pad} {lo[1] - pad} '
            f'{span[0] + 2 * pad} {span[1] + 2 * pad}">\n' + "\n".join(body) + "\n</svg>\n")


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# subcommands


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    items = _polar_items(_read_json(args.input), cfg.K)
    angles = cfg.angles
    out = []
    for it in items:
        v = polygon_vertices(it["params"].start, it["params"].distances, angles)
        out.append({"id": it["id"], "polygon": [float(c) for c in v.reshape(-1)]})
    with _out(args.output) as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    if args.svg:
        Path(args.svg).write_text(_svg([np.reshape(o["polygon"], (-1, 2)) for o in out]))
    return 0


def cmd_targets(args, cfg: RunConfig) -> int:
    gts = {a.id: a for a in evaluation.load_annotations(args.annotations)}
    starts = _read_json(args.starts)
    angles = cfg.angles
    rows = []
    for i, s in enumerate(starts):
        iid = s.get("instance_id")
        if iid not in gts:
            raise ParameterError(f"start {i}: unknown instance_id {iid!r}")
        d, inside = reference_targets(gts[iid].contour, (float(s["x"]), float(s["y"])), angles)
        if not inside:
            log.warning("instance %s: start (%s, %s) is outside; targets taken from the interior pole",
                        iid, s["x"], s["y"])
        rows.append({"instance_id": iid, "x": float(s["x"]), "y": float(s["y"]),
                     "distances": [float(v) for v in d], "inside": bool(inside)})
    rows.sort(key=lambda r: (r["instance_id"], r["x"], r["y"]))
    with _out(args.output) as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")
    return 0


def cmd_match(args, cfg: RunConfig) -> int:
    gts = evaluation.load_annotations(args.annotations)
    cats = sorted(gts.categories) or sorted({a.category_id for a in gts})
    cat_index = {c: i for i, c in enumerate(cats)}
    preds = _polar_items(_read_json(args.predictions), cfg.K)
    by_image: dict = {}
    for p in preds:
        scores = np.asarray(p.get("scores", []), dtype=float)
        if scores.size != len(cats):
            raise DimensionError(f"prediction {p['id']}: {scores.size} class scores for {len(cats)} categories")
        lp = LayerPrediction(int(p.get("layer", 1)), p["params"], scores)
        by_image.setdefault(p["image_id"], []).append(lp)
    gt_by: dict = {}
    for a in gts:
        gt_by.setdefault(a.image_id, []).append(a)
    rows = []
    for image_id in sorted(set(by_image) & set(gt_by)):
        g = sorted(gt_by[image_id], key=lambda a: a.id)
        cm = build_cost_matrix(by_image[image_id], [(a.contour, cat_index[a.category_id]) for a in g],
                               cfg.weights, cfg.angles, cfg.rmask_resolution)
        rows.append((image_id, cm, hungarian(cm)))
    with _out(args.output) as fh:
        write_assignment_csv(rows, fh)
    return 0


def _score_one(job):
    iid, rings, K, phase, grid_n = job
    try:
        return iid, approx.score_instance(rings, AngleSet(K, phase), grid_n), None
    except (PolarPolyError, ValueError) as exc:
        return iid, None, str(exc)


def cmd_score(args, cfg: RunConfig) -> int:
    gts = sorted(evaluation.load_annotations(args.annotations), key=lambda a: a.id)
    jobs = [(a.id, a.rings, cfg.K, cfg.phase, cfg.grid_n) for a in gts]
    rows = []
    for iid, res, err in _map(_score_one, jobs, cfg.jobs):
        if res is None:
            log.error("instance %s: %s; skipped", iid, err)
            continue
        if res.fragmented:
            log.info("instance %s is fragmented; scored its largest ring", iid)
        rows.append((iid, res, cfg.K))
    with _out(args.output) as fh:
        approx.write_scores_csv(rows, fh)
        if rows:
            q = np.quantile([r.score for _, r, _ in rows], [0.0, 0.25, 0.5, 0.75, 1.0])
            fh.write("# summary n=%d min=%.6f q25=%.6f median=%.6f q75=%.6f max=%.6f\n" % (len(rows), *q))
    return 0


def cmd_landscape(args, cfg: RunConfig) -> int:
    gts = {a.id: a for a in evaluation.load_annotations(args.annotations)}
    if args.instance_id not in gts:
        raise ParameterError(f"unknown instance id {args.instance_id}")
    land = approx.error_landscape(gts[args.instance_id].contour, cfg.angles, cfg.grid_n)
    with _out(args.output) as fh:
        land.write_csv(fh)
    if args.pgm:
        land.write_pgm(args.pgm)
    return 0


def cmd_grid(args, cfg: RunConfig) -> int:
    items = _polar_items(_read_json(args.input), cfg.K)
    if len(items) != 1:
        raise ParameterError("grid takes exactly one polar record")
    grid = with_levels(polar_sampling_locations(items[0]["params"], cfg.angles, cfg.T))
    with _out(args.output) as fh:
        write_grid_csv(grid, fh)
    if args.svg:
        Path(args.svg).write_text(grid_svg(grid))
    return 0


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    results = run_gradcheck(cfg.seed, args.n, args.suite, cfg.K, corrupt=args.corrupt_loss)
    with _out(args.output) as fh:
        fh.write("check\tstatus\tdetail\tfailing_seeds\n")
        for r in results:
            seeds = ",".join(map(str, r.failing_seeds))
            fh.write(f"{r.name}\t{'PASS' if r.passed else 'FAIL'}\t{r.detail}\t{seeds}\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
        return 1
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    gts = evaluation.load_annotations(args.annotations)
    dets = evaluation.load_detections(args.detections)
    kwargs = {"backend": args.backend, "max_dets": args.max_dets}
    if args.raster_res:
        kwargs["raster_resolution"] = args.raster_res
    if args.subset_fraction is None:
        report = evaluation.evaluate(gts, dets, **kwargs)
    else:
        instances = sorted(((a.id, a.rings) for a in gts), key=lambda t: t[0])
        jobs = [(i, r, cfg.K, cfg.phase, cfg.grid_n) for i, r in instances]
        scores = {}
        for iid, res, err in _map(_score_one, jobs, cfg.jobs):
            if res is None:
                log.error("instance %s: %s; scored 0", iid, err)
            scores[iid] = res.score if res is not None else 0.0
        keep = approx.rank_by_approximability(instances, cfg.angles, args.subset_fraction, scores=scores)
        log.info("evaluating %d of %d instances", len(keep), len(instances))
        report = evaluation.evaluate_subset(gts, dets, keep, **kwargs)
    text = json.dumps(report.to_dict(), indent=2)
    with _out(args.output) as fh:
        fh.write(text + "\n")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            report.write_csv(fh)
    return 0


# parser


def _weights(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be comma-separated numbers, got {text!r}") from None


def _fraction(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("subset fraction must lie in (0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with run settings (flags win)")
    common.add_argument("--k", type=int, help="number of rays")
    common.add_argument("--t", type=int, help="sample points per ray")
    common.add_argument("--rmask-res", type=int, help="raster-mask resolution")
    common.add_argument("--weights", type=_weights, help="class,dist,rmask[,inner] weights")
    common.add_argument("--grid-n", type=int, help="start-search lattice size")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="seed for synthetic shapes")
    common.add_argument("-o", "--output", default="-", help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polarpoly", description="Polar polygon geometry, supervision and evaluation tools.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("reconstruct", parents=[common], help="polar records to explicit polygons")
    s.add_argument("input", help="JSON array of {id, x, y, distances}")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("targets", parents=[common], help="ray-cast distance targets from given starts")
    s.add_argument("annotations")
    s.add_argument("starts", help="JSON array of {instance_id, x, y}")
    s.set_defaults(func=cmd_targets)

    s = sub.add_parser("match", parents=[common], help="one-to-one matching per image")
    s.add_argument("annotations")
    s.add_argument("predictions", help="JSON array of {image_id, x, y, distances, scores}")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("score", parents=[common], help="approximability score per instance")
    s.add_argument("annotations")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("landscape", parents=[common], help="representation error over start positions")
    s.add_argument("annotations")
    s.add_argument("--instance-id", type=int, required=True)
    s.add_argument("--pgm", help="also write a heat image")
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("grid", parents=[common], help="fan-shaped sampling grid of one polar record")
    s.add_argument("input")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference and invariant checks")
    s.add_argument("--suite", choices=SUITES, default="all")
    s.add_argument("--n", type=int, default=20, help="shapes per check")
    s.add_argument("--corrupt-loss", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("eval", parents=[common], help="mask AP of polygon detections")
    s.add_argument("annotations")
    s.add_argument("detections")
    s.add_argument("--subset-fraction", type=_fraction)
    s.add_argument("--backend", choices=evaluation.BACKENDS, default="auto")
    s.add_argument("--raster-res", type=int)
    s.add_argument("--max-dets", type=int, default=evaluation.MAX_DETS)
    s.add_argument("--csv", help="also write a per-category CSV")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, K=args.k, T=args.t, rmask_resolution=args.rmask_res,
                          weights=args.weights, grid_n=args.grid_n, jobs=args.jobs, seed=args.seed)
        return args.func(args, cfg)
    except (PolarPolyError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
