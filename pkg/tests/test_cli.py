import csv
import io
import json

import numpy as np
import pytest

from polarpoly.approx import read_scores_csv
from polarpoly.cli import main
from polarpoly.evaluation import parse_annotations, report_from_dict
from polarpoly.sampling import read_grid_csv
from polarpoly.shapes import circle, synthetic_coco

from conftest import coco

SQUARE = [(0, 0), (10, 0), (10, 10), (0, 10)]
CIRCLE_K32 = 32 / (2 * np.pi) * np.sin(2 * np.pi / 32)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_reconstruct_diamond(write_json, capsys):
    f = write_json("p.json", [{"id": 1, "x": 0, "y": 0, "distances": [1, 1, 1, 1]}])
    code, out, _ = run(["reconstruct", f, "--k", 4], capsys)
    assert code == 0
    (rec,) = json.loads(out)
    np.testing.assert_allclose(rec["polygon"], [1, 0, 0, 1, -1, 0, 0, -1], atol=1e-12)


def test_reconstruct_svg(write_json, tmp_path, capsys):
    import xml.etree.ElementTree as ET

    f = write_json("p.json", [{"x": 0, "y": 0, "distances": [1, 2, 1, 2]}])
    svg = tmp_path / "o.svg"
    assert run(["reconstruct", f, "--k", 4, "--svg", svg, "-o", tmp_path / "o.json"], capsys)[0] == 0
    ET.fromstring(svg.read_text())
    assert len(json.loads((tmp_path / "o.json").read_text())) == 1


def test_reconstruct_empty(write_json, capsys):
    code, out, _ = run(["reconstruct", write_json("p.json", [])], capsys)
    assert code == 0 and json.loads(out) == []


def test_reconstruct_k_mismatch(write_json, capsys):
    f = write_json("p.json", [{"x": 0, "y": 0, "distances": [1, 1, 1]}])
    code, _, err = run(["reconstruct", f, "--k", 4], capsys)
    assert code == 2
    assert "entry 0" in err and "K=4" in err


def test_missing_file_and_bad_command(tmp_path, capsys):
    assert run(["reconstruct", tmp_path / "nope.json"], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 2


def test_config_file_sets_k(write_json, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("K = 4\n")
    f = write_json("p.json", [{"x": 0, "y": 0, "distances": [1, 1, 1, 1]}])
    assert run(["reconstruct", f, "--config", cfg], capsys)[0] == 0
    # flags win over the file
    assert run(["reconstruct", f, "--config", cfg, "--k", 8], capsys)[0] == 2
    cfg.write_text("K = [\n")
    assert run(["reconstruct", f, "--config", cfg], capsys)[0] == 2


def test_targets_inside_and_outside(write_json, capsys, caplog):
    ann = write_json("a.json", coco([(7, 1, 1, [SQUARE])]))
    starts = write_json("s.json", [{"instance_id": 7, "x": 5, "y": 5}, {"instance_id": 7, "x": 50, "y": 50}])
    code, out, err = run(["targets", ann, starts, "--k", 4], capsys)
    assert code == 0
    rows = json.loads(out)
    assert rows[0]["inside"] and rows[0]["distances"] == pytest.approx([5, 5, 5, 5])
    assert not rows[1]["inside"]
    assert "outside" in caplog.text


def test_match_writes_assignment(write_json, capsys):
    ann = write_json("a.json", coco([(1, 1, 1, [SQUARE]), (2, 1, 1, [[(20, 20), (30, 20), (30, 30), (20, 30)]])]))
    preds = write_json("p.json", [
        {"image_id": 1, "x": 25, "y": 25, "distances": [5, 5, 5, 5], "scores": [0.9]},
        {"image_id": 1, "x": 5, "y": 5, "distances": [5, 5, 5, 5], "scores": [0.8]},
    ])
    code, out, _ = run(["match", ann, preds, "--k", 4], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    pairs = {(r["pred_idx"], r["gt_idx"]) for r in rows}
    assert pairs == {("0", "1"), ("1", "0")}


def test_score_squares_and_circles(write_json, capsys):
    ann = write_json("a.json", coco([(1, 1, 1, [SQUARE]), (2, 1, 1, [[(40, 40), (60, 40), (60, 60), (40, 60)]])]))
    code, out, _ = run(["score", ann, "--k", 4, "--grid-n", 8], capsys)
    assert code == 0
    rows = read_scores_csv(io.StringIO(out))
    assert [r["score"] for r in rows] == pytest.approx([0.5, 0.5], abs=1e-3)
    assert out.strip().splitlines()[-1].startswith("# summary n=2")

    ann = write_json("c.json", coco([(3, 1, 1, [circle((50, 50), 20, 256).vertices])]))
    code, out, _ = run(["score", ann, "--grid-n", 16], capsys)
    assert read_scores_csv(io.StringIO(out))[0]["score"] == pytest.approx(CIRCLE_K32, abs=5e-3)


def test_score_empty_header_only(write_json, capsys):
    code, out, _ = run(["score", write_json("a.json", coco([]))], capsys)
    assert code == 0
    assert out.strip() == "instance_id,score,start_x,start_y,K"


def test_score_parallel_matches_serial(write_json, capsys):
    data, _ = synthetic_coco(seed=2, n_images=2)
    ann = write_json("a.json", data)
    serial = run(["score", ann, "--k", 8, "--grid-n", 8], capsys)[1]
    parallel = run(["score", ann, "--k", 8, "--grid-n", 8, "--jobs", 2], capsys)[1]
    assert serial == parallel


def test_landscape(write_json, tmp_path, capsys):
    ann = write_json("a.json", coco([(1, 1, 1, [SQUARE])]))
    pgm = tmp_path / "l.pgm"
    code, out, _ = run(["landscape", ann, "--instance-id", 1, "--k", 4, "--grid-n", 4, "--pgm", pgm], capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 5
    assert pgm.read_bytes().startswith(b"P5")
    assert run(["landscape", ann, "--instance-id", 9], capsys)[0] == 2


def test_grid(write_json, tmp_path, capsys):
    f = write_json("p.json", [{"x": 0, "y": 0, "distances": [4, 4, 4, 4]}])
    code, out, _ = run(["grid", f, "--k", 4, "--t", 2], capsys)
    assert code == 0
    g = read_grid_csv(io.StringIO(out))
    assert g.locations.shape == (4, 2, 2)
    two = write_json("q.json", [{"x": 0, "y": 0, "distances": [4] * 4}] * 2)
    assert run(["grid", two, "--k", 4], capsys)[0] == 2


def test_gradcheck_exit_codes(capsys):
    code, out, _ = run(["gradcheck", "--n", 4], capsys)
    assert code == 0 and "FAIL" not in out
    code, out, _ = run(["gradcheck", "--n", 4, "--suite", "dist-only"], capsys)
    assert code == 0 and len(out.strip().splitlines()) == 3
    code, out, _ = run(["gradcheck", "--n", 4, "--suite", "dist-only", "--corrupt-loss"], capsys)
    assert code == 1 and "FAIL" in out


def _eval_files(write_json, det_ring):
    ann = write_json("a.json", coco([(1, 1, 1, [SQUARE])]))
    dets = write_json("d.json", [{"image_id": 1, "category_id": 1, "score": 0.9,
                                  "polygon": [float(v) for p in det_ring for v in p]}])
    return ann, dets


def test_eval_perfect_and_point_six(write_json, capsys):
    ann, dets = _eval_files(write_json, SQUARE)
    code, out, _ = run(["eval", ann, dets], capsys)
    assert code == 0 and json.loads(out)["mAP"] == 1.0
    ann, dets = _eval_files(write_json, [(0, 0), (6, 0), (6, 10), (0, 10)])
    report = report_from_dict(json.loads(run(["eval", ann, dets], capsys)[1]))
    assert report.mAP == pytest.approx(0.3)
    assert (report.AP50, report.AP75) == (1.0, 0.0)


def test_eval_subset_one_is_full(write_json, tmp_path, capsys):
    data, raw = synthetic_coco(seed=5, n_images=3)
    ann, dets = write_json("a.json", data), write_json("d.json", raw)
    full = json.loads(run(["eval", ann, dets], capsys)[1])
    sub = json.loads(run(["eval", ann, dets, "--subset-fraction", 1.0, "--grid-n", 8], capsys)[1])
    assert sub == full
    half = json.loads(run(["eval", ann, dets, "--subset-fraction", 0.5, "--grid-n", 8,
                           "--csv", tmp_path / "r.csv"], capsys)[1])
    n = len(parse_annotations(data))
    assert half["counts"]["evaluated_gts"] == -(-n // 2)
    assert (tmp_path / "r.csv").read_text().startswith("category_id,AP")
    assert run(["eval", ann, dets, "--subset-fraction", 0], capsys)[0] == 2
