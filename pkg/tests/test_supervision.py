import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarpoly.errors import DegenerateGeometryWarning, DimensionError, DomainError, ParameterError
from polarpoly.geometry import AngleSet, Contour, PolarParams, polygon_vertices
from polarpoly.raster import representation_error
from polarpoly.shapes import U_SHAPE, random_convex_polygon, random_interior_point, square
from polarpoly.supervision import (
    LOSS_CSV_FIELDS,
    CostWeights,
    LayerPrediction,
    LossBreakdown,
    combine_terms,
    dist_loss,
    fd_gradient,
    focal_class_loss,
    initial_params,
    interior_pole,
    pats_targets,
    reference_targets,
    refine_params,
    rmask_loss,
    total_loss,
    write_loss_csv,
)

from conftest import march_all

A4 = AngleSet(4)
SQ4 = square(0, 0, 4)


# targets


def test_pats_axis_distances():
    np.testing.assert_allclose(pats_targets(SQ4, (1, 1), A4), [3, 3, 1, 1])
    np.testing.assert_allclose(pats_targets(SQ4, (2, 2), A4), [2, 2, 2, 2])


def test_pats_u_shape_matches_marching():
    d = pats_targets(Contour(U_SHAPE), (0.5, 3), A4)
    np.testing.assert_allclose(d, march_all(U_SHAPE, (0.5, 3), A4.theta), atol=1e-6)
    np.testing.assert_allclose(d, [4.5, 2.0, 0.5, 3.0], atol=1e-12)


def test_pats_outside_raises():
    with pytest.raises(DomainError):
        pats_targets(SQ4, (-1, 2), A4)


def test_pats_follows_moving_start():
    a = pats_targets(SQ4, (2, 2), A4)
    b = pats_targets(SQ4, (3, 2), A4)
    assert not np.allclose(a, b)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 10_000))
def test_pats_translation_equivariant(dx, dy, seed):
    rng = np.random.default_rng(seed)
    c = random_convex_polygon(rng, scale=5)
    s = random_interior_point(c, rng, margin=0.05)
    a = AngleSet(16)
    np.testing.assert_allclose(pats_targets(c, s, a), pats_targets(c.translate(dx, dy), s + (dx, dy), a), atol=1e-7)


def test_interior_pole_for_nonconvex():
    u = Contour(U_SHAPE)
    # the centroid of the U lies in the notch, so the fallback must move inside
    assert not np.allclose(interior_pole(u), u.centroid)
    targets, inside = reference_targets(u, (2.5, 3), A4)
    assert not inside
    assert np.all(targets > 0)


# distance loss


def test_dist_loss_hand_values():
    assert dist_loss([1, 2, 3, 4], [1, 2, 3, 4]) == 0
    assert dist_loss([1, 2, 3, 4], [2, 2, 2, 4]) == 0.5
    d = np.linspace(1, 5, 32)
    assert dist_loss(d, d + 0.25) == pytest.approx(0.25)


def test_dist_loss_length_mismatch():
    with pytest.raises(DimensionError):
        dist_loss([1, 2], [1, 2, 3])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=3, max_size=3), st.lists(st.floats(0, 100), min_size=3, max_size=3),
       st.lists(st.floats(0, 100), min_size=3, max_size=3))
def test_dist_loss_is_a_metric(a, b, c):
    assert dist_loss(a, b) >= 0
    assert (dist_loss(a, b) == 0) == np.array_equal(a, b)
    assert dist_loss(a, c) <= dist_loss(a, b) + dist_loss(b, c) + 1e-9


# raster mask loss


def test_rmask_self_reconstruction_near_zero():
    # diamond-aligned square is exactly its own K=4 reconstruction from the centre
    gt = Contour([(2, 0), (4, 2), (2, 4), (0, 2)])
    pred = PolarParams((2, 2), pats_targets(gt, (2, 2), A4))
    assert rmask_loss(gt, pred, A4) <= 0.02


def test_rmask_disjoint_is_one():
    assert rmask_loss(SQ4, PolarParams((20, 20), [1, 1, 1, 1]), A4) == 1.0


def test_rmask_inscribed_diamond_half():
    gt = square(0, 0, 2)
    assert rmask_loss(gt, PolarParams((1, 1), [1, 1, 1, 1]), A4) == pytest.approx(0.5, abs=0.02)
    assert rmask_loss(gt, PolarParams((1, 1), [1, 1, 1, 1]), A4, mode="exact") == pytest.approx(0.5, abs=1e-9)


def test_rmask_degenerate_prediction():
    with pytest.warns(DegenerateGeometryWarning):
        assert rmask_loss(SQ4, PolarParams((2, 2), [0, 0, 0, 0]), A4) == 1.0


def test_rmask_matches_representation_error(rng):
    a = AngleSet(16)
    for _ in range(10):
        c = random_convex_polygon(rng, scale=10)
        s = random_interior_point(c, rng, margin=0.5)
        pred = PolarParams(s, pats_targets(c, s, a))
        assert rmask_loss(c, pred, a, resolution=64) == pytest.approx(representation_error(c, s, a), abs=0.02)


# total loss and refinement


def test_combined_weights_arithmetic():
    assert combine_terms(0.3, 0.5, 0.2, CostWeights()) == pytest.approx(3.5)


def test_total_loss_perfect_prediction():
    gt = Contour([(2, 0), (4, 2), (2, 4), (0, 2)])
    pred = LayerPrediction(1, PolarParams((2, 2), [2, 2, 2, 2]), [1.0, 0.0])
    b = total_loss(pred, gt, 0, CostWeights(), A4)
    assert b.l_class == 0
    assert b.l_dist == pytest.approx(0, abs=1e-12)
    assert b.l_rmask <= 0.02
    assert b.total == pytest.approx(2 * b.l_rmask, abs=1e-12)
    zero = total_loss(pred, gt, 0, CostWeights(0, 0, 0, 0), A4)
    assert zero.total == 0


def test_total_loss_zero_weights_any_prediction():
    pred = LayerPrediction(3, PolarParams((1, 1), [0.3, 2, 0.1, 1]), [0.2, 0.7])
    assert total_loss(pred, SQ4, 1, CostWeights(0, 0, 0, 0), A4).total == 0


def test_total_loss_flags_outside_start():
    pred = LayerPrediction(1, PolarParams((-1, 2), [1, 1, 1, 1]), [0.5])
    b = total_loss(pred, SQ4, 0, CostWeights(), A4)
    assert "start_outside" in b.flags


def test_total_loss_unknown_category():
    pred = LayerPrediction(1, PolarParams((2, 2), [1, 1, 1, 1]), [0.5])
    with pytest.raises(ParameterError):
        total_loss(pred, SQ4, 3, CostWeights(), A4)


def test_focal_loss_values():
    assert focal_class_loss([1.0], 0) == 0.0
    assert focal_class_loss([0.5], 0) == pytest.approx(0.25 * 0.25 * np.log(2))


def test_layer_index_range():
    with pytest.raises(ParameterError):
        LayerPrediction(7, PolarParams((0, 0), [1, 1, 1]), [0.5])
    with pytest.raises(ParameterError):
        LayerPrediction(1, PolarParams((0, 0), [1, 1, 1]), [1.5])


def test_cost_weights_validation():
    assert CostWeights() == CostWeights(2, 5, 2, 5)
    with pytest.raises(ParameterError):
        CostWeights(-1)
    with pytest.raises(ParameterError):
        CostWeights.from_sequence([1, 2])


def test_refine_first_layer():
    p, clamped = initial_params((5, 5), (1, -1), [2, 2, 2, 2])
    np.testing.assert_allclose(p.start, (6, 4))
    np.testing.assert_allclose(p.distances, 2)
    assert clamped == 0


def test_refine_identity_and_clamp():
    p = PolarParams((3, 3), [1, 1])
    q, n = refine_params(p, (0, 0), [0, 0])
    np.testing.assert_array_equal(q.as_vector(), p.as_vector())
    q, n = refine_params(p, (0, 0), [-2, 0])
    np.testing.assert_array_equal(q.distances, [0, 1])
    assert n == 1


def test_refine_telescopes(rng):
    p0 = PolarParams((0, 0), rng.uniform(5, 6, 8))
    ds, dd = rng.normal(0, 0.3, (6, 2)), rng.normal(0, 0.3, (6, 8))
    p = p0
    for a, b in zip(ds, dd):
        p, _ = refine_params(p, a, b)
    once, _ = refine_params(p0, ds.sum(0), dd.sum(0))
    np.testing.assert_allclose(p.as_vector(), once.as_vector(), atol=1e-12)


# finite differences


def test_fd_dist_constant_offset_slope():
    c = random_convex_polygon(np.random.default_rng(3), scale=10)
    s = c.centroid
    a = AngleSet(32)
    g = fd_gradient("dist", PolarParams(s, pats_targets(c, s, a) + 0.25), c, 1e-4, a)
    np.testing.assert_allclose(g.gradient[2:], 1 / 32, atol=1e-9)
    assert not g.ambiguous


def test_fd_dist_kink_flagged():
    a = AngleSet(8)
    g = fd_gradient("dist", PolarParams((2, 2), pats_targets(SQ4, (2, 2), a)), SQ4, 1e-4, a)
    assert g.kinks[2:].all()
    assert g.ambiguous


def test_fd_start_gradient_zero_by_detached_targets():
    a = AngleSet(8)
    g = fd_gradient("dist", PolarParams((2, 2), pats_targets(SQ4, (2, 2), a) + 1), SQ4, 1e-4, a)
    np.testing.assert_array_equal(g.gradient[:2], 0)


def test_fd_rmask_signs_inside():
    a = AngleSet(8)
    d = pats_targets(SQ4, (2, 2), a) * 0.6
    g = fd_gradient("rmask", PolarParams((2, 2), d), SQ4, 1e-2, a)
    assert np.all(g.gradient[2:] < 0)


def test_fd_reports_start_leaving_contour():
    a = AngleSet(4)
    at = PolarParams((1e-5, 2), [1, 1, 1e-6, 1])
    g = fd_gradient("dist", at, SQ4, 1e-4, a)
    assert 0 in g.outside
    assert np.isnan(g.gradient[0])


def test_fd_bad_step():
    with pytest.raises(ParameterError):
        fd_gradient("dist", PolarParams((2, 2), [1, 1, 1, 1]), SQ4, 0.0)


def test_loss_csv():
    buf = io.StringIO()
    write_loss_csv([(7, 1, LossBreakdown(0.1, 0.2, 0.3, 1.5))], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(LOSS_CSV_FIELDS)
    assert lines[1].split(",")[:2] == ["7", "1"]


def test_no_spurious_warnings_on_clean_loss():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rmask_loss(SQ4, PolarParams((2, 2), [1, 1, 1, 1]), A4)
    assert polygon_vertices((0, 0), [1, 1, 1, 1], A4).shape == (4, 2)
