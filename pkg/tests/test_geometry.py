import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarpoly.errors import DegenerateGeometryWarning, DimensionError, DomainError, ParameterError
from polarpoly.geometry import (
    AngleSet,
    Contour,
    PolarParams,
    Polygon,
    classify_points,
    distance_to_boundary,
    exact_polygon_iou,
    point_in_contour,
    polygon_area,
    ray_contour_intersect,
    ray_distances,
    reconstruct_polygon,
    regular_polygon_area,
)
from polarpoly.shapes import U_SHAPE, random_convex_polygon, random_interior_point, random_star_polygon, square

from conftest import crossing_number, march_all, shoelace

SQ4 = square(0, 0, 4)


# reconstruction


def test_reconstruct_axis_vertices():
    poly = reconstruct_polygon(PolarParams((1, 1), [2, 2, 2, 2]), AngleSet(4))
    np.testing.assert_allclose(poly.vertices, [(3, 1), (1, 3), (-1, 1), (1, -1)], atol=1e-12)


def test_reconstruct_unit_diamond_area():
    poly = reconstruct_polygon(PolarParams((0, 0), [1, 1, 1, 1]), AngleSet(4))
    assert polygon_area(poly) == pytest.approx(2.0)


def test_regular_32gon_area():
    # (K/2) r^2 sin(2 pi / K) for K=32, r=5 is 78.036..., checked two ways
    poly = reconstruct_polygon(PolarParams((10, 10), [5.0] * 32), AngleSet(32))
    expected = 16 * 25 * math.sin(2 * math.pi / 32)
    assert expected == pytest.approx(78.0361, abs=1e-4)
    assert shoelace(poly.vertices) == pytest.approx(expected, rel=1e-12)
    assert polygon_area(poly) == pytest.approx(regular_polygon_area(5, 32), rel=1e-12)


def test_reconstruct_dimension_mismatch():
    with pytest.raises(DimensionError):
        reconstruct_polygon(PolarParams((0, 0), [1, 1, 1]), AngleSet(4))


def test_angle_phase_default_zero():
    a = AngleSet(8)
    assert a.theta[0] == 0.0
    np.testing.assert_allclose(np.diff(a.theta), 2 * np.pi / 8)


def test_negative_distance_rejected():
    with pytest.raises(ParameterError):
        PolarParams((0, 0), [1, -1, 1])


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.integers(3, 40))
def test_reconstruct_translation_equivariant(dx, dy, K):
    rng = np.random.default_rng(K)
    p = PolarParams(rng.uniform(-5, 5, 2), rng.uniform(0, 5, K))
    a = AngleSet(K)
    base = reconstruct_polygon(p, a).vertices
    moved = reconstruct_polygon(p.translate(dx, dy), a).vertices
    assert len(moved) == K
    np.testing.assert_allclose(moved, base + [dx, dy], atol=1e-9)


# ray casting


def test_square_centre_rays():
    np.testing.assert_allclose(ray_contour_intersect(SQ4, (2, 2), AngleSet(4)), [2, 2, 2, 2], atol=1e-12)


def test_square_offcentre_rays():
    np.testing.assert_allclose(ray_contour_intersect(SQ4, (1, 2), AngleSet(4)), [3, 2, 1, 2], atol=1e-12)


def test_u_shape_farthest_crossing():
    u = Contour(U_SHAPE)
    d = ray_contour_intersect(u, (0.5, 3), AngleSet(4))
    oracle = march_all(U_SHAPE, (0.5, 3), AngleSet(4).theta)
    np.testing.assert_allclose(oracle, [4.5, 2.0, 0.5, 3.0], atol=1e-6)
    np.testing.assert_allclose(d, oracle, atol=1e-6)


def test_outside_start_is_domain_error():
    with pytest.raises(DomainError) as exc:
        ray_contour_intersect(SQ4, (5, 5), AngleSet(4))
    assert exc.value.point == (5.0, 5.0)


def test_boundary_start_is_domain_error():
    with pytest.raises(DomainError):
        ray_contour_intersect(SQ4, (0, 2), AngleSet(4))


def test_ray_through_vertex():
    # diagonal ray from the centre hits the corner exactly
    d = ray_contour_intersect(SQ4, (2, 2), AngleSet(8))
    np.testing.assert_allclose(d[1], 2 * math.sqrt(2), atol=1e-12)


def test_collinear_edge_overlap_takes_far_end():
    # the ray runs along the notch floor (1,1)-(2,1) before leaving at x=4
    c = Contour([(0, 0), (4, 0), (4, 2), (2, 2), (2, 1), (1, 1), (1, 2), (0, 2)])
    d = ray_distances(c, np.array([[0.5, 1.0]]), AngleSet(4))[0]
    assert d[0] == pytest.approx(3.5)


def test_random_polygons_match_marching(rng):
    for _ in range(25):
        c = random_star_polygon(rng)
        s = random_interior_point(c, rng, margin=1e-3)
        a = AngleSet(16)
        np.testing.assert_allclose(ray_contour_intersect(c, s, a), march_all(c.vertices, s, a.theta), atol=1e-4)


def test_round_trip_vertices_on_boundary(rng):
    for _ in range(30):
        c = random_convex_polygon(rng)
        s = random_interior_point(c, rng)
        a = AngleSet(32)
        v = reconstruct_polygon(PolarParams(s, ray_contour_intersect(c, s, a)), a).vertices
        assert distance_to_boundary(c.vertices, v).max() < 1e-6


# point in contour


def test_point_in_square():
    assert point_in_contour(SQ4, (2, 2))
    assert not point_in_contour(SQ4, (5, 5))


def test_point_in_u_notch_is_outside():
    assert not point_in_contour(Contour(U_SHAPE), (2.5, 3))


def test_boundary_counts_as_inside():
    assert point_in_contour(SQ4, (4, 1))
    assert point_in_contour(SQ4, (4, 4))
    assert classify_points(SQ4.vertices, np.array([[4.0, 1.0]]))[0] == 0


def test_point_in_contour_matches_crossing_number(rng):
    for _ in range(20):
        c = random_star_polygon(rng)
        pts = rng.uniform(-1.2, 1.2, (200, 2))
        ours = classify_points(c.vertices, pts)
        keep = distance_to_boundary(c.vertices, pts) > 1e-6
        for p, o in zip(pts[keep], ours[keep]):
            assert (o == 1) == crossing_number(c.vertices, p)


# areas and IoU


def test_polygon_areas():
    assert polygon_area(Polygon([(0, 0), (2, 0), (2, 2), (0, 2)])) == 4
    assert polygon_area(Polygon([(0, 0), (4, 0), (0, 3)])) == 6


def test_iou_identical_squares():
    assert exact_polygon_iou(square(0, 0, 2), square(0, 0, 2)) == pytest.approx(1.0)


def test_iou_overlapping_squares():
    a = Polygon([(0, 0), (2, 0), (2, 2), (0, 2)])
    b = Polygon([(1, 0), (3, 0), (3, 2), (1, 2)])
    assert exact_polygon_iou(a, b) == pytest.approx(1 / 3)


def test_iou_diamond_in_square():
    diamond = reconstruct_polygon(PolarParams((0, 0), [1, 1, 1, 1]), AngleSet(4))
    assert exact_polygon_iou(diamond, square(-1, -1, 2)) == pytest.approx(0.5)


def test_iou_degenerate_warns_and_returns_zero():
    flat = Polygon([(0, 0), (1, 0), (2, 0)])
    with pytest.warns(DegenerateGeometryWarning):
        assert exact_polygon_iou(flat, square()) == 0.0


def test_iou_disjoint():
    assert exact_polygon_iou(square(0, 0, 1), square(5, 5, 1)) == 0.0


def test_iou_properties(rng):
    for _ in range(50):
        a, b = random_convex_polygon(rng), random_convex_polygon(rng, center=rng.uniform(-1, 1, 2))
        ab, ba = exact_polygon_iou(a, b), exact_polygon_iou(b, a)
        assert ab == pytest.approx(ba, abs=1e-12)
        assert ab <= min(a.area, b.area) / max(a.area, b.area) + 1e-12


# contour canonicalisation


def test_contour_normalised_ccw_and_deduped():
    c = Contour([(0, 0), (0, 1), (0, 1), (1, 1), (1, 0), (0, 0)])
    assert len(c) == 4
    assert c.area > 0


def test_contour_keeps_collinear_vertices():
    c = Contour([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2)])
    assert len(c) == 5


def test_contour_rejects_bad_rings():
    with pytest.raises(ParameterError):
        Contour([(0, 0), (1, 1)])
    with pytest.raises(ParameterError):
        Contour([(0, 0), (1, 0), (2, 0)])
    with pytest.raises(ParameterError):
        Contour([(0, 0), (2, 2), (2, 0), (0, 2)])


def test_no_warnings_on_clean_iou():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        exact_polygon_iou(square(), square(1, 1))
