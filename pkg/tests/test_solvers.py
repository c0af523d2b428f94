import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from exigeo import ValidationError
from exigeo.residue import ExteriorMinimalGraph, Obstacle, attached_catenoid
from exigeo.solvers import (
    _segments_cross, ball_perimeter, build_competitor, expansion_study, half_space_bound,
    orthogonal_sphere, solve_axisym, solve_polygon,
)

UNIT_BALL = Obstacle.ball(1.0, 2)
PLANE = ExteriorMinimalGraph.plane(2, UNIT_BALL.axis, 0.0, rho_att=1.0)


def major_segment(L, v):
    """Arc length of the major circular segment with chord L and area v."""
    def area(rho):
        a = math.asin(min(1.0, L / (2 * rho)))
        return rho * rho * (math.pi - a + math.sin(a) * math.cos(a))

    rho = optimize.brentq(lambda x: area(x) - v, L / 2, 10 * math.sqrt(v) + L, xtol=1e-15, rtol=1e-15)
    return 2 * rho * (math.pi - math.asin(L / (2 * rho)))


def test_ball_perimeter_examples():
    assert ball_perimeter(2, 4 * math.pi / 3) == pytest.approx(4 * math.pi, rel=1e-14)
    assert ball_perimeter(1, math.pi) == pytest.approx(2 * math.pi, rel=1e-14)
    assert half_space_bound(2, 4 * math.pi / 3) == pytest.approx(4 * math.pi / 2 ** (1 / 3), rel=1e-14)
    assert half_space_bound(2, 4 * math.pi / 3) == pytest.approx(9.97393, abs=1e-5)
    with pytest.raises(ValidationError):
        ball_perimeter(2, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.floats(1e-3, 1e6), st.floats(0.1, 10))
def test_ball_perimeter_scaling(n, v, lam):
    assert ball_perimeter(n, lam ** (n + 1) * v) == pytest.approx(lam ** n * ball_perimeter(n, v),
                                                                   rel=1e-12)


def test_free_polygon_is_the_circle():
    region, psi = solve_polygon(None, 50.0)
    assert psi == ball_perimeter(1, 50.0)
    assert region.mode == "free"
    # the discrete m-gon itself is within 0.1% of the circle
    assert region.energy == pytest.approx(psi, rel=1e-3)


@pytest.mark.parametrize("v", [10.0, 1000.0])
def test_segment_matches_major_segment(v):
    W = Obstacle.segment([0.0, 0.0], [1.0, 0.0])
    region, psi = solve_polygon(W, v)
    ref = major_segment(1.0, v)
    assert psi == pytest.approx(ref, rel=1e-6)
    assert region.error <= 1e-5 * ref
    assert region.area == pytest.approx(v, rel=1e-7)


def test_segment_discrete_energy_lies_above_the_continuum():
    # an inscribed polyline is shorter than its arc, but the optimum over
    # polylines of fixed area is longer than the continuum optimum
    W = Obstacle.segment([0.0, 0.0], [1.0, 0.0])
    region, psi = solve_polygon(W, 10.0, m=64)
    assert region.energy >= major_segment(1.0, 10.0) * (1 - 1e-9)
    assert region.energy - psi > 0


def test_square_region_is_valid():
    W = Obstacle.polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    v = 100.0
    region, psi = solve_polygon(W, v)
    assert half_space_bound(1, v) <= psi <= ball_perimeter(1, v)
    assert region.area == pytest.approx(v, rel=1e-7)
    assert region.mode == "contact"
    assert not _segments_cross(region.vertices)
    free = region.vertices[~region.contact]
    assert not np.any(W.contains(free[1:-1]))
    assert psi - ball_perimeter(1, v) == pytest.approx(-math.sqrt(2), abs=0.1)


def test_solve_polygon_validation():
    with pytest.raises(ValidationError):
        solve_polygon(UNIT_BALL, 10.0)
    with pytest.raises(ValidationError):
        solve_polygon(None, -1.0)


@pytest.mark.parametrize("v", [100.0, 1e4])
def test_axisym_matches_orthogonal_sphere(v):
    prof, psi = solve_axisym(UNIT_BALL, v)
    theta = optimize.brentq(lambda t: orthogonal_sphere(t)[1] - v, 1e-6, 1.5, xtol=1e-15, rtol=1e-15)
    _, vol, area = orthogonal_sphere(theta)
    assert prof.latitude == pytest.approx(theta, rel=1e-7)
    assert psi == pytest.approx(area, rel=1e-8)
    assert prof.volume == pytest.approx(v, rel=1e-10)
    assert prof.ode_residual <= 1e-6
    assert half_space_bound(2, v) <= psi <= ball_perimeter(2, v)


def test_axisym_scales_with_the_ball():
    _, a = solve_axisym(UNIT_BALL, 500.0)
    _, b = solve_axisym(Obstacle.ball(2.0, 2), 8 * 500.0)
    assert b == pytest.approx(4 * a, rel=1e-8)


def test_free_sphere():
    prof, psi = solve_axisym(None, 1000.0)
    assert psi == pytest.approx(ball_perimeter(2, 1000.0), rel=1e-3)
    assert prof.H == pytest.approx(2 / (3000 / (4 * math.pi)) ** (1 / 3), rel=1e-8)


def test_orthogonal_sphere_orthogonality():
    a, _, _ = orthogonal_sphere(0.3, 2.0)
    # centers at distance h with a^2 + R^2 = h^2
    assert a == pytest.approx(2.0 / math.tan(0.3))


def test_competitor_limit_is_minus_pi():
    for r in (10.0, 20.0, 40.0, 80.0):
        c = build_competitor(PLANE, UNIT_BALL, r, math.inf)
        # inside and outside terms are each of size pi r^2
        assert c.energy_gap == pytest.approx(-math.pi, abs=1e-15 * math.pi * r * r)
        assert c.mismatch == 0.0


def test_competitor_mismatch_shrinks_with_volume():
    m = [build_competitor(PLANE, UNIT_BALL, 10.0, v).mismatch for v in (1e6, 1e8, 1e10)]
    assert m[0] > m[1] > m[2] > 0


def test_catenoid_competitor_mismatch_decays():
    W = Obstacle.ball(1.0, 3)
    F = attached_catenoid(W, 0, 0.3)
    m = [build_competitor(F, W, r, math.inf).mismatch for r in (10.0, 20.0, 40.0, 80.0)]
    assert np.all(np.diff(m) < 0)
    slope = np.polyfit(np.log([10, 20, 40, 80]), np.log(m), 1)[0]
    assert slope == pytest.approx(-3.0, rel=0.05)


def test_solver_beats_volume_matched_competitor():
    v = 1e4
    _, psi = solve_axisym(UNIT_BALL, v)
    c = build_competitor(PLANE, UNIT_BALL, 1.5, v)
    assert psi - ball_perimeter(2, v) <= c.gap_matched_volume


def test_competitor_validation():
    with pytest.raises(ValidationError):
        build_competitor(PLANE, UNIT_BALL, 0.5, math.inf)
    with pytest.raises(ValidationError):
        build_competitor(PLANE, UNIT_BALL, 20.0, 100.0)


def test_expansion_study_validation():
    with pytest.raises(ValidationError):
        expansion_study(UNIT_BALL, [10, 20])
    with pytest.raises(ValidationError):
        expansion_study(UNIT_BALL, [10, 20, 50])
    with pytest.raises(ValidationError):
        expansion_study(None, [10, 100, 1000])


def test_empty_obstacle_expansion_has_zero_gap():
    st_ = expansion_study(None, [10.0, 100.0, 1000.0], n=1)
    assert np.allclose(st_.gap, 0.0, atol=1e-12)
    assert st_.checks["below_ball"] and st_.checks["above_half_space"]
