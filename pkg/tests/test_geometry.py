import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exigeo import ValidationError
from exigeo.geometry import (
    AdmissibilityError, OrientedHyperplane, SphericalGraphField, angular_flatness, annulus_area,
    graph_over_graph, jacobi_constant, jacobi_projection, project, recenter_hyperplane,
    reparametrize, spherical_graph_point, spherical_to_cylindrical, unit_ball_volume,
)

H3 = OrientedHyperplane.coordinate(2)


def bumpy(om, r):
    return 0.02 * om[:, 0] ** 2 - 0.015 * om[:, 0] * om[:, 1] + 0.01 * np.log(r) * om[:, 1]


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_project_examples():
    p, q = project(H3, [1.0, 2.0, 5.0])
    assert np.allclose(p, [1, 2, 0]) and q == 5.0
    p, q = project(H3, H3.normal)
    assert np.allclose(p, 0) and q == 1.0


def test_angular_flatness_examples():
    assert angular_flatness(H3, [1.0, 2.0, 0.0]) == 0.0
    assert angular_flatness(H3, H3.normal) == pytest.approx(math.pi / 2)
    assert angular_flatness(H3, [1.0, 0.0, 1.0]) == pytest.approx(math.pi / 4)
    with pytest.raises(ValidationError):
        angular_flatness(H3, [0.0, 0.0, 0.0])


def test_spherical_graph_point_examples():
    om = np.array([1.0, 0.0, 0.0])
    assert np.allclose(spherical_graph_point(H3, om, 0.0, 2.0), 2 * om)
    assert np.allclose(spherical_graph_point(H3, om, 1.0, 1.0), (om + H3.normal) / math.sqrt(2))
    with pytest.raises(ValidationError):
        spherical_graph_point(H3, H3.normal, 0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 2 * math.pi), st.floats(0.1, 10))
def test_spherical_graph_point_has_radius_r(u, phi, r):
    om = np.array([math.cos(phi), math.sin(phi), 0.0])
    x = spherical_graph_point(H3, om, u, r)
    assert np.linalg.norm(x) == pytest.approx(r, rel=1e-12)
    assert math.isclose(angular_flatness(H3, x), math.atan(abs(u)), abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.0, 1.2))
def test_tilted_hyperplane_is_orthonormal(phi, angle):
    K = H3.tilted([math.cos(phi), math.sin(phi), 0.0], angle)
    assert K.normal @ H3.normal == pytest.approx(math.cos(angle), abs=1e-14)
    assert np.allclose(K.basis.T @ K.basis, np.eye(2), atol=1e-12)
    assert np.allclose(K.basis.T @ K.normal, 0.0, atol=1e-12)


def test_reparametrize_identity():
    u = SphericalGraphField.from_function(H3, bumpy, 1.0, 3.0, n_rad=6)
    v = reparametrize(H3, H3, u)
    assert np.abs(v.values - u.values).max() <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_reparametrize_round_trip(n):
    H = OrientedHyperplane.coordinate(n)
    K = H.tilted(H.basis[:, 0] + 0.5 * H.basis[:, -1], 0.01)

    def f(om, r):
        return 0.01 * om[:, 0] * om[:, -1] + 0.005 * om[:, 0] - 0.003 * np.log(r)

    u = SphericalGraphField.from_function(H, f, 1.0, 2.0, n_rad=4)
    back = reparametrize(K, H, reparametrize(H, K, u))
    assert np.abs(back.values - u.values).max() <= 1e-10


def test_reparametrize_is_a_point_set_identity():
    K = H3.tilted([1.0, 0.0, 0.0], 0.02)
    u = SphericalGraphField.from_function(H3, bumpy, 1.0, 2.0, n_rad=4)
    v = reparametrize(H3, K, u)
    pts = v.points().reshape(-1, 3)
    r = np.linalg.norm(pts, axis=1)
    # each point of the new graph lies on the old graph
    p, q = project(H3, pts)
    om = p / np.linalg.norm(p, axis=1)[:, None]
    uh = q / np.linalg.norm(p, axis=1)
    ref = u.evaluate(om @ H3.basis, r)
    assert np.abs(uh - ref).max() <= 1e-10


def test_reparametrize_rejects_large_tilt():
    u = SphericalGraphField.from_function(H3, bumpy, 1.0, 2.0, n_rad=4)
    with pytest.raises(AdmissibilityError) as exc:
        reparametrize(H3, H3.tilted([1.0, 0, 0], 0.5), u)
    assert exc.value.norms["tilt"] > 0.4


def test_jacobi_projection_examples():
    c = jacobi_constant(2)
    phi1 = SphericalGraphField.from_function(H3, lambda om, r: c * om[:, 0])
    assert np.allclose(jacobi_projection(phi1).coefficients, [1.0, 0.0], atol=1e-12)
    const = SphericalGraphField.from_function(H3, lambda om, r: np.full(len(om), 0.3))
    assert np.abs(jacobi_projection(const).coefficients).max() <= 1e-13


def test_recenter_already_centered():
    u = SphericalGraphField.from_function(H3, lambda om, r: 0.01 * (om[:, 0] ** 2 - 0.5), 1.0, 2.0,
                                          n_rad=4)
    res = recenter_hyperplane(H3, u)
    assert res.iterations == 0
    assert np.allclose(res.K.normal, H3.normal)
    assert np.abs(res.field.values - u.values).max() <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_recenter_recovers_tilted_plane(n):
    H = OrientedHyperplane.coordinate(n)
    tilt = H.tilted(H.basis[:, 0] + 0.3 * H.basis[:, 1], 0.01)
    zero = SphericalGraphField.from_function(tilt, lambda om, r: np.zeros(len(om)), 1.0, 2.0, n_rad=4)
    u = reparametrize(tilt, H, zero)
    res = recenter_hyperplane(H, u)
    assert np.linalg.norm(res.K.normal - tilt.normal) <= 1e-8
    assert np.abs(res.coefficients).max() <= 1e-8
    l2 = math.sqrt(max(res.field.l2_squared(i) for i in range(res.field.values.shape[0])))
    assert l2 <= 1e-8


def test_recenter_needs_n_at_least_2():
    H = OrientedHyperplane.coordinate(1)
    u = SphericalGraphField.from_function(H, lambda om, r: 0.01 * om[:, 0], 1.0, 2.0, n_rad=4)
    with pytest.raises(ValidationError):
        recenter_hyperplane(H, u)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_flat_annulus_area(n):
    H = OrientedHyperplane.coordinate(n)
    g = SphericalGraphField.from_function(H, lambda om, r: np.zeros(len(om)), 1.0, 2.5, n_rad=8)
    area, quad = annulus_area(g)
    assert area == pytest.approx(unit_ball_volume(n) * (2.5 ** n - 1.0), rel=1e-13)
    assert quad == 0.0


def test_constant_cone_area_matches_closed_form():
    # u = tan(a): the cone r dH^{n-1} of radius r cos(a) in the direction family; area
    # of the spherical annulus band is (r2^2 - r1^2)/2 * 2 pi cos(a) for n = 2
    a = 0.05
    g = SphericalGraphField.from_function(H3, lambda om, r: np.full(len(om), math.tan(a)), 1.0, 2.0,
                                          n_rad=8)
    area, _ = annulus_area(g)
    assert area == pytest.approx(math.pi * 3.0 * math.cos(a), rel=1e-12)


def area_error_ratios(ts=(0.04, 0.02, 0.01)):
    base = SphericalGraphField.from_function(
        H3, lambda om, r: 0.5 * om[:, 0] ** 2 + 0.3 * om[:, 1] * om[:, 0] + 0.2 * np.log(r) * om[:, 1],
        1.0, 2.0, n_rad=16)
    flat = math.pi * 3.0
    _, quad = annulus_area(base)
    errs = []
    for t in ts:
        area, _ = annulus_area(base.with_values(t * base.values))
        errs.append(abs(area - flat - t * t * quad) / t ** 2)
    return np.array(errs)


def test_area_expansion_error_shrinks_when_sigma_halves():
    e = area_error_ratios()
    assert np.all(e[1:] < e[:-1])
    ratios = e[1:] / e[:-1]
    # error is O(t) in the bound; even symmetry u -> -u makes it O(t^2) here
    assert np.all((ratios >= 0.25) & (ratios <= 0.75))


def test_spherical_to_cylindrical_zero_and_round_trip():
    zero = SphericalGraphField.from_function(H3, lambda om, r: np.zeros(len(om)), 1.0, 3.0, n_rad=8)
    cg = spherical_to_cylindrical(zero)
    x = np.array([[1.5, 0.2], [0.0, 2.0]])
    assert np.abs(cg(x)).max() == 0.0

    def f(om, r):
        return 0.02 * om[:, 0] + 0.01 * om[:, 1] ** 2

    g = SphericalGraphField.from_function(H3, f, 1.0, 3.0, n_rad=8)
    cg = spherical_to_cylindrical(g)
    pts = g.points()[2:-2].reshape(-1, 3)
    p, q = project(H3, pts)
    assert np.abs(cg(p @ H3.basis) - q).max() <= 1e-10


def test_spherical_to_cylindrical_rejects_steep_fields():
    g = SphericalGraphField.from_function(H3, lambda om, r: 0.6 * om[:, 0], 1.0, 3.0, n_rad=4)
    with pytest.raises(AdmissibilityError):
        spherical_to_cylindrical(g)


def test_graph_over_graph_examples():
    def f(x):
        return 0.1 * x[:, 0] + 0.05 * x[:, 1] ** 2

    x = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.abs(graph_over_graph(H3, f, f, x)).max() <= 1e-14

    def g(x):
        return 0.01 * np.sin(x[:, 0]) + 0.02

    h = graph_over_graph(H3, lambda y: np.zeros(len(y)), g, x)
    assert np.abs(h - g(x)).max() <= 1e-10


def test_graph_over_graph_tilted_plane_distance():
    # base plane z = 0 and second graph z = c: normal distance is c everywhere
    def f(x):
        return 0.2 * x[:, 0]

    def g(x):
        return 0.2 * x[:, 0] + 0.3

    x = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    h = graph_over_graph(H3, f, g, x)
    assert np.allclose(h, 0.3 / math.sqrt(1.04), atol=1e-12)
