import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exigeo import ValidationError
from exigeo.geometry import OrientedHyperplane, SphericalGraphField, unit_ball_volume
from exigeo.unduloid import UnduloidProfile
from exigeo.varifold import (
    SphericalGraphSurface, TriangleMesh, angular_flatness_integral, boundary_term, catenoid_surface,
    cone_surface, deficit_profile, doubled_plane, extract_graphical_annulus, mass_in_annulus,
    mesh_from_revolution, mesoscale_evaluate, monotonicity_density, plane_with_hole,
    plane_with_hole_mesh, sphere_surface,
)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_plane_mass_and_boundary(n):
    V = plane_with_hole(n, 1.0, 100.0)
    w = unit_ball_volume(n)
    assert mass_in_annulus(V, 3.0) == pytest.approx(w * (3.0 ** n - 1.0), rel=1e-12)
    assert mass_in_annulus(V, 1.0) == 0.0
    # |x^TM| = R along the hole boundary of measure n w R^{n-1}
    assert boundary_term(V) == pytest.approx(-n * w, rel=1e-12)


def test_plane_boundary_scales_with_R():
    assert boundary_term(plane_with_hole(2, 2.0, 50.0)) == pytest.approx(-2 * math.pi * 4.0, rel=1e-12)


def test_centered_sphere_has_no_boundary_term():
    V = sphere_surface(2, 2.0, 0.0, 1.0)
    assert abs(boundary_term(V)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_flat_plane_has_zero_deficit(n):
    V = plane_with_hole(n, 1.0, 1e3)
    prof = deficit_profile(V, np.geomspace(1.01, 999.0, 64))
    assert np.abs(prof.deficit).max() <= 1e-8
    assert prof.is_monotone()


def test_flat_mesh_has_zero_deficit():
    V = plane_with_hole_mesh(1.0, 50.0)
    r = np.geomspace(1.0 / math.cos(math.pi / 64) * 1.01, 49.0, 64)
    assert np.abs(deficit_profile(V, r).deficit).max() <= 1e-8


def _monotone(V, lo, hi, k=64):
    prof = deficit_profile(V, np.geomspace(lo, hi, k))
    return prof


def test_cone_is_monotone():
    prof = _monotone(cone_surface(2, 0.3, 1.0, 100.0), 1.001, 99.0)
    assert prof.is_monotone()
    # a cone through the vertex has constant density once the hole is absorbed
    assert np.all(prof.deficit > 0)


def test_catenoid_is_monotone():
    assert _monotone(catenoid_surface(1.0, 1.5, 6.0), 1.501, 100.0).is_monotone()


def test_unduloid_is_monotone():
    p = UnduloidProfile(2, 0.1)
    V = p.to_surface()
    assert _monotone(V, 0.1001, 0.4999).is_monotone()


def test_revolution_mesh_matches_revolution_surface():
    V = catenoid_surface(1.0, 1.5, 6.0)
    M = mesh_from_revolution(V, n_t=96, n_phi=192)
    for r in (3.0, 10.0):
        assert mass_in_annulus(M, r) == pytest.approx(mass_in_annulus(V, r), rel=2e-3)
    assert boundary_term(M) == pytest.approx(boundary_term(V), rel=2e-3)


def test_lambda_integral_routes_agree():
    V = UnduloidProfile(2, 0.1).to_surface()
    a, _ = V.lambda_integral(0.45)
    b, _ = V.lambda_integral(0.45, method="radial")
    assert a == pytest.approx(b, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 5.0))
def test_theta_is_scale_invariant(lam):
    V = catenoid_surface(1.0, 1.5, 6.0)
    W = V.scaled(lam)
    for r in (2.0, 8.0):
        assert monotonicity_density(W, lam * r) == pytest.approx(monotonicity_density(V, r), rel=1e-10)


def test_flatness_integral_vanishes_on_plane():
    V = plane_with_hole(2, 1.0, 100.0)
    assert angular_flatness_integral(V, OrientedHyperplane.coordinate(2), 2.0, 10.0) <= 1e-24


@pytest.mark.parametrize("theta", [0.01, 0.05])
def test_flatness_integral_on_cone(theta):
    V = cone_surface(2, math.tan(theta), 1.0, 100.0)
    val = angular_flatness_integral(V, OrientedHyperplane.coordinate(2), 2.0, 10.0)
    ref = theta ** 2 * (mass_in_annulus(V, 10.0) - mass_in_annulus(V, 2.0))
    assert val == pytest.approx(ref, rel=1e-2)


def test_extract_recovers_tilted_plane():
    H = OrientedHyperplane.coordinate(2)
    K = H.tilted([1.0, 0.0, 0.0], 0.2)
    V = plane_with_hole(2, 1.0, 100.0, axis=K.normal)
    cert = extract_graphical_annulus(V, 2.0, 20.0)
    assert abs(abs(cert.K.normal @ K.normal) - 1.0) <= 1e-12
    assert cert.sup_norm <= 1e-10


def test_spherical_graph_surface_of_zero_field_is_flat():
    H = OrientedHyperplane.coordinate(2)
    g = SphericalGraphField.from_function(H, lambda om, r: np.zeros(len(om)), 1.0, 10.0, n_rad=8)
    V = SphericalGraphSurface(g)
    assert mass_in_annulus(V, 5.0) == pytest.approx(math.pi * 24.0, rel=1e-12)
    assert boundary_term(V) == pytest.approx(-2 * math.pi, rel=1e-12)


def test_doubled_plane_fails_gamma_check():
    V = doubled_plane(2, 1.0, 0.2, 1e4)
    rep = mesoscale_evaluate(V, gamma=1.5 * math.pi)
    assert rep.verdict == "hypotheses_failed"
    assert rep.reason.startswith("mass bound")
    assert rep.mass_ratio == pytest.approx(2 * math.pi, rel=1e-2)


def test_plane_passes_mesoscale_hypotheses():
    V = plane_with_hole(2, 1.0, 1e5)
    rep = mesoscale_evaluate(V)
    assert rep.hypotheses_met
    assert rep.certificate is not None and rep.certificate.sup_norm <= 1e-10


def test_domain_errors():
    V = plane_with_hole(2, 1.0, 10.0)
    with pytest.raises(ValidationError, match="out of range"):
        deficit_profile(V, [0.5, 2.0])
    with pytest.raises(ValidationError, match="out of range"):
        deficit_profile(V, [2.0, 20.0])
    with pytest.raises(ValidationError):
        deficit_profile(V, [3.0, 2.0])
    U = UnduloidProfile(2, 0.1).to_surface()
    with pytest.raises(ValidationError, match="Lambda"):
        deficit_profile(U, [0.2, 0.6])


def test_mesh_needs_inner_boundary():
    v = np.array([[5.0, 0, 0], [6.0, 0, 0], [5.0, 1.0, 0]])
    with pytest.raises(ValidationError, match="conormal"):
        TriangleMesh(v, [[0, 1, 2]], 1.0)


def test_extracted_annulus_reproduces_unduloid_profile():
    p = UnduloidProfile(2, 1e-3)
    cert = extract_graphical_annulus(p.to_surface(), 0.05, 0.3)
    assert abs(cert.K.normal[-1]) == pytest.approx(1.0, abs=1e-14)
    u = cert.u.values * np.sign(cert.K.normal[-1])
    assert np.abs(u - p.spherical_height(cert.u.radii)[:, None]).max() <= 1e-6
