import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exigeo import _pykernels, kernels

try:
    from exigeo import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _disk_mesh(radius, n_phi=48, n_rings=8):
    pts = [[0.0, 0.0, 0.0]]
    for i in range(1, n_rings + 1):
        r = radius * i / n_rings
        for j in range(n_phi):
            a = 2 * math.pi * j / n_phi
            pts.append([r * math.cos(a), r * math.sin(a), 0.0])
    faces = [[0, 1 + j, 1 + (j + 1) % n_phi] for j in range(n_phi)]
    for i in range(1, n_rings):
        b0, b1 = 1 + (i - 1) * n_phi, 1 + i * n_phi
        for j in range(n_phi):
            k = (j + 1) % n_phi
            faces.append([b0 + j, b1 + j, b1 + k])
            faces.append([b0 + j, b1 + k, b0 + k])
    return np.array(pts), np.array(faces)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_pure_python_switch():
    env = dict(os.environ, EXIGEO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import exigeo.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_flat_mesh_ball_area_is_exact_inside_a_face():
    # one large triangle containing the disk of radius 1 around the origin
    v = np.array([[-10.0, -10.0, 0.0], [10.0, -10.0, 0.0], [0.0, 20.0, 0.0]])
    f = np.array([[0, 1, 2]])
    a = kernels.mesh_ball_areas(v, f, [1.0, 2.0])
    assert np.allclose(a, [math.pi, 4 * math.pi], rtol=1e-14)


def test_offset_plane_uses_section_radius():
    v = np.array([[-10.0, -10.0, 0.5], [10.0, -10.0, 0.5], [0.0, 20.0, 0.5]])
    f = np.array([[0, 1, 2]])
    a = kernels.mesh_ball_areas(v, f, [0.4, 1.0])
    assert a[0] == 0.0
    assert math.isclose(a[1], math.pi * 0.75, rel_tol=1e-14)


def test_ball_containing_whole_mesh_returns_total_area():
    v, f = _disk_mesh(1.0)
    tri = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    total = 0.5 * np.linalg.norm(tri, axis=1).sum()
    assert math.isclose(kernels.mesh_ball_areas(v, f, [5.0])[0], total, rel_tol=1e-13)


def test_polyline_unit_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    length, area, glen, garea = kernels.polyline_energy(sq, True)
    assert length == pytest.approx(4.0)
    assert area == pytest.approx(1.0)
    length, area, _, _ = kernels.polyline_energy(sq, False)
    assert length == pytest.approx(3.0)
    assert area == pytest.approx(1.0)


def _fd_check(points, closed):
    _, _, glen, garea = kernels.polyline_energy(points, closed)
    h = 1e-6
    for i in range(len(points)):
        for j in range(2):
            p, m = points.copy(), points.copy()
            p[i, j] += h
            m[i, j] -= h
            lp, ap, _, _ = kernels.polyline_energy(p, closed)
            lm, am, _, _ = kernels.polyline_energy(m, closed)
            assert (lp - lm) / (2 * h) == pytest.approx(glen[i, j], abs=1e-6)
            assert (ap - am) / (2 * h) == pytest.approx(garea[i, j], abs=1e-6)


@pytest.mark.parametrize("closed", [True, False])
def test_polyline_gradients_match_finite_differences(closed):
    rng = np.random.default_rng(3)
    ang = np.sort(rng.uniform(0, 2 * np.pi, 9))
    pts = np.stack([np.cos(ang), np.sin(ang)], axis=1) * rng.uniform(0.8, 1.2, (9, 1))
    _fd_check(pts, closed)


@needs_c
@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=40), st.integers(min_value=0, max_value=2 ** 31 - 1),
       st.booleans())
def test_polyline_backends_agree(m, seed, closed):
    pts = np.random.default_rng(seed).normal(size=(m, 2))
    a = _pykernels.polyline_energy(pts, closed)
    b = _ckernels.polyline_energy(pts, closed)
    assert abs(a[0] - b[0]) <= 1e-12 * max(1.0, abs(a[0]))
    assert abs(a[1] - b[1]) <= 1e-12 * max(1.0, abs(a[1]))
    assert np.allclose(a[2], b[2], atol=1e-12)
    assert np.allclose(a[3], b[3], atol=1e-12)


@needs_c
@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_mesh_backends_agree(seed):
    rng = np.random.default_rng(seed)
    v, f = _disk_mesh(2.0, n_phi=12, n_rings=4)
    v = v + rng.normal(scale=0.05, size=v.shape)
    radii = np.sort(rng.uniform(0.05, 3.0, 7))
    a = _pykernels.mesh_ball_areas(v, f, radii)
    b = _ckernels.mesh_ball_areas(v, f, radii)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_mesh_area_is_monotone_in_radius(seed):
    rng = np.random.default_rng(seed)
    v, f = _disk_mesh(2.0, n_phi=12, n_rings=4)
    v = v + rng.normal(scale=0.05, size=v.shape)
    radii = np.sort(rng.uniform(0.05, 3.0, 10))
    a = kernels.mesh_ball_areas(v, f, radii)
    assert np.all(np.diff(a) >= -1e-12)
