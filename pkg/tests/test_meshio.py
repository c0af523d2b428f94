import numpy as np
import pytest

from exigeo import ValidationError
from exigeo.meshio import read_mesh, write_mesh
from exigeo.varifold import plane_with_hole_mesh


@pytest.mark.parametrize("suffix", [".off", ".obj"])
def test_round_trip_is_exact(tmp_path, suffix):
    M = plane_with_hole_mesh(1.0, 10.0, n_phi=16, n_rings=6)
    path = tmp_path / f"m{suffix}"
    write_mesh(path, M.vertices, M.faces)
    v, f = read_mesh(path)
    assert np.array_equal(v, M.vertices)
    assert np.array_equal(f, M.faces)


def test_obj_negative_indices_and_slashes(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1 -2/2 -1/3\n")
    v, f = read_mesh(p)
    assert f.tolist() == [[0, 1, 2]]


def test_off_counts_on_header_line(tmp_path):
    p = tmp_path / "t.off"
    p.write_text("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    v, f = read_mesh(p)
    assert v.shape == (3, 3) and f.tolist() == [[0, 1, 2]]


@pytest.mark.parametrize("name,text", [
    ("a.off", "NOFF\n"),
    ("b.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n"),
    ("c.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n"),
    ("d.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"),
    ("e.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"),
    ("f.obj", "v 0 0 0\n"),
    ("g.stl", "solid\n"),
])
def test_malformed_meshes_are_rejected(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    with pytest.raises(ValidationError):
        read_mesh(p)


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        read_mesh(tmp_path / "none.off")
