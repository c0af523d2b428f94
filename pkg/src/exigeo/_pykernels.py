"""Pure numpy versions of the hot kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are checked against.
"""
import numpy as np


def _triangle_frames(vertices, faces):
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    ab = b - a
    m = np.cross(ab, c - a)
    m /= np.linalg.norm(m, axis=1)[:, None]
    d = np.einsum("ij,ij->i", a, m)
    foot = d[:, None] * m
    e1 = ab / np.linalg.norm(ab, axis=1)[:, None]
    e2 = np.cross(m, e1)
    pts = []
    for v in (a, b, c):
        w = v - foot
        pts.append(np.stack([np.einsum("ij,ij->i", w, e1),
                             np.einsum("ij,ij->i", w, e2)], axis=1))
    return d, pts


def _edge_disk_area(p, q, rho2):
    """Signed area of triangle (0, p, q) intersected with the disk |x|^2 < rho2."""
    dx = q - p
    a = np.einsum("ij,ij->i", dx, dx)
    b = 2.0 * np.einsum("ij,ij->i", p, dx)
    c = np.einsum("ij,ij->i", p, p) - rho2
    disc = b * b - 4.0 * a * c
    ok = (disc > 0.0) & (a > 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(a > 0.0, a, 1.0)
    t1 = np.where(ok, (-b - sq) / (2.0 * safe_a), 1.0)
    t2 = np.where(ok, (-b + sq) / (2.0 * safe_a), 1.0)
    t1 = np.clip(t1, 0.0, 1.0)
    t2 = np.clip(t2, t1, 1.0)
    x1 = p + t1[:, None] * dx
    x2 = p + t2[:, None] * dx

    def sector(u, v):
        cr = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        dt = np.einsum("ij,ij->i", u, v)
        return 0.5 * rho2 * np.arctan2(cr, dt)

    inner = 0.5 * (x1[:, 0] * x2[:, 1] - x1[:, 1] * x2[:, 0])
    return sector(p, x1) + inner + sector(x2, q)


def mesh_ball_areas(vertices, faces, radii):
    """Area of the triangulated surface inside each ball B_r (exact for flat triangles)."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    d, (pa, pb, pc) = _triangle_frames(vertices, faces)
    out = np.empty(len(radii))
    for k, r in enumerate(radii):
        rho2 = r * r - d * d
        live = rho2 > 0.0
        if not np.any(live):
            out[k] = 0.0
            continue
        rr = rho2[live]
        s = (_edge_disk_area(pa[live], pb[live], rr)
             + _edge_disk_area(pb[live], pc[live], rr)
             + _edge_disk_area(pc[live], pa[live], rr))
        out[k] = np.abs(s).sum()
    return out


def polyline_energy(points, closed):
    """Length and shoelace area of a planar polyline, with gradients.

    For an open polyline the area is that of the loop closed by the chord
    from the last point back to the first; the chord is not counted in the
    length.
    """
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    seg = q - p
    ln = np.sqrt(np.einsum("ij,ij->i", seg, seg))
    if not closed:
        ln[-1] = 0.0
    safe = np.where(ln > 0.0, ln, 1.0)
    t = seg / safe[:, None]
    t[ln == 0.0] = 0.0
    length = ln.sum()
    glen = np.roll(t, 1, axis=0) - t
    area = 0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1])
    nxt = q
    prv = np.roll(p, 1, axis=0)
    garea = 0.5 * np.stack([nxt[:, 1] - prv[:, 1], prv[:, 0] - nxt[:, 0]], axis=1)
    return length, area, glen, garea
