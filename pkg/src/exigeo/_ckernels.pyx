# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (same contracts as _pykernels)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, fabs

cnp.import_array()


cdef inline double _sector(double ux, double uy, double vx, double vy, double rho2) noexcept nogil:
    return 0.5 * rho2 * atan2(ux * vy - uy * vx, ux * vx + uy * vy)


cdef double _edge_disk_area(double px, double py, double qx, double qy, double rho2) noexcept nogil:
    cdef double dx = qx - px, dy = qy - py
    cdef double a = dx * dx + dy * dy
    cdef double b = 2.0 * (px * dx + py * dy)
    cdef double c = px * px + py * py - rho2
    cdef double disc = b * b - 4.0 * a * c
    cdef double t1 = 1.0, t2 = 1.0, sq
    if disc > 0.0 and a > 0.0:
        sq = sqrt(disc)
        t1 = (-b - sq) / (2.0 * a)
        t2 = (-b + sq) / (2.0 * a)
    if t1 < 0.0:
        t1 = 0.0
    elif t1 > 1.0:
        t1 = 1.0
    if t2 < t1:
        t2 = t1
    elif t2 > 1.0:
        t2 = 1.0
    cdef double x1 = px + t1 * dx, y1 = py + t1 * dy
    cdef double x2 = px + t2 * dx, y2 = py + t2 * dy
    return (_sector(px, py, x1, y1, rho2) + 0.5 * (x1 * y2 - y1 * x2)
            + _sector(x2, y2, qx, qy, rho2))


def mesh_ball_areas(vertices, faces, radii):
    cdef double[:, ::1] V = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef long long[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef double[::1] R = np.ascontiguousarray(np.atleast_1d(radii), dtype=np.float64)
    cdef Py_ssize_t nf = F.shape[0], nr = R.shape[0], i, k, j
    cdef double[:, ::1] P = np.empty((nf, 6), dtype=np.float64)
    cdef double[::1] D = np.empty(nf, dtype=np.float64)
    out = np.zeros(nr, dtype=np.float64)
    cdef double[::1] O = out
    cdef double a[3]
    cdef double ab[3]
    cdef double ac[3]
    cdef double m[3]
    cdef double e1[3]
    cdef double e2[3]
    cdef double w[3]
    cdef double nm, d, l1, rho2, s
    cdef int vtx
    with nogil:
        for i in range(nf):
            for j in range(3):
                a[j] = V[F[i, 0], j]
                ab[j] = V[F[i, 1], j] - a[j]
                ac[j] = V[F[i, 2], j] - a[j]
            m[0] = ab[1] * ac[2] - ab[2] * ac[1]
            m[1] = ab[2] * ac[0] - ab[0] * ac[2]
            m[2] = ab[0] * ac[1] - ab[1] * ac[0]
            nm = sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2])
            l1 = sqrt(ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2])
            for j in range(3):
                m[j] /= nm
                e1[j] = ab[j] / l1
            e2[0] = m[1] * e1[2] - m[2] * e1[1]
            e2[1] = m[2] * e1[0] - m[0] * e1[2]
            e2[2] = m[0] * e1[1] - m[1] * e1[0]
            d = a[0] * m[0] + a[1] * m[1] + a[2] * m[2]
            D[i] = d
            for vtx in range(3):
                for j in range(3):
                    w[j] = V[F[i, vtx], j] - d * m[j]
                P[i, 2 * vtx] = w[0] * e1[0] + w[1] * e1[1] + w[2] * e1[2]
                P[i, 2 * vtx + 1] = w[0] * e2[0] + w[1] * e2[1] + w[2] * e2[2]
        for k in range(nr):
            s = 0.0
            for i in range(nf):
                rho2 = R[k] * R[k] - D[i] * D[i]
                if rho2 <= 0.0:
                    continue
                s += fabs(_edge_disk_area(P[i, 0], P[i, 1], P[i, 2], P[i, 3], rho2)
                          + _edge_disk_area(P[i, 2], P[i, 3], P[i, 4], P[i, 5], rho2)
                          + _edge_disk_area(P[i, 4], P[i, 5], P[i, 0], P[i, 1], rho2))
            O[k] = s
    return out


def polyline_energy(points, bint closed):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i, ip, im
    glen_a = np.zeros((n, 2), dtype=np.float64)
    garea_a = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] gl = glen_a
    cdef double[:, ::1] ga = garea_a
    cdef double length = 0.0, area = 0.0, dx, dy, ln, tx, ty
    cdef Py_ssize_t last = n if closed else n - 1
    with nogil:
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            area += 0.5 * (p[i, 0] * p[ip, 1] - p[ip, 0] * p[i, 1])
            ga[i, 0] = 0.5 * (p[ip, 1] - p[im, 1])
            ga[i, 1] = 0.5 * (p[im, 0] - p[ip, 0])
        for i in range(last):
            ip = i + 1 if i + 1 < n else 0
            dx = p[ip, 0] - p[i, 0]
            dy = p[ip, 1] - p[i, 1]
            ln = sqrt(dx * dx + dy * dy)
            if ln > 0.0:
                length += ln
                tx = dx / ln
                ty = dy / ln
                gl[i, 0] -= tx
                gl[i, 1] -= ty
                gl[ip, 0] += tx
                gl[ip, 1] += ty
    return length, area, glen_a, garea_a
