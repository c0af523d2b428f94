"""Exterior surfaces: mass, monotonicity density, area deficit, flatness.

For a surface V outside the ball B_R with mean curvature at most Lambda,

    Theta(r) = |V|(B_r - B_R) / r^n - (1 / (n r^n)) int x . nu_co d bd_V
               + Lambda int_R^r |V|(B_rho - B_R) / rho^n d rho,

and delta(r) = omega_n - Theta(r). The conormal nu_co on the hole boundary
points into the hole, so x . nu_co = -|x^TM| there.

The Lambda-integral is evaluated by exchanging the order of integration,

    int_R^r |V|(B_rho - B_R) rho^{-n} d rho = int_{A_R^r} w_r(|x|) d|V|,
    w_r(t) = (t^{1-n} - r^{1-n}) / (n - 1)      (log(r / t) when n = 1),

which leaves a single smooth quadrature over the surface; the plain
one-dimensional quadrature over rho is kept as an independent route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate, optimize

from . import NumericalError, ValidationError
from .geometry import (
    OrientedHyperplane,
    SphericalGraphField,
    _area_density,
    _Radial,
    angular_flatness,
    angular_grid,
    reparametrize,
    spherical_graph_point,
    unit_ball_volume,
)
from .kernels import mesh_ball_areas
from .parallel import pmap


class NonGraphicalError(NumericalError):
    """A radial ray meets the surface other than exactly once."""

    def __init__(self, message, direction=None, radius=None):
        super().__init__(message)
        self.direction = direction
        self.radius = radius


def _fubini_weight(n, t, r):
    t = np.asarray(t, dtype=float)
    if n == 1:
        return np.log(r / t)
    return (t ** (1 - n) - r ** (1 - n)) / (n - 1)


# ---------------------------------------------------------------------------
# base class


class ExteriorSurface:
    """Common interface. Subclasses fill in mass, boundary and quadrature."""

    n: int
    R: float
    Lambda: float
    extent: float
    unbounded: bool = False

    def _check_radius(self, r):
        if r < self.R * (1.0 - 1e-14):
            raise ValidationError(f"radius {r} below the hole radius {self.R}")
        if r > self.extent * (1.0 + 1e-12):
            raise ValidationError(f"radius {r} beyond the represented extent {self.extent}")

    def mass(self, r):
        """(|V|(B_r - B_R), error estimate)."""
        raise NotImplementedError

    def boundary_integral(self):
        """int x . nu_co d bd_V over the hole boundary (nonpositive)."""
        raise NotImplementedError

    def boundary_measure(self):
        raise NotImplementedError

    def quadrature(self, r, s):
        """Nodes (N, n+1) and weights (N,) integrating over V in the annulus A_r^s."""
        raise NotImplementedError

    def extract(self, K, r, s, n_rad=12, m=None):
        raise NotImplementedError

    def scaled(self, lam):
        raise NotImplementedError

    def lambda_integral(self, r, method="default"):
        """(int_R^r |V|(B_rho - B_R) rho^{-n} d rho, error estimate)."""
        self._check_radius(r)
        if r <= self.R:
            return 0.0, 0.0
        if method == "default":
            return self._lambda_default(r)
        if method != "radial":
            raise ValidationError(f"unknown method {method!r}")
        n = self.n

        def f(rho):
            return self.mass(rho)[0] / rho ** n

        val, err = integrate.quad(f, self.R, r, epsabs=1e-14 * r, epsrel=1e-10, limit=400)
        return val, err

    def _lambda_default(self, r):
        return self.lambda_integral(r, method="radial")

    def integrate(self, func, r, s):
        pts, w = self.quadrature(r, s)
        if len(w) == 0:
            return 0.0
        return float(np.asarray(func(pts)) @ w)


# ---------------------------------------------------------------------------
# surfaces of revolution


@dataclass(frozen=True)
class ProfileCurve:
    """Planar curve t -> (rho(t), z(t)), rho >= 0 distance from the axis."""

    t0: float
    t1: float
    rho: Callable
    z: Callable
    drho: Callable
    dz: Callable

    def radius(self, t):
        return np.hypot(self.rho(t), self.z(t))

    def speed(self, t):
        return np.hypot(self.drho(t), self.dz(t))

    def scaled(self, lam):
        return ProfileCurve(self.t0, self.t1,
                            lambda t: lam * self.rho(t), lambda t: lam * self.z(t),
                            lambda t: lam * self.drho(t), lambda t: lam * self.dz(t))


class RevolutionSurface(ExteriorSurface):
    """The rotation of profile curves about an axis, restricted to |x| >= R."""

    def __init__(self, n: int, R: float, Lambda: float, axis, curves, extent=None,
                 unbounded=False, samples=2049, m=None):
        if R <= 0:
            raise ValidationError("hole radius must be positive")
        if Lambda < 0:
            raise ValidationError("Lambda must be nonnegative")
        self.n, self.R, self.Lambda = int(n), float(R), float(Lambda)
        self.frame = OrientedHyperplane(axis)
        if self.frame.n != self.n:
            raise ValidationError("axis dimension does not match n")
        self.axis = self.frame.normal
        self.curves = list(curves)
        if not self.curves:
            raise ValidationError("need at least one profile curve")
        self.unbounded = bool(unbounded)
        self._m = m
        self._samples = samples
        self._grids = []
        for c in self.curves:
            t = np.linspace(c.t0, c.t1, samples)
            self._grids.append((t, np.asarray(c.radius(t), dtype=float)))
        if extent is None:
            ends = []
            for t, rad in self._grids:
                for e in (rad[0], rad[-1]):
                    if e > self.R * (1.0 + 1e-10):
                        ends.append(e)
            extent = min(ends) if ends else max(rad.max() for _, rad in self._grids)
        self.extent = float(extent)
        self._nwn = self.n * unit_ball_volume(self.n)
        self._intervals_cache = {}

    # crossings and intervals ---------------------------------------------
    def _crossings(self, k, r):
        c = self.curves[k]
        t, rad = self._grids[k]
        d = rad - r
        out = []
        tol = 1e-13 * r
        for end in (0, len(t) - 1):
            if abs(d[end]) <= tol:
                out.append(t[end])
                d[end] = 0.0
        idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
        for i in idx:
            out.append(optimize.brentq(lambda s: c.radius(s) - r, t[i], t[i + 1],
                                       xtol=1e-16, rtol=1e-15, maxiter=200))
        return sorted(out)

    def _intervals(self, r_lo, r_hi):
        key = (r_lo, r_hi)
        if key in self._intervals_cache:
            return self._intervals_cache[key]
        out = []
        for k, c in enumerate(self.curves):
            br = sorted({c.t0, c.t1, *self._crossings(k, r_lo), *self._crossings(k, r_hi)})
            for a, b in zip(br[:-1], br[1:]):
                if b - a <= 1e-15 * max(1.0, abs(b)):
                    continue
                mid = float(c.radius(0.5 * (a + b)))
                if r_lo < mid < r_hi:
                    out.append((k, a, b))
        if len(self._intervals_cache) < 4096:
            self._intervals_cache[key] = out
        return out

    def _density(self, c, t):
        return self._nwn * np.abs(c.rho(t)) ** (self.n - 1) * c.speed(t)

    # measures ----------------------------------------------------------------
    def mass(self, r):
        self._check_radius(r)
        if r <= self.R:
            return 0.0, 0.0
        tot, err = 0.0, 0.0
        for k, a, b in self._intervals(self.R, r):
            c = self.curves[k]
            v, e = integrate.quad(lambda t: self._density(c, t), a, b,
                                  epsabs=1e-15 * r ** self.n, epsrel=1e-13, limit=400)
            tot += v
            err += e
        return tot, err

    def _lambda_default(self, r):
        # exchanged order of integration
        tot, err = 0.0, 0.0
        for k, a, b in self._intervals(self.R, r):
            c = self.curves[k]

            def f(t, c=c):
                return self._density(c, t) * _fubini_weight(self.n, c.radius(t), r)

            v, e = integrate.quad(f, a, b, epsabs=1e-15 * r, epsrel=1e-13, limit=400)
            tot += v
            err += e
        return tot, err

    def _boundary_points(self):
        out = []
        for k, c in enumerate(self.curves):
            for t in self._crossings(k, self.R):
                out.append((k, t))
        return out

    def boundary_integral(self):
        tot = 0.0
        for k, t in self._boundary_points():
            c = self.curves[k]
            rho, z = float(c.rho(t)), float(c.z(t))
            xt = (rho * float(c.drho(t)) + z * float(c.dz(t))) / float(c.speed(t))
            tot -= self._nwn * abs(rho) ** (self.n - 1) * abs(xt)
        return tot

    def boundary_measure(self):
        return sum(self._nwn * abs(float(self.curves[k].rho(t))) ** (self.n - 1)
                   for k, t in self._boundary_points())

    def conormal_samples(self, m=None):
        """Boundary points, conormals and surface tangent bases (for checks)."""
        grid = angular_grid(self.n, m)
        om = self.frame.embed(grid.nodes)
        pts, con, tang = [], [], []
        for k, t in self._boundary_points():
            c = self.curves[k]
            rho, z = float(c.rho(t)), float(c.z(t))
            dr, dz = float(c.drho(t)), float(c.dz(t))
            sp = math.hypot(dr, dz)
            x = rho * om + z * self.axis
            T = (dr * om + dz * self.axis) / sp
            sign = -1.0 if np.all(np.einsum("ij,ij->i", x, T) >= 0.0) else 1.0
            pts.append(x)
            con.append(sign * T)
            tang.append(T)
        if not pts:
            return np.zeros((0, self.n + 1)), np.zeros((0, self.n + 1)), np.zeros((0, self.n + 1))
        return np.concatenate(pts), np.concatenate(con), np.concatenate(tang)

    def mean_curvature(self, k, t, h=1e-6):
        """Scalar mean curvature (sum of principal curvatures) of curve k at t."""
        c = self.curves[k]
        t = np.asarray(t, dtype=float)
        dr, dz = c.drho(t), c.dz(t)
        ddr = (c.drho(t + h) - c.drho(t - h)) / (2 * h)
        ddz = (c.dz(t + h) - c.dz(t - h)) / (2 * h)
        sp = np.hypot(dr, dz)
        k1 = (dr * ddz - dz * ddr) / sp ** 3
        k2 = dz / (c.rho(t) * sp)
        return k1 + (self.n - 1) * k2

    # sampling -----------------------------------------------------------------
    def quadrature(self, r, s, panels=16, order=8):
        grid = angular_grid(self.n, self._m)
        om = self.frame.embed(grid.nodes)
        x, w = npleg.leggauss(order)
        pts, wts = [], []
        for k, a, b in self._intervals(max(r, self.R), min(s, self.extent)):
            c = self.curves[k]
            edges = np.linspace(a, b, panels + 1)
            half = 0.5 * np.diff(edges)
            t = (edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
            wt = (half[:, None] * w[None, :]).ravel()
            rho, z = np.abs(c.rho(t)), c.z(t)
            dens = rho ** (self.n - 1) * c.speed(t) * wt
            p = rho[:, None, None] * om[None, :, :] + z[:, None, None] * self.axis
            pts.append(p.reshape(-1, self.n + 1))
            wts.append((dens[:, None] * grid.weights[None, :]).ravel())
        if not pts:
            return np.zeros((0, self.n + 1)), np.zeros(0)
        return np.concatenate(pts), np.concatenate(wts)

    def latitudes(self, r):
        """Sines of the latitudes (relative to the axis) where the surface meets |x| = r."""
        out = []
        for k, c in enumerate(self.curves):
            for t in self._crossings(k, r):
                out.append(float(c.z(t)) / r)
        return np.array(out)

    def extract(self, K, r, s, n_rad=12, m=None):
        grid = angular_grid(self.n, m if m is not None else self._m)
        rad = _Radial(r, s, n_rad)
        om = K.embed(grid.nodes)
        A = om @ self.axis
        B = float(K.normal @ self.axis)
        C = np.hypot(A, B)
        phi0 = np.arctan2(B, A)
        vals = np.empty((n_rad, len(om)))
        for i, rk in enumerate(rad.nodes):
            sb = self.latitudes(rk)
            count = np.zeros(len(om), dtype=int)
            alpha = np.zeros(len(om))
            for sv in sb:
                ok = np.abs(sv) <= C
                acos = np.arccos(np.clip(sv / np.where(C > 0, C, 1.0), -1.0, 1.0))
                for sgn in (1.0, -1.0):
                    a = np.angle(np.exp(1j * (phi0 + sgn * acos)))
                    hit = ok & (np.abs(a) < 0.5 * np.pi)
                    if sgn < 0:
                        hit &= acos > 0
                    count += hit
                    alpha = np.where(hit, a, alpha)
            bad = np.nonzero(count != 1)[0]
            if len(bad):
                j = int(bad[0])
                raise NonGraphicalError(
                    f"ray in direction {np.round(om[j], 6).tolist()} at radius {rk:.6g} "
                    f"meets the surface {int(count[j])} times", om[j], rk)
            vals[i] = np.tan(alpha)
        return SphericalGraphField(K, vals, interval=(r, s), grid=grid)

    def scaled(self, lam):
        return RevolutionSurface(self.n, lam * self.R, self.Lambda / lam, self.axis,
                                 [c.scaled(lam) for c in self.curves], extent=lam * self.extent,
                                 unbounded=self.unbounded, samples=self._samples, m=self._m)


def _axis(n, axis=None):
    if axis is None:
        a = np.zeros(n + 1)
        a[-1] = 1.0
        return a
    return np.asarray(axis, dtype=float)


def plane_with_hole(n: int, R: float, extent: float, axis=None, Lambda=0.0):
    """The hyperplane orthogonal to `axis` minus B_R, out to radius `extent`."""
    c = ProfileCurve(R, extent, lambda t: np.asarray(t, dtype=float),
                     lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                     lambda t: np.ones_like(np.asarray(t, dtype=float)),
                     lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    return RevolutionSurface(n, R, Lambda, _axis(n, axis), [c], extent=extent, unbounded=True)


def doubled_plane(n: int, R: float, gap: float, extent: float, axis=None):
    """Two parallel sheets at heights +-gap/2 (mass twice the planar one)."""
    h = 0.5 * gap
    if not 0 <= h < R:
        raise ValidationError("need 0 <= gap/2 < R")
    curves = []
    for zc in (h, -h):
        lo = math.sqrt(R * R - h * h)
        hi = math.sqrt(extent * extent - h * h)
        curves.append(ProfileCurve(lo, hi, lambda t: np.asarray(t, dtype=float),
                                   lambda t, zc=zc: np.full_like(np.asarray(t, dtype=float), zc),
                                   lambda t: np.ones_like(np.asarray(t, dtype=float)),
                                   lambda t: np.zeros_like(np.asarray(t, dtype=float))))
    return RevolutionSurface(n, R, 0.0, _axis(n, axis), curves, extent=extent, unbounded=True)


def cone_surface(n: int, slope: float, r1: float, r2: float, axis=None):
    """The cone z = slope * rho between |x| = r1 and |x| = r2 (hole radius r1)."""
    k = math.sqrt(1.0 + slope * slope)
    c = ProfileCurve(r1 / k, r2 / k, lambda t: np.asarray(t, dtype=float),
                     lambda t: slope * np.asarray(t, dtype=float),
                     lambda t: np.ones_like(np.asarray(t, dtype=float)),
                     lambda t: np.full_like(np.asarray(t, dtype=float), slope))
    return RevolutionSurface(n, r1, 0.0, _axis(n, axis), [c], extent=r2)


def catenoid_surface(waist: float, R: float, height: float, axis=None):
    """The catenoid rho = a cosh(z / a) in R^3 for |z| <= height, outside B_R."""
    a = float(waist)
    c = ProfileCurve(-height, height,
                     lambda t: a * np.cosh(np.asarray(t) / a), lambda t: np.asarray(t, dtype=float),
                     lambda t: np.sinh(np.asarray(t) / a),
                     lambda t: np.ones_like(np.asarray(t, dtype=float)))
    return RevolutionSurface(2, R, 0.0, _axis(2, axis), [c])


def sphere_surface(n: int, radius: float, center_height: float, R: float, axis=None, Lambda=None):
    """Round sphere with center on the axis, restricted to |x| >= R."""
    a, d = float(radius), float(center_height)
    c = ProfileCurve(0.0, math.pi,
                     lambda t: a * np.sin(t), lambda t: d + a * np.cos(t),
                     lambda t: a * np.cos(t), lambda t: -a * np.sin(t))
    lam = n / a if Lambda is None else Lambda
    # closed surface: complete at every radius, so any extent beyond it is valid
    return RevolutionSurface(n, R, lam, _axis(n, axis), [c], extent=4.0 * (abs(d) + a))


# ---------------------------------------------------------------------------
# spherical graphs


class SphericalGraphSurface(ExteriorSurface):
    """Sigma_H(u, r1, r2) with hole radius r1."""

    def __init__(self, field: SphericalGraphField, Lambda: float = 0.0):
        if not field.is_annular:
            raise ValidationError("need an annular field")
        self.g = field
        self.n = field.n
        self.R, self.extent = field.interval
        self.Lambda = float(Lambda)

    def _area(self, a, b, k, weight=None):
        rad = _Radial(a, b, k)
        u, gr, rdr = self.g.sample(rad.nodes)
        dens = _area_density(self.n, rad.nodes[:, None], u, np.sum(gr * gr, axis=-1), rdr)
        if weight is not None:
            dens = dens * weight(rad.nodes)[:, None]
        return float(rad.weights @ (dens @ self.g.grid.weights))

    def _two_level(self, r, weight=None):
        k = max(self.g.radial.k, 16)
        v1 = self._area(self.R, r, k, weight)
        v2 = self._area(self.R, r, 2 * k, weight)
        return v2, abs(v2 - v1) + 1e-15 * abs(v2)

    def mass(self, r):
        self._check_radius(r)
        if r <= self.R:
            return 0.0, 0.0
        return self._two_level(r)

    def _lambda_default(self, r):
        return self._two_level(r, lambda t: _fubini_weight(self.n, t, r))

    def _boundary_data(self):
        u, gr, rdr = self.g.sample([self.R])
        s2 = 1.0 + u[0] ** 2
        g2 = np.sum(gr[0] ** 2, axis=-1)
        elem = self.R ** (self.n - 1) * s2 ** (-(self.n - 1) / 2.0) * np.sqrt(1.0 + g2 / s2)
        a2 = (rdr[0] / s2) ** 2
        bc = g2 / s2 ** 2 + 1.0 / s2
        xtm = self.R * np.sqrt(bc / (bc + a2 / s2))
        return elem, xtm

    def boundary_integral(self):
        elem, xtm = self._boundary_data()
        return -float((elem * xtm) @ self.g.grid.weights)

    def boundary_measure(self):
        elem, _ = self._boundary_data()
        return float(elem @ self.g.grid.weights)

    def quadrature(self, r, s, k=24):
        a, b = max(r, self.R), min(s, self.extent)
        if b <= a:
            return np.zeros((0, self.n + 1)), np.zeros(0)
        rad = _Radial(a, b, k)
        u, gr, rdr = self.g.sample(rad.nodes)
        dens = _area_density(self.n, rad.nodes[:, None], u, np.sum(gr * gr, axis=-1), rdr)
        om = self.g.H.embed(self.g.grid.nodes)
        pts = spherical_graph_point(self.g.H, om[None, :, :], u, rad.nodes[:, None])
        w = dens * rad.weights[:, None] * self.g.grid.weights[None, :]
        return pts.reshape(-1, self.n + 1), w.ravel()

    def extract(self, K, r, s, n_rad=12, m=None):
        if m is not None and m != getattr(self.g.grid, "m", m):
            raise ValidationError("spherical-graph extraction keeps the field's angular grid")
        rad = _Radial(r, s, n_rad)
        vals, _, _ = self.g.sample(rad.nodes)
        on_h = SphericalGraphField(self.g.H, vals, interval=(r, s), grid=self.g.grid)
        try:
            return reparametrize(self.g.H, K, on_h, check=False)
        except NumericalError as exc:
            raise NonGraphicalError(f"spherical graph is not graphical over K: {exc}") from exc

    def scaled(self, lam):
        a, b = self.g.interval
        f = SphericalGraphField(self.g.H, self.g.values, interval=(lam * a, lam * b), grid=self.g.grid)
        return SphericalGraphSurface(f, self.Lambda / lam)


# ---------------------------------------------------------------------------
# triangle meshes (n = 2)


def _boundary_edges(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    owner = np.tile(np.arange(len(faces)), 3)
    opposite = np.concatenate([faces[:, 2], faces[:, 0], faces[:, 1]])
    key = np.sort(e, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    single = cnt[inv] == 1
    return e[single], owner[single], opposite[single]


def _segment_distance(p, q):
    d = q - p
    t = np.clip(-np.einsum("ij,ij->i", p, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
    return np.linalg.norm(p + t[:, None] * d, axis=1)


def _components(edges):
    parent = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return np.array([find(int(a)) for a, _ in edges])


class TriangleMesh(ExteriorSurface):
    """Triangulated surface in R^3 with an inner boundary near the hole sphere.

    Boundary edges (edges of exactly one triangle) are grouped into loops;
    loops that come within `tol` of the hole sphere form the inner boundary
    and the rest bound the represented extent.
    """

    def __init__(self, vertices, faces, R: float, Lambda: float = 0.0, unbounded=False, tol=1e-6,
                 extent=None, panels=256):
        v = np.asarray(vertices, dtype=float)
        f = np.asarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise ValidationError("need vertices (V, 3) and triangles (F, 3)")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValidationError("face index out of range")
        area2 = np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
        scale = float(np.abs(v).max()) if len(v) else 1.0
        f = f[area2 > 1e-28 * scale * scale]
        if len(f) == 0:
            raise ValidationError("mesh has no nondegenerate triangles")
        self.vertices, self.faces = v, f
        self.n, self.R, self.Lambda = 2, float(R), float(Lambda)
        self.unbounded = bool(unbounded)
        edges, owner, opp = _boundary_edges(f)
        if len(edges) == 0:
            raise ValidationError("mesh has no boundary")
        comp = _components(edges)
        dist = _segment_distance(v[edges[:, 0]], v[edges[:, 1]])
        inner = np.zeros(len(edges), dtype=bool)
        for cid in np.unique(comp):
            sel = comp == cid
            if dist[sel].min() <= self.R * (1.0 + tol):
                inner |= sel
        if not inner.any():
            raise ValidationError("missing conormal samples: no boundary loop meets the hole sphere")
        self._inner = (edges[inner], opp[inner])
        outer = ~inner
        if extent is None:
            extent = float(dist[outer].min()) if outer.any() else float(np.linalg.norm(v, axis=1).max())
        self.extent = float(extent)
        self._panels = int(panels)
        self._area_cache = {}

    def _ball_area(self, r):
        if r not in self._area_cache:
            self._area_cache[r] = float(mesh_ball_areas(self.vertices, self.faces, [r])[0])
        return self._area_cache[r]

    def mass(self, r):
        self._check_radius(r)
        if r <= self.R:
            return 0.0, 0.0
        val = self._ball_area(r) - self._ball_area(self.R)
        return val, 1e-13 * (abs(val) + r * r)

    @cached_property
    def _lambda_table(self):
        # Gauss-Legendre panels in log radius; 4-point minus 2-point as error
        edges = np.geomspace(self.R, self.extent, self._panels + 1)
        a0 = self._ball_area(self.R)
        out = []
        for order in (4, 2):
            x, w = npleg.leggauss(order)
            half = 0.5 * np.diff(edges)
            nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
            vals = (mesh_ball_areas(self.vertices, self.faces, nodes.ravel()) - a0) / nodes.ravel() ** 2
            panel = (vals.reshape(nodes.shape) @ w) * half
            out.append(np.concatenate([[0.0], np.cumsum(panel)]))
        return edges, out[0], np.abs(out[0] - out[1])

    def _partial(self, a, b, order):
        x, w = npleg.leggauss(order)
        half = 0.5 * (b - a)
        nodes = a + half * (x + 1.0)
        vals = (mesh_ball_areas(self.vertices, self.faces, nodes) - self._ball_area(self.R)) / nodes ** 2
        return float(half * (vals @ w))

    def _lambda_default(self, r):
        edges, cum, err = self._lambda_table
        k = int(np.clip(np.searchsorted(edges, r, side="right") - 1, 0, len(edges) - 2))
        p4 = self._partial(edges[k], r, 4)
        p2 = self._partial(edges[k], r, 2)
        return float(cum[k] + p4), float(err[k] + abs(p4 - p2))

    def conormals(self):
        (e, opp) = self._inner
        p, q, o = self.vertices[e[:, 0]], self.vertices[e[:, 1]], self.vertices[opp]
        d = q - p
        L = np.linalg.norm(d, axis=1)
        t = d / L[:, None]
        w = o - p
        perp = w - np.einsum("ij,ij->i", w, t)[:, None] * t
        nu = -perp / np.linalg.norm(perp, axis=1)[:, None]
        return 0.5 * (p + q), nu, L

    def boundary_integral(self):
        mid, nu, L = self.conormals()
        return float(np.sum(np.einsum("ij,ij->i", mid, nu) * L))

    def boundary_measure(self):
        return float(self.conormals()[2].sum())

    def quadrature(self, r, s, level=2):
        v, f = self.vertices, self.faces
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        k = 2 ** level
        # barycentric centroids of the k^2 congruent sub-triangles
        bary = []
        for i in range(k):
            for j in range(k - i):
                bary.append(((i + 1 / 3) / k, (j + 1 / 3) / k))
                if i + j < k - 1:
                    bary.append(((i + 2 / 3) / k, (j + 2 / 3) / k))
        bary = np.array(bary)
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1) / len(bary)
        pts = (a[:, None, :] + bary[None, :, 0, None] * (b - a)[:, None, :]
               + bary[None, :, 1, None] * (c - a)[:, None, :]).reshape(-1, 3)
        w = np.repeat(area, len(bary))
        rr = np.linalg.norm(pts, axis=1)
        keep = (rr > max(r, self.R)) & (rr < s)
        return pts[keep], w[keep]

    def extract(self, K, r, s, n_rad=12, m=None):
        grid = angular_grid(2, m)
        rad = _Radial(r, s, n_rad)
        om = K.embed(grid.nodes)
        nuK = K.normal
        v, f = self.vertices, self.faces
        vals = np.empty((n_rad, len(om)))
        for j, w in enumerate(om):
            nP = np.cross(w, nuK)
            sd = v @ nP
            s0, s1, s2 = sd[f[:, 0]], sd[f[:, 1]], sd[f[:, 2]]
            segs = []
            for (i0, i1, d0, d1) in ((0, 1, s0, s1), (1, 2, s1, s2), (2, 0, s2, s0)):
                cross = (d0 * d1 < 0) | ((d0 == 0) & (d1 != 0))
                t = np.where(cross, d0 / np.where(cross, d0 - d1, 1.0), 0.0)
                p = v[f[:, i0]] + t[:, None] * (v[f[:, i1]] - v[f[:, i0]])
                segs.append((cross, p))
            # each crossing triangle yields exactly two edge hits
            hits = np.stack([s[0] for s in segs], axis=1)
            okt = hits.sum(axis=1) == 2
            P = np.stack([s[1] for s in segs], axis=1)[okt]
            H = hits[okt]
            order = np.argsort(~H, axis=1, kind="stable")[:, :2]
            p0 = P[np.arange(len(P)), order[:, 0]]
            p1 = P[np.arange(len(P)), order[:, 1]]
            x0 = np.stack([p0 @ w, p0 @ nuK], axis=1)
            x1 = np.stack([p1 @ w, p1 @ nuK], axis=1)
            for i, rk in enumerate(rad.nodes):
                d = x1 - x0
                aa = np.einsum("ij,ij->i", d, d)
                bb = 2 * np.einsum("ij,ij->i", x0, d)
                cc = np.einsum("ij,ij->i", x0, x0) - rk * rk
                disc = bb * bb - 4 * aa * cc
                ok = (disc >= 0) & (aa > 0)
                sq = np.sqrt(np.where(ok, disc, 0.0))
                angles = []
                for sg in (-1.0, 1.0):
                    tt = (-bb + sg * sq) / (2 * np.where(aa > 0, aa, 1.0))
                    good = ok & (tt >= 0) & (tt < 1)
                    q = x0[good] + tt[good, None] * d[good]
                    q = q[q[:, 0] > 0]
                    angles.extend(np.arctan2(q[:, 1], q[:, 0]).tolist())
                angles = np.unique(np.round(np.array(angles), 13))
                if len(angles) != 1:
                    raise NonGraphicalError(
                        f"ray in direction {np.round(w, 6).tolist()} at radius {rk:.6g} "
                        f"meets the mesh {len(angles)} times", w, rk)
                vals[i, j] = math.tan(angles[0])
        return SphericalGraphField(K, vals, interval=(r, s), grid=grid)

    def scaled(self, lam):
        return TriangleMesh(lam * self.vertices, self.faces, lam * self.R, self.Lambda / lam,
                            unbounded=self.unbounded, extent=lam * self.extent)


def plane_with_hole_mesh(R: float, outer: float, n_phi: int = 64, n_rings: int = 24):
    """Flat mesh of z = 0 whose inner polygon is circumscribed about the hole circle."""
    r0 = R / math.cos(math.pi / n_phi)
    radii = np.geomspace(r0, outer / math.cos(math.pi / n_phi), n_rings)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    verts = np.array([[r * math.cos(p), r * math.sin(p), 0.0] for r in radii for p in phi])
    faces = _ring_faces(n_rings, n_phi)
    return TriangleMesh(verts, faces, R, 0.0, unbounded=True, extent=outer)


def _ring_faces(n_rings, n_phi):
    faces = []
    for i in range(n_rings - 1):
        for j in range(n_phi):
            a = i * n_phi + j
            b = i * n_phi + (j + 1) % n_phi
            c = (i + 1) * n_phi + j
            d = (i + 1) * n_phi + (j + 1) % n_phi
            faces.append([a, b, d])
            faces.append([a, d, c])
    return np.array(faces, dtype=np.int64)


def mesh_from_revolution(surface: RevolutionSurface, n_t: int = 64, n_phi: int = 128):
    """Triangulate an n = 2 surface of revolution (inner ring on the hole sphere)."""
    if surface.n != 2:
        raise ValidationError("meshes are available for n = 2 only")
    E = surface.frame.basis
    ax = surface.axis
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ring = np.stack([np.cos(phi), np.sin(phi)], axis=1) @ E.T
    verts, faces = [], []
    for k, a, b in surface._intervals(surface.R, surface.extent):
        c = surface.curves[k]
        if float(c.radius(a)) > float(c.radius(b)):
            a, b = b, a
        # cosine spacing resolves both ends
        t = a + (b - a) * 0.5 * (1 - np.cos(np.pi * np.linspace(0, 1, n_t)))
        rho, z = np.abs(c.rho(t)), c.z(t)
        base = len(verts) and sum(len(x) for x in verts)
        block = rho[:, None, None] * ring[None] + z[:, None, None] * ax
        verts.append(block.reshape(-1, 3))
        faces.append(_ring_faces(n_t, n_phi) + base)
    v = np.concatenate(verts)
    f = np.concatenate(faces)
    return TriangleMesh(v, f, surface.R, surface.Lambda, unbounded=surface.unbounded,
                        extent=surface.extent)


# ---------------------------------------------------------------------------
# monotonicity density and deficit


@dataclass(frozen=True)
class DeficitProfile:
    n: int
    R: float
    Lambda: float
    radii: np.ndarray
    theta: np.ndarray
    deficit: np.ndarray
    error: np.ndarray

    def drops(self):
        """Theta(r_k) - Theta(r_{k+1}) minus twice the combined error (positive = violation)."""
        d = self.theta[:-1] - self.theta[1:]
        return d - 2.0 * (self.error[:-1] + self.error[1:])

    def is_monotone(self):
        return bool(np.all(self.drops() <= 0.0))

    def as_dict(self):
        return {"radius": self.radii.tolist(), "theta": self.theta.tolist(),
                "deficit": self.deficit.tolist(), "error": self.error.tolist()}


def mass_in_annulus(V: ExteriorSurface, r: float) -> float:
    return V.mass(r)[0]


def boundary_term(V: ExteriorSurface) -> float:
    return V.boundary_integral()


def theta_with_error(V: ExteriorSurface, r: float, bd=None):
    n = V.n
    m, me = V.mass(r)
    if bd is None:
        bd = V.boundary_integral()
    th = m / r ** n - bd / (n * r ** n)
    err = me / r ** n
    if V.Lambda > 0.0:
        li, le = V.lambda_integral(r)
        th += V.Lambda * li
        err += V.Lambda * le
    err += 1e-14 * (abs(m / r ** n) + abs(bd) / (n * r ** n) + unit_ball_volume(n))
    return th, err


def monotonicity_density(V: ExteriorSurface, r: float) -> float:
    return theta_with_error(V, r)[0]


def _domain_end(V):
    end = V.extent
    if V.Lambda > 0.0:
        end = min(end, 1.0 / V.Lambda)
    return end


def deficit_profile(V: ExteriorSurface, radii) -> DeficitProfile:
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or len(r) == 0:
        raise ValidationError("need a nonempty list of radii")
    if np.any(np.diff(r) <= 0):
        raise ValidationError("radii must be strictly increasing")
    if r[0] <= V.R:
        raise ValidationError(f"radius out of range: {r[0]} <= R = {V.R}")
    if r[-1] > V.extent * (1.0 + 1e-12):
        raise ValidationError(f"radius out of range: {r[-1]} beyond extent {V.extent}")
    if V.Lambda > 0.0 and r[-1] >= 1.0 / V.Lambda:
        raise ValidationError(f"radius out of range: {r[-1]} >= 1/Lambda = {1.0 / V.Lambda}")
    bd = V.boundary_integral()
    res = pmap(lambda x: theta_with_error(V, float(x), bd), r)
    th = np.array([a for a, _ in res])
    er = np.array([b for _, b in res])
    return DeficitProfile(V.n, V.R, V.Lambda, r, th, unit_ball_volume(V.n) - th, er)


def angular_flatness_integral(V: ExteriorSurface, H: OrientedHyperplane, r: float, s: float) -> float:
    if not V.R <= r < s:
        raise ValidationError("need R <= r < s")
    return V.integrate(lambda y: angular_flatness(H, y) ** 2, r, s)


def monotonicity_gap(V: ExteriorSurface, u: SphericalGraphField, r1: float, r2: float):
    """Both sides of the radial-derivative bound: (int r^{n-1} (r u_r)^2, Theta(r2) - Theta(r1))."""
    lhs = _radial_energy(u, r1, r2)
    return lhs, monotonicity_density(V, r2) - monotonicity_density(V, r1)


def _radial_energy(u, r1, r2):
    rad = _Radial(r1, r2, max(u.radial.k, 16))
    _, _, rdr = u.sample(rad.nodes)
    return float(rad.weights @ ((rad.nodes[:, None] ** (u.n - 1) * rdr ** 2) @ u.grid.weights))


# ---------------------------------------------------------------------------
# graphical extraction


@dataclass(frozen=True)
class GraphicalAnnulus:
    K: OrientedHyperplane
    u: SphericalGraphField
    sup_norm: float
    r: float
    s: float

    def as_dict(self):
        return {"normal": self.K.normal.tolist(), "inner_radius": self.r, "outer_radius": self.s,
                "sup_u_grad_rdr": self.sup_norm, **self.u.norms.as_dict()}


def principal_normal(V: ExteriorSurface, r: float, s: float):
    """Smallest-variance direction of the surface measure in A_r^s."""
    pts, w = V.quadrature(r, s)
    if len(w) == 0:
        raise NonGraphicalError(f"no surface in the annulus ({r}, {s})")
    M = (pts * w[:, None]).T @ pts
    vals, vecs = np.linalg.eigh(M)
    nu = vecs[:, 0]
    i = int(np.argmax(np.abs(nu)))
    return nu if nu[i] > 0 else -nu


def extract_graphical_annulus(V: ExteriorSurface, r: float, s: float, n_rad: int = 12,
                              m: int | None = None) -> GraphicalAnnulus:
    if not V.R <= r < s <= V.extent * (1.0 + 1e-12):
        raise ValidationError("need R <= r < s within the surface extent")
    K = OrientedHyperplane(principal_normal(V, r, s))
    u = V.extract(K, r, s, n_rad=n_rad, m=m)
    sup = float((np.abs(u.values) + u.grad_norm + np.abs(u.r_dr)).max())
    return GraphicalAnnulus(K, u, sup, r, s)


# ---------------------------------------------------------------------------
# mesoscale flatness criterion


@dataclass
class MesoscaleReport:
    gamma: float
    eps0: float
    m0: float
    sigma: float
    boundary_check: bool
    mass_check: bool
    boundary_ratio: float
    mass_ratio: float
    window: tuple
    s_used: float | None
    deficit_at_s8: float | None
    R_star: float | None
    S_star: float | None
    verdict: str
    reason: str = ""
    certificate: GraphicalAnnulus | None = None
    certificate_error: str = ""
    scanned: list = dc_field(default_factory=list)

    @property
    def hypotheses_met(self):
        return self.verdict == "hypotheses_met"

    def as_dict(self):
        def num(x):
            if x is None:
                return None
            return "inf" if math.isinf(x) else float(x)

        return {
            "thresholds": {"gamma": self.gamma, "eps0": self.eps0, "m0": self.m0, "sigma": self.sigma},
            "gamma_check": {"boundary": self.boundary_check, "mass": self.mass_check,
                            "boundary_ratio": self.boundary_ratio, "mass_ratio": self.mass_ratio},
            "admissible_s_window": [num(self.window[0]), num(self.window[1])],
            "s_used": num(self.s_used),
            "deficit_at_s8": num(self.deficit_at_s8),
            "R_star": num(self.R_star),
            "S_star": num(self.S_star),
            "verdict": self.verdict,
            "reason": self.reason,
            "certificate": None if self.certificate is None else self.certificate.as_dict(),
            "certificate_error": self.certificate_error,
        }


def default_thresholds(n: int):
    w = unit_ball_volume(n)
    return {"gamma": 4.0 * n * w, "eps0": 0.05 * w, "m0": 64.0, "sigma": 0.1}


def _find_R_star(V, s, eps0, grid, deltas, end, delta_fn):
    lo = s / 8.0
    idx = np.nonzero((grid >= lo) & (deltas >= -eps0))[0]
    if len(idx) == 0 or grid[0] > lo * (1 + 1e-12):
        raise NumericalError("deficit profile too coarse to bracket R*; refine the radius grid")
    k = int(idx[-1])
    if k == len(grid) - 1:
        # deficit stays above -eps0 up to the end of the domain
        if V.Lambda == 0.0 and V.unbounded:
            return math.inf
        return float(end)
    a, b = grid[k], grid[k + 1]
    fa, fb = deltas[k] + eps0, deltas[k + 1] + eps0
    while b - a >= 1e-3 * s:
        mid = 0.5 * (a + b)
        fm = delta_fn(mid) + eps0
        if fm >= 0:
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    return float(a + (b - a) * fa / (fa - fb)) if fa != fb else float(a)


def mesoscale_evaluate(V: ExteriorSurface, gamma=None, eps0=None, m0=None, sigma=None,
                       n_scan: int = 24, n_profile: int = 96, certify: bool = True,
                       n_rad: int = 12) -> MesoscaleReport:
    d = default_thresholds(V.n)
    gamma = d["gamma"] if gamma is None else float(gamma)
    eps0 = d["eps0"] if eps0 is None else float(eps0)
    m0 = d["m0"] if m0 is None else float(m0)
    sigma = d["sigma"] if sigma is None else float(sigma)
    n, R, lam = V.n, V.R, V.Lambda
    end = _domain_end(V) * (1.0 - 1e-9)

    bd_ratio = V.boundary_measure() / R ** (n - 1)
    probe = np.geomspace(R * (1 + 1e-9), end, 64)
    mass_ratio = max(V.mass(float(r))[0] / r ** n for r in probe)
    bcheck, mcheck = bd_ratio <= gamma, mass_ratio <= gamma
    lo = max(m0, 64.0) * R
    hi = math.inf if lam == 0.0 else eps0 / (4.0 * lam)
    window = (lo, hi)
    rep = MesoscaleReport(gamma, eps0, m0, sigma, bcheck, mcheck, bd_ratio, mass_ratio, window,
                          None, None, None, None, "hypotheses_failed")
    if not (bcheck and mcheck):
        rep.reason = "mass bound: " + ", ".join(
            x for x, ok in (("boundary measure exceeds Gamma R^(n-1)", bcheck),
                            ("mass ratio exceeds Gamma", mcheck)) if not ok)
        return rep
    hi_eff = min(hi, end / 4.0)
    if not lo < hi_eff:
        rep.reason = (f"empty window for s: lower end {lo:.6g} >= upper end {hi_eff:.6g}")
        return rep

    bd = V.boundary_integral()
    w = unit_ball_volume(n)

    def delta_fn(r):
        return w - theta_with_error(V, float(r), bd)[0]

    grid = np.geomspace(lo / 8.0, end, n_profile)
    deltas = np.array(pmap(delta_fn, grid))
    reasons = []
    for s in np.geomspace(lo * (1 + 1e-9), hi_eff * (1 - 1e-9), n_scan):
        d8 = delta_fn(s / 8.0)
        entry = {"s": float(s), "deficit_at_s8": float(d8)}
        rep.scanned.append(entry)
        if abs(d8) > eps0:
            reasons.append("deficit at s/8 exceeds eps0")
            continue
        rstar = _find_R_star(V, s, eps0, grid, deltas, end, delta_fn)
        entry["R_star"] = rstar
        if rstar < 4.0 * s:
            reasons.append("R* < 4 s")
            continue
        sstar = min(rstar, math.inf if lam == 0.0 else eps0 / lam)
        rep.s_used, rep.deficit_at_s8, rep.R_star, rep.S_star = float(s), float(d8), rstar, sstar
        rep.verdict, rep.reason = "hypotheses_met", ""
        break
    else:
        rep.reason = "; ".join(sorted(set(reasons))) or "no admissible s"
        return rep

    if certify:
        outer = rep.S_star / 16.0
        if math.isinf(outer):
            outer = end / 16.0
        try:
            rep.certificate = extract_graphical_annulus(V, rep.s_used / 32.0, outer, n_rad=n_rad)
        except (NumericalError, ValidationError) as exc:
            rep.certificate_error = str(exc)
    return rep
