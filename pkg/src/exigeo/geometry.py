"""Spherical-graph calculus over equatorial spheres of oriented hyperplanes.

A spherical graph over the hyperplane H is the image of the equatorial
sphere H ∩ S^n under omega -> (omega + u(omega) nu_H) / sqrt(1 + u^2); the
annular version scales that image by the radius r. Fields are sampled on a
product grid (angular nodes on the equator) x (Gauss-Legendre radial nodes).

Angular coordinates are stored intrinsically: a node is a unit vector of
R^n, embedded into R^{n+1} through the hyperplane's tangent basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import special

from . import NumericalError, ValidationError

SIGMA0 = 0.05
EPS0 = 0.05


class AdmissibilityError(ValidationError):
    """Tilt or norm above the configured admissibility thresholds."""

    def __init__(self, message, norms=None):
        super().__init__(message)
        self.norms = norms or {}


def unit_ball_volume(n: int) -> float:
    """Lebesgue measure omega_n of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _rotation_between(a, b):
    """Rotation of R^d taking unit a to unit b, identity off span(a, b)."""
    d = len(a)
    cth = float(np.clip(a @ b, -1.0, 1.0))
    w = b - cth * a
    nw = np.linalg.norm(w)
    if nw < 1e-300:
        return np.eye(d)
    w = w / nw
    sth = nw
    return (np.eye(d) + sth * (np.outer(w, a) - np.outer(a, w))
            + (cth - 1.0) * (np.outer(a, a) + np.outer(w, w)))


class OrientedHyperplane:
    """Hyperplane through the origin of R^{n+1} with a chosen unit normal."""

    def __init__(self, normal, basis=None):
        nu = np.asarray(normal, dtype=float).ravel()
        if nu.size < 2:
            raise ValidationError("normal must live in R^{n+1} with n >= 1")
        nrm = np.linalg.norm(nu)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValidationError("normal must be a nonzero finite vector")
        self.normal = nu / nrm
        self.n = nu.size - 1
        if basis is None:
            basis = self._gram_schmidt()
        else:
            basis = np.asarray(basis, dtype=float)
            if basis.shape != (self.n + 1, self.n):
                raise ValidationError("basis must have shape (n+1, n)")
            if (np.abs(basis.T @ basis - np.eye(self.n)).max() > 1e-10
                    or np.abs(basis.T @ self.normal).max() > 1e-10):
                raise ValidationError("basis must be orthonormal and tangent")
        self.basis = basis

    @classmethod
    def coordinate(cls, n: int, axis: int | None = None):
        e = np.zeros(n + 1)
        e[n if axis is None else axis] = 1.0
        return cls(e)

    def _gram_schmidt(self):
        nu = self.normal
        skip = int(np.argmax(np.abs(nu)))
        vecs = [nu]
        for i in range(self.n + 1):
            if i == skip:
                continue
            v = np.zeros(self.n + 1)
            v[i] = 1.0
            for w in vecs:
                v = v - (v @ w) * w
            v = v - (v @ nu) * nu
            v /= np.linalg.norm(v)
            vecs.append(v)
        return np.array(vecs[1:]).T

    def tilted(self, direction, angle: float):
        """Rotate the normal by `angle` towards the tangent vector `direction`.

        The tangent basis is carried along by the same rotation.
        """
        t = np.asarray(direction, dtype=float)
        t = t - (t @ self.normal) * self.normal
        t /= np.linalg.norm(t)
        nu = math.cos(angle) * self.normal + math.sin(angle) * t
        rot = _rotation_between(self.normal, nu)
        return OrientedHyperplane(nu, rot @ self.basis)

    def transported_to(self, normal):
        """Hyperplane with the given normal and this basis rotated along the geodesic."""
        nu = np.asarray(normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        rot = _rotation_between(self.normal, nu)
        b = rot @ self.basis
        b -= np.outer(nu, nu @ b)
        q, _ = np.linalg.qr(b)
        q *= np.sign(np.sum(q * b, axis=0))
        return OrientedHyperplane(nu, q)

    def embed(self, intrinsic):
        return np.asarray(intrinsic) @ self.basis.T

    def intrinsic(self, points):
        return np.asarray(points) @ self.basis

    def __repr__(self):
        return f"OrientedHyperplane(normal={self.normal.tolist()})"


def project(H: OrientedHyperplane, x):
    """Split x into its component in H and its signed height along the normal."""
    x = np.asarray(x, dtype=float)
    q = x @ H.normal
    p = x - np.multiply.outer(q, H.normal)
    return p, q


def angular_flatness(H: OrientedHyperplane, y):
    """Angle between the ray through y and the hyperplane H, in [0, pi/2]."""
    y = np.asarray(y, dtype=float)
    if np.any(np.linalg.norm(y, axis=-1) == 0.0):
        raise ValidationError("angular flatness is undefined at the origin")
    p, q = project(H, y)
    return np.arctan2(np.abs(q), np.linalg.norm(p, axis=-1))


def spherical_graph_point(H: OrientedHyperplane, omega, u, r):
    omega = np.asarray(omega, dtype=float)
    if np.any(np.abs(np.linalg.norm(omega, axis=-1) - 1.0) > 1e-12) or np.any(
            np.abs(omega @ H.normal) > 1e-12):
        raise ValidationError("omega must be a unit vector of the hyperplane")
    if np.any(np.asarray(r) <= 0):
        raise ValidationError("radius must be positive")
    u = np.asarray(u, dtype=float)
    pt = (omega + np.multiply.outer(u, H.normal)) / np.sqrt(1.0 + u * u)[..., None]
    return np.asarray(r)[..., None] * pt


# ---------------------------------------------------------------------------
# angular grids


class _PointPair:
    """The 0-sphere {-1, +1} (equator of a line in the plane)."""

    n = 1

    def __init__(self, m=2):
        self.nodes = np.array([[1.0], [-1.0]])
        self.weights = np.array([1.0, 1.0])

    def interp(self, values, q):
        idx = np.where(np.asarray(q)[:, 0] >= 0.0, 0, 1)
        return np.asarray(values)[..., idx]

    def gradient(self, values):
        return np.zeros(np.shape(values) + (1,))


class _Circle:
    """Uniform nodes on S^1; trigonometric interpolation is spectrally exact."""

    n = 2

    def __init__(self, m=128):
        self.m = m
        self.phi = 2.0 * np.pi * np.arange(m) / m
        self.nodes = np.stack([np.cos(self.phi), np.sin(self.phi)], axis=1)
        self.weights = np.full(m, 2.0 * np.pi / m)
        self._k = np.arange(m // 2 + 1)
        scale = np.full(len(self._k), 2.0)
        scale[0] = 1.0
        if m % 2 == 0:
            scale[-1] = 1.0
        self._scale = scale

    def _coeffs(self, values):
        return np.fft.rfft(values, axis=-1) / self.m * self._scale

    def interp(self, values, q, deriv=False):
        q = np.asarray(q)
        phi = np.arctan2(q[:, 1], q[:, 0])
        e = np.exp(1j * np.multiply.outer(phi, self._k))
        if deriv:
            e = e * (1j * self._k)
        return (self._coeffs(np.asarray(values)) @ e.T).real

    def dphi(self, values):
        c = np.fft.rfft(values, axis=-1)
        k = self._k.astype(float)
        if self.m % 2 == 0:
            k[-1] = 0.0
        return np.fft.irfft(c * (1j * k), n=self.m, axis=-1)

    def gradient(self, values):
        d = self.dphi(values)
        tang = np.stack([-np.sin(self.phi), np.cos(self.phi)], axis=1)
        return d[..., None] * tang


class _Sphere2:
    """Gauss-Legendre in cos(theta) times uniform in phi on S^2.

    Off-grid values come from the spherical-harmonic expansion of degree
    below the number of latitude nodes, which the quadrature integrates
    exactly.
    """

    n = 3

    def __init__(self, m=24):
        self.m = m
        t, w = npleg.leggauss(m)
        nphi = 2 * m
        phi = 2.0 * np.pi * np.arange(nphi) / nphi
        tt, pp = np.meshgrid(t, phi, indexing="ij")
        self.theta = np.arccos(tt).ravel()
        self.phi = pp.ravel()
        st = np.sqrt(1.0 - tt ** 2).ravel()
        self.nodes = np.stack([st * np.cos(self.phi), st * np.sin(self.phi), tt.ravel()], axis=1)
        self.weights = (w[:, None] * np.full(nphi, 2.0 * np.pi / nphi)[None, :]).ravel()
        lm = [(l, k) for l in range(m) for k in range(-l, l + 1)]
        self._l = np.array([a for a, _ in lm])
        self._mm = np.array([b for _, b in lm])
        self._ynodes = self._ymat(self.theta, self.phi)
        e_theta = np.stack([np.cos(self.theta) * np.cos(self.phi),
                            np.cos(self.theta) * np.sin(self.phi), -np.sin(self.theta)], axis=1)
        e_phi = np.stack([-np.sin(self.phi), np.cos(self.phi), np.zeros_like(self.phi)], axis=1)
        self._frames = (e_theta, e_phi)

    def _ymat(self, theta, phi):
        y = special.sph_harm_y_all(self.m - 1, self.m - 1, theta, phi)
        return y[self._l, self._mm].T

    def _coeffs(self, values):
        return (np.asarray(values) * self.weights) @ self._ynodes.conj()

    def interp(self, values, q):
        q = np.asarray(q)
        theta = np.arccos(np.clip(q[:, 2], -1.0, 1.0))
        phi = np.arctan2(q[:, 1], q[:, 0])
        return (self._coeffs(values) @ self._ymat(theta, phi).T).real

    def gradient(self, values, h=1e-4):
        values = np.asarray(values)
        out = np.zeros(values.shape + (3,))
        for e in self._frames:
            fwd = math.cos(h) * self.nodes + math.sin(h) * e
            bwd = math.cos(h) * self.nodes - math.sin(h) * e
            d = (self.interp(values, fwd) - self.interp(values, bwd)) / (2.0 * h)
            out += d[..., None] * e
        return out


def angular_grid(n: int, m: int | None = None):
    if n == 1:
        return _PointPair()
    if n == 2:
        return _Circle(128 if m is None else m)
    if n == 3:
        return _Sphere2(24 if m is None else m)
    raise ValidationError("angular quadrature is available for n <= 3")


def equator_measure(n: int, m: int | None = None) -> float:
    return float(angular_grid(n, m).weights.sum())


# ---------------------------------------------------------------------------
# fields


class _Radial:
    """Gauss-Legendre radial nodes with Legendre-series interpolation."""

    def __init__(self, r1, r2, k):
        self.r1, self.r2, self.k = float(r1), float(r2), int(k)
        x, w = npleg.leggauss(self.k)
        half = 0.5 * (self.r2 - self.r1)
        self.nodes = self.r1 + half * (x + 1.0)
        self.weights = half * w
        self._x, self._w = x, w

    def _to_x(self, r):
        return 2.0 * (np.asarray(r) - self.r1) / (self.r2 - self.r1) - 1.0

    def coeffs(self, values):
        values = np.asarray(values)
        pk = npleg.legvander(self._x, self.k - 1)
        scale = (2.0 * np.arange(self.k) + 1.0) / 2.0
        return np.tensordot(pk.T * self._w, values, axes=(1, 0)) * scale.reshape(
            (-1,) + (1,) * (values.ndim - 1))

    def evaluate(self, values, r, deriv=0):
        c = self.coeffs(values)
        if deriv:
            c = npleg.legder(c, deriv, scl=2.0 / (self.r2 - self.r1))
        x = np.atleast_1d(self._to_x(r))
        return np.moveaxis(npleg.legval(x, c, tensor=True), -1, 0)


@dataclass(frozen=True)
class FieldNorms:
    c0: float
    c1: float
    radial: float

    def as_dict(self):
        return {"sup_u": self.c0, "sup_u_plus_grad": self.c1, "sup_r_dr_u": self.radial}


class SphericalGraphField:
    """Scalar u on (equator of H) x (radial nodes), describing Sigma_H(u, r1, r2).

    `values` has shape (number of radii, number of angular nodes). A field
    with a single radius is a slice: a spherical graph over the equator only.
    """

    def __init__(self, H: OrientedHyperplane, values, radii=None, interval=None,
                 grid=None, m: int | None = None):
        self.H = H
        self.n = H.n
        self.grid = grid if grid is not None else angular_grid(self.n, m)
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        if vals.shape[1] != len(self.grid.weights):
            raise ValidationError("values do not match the angular grid")
        self.values = vals
        self.values.setflags(write=False)
        if interval is not None:
            self.radial = _Radial(interval[0], interval[1], vals.shape[0])
            self.radii = self.radial.nodes
        else:
            self.radial = None
            self.radii = np.atleast_1d(np.asarray(1.0 if radii is None else radii, dtype=float))
            if len(self.radii) != vals.shape[0]:
                raise ValidationError("radii do not match values")
        if np.any(self.radii <= 0):
            raise ValidationError("radii must be positive")

    # construction -----------------------------------------------------
    @classmethod
    def from_function(cls, H, func: Callable, r1=None, r2=None, n_rad=16, m=None, r=1.0):
        """Sample func(omega_embedded, r) on the grid.

        With (r1, r2) the field is annular on Gauss-Legendre radial nodes;
        otherwise it is a single slice at radius r.
        """
        grid = angular_grid(H.n, m)
        om = H.embed(grid.nodes)
        if r1 is None:
            vals = np.asarray(func(om, float(r)), dtype=float)[None, :]
            return cls(H, vals, radii=[r], grid=grid)
        if not 0 < r1 < r2:
            raise ValidationError("need 0 < r1 < r2")
        rad = _Radial(r1, r2, n_rad)
        vals = np.array([np.broadcast_to(func(om, rk), (len(om),)) for rk in rad.nodes], dtype=float)
        return cls(H, vals, interval=(r1, r2), grid=grid)

    def with_values(self, values, H=None):
        H = self.H if H is None else H
        if self.radial is not None:
            return SphericalGraphField(H, values, interval=(self.radial.r1, self.radial.r2),
                                       grid=self.grid)
        return SphericalGraphField(H, values, radii=self.radii, grid=self.grid)

    @property
    def is_annular(self):
        return self.radial is not None

    @property
    def interval(self):
        if self.radial is None:
            return (float(self.radii[0]), float(self.radii[-1]))
        return (self.radial.r1, self.radial.r2)

    # derived quantities -------------------------------------------------
    @cached_property
    def tangential_gradient(self):
        return self.grid.gradient(self.values)

    @cached_property
    def grad_norm(self):
        return np.linalg.norm(self.tangential_gradient, axis=-1)

    @cached_property
    def r_dr(self):
        if self.radial is None:
            return np.zeros_like(self.values)
        d = self.radial.evaluate(self.values, self.radii, deriv=1)
        return self.radii[:, None] * d

    @cached_property
    def norms(self) -> FieldNorms:
        return FieldNorms(float(np.abs(self.values).max()),
                          float((np.abs(self.values) + self.grad_norm).max()),
                          float(np.abs(self.r_dr).max()))

    def in_class(self, sigma: float) -> bool:
        nm = self.norms
        return nm.c1 < sigma and nm.radial <= sigma

    def points(self):
        """Graph points, shape (radii, nodes, n+1)."""
        om = self.H.embed(self.grid.nodes)
        return spherical_graph_point(self.H, om[None, :, :], self.values, self.radii[:, None])

    def slice(self, index):
        return SphericalGraphField(self.H, self.values[index:index + 1],
                                   radii=[self.radii[index]], grid=self.grid)

    def l2_squared(self, index=0):
        return float(np.sum(self.values[index] ** 2 * self.grid.weights))

    # evaluation off the grid --------------------------------------------
    def sample(self, radii):
        """Values, tangential gradients and r*du/dr on the angular grid at new radii."""
        if self.radial is None:
            raise ValidationError("radial interpolation needs an annular field")
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        v = self.radial.evaluate(self.values, radii)
        g = self.radial.evaluate(self.tangential_gradient, radii)
        d = self.radial.evaluate(self.values, radii, deriv=1) * radii[:, None]
        return v, g, d

    def evaluate(self, q_intrinsic, r):
        """u at intrinsic directions q (Q, n) and radii r (Q,)."""
        q = np.atleast_2d(q_intrinsic)
        ang = self.grid.interp(self.values, q)  # (nrad, Q)
        if self.radial is None:
            return ang[0]
        r = np.broadcast_to(np.asarray(r, dtype=float), (len(q),))
        c = self.radial.coeffs(ang)
        x = self.radial._to_x(r)
        pk = npleg.legvander(x, self.radial.k - 1)
        return np.sum(pk * c.T, axis=1)


# ---------------------------------------------------------------------------
# reparametrization


def _check_admissible(H, K, u, eps0, sigma0):
    tilt = float(np.linalg.norm(H.normal - K.normal))
    nm = u.norms
    info = {"tilt": tilt, **nm.as_dict()}
    if tilt > eps0:
        raise AdmissibilityError(f"tilt {tilt:.3g} exceeds eps0={eps0}", info)
    if not u.in_class(sigma0):
        raise AdmissibilityError(f"field norms exceed sigma0={sigma0}: {info}", info)


def _reparam_slice(H, K, grid, values, target, tol=1e-15, max_iter=60):
    """Solve T(omega) = target for omega on the equator of H; return v on K."""
    a = target @ H.normal
    c = float(K.normal @ H.normal)
    A = target - np.outer(a / c, K.normal)
    D = K.normal / c - H.normal
    omega = target - np.outer(a, H.normal)
    omega /= np.linalg.norm(omega, axis=1)[:, None]
    uk = grid.interp(values, H.intrinsic(omega))
    aa = np.einsum("ij,ij->i", A, A)
    for _ in range(max_iter):
        B = uk[:, None] * D
        ab = A @ D * uk
        bb = uk * uk * (D @ D)
        lam = (-ab + np.sqrt(ab * ab - aa * (bb - 1.0))) / aa
        new = lam[:, None] * A + B
        unew = grid.interp(values, H.intrinsic(new))
        step = np.max(np.abs(unew - uk))
        omega, uk = new, unew
        if step <= tol:
            break
    else:
        if step > 1e-12:
            raise NumericalError(f"reparametrization fixed point stalled at {step:.3g}")
    B = uk[:, None] * D
    ab = A @ D * uk
    bb = uk * uk * (D @ D)
    lam = (-ab + np.sqrt(ab * ab - aa * (bb - 1.0))) / aa
    return (uk - lam * a) / (c * lam)


def reparametrize(H: OrientedHyperplane, K: OrientedHyperplane, u: SphericalGraphField,
                  eps0: float = EPS0, sigma0: float = SIGMA0, check: bool = True):
    """Express the spherical graph of u over H as a spherical graph over K."""
    if u.H is not H and np.abs(u.H.normal - H.normal).max() > 1e-14:
        raise ValidationError("field is not defined over H")
    if check:
        _check_admissible(H, K, u, eps0, sigma0)
    target = K.embed(u.grid.nodes)
    vals = np.array([_reparam_slice(H, K, u.grid, u.values[i], target)
                     for i in range(u.values.shape[0])])
    return u.with_values(vals, H=K)


# ---------------------------------------------------------------------------
# Jacobi fields


def jacobi_constant(n: int) -> float:
    """Normalization making c0 (omega . tau) unit in L^2 of the equator."""
    return math.sqrt(1.0 / unit_ball_volume(n))


@dataclass(frozen=True)
class JacobiProjection:
    coefficients: np.ndarray
    residual: np.ndarray
    complement: np.ndarray


def jacobi_fields(grid, n):
    return jacobi_constant(n) * grid.nodes.T  # (n, nodes)


def jacobi_projection(u: SphericalGraphField, index: int = 0) -> JacobiProjection:
    """Projection of one slice of u onto the span of the Jacobi fields."""
    vals = u.values[index]
    phi = jacobi_fields(u.grid, u.n)
    coef = phi @ (vals * u.grid.weights)
    resid = coef @ phi
    return JacobiProjection(coef, resid, vals - resid)


@dataclass(frozen=True)
class RecenterResult:
    K: OrientedHyperplane
    field: SphericalGraphField
    coefficients: np.ndarray
    iterations: int


def recenter_hyperplane(H: OrientedHyperplane, u: SphericalGraphField, index: int | None = None,
                        tol: float = 1e-12, eps0: float = EPS0, sigma0: float = SIGMA0,
                        max_iter: int = 50) -> RecenterResult:
    """Find K near H over which the chosen slice has no Jacobi component."""
    if u.n == 1:
        raise ValidationError("recentering needs n >= 2")
    _check_admissible(H, H, u, eps0, sigma0)
    idx = u.values.shape[0] // 2 if index is None else index
    sl = u.slice(idx)

    def hyperplane(t):
        return H.transported_to(H.normal + H.basis @ t)

    def residual(t):
        K = hyperplane(t)
        v = reparametrize(H, K, sl, check=False)
        return jacobi_projection(v).coefficients

    t = np.zeros(u.n)
    f = residual(t)
    it = 0
    cap = 0.5 * eps0
    while np.max(np.abs(f)) > tol:
        if it >= max_iter:
            raise NumericalError(f"recentering did not converge; last residual {np.max(np.abs(f)):.3g}")
        h = 1e-7
        J = np.empty((u.n, u.n))
        for j in range(u.n):
            e = np.zeros(u.n)
            e[j] = h
            J[:, j] = (residual(t + e) - residual(t - e)) / (2.0 * h)
        step = -np.linalg.solve(J, f)
        sn = np.linalg.norm(step)
        if sn > cap:
            step *= cap / sn
        damp = 1.0
        while True:
            trial = residual(t + damp * step)
            if np.linalg.norm(trial) < np.linalg.norm(f) or damp < 1e-4:
                break
            damp *= 0.5
        t = t + damp * step
        f = trial
        it += 1
    K = hyperplane(t)
    v = reparametrize(H, K, u, check=False)
    return RecenterResult(K, v, f, it)


# ---------------------------------------------------------------------------
# area


def _area_density(n, r, u, grad2, rdr):
    s2 = 1.0 + u * u
    return r ** (n - 1) * s2 ** (-(n - 1) / 2.0) * np.sqrt(1.0 + rdr * rdr / (s2 * s2) + grad2 / s2)


def annulus_area(g: SphericalGraphField, r3=None, r4=None):
    """Area of Sigma_H(u, r3, r4) and the quadratic form of the second variation.

    Returns (area, quadratic_form) where the quadratic form is
    1/2 * integral of r^{n-1} (|grad u|^2 + (r du/dr)^2 - (n-1) u^2).
    """
    if not g.is_annular:
        raise ValidationError("annulus_area needs an annular field")
    n = g.n
    w_ang = g.grid.weights
    if r3 is None and r4 is None:
        radii, wr = g.radii, g.radial.weights
        u, grad2, rdr = g.values, g.grad_norm ** 2, g.r_dr
    else:
        a, b = g.interval
        r3 = a if r3 is None else r3
        r4 = b if r4 is None else r4
        if not a - 1e-12 <= r3 < r4 <= b + 1e-12:
            raise ValidationError("sub-annulus outside the field interval")
        rad = _Radial(r3, r4, max(g.radial.k, 16))
        radii, wr = rad.nodes, rad.weights
        u, gr, rdr = g.sample(radii)
        grad2 = np.sum(gr * gr, axis=-1)
    r = radii[:, None]
    dens = _area_density(n, r, u, grad2, rdr)
    area = float(wr @ (dens @ w_ang))
    q = 0.5 * r ** (n - 1) * (grad2 + rdr * rdr - (n - 1) * u * u)
    quad = float(wr @ (q @ w_ang))
    return area, quad


def weighted_l2(g: SphericalGraphField, r3=None, r4=None, power=None):
    """Integral of r^{n-1} u^2 over the annulus (dr dH^{n-1})."""
    a, b = g.interval
    r3 = a if r3 is None else r3
    r4 = b if r4 is None else r4
    rad = _Radial(r3, r4, max(g.radial.k, 16))
    u, _, rdr = g.sample(rad.nodes)
    f = rdr if power == "radial" else u
    return float(rad.weights @ ((rad.nodes[:, None] ** (g.n - 1) * f * f) @ g.grid.weights))


# ---------------------------------------------------------------------------
# graph conversions


class CylindricalGraph:
    """Height function over an annulus of H reproducing a spherical graph."""

    def __init__(self, field: SphericalGraphField):
        self.field = field
        self.H = field.H
        a, b = field.interval
        u0 = np.abs(field.values[0]).max()
        u1 = np.abs(field.values[-1]).max()
        self.inner = a / math.sqrt(1.0 + u0 ** 2) * (1.0 + 1e-12)
        self.inner = max(self.inner, a)
        self.outer = b / math.sqrt(1.0 + u1 ** 2)

    def _solve_radius(self, q, rho):
        r = rho.copy()
        for _ in range(100):
            u = self.field.evaluate(q, np.clip(r, *self.field.interval))
            new = rho * np.sqrt(1.0 + u * u)
            if np.max(np.abs(new - r)) <= 1e-15 * np.max(rho):
                r = new
                break
            r = new
        return r, u

    def __call__(self, x):
        """Height at intrinsic points x (Q, n) of H."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rho = np.linalg.norm(x, axis=1)
        if np.any(rho <= 0):
            raise ValidationError("points must avoid the origin")
        q = x / rho[:, None]
        r, _ = self._solve_radius(q, rho)
        u = self.field.evaluate(q, np.clip(r, *self.field.interval))
        return rho * u

    def gradient(self, x, h=1e-6):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for j in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[j] = h * np.linalg.norm(x, axis=1).max()
            out[:, j] = (self(x + e) - self(x - e)) / (2.0 * e[j])
        return out

    def sup_norms(self, k=12):
        """Sample sup of |g|/|x| and |grad g| over the valid annulus."""
        rhos = np.linspace(self.inner, self.outer, k + 2)[1:-1]
        q = self.field.grid.nodes
        pts = np.concatenate([r * q for r in rhos])
        g = self(pts)
        rel = np.abs(g) / np.linalg.norm(pts, axis=1)
        grad = np.linalg.norm(self.gradient(pts), axis=1)
        return float(rel.max()), float(grad.max())


def spherical_to_cylindrical(g: SphericalGraphField, eta_max: float = 0.25) -> CylindricalGraph:
    if not g.is_annular:
        raise ValidationError("conversion needs an annular field")
    nm = g.norms
    if nm.c1 >= eta_max or nm.radial > eta_max:
        raise AdmissibilityError(f"field norms {nm.as_dict()} exceed eta_max={eta_max}",
                                 nm.as_dict())
    cg = CylindricalGraph(g)
    if cg.outer <= cg.inner:
        raise ValidationError("annulus too thin for the conversion")
    return cg


def _numeric_gradient(f, x, h=1e-6):
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        out[:, j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def graph_over_graph(H: OrientedHyperplane, f: Callable, g: Callable, x, grad_f: Callable | None = None,
                     tol: float = 1e-14, max_iter: int = 50):
    """Normal height of graph(g) over graph(f) at the base points x + f(x) nu_H.

    f, g map intrinsic points of H (shape (Q, n)) to heights. Returns h with
    z + h(z) nu_f(z) on graph(g), where z = x + f(x) nu_H.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    fx = np.asarray(f(x), dtype=float)
    gf = grad_f(x) if grad_f is not None else _numeric_gradient(f, x)
    norm = np.sqrt(1.0 + np.sum(gf * gf, axis=1))
    nu_p = -gf / norm[:, None]
    nu_q = 1.0 / norm

    def resid(t):
        p = x + t[:, None] * nu_p
        return fx + t * nu_q - np.asarray(g(p), dtype=float)

    t = np.asarray(g(x), dtype=float) - fx
    for _ in range(max_iter):
        r0 = resid(t)
        h = 1e-7 * np.maximum(1.0, np.abs(t))
        d = (resid(t + h) - resid(t - h)) / (2.0 * h)
        if np.any(np.abs(d) < 1e-8):
            bad = np.linalg.norm(x[np.argmin(np.abs(d))])
            raise NumericalError(f"normal projection degenerates near radius {bad:.6g}")
        step = r0 / d
        t = t - step
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(t))):
            break
    else:
        bad = np.linalg.norm(x[np.argmax(np.abs(resid(t)))])
        raise NumericalError(f"normal projection did not converge near radius {bad:.6g}")
    return t


__all__ = [
    "OrientedHyperplane", "SphericalGraphField", "JacobiProjection", "AdmissibilityError",
    "project", "angular_flatness", "spherical_graph_point", "reparametrize",
    "jacobi_projection", "recenter_hyperplane", "annulus_area", "spherical_to_cylindrical",
    "graph_over_graph", "unit_ball_volume", "angular_grid", "equator_measure",
    "CylindricalGraph", "jacobi_constant", "weighted_l2",
]
