"""Half-period unduloids: radial graphs with constant mean curvature n.

The profile over the annulus eps < |x| < R_eps is

    f(r) = int_eps^r [ g(rho)^2 - 1 ]^{-1/2} d rho,
    g(rho) = rho^{n-1} / (rho^n - eps^n + eps^{n-1}),

where eps and R_eps are the two positive roots of g = 1. Writing
g - 1 = (rho - eps)(R_eps - rho) Q(rho) / D(rho) with a polynomial Q that
is positive on [eps, R_eps], and substituting
rho = eps + (R_eps - eps) sin^2(pi t / 2), turns the integrand into the
smooth function pi * sqrt(D / ((g + 1) Q)) of t in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import NumericalError, ValidationError

EPS_MAX = 0.3


def _outer_root_poly(n, eps):
    # r^n - r^{n-1} - (eps^n - eps^{n-1}) divided by (r - eps), highest degree first
    q = np.zeros(n)
    q[0] = 1.0
    if n >= 2:
        q[1] = -1.0 + eps
    for k in range(2, n):
        q[k] = eps * q[k - 1]
    return q


def waist_outer_radius(n: int, eps: float):
    """The two positive roots (eps, R_eps) of r^{n-1} = r^n - eps^n + eps^{n-1}."""
    if n < 2:
        raise ValidationError("unduloids need n >= 2")
    if not 0.0 < eps < 0.5:
        raise ValidationError("waist must satisfy 0 < eps < 1/2")
    q = _outer_root_poly(n, eps)

    def qv(r):
        return np.polyval(q, r)

    lo, hi = eps, 2.0
    if qv(lo) >= 0.0 or qv(hi) <= 0.0:
        raise ValidationError(f"no second root in (eps, 2) for eps={eps}")
    root = optimize.brentq(qv, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=500)
    dq = np.polyder(q)
    for _ in range(3):
        d = np.polyval(dq, root)
        if d == 0.0:
            break
        step = qv(root) / d
        root -= step
        if abs(step) < 1e-17:
            break
    return eps, float(root)


@dataclass(frozen=True)
class ExponentStudy:
    n: int
    eps: np.ndarray
    min_gradient: np.ndarray
    argmin: np.ndarray
    outer_gap: np.ndarray
    slope_flatness: float
    slope_argmin: float
    slope_outer: float
    slope_gradient: float
    argmin_constant: float

    def as_dict(self):
        return {
            "n": self.n,
            "eps": self.eps.tolist(),
            "min_gradient": self.min_gradient.tolist(),
            "argmin_radius": self.argmin.tolist(),
            "one_minus_outer_radius": self.outer_gap.tolist(),
            "slope_flatness": self.slope_flatness,
            "slope_argmin": self.slope_argmin,
            "slope_outer": self.slope_outer,
            "slope_gradient": self.slope_gradient,
            "argmin_constant": self.argmin_constant,
            "target_flatness": 2.0 * (self.n - 1) / self.n,
            "target_argmin": (self.n - 1) / self.n,
            "target_outer": float(self.n - 1),
        }


class UnduloidProfile:
    """Half period of the unduloid with waist eps in R^{n+1}."""

    def __init__(self, n: int, eps: float):
        if not 0.0 < eps < EPS_MAX:
            raise ValidationError(f"waist must lie in (0, {EPS_MAX})")
        self.n = int(n)
        self.eps, self.R = waist_outer_radius(self.n, float(eps))
        self.Lambda = float(self.n)
        # P(rho) = rho^{n-1} - rho^n + eps^n - eps^{n-1} = (rho-eps)(R-rho) Q(rho)
        q1 = _outer_root_poly(self.n, self.eps)
        q2, _ = np.polydiv(q1, np.array([1.0, -self.R]))
        self._Q = np.atleast_1d(q2)
        self._span = self.R - self.eps

    # closed-form pieces ------------------------------------------------------
    def _D(self, rho):
        n, e = self.n, self.eps
        return rho ** n - e ** n + e ** (n - 1)

    def _g(self, rho):
        return rho ** (self.n - 1) / self._D(rho)

    def _Qv(self, rho):
        return np.polyval(self._Q, rho)

    def rho_of_t(self, t):
        return self.eps + self._span * np.sin(0.5 * np.pi * np.asarray(t)) ** 2

    def t_of_rho(self, rho):
        x = np.clip((np.asarray(rho) - self.eps) / self._span, 0.0, 1.0)
        return 2.0 / np.pi * np.arcsin(np.sqrt(x))

    def drho_dt(self, t):
        return 0.5 * np.pi * self._span * np.sin(np.pi * np.asarray(t))

    def dz_dt(self, t):
        rho = self.rho_of_t(t)
        return np.pi * np.sqrt(self._D(rho) / ((self._g(rho) + 1.0) * self._Qv(rho)))

    # public operations -------------------------------------------------------
    def root_residuals(self):
        n = self.n
        out = []
        for r in (self.eps, self.R):
            out.append(abs(r ** (n - 1) - (r ** n - self.eps ** n + self.eps ** (n - 1))))
        return tuple(out)

    def profile(self, r):
        """f(r) for eps <= r <= R_eps."""
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        tol = 1e-14 * max(1.0, self.R)
        if np.any(r_arr < self.eps - tol) or np.any(r_arr > self.R + tol):
            raise ValidationError("radius outside [eps, R_eps]")
        out = np.empty_like(r_arr)
        for i, ri in enumerate(r_arr):
            t1 = float(self.t_of_rho(ri))
            if t1 == 0.0:
                out[i] = 0.0
                continue
            val, _ = integrate.quad(self.dz_dt, 0.0, t1, epsabs=1e-15, epsrel=1e-13, limit=200)
            out[i] = val
        return out if np.ndim(r) else float(out[0])

    def gradient(self, r):
        """|grad f|(r); +inf at both endpoints."""
        r = np.asarray(r, dtype=float)
        if np.any(r < self.eps) or np.any(r > self.R):
            raise ValidationError("radius outside [eps, R_eps]")
        g = self._g(r)
        prod = (r - self.eps) * (self.R - r) * self._Qv(r) * (g + 1.0) / self._D(r)
        with np.errstate(divide="ignore"):
            out = np.where(prod > 0.0, 1.0 / np.sqrt(np.where(prod > 0, prod, 1.0)), np.inf)
        return out if out.ndim else float(out)

    def _flux(self, r):
        # r^{n-1} f'/sqrt(1+f'^2), complex-step safe
        g = self._g(r)
        fp = 1.0 / np.sqrt((r - self.eps) * (self.R - r) * self._Qv(r) * (g + 1.0) / self._D(r))
        return r ** (self.n - 1) * fp / np.sqrt(1.0 + fp * fp)

    def divergence(self, r):
        """div(grad f / sqrt(1 + |grad f|^2)) by complex-step differentiation."""
        r = np.asarray(r, dtype=float)
        h = 1e-30 * np.maximum(1.0, np.abs(r))
        d = np.imag(self._flux(r + 1j * h)) / h
        return d / r ** (self.n - 1)

    def mean_curvature_residual(self, r):
        r = np.asarray(r, dtype=float)
        margin = 1e-3 * self._span
        if np.any(r < self.eps + margin) or np.any(r > self.R - margin):
            raise ValidationError("radius too close to the endpoints")
        out = np.abs(self.divergence(r) - self.n)
        return out if out.ndim else float(out)

    def argmin_gradient(self):
        """Radius of the least slope, by bounded scalar minimization in log r."""
        def obj(s):
            g = self._g(math.exp(s))
            return -g

        res = optimize.minimize_scalar(obj, bounds=(math.log(self.eps), math.log(self.R)),
                                       method="bounded", options={"xatol": 1e-12, "maxiter": 500})
        if not res.success:
            raise NumericalError("gradient minimization failed")
        r = math.exp(res.x)
        return r, float(self.gradient(r))

    def dense_profile(self, resolution: int = 64):
        """Dense ODE solution of z(t) along the whole half period."""
        if resolution < 8:
            raise ValidationError("resolution below 8 samples")
        sol = integrate.solve_ivp(lambda t, y: [self.dz_dt(t)], (0.0, 1.0), [0.0], method="DOP853",
                                  rtol=1e-13, atol=1e-15, dense_output=True,
                                  max_step=1.0 / resolution)
        if not sol.success:
            raise NumericalError("profile integration failed")
        return sol.sol

    def to_surface(self, resolution: int = 64, hole=None):
        """Revolution surface about the last axis with hole radius eps and Lambda = n."""
        from .varifold import ProfileCurve, RevolutionSurface

        zsol = self.dense_profile(resolution)
        curve = ProfileCurve(
            0.0, 1.0,
            rho=self.rho_of_t,
            z=lambda t: zsol(np.asarray(t))[0],
            drho=self.drho_dt,
            dz=self.dz_dt,
        )
        axis = np.zeros(self.n + 1)
        axis[-1] = 1.0
        R = self.eps if hole is None else float(hole)
        return RevolutionSurface(self.n, R, self.Lambda, axis, [curve])

    def spherical_height(self, r):
        """u(r) = f/rho at the point of the profile with |x| = r (graph over the horizontal plane)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            def h(rho):
                return rho * rho + self.profile(rho) ** 2 - ri * ri
            rho = optimize.brentq(h, self.eps, min(ri, self.R), xtol=1e-15, rtol=1e-15)
            out[i] = self.profile(rho) / rho
        return out


def mesoscale_exponents(n: int, eps_list) -> ExponentStudy:
    """Log-log slopes of the least squared slope, its radius, and 1 - R_eps against eps.

    Flatness is measured by the squared slope min |grad f|^2 (the angular
    flatness scale); the plain slope is reported as slope_gradient.
    """
    eps = np.sort(np.asarray(eps_list, dtype=float))
    if len(eps) < 4 or eps[-1] / eps[0] < 100.0 * (1.0 - 1e-12):
        raise ValidationError("need at least 4 waists spanning 2 decades")
    mins, args, outer = [], [], []
    for e in eps:
        p = UnduloidProfile(n, e)
        r, g = p.argmin_gradient()
        mins.append(g)
        args.append(r)
        outer.append(1.0 - p.R)
    mins, args, outer = map(np.array, (mins, args, outer))
    le = np.log(eps)

    def slope(y):
        A = np.stack([le, np.ones_like(le)], axis=1)
        if np.linalg.cond(A) > 1e12:
            raise NumericalError("degenerate exponent fit")
        coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
        return float(coef[0]), float(coef[1])

    s_flat, _ = slope(mins ** 2)
    s_arg, c_arg = slope(args)
    s_out, _ = slope(outer)
    s_grad, _ = slope(mins)
    return ExponentStudy(n, eps, mins, args, outer, s_flat, s_arg, s_out, s_grad, math.exp(c_arg))
