"""Large-volume exterior isoperimetric solvers and the glued competitors.

solve_polygon: n = 1, polyline perimeter minimization at fixed area outside a
planar obstacle (augmented Lagrangian over vertex positions).
solve_axisym: n = 2, axisymmetric CMC shooting for a ball obstacle.
build_competitor: glue a residue maximizer inside a cylinder to a large ball.
expansion_study: gap psi(v) - P(B^(v)) over a volume grid and its intercept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from . import NumericalError, ValidationError
from .geometry import unit_ball_volume
from .kernels import polyline_energy
from .parallel import pmap
from .residue import ExteriorMinimalGraph, Obstacle, maximize_residue


def ball_perimeter(n: int, v: float) -> float:
    """P(B^(v)) in R^{n+1}."""
    if not v > 0:
        raise ValidationError("volume must be positive")
    return (n + 1) * unit_ball_volume(n + 1) ** (1.0 / (n + 1)) * v ** (n / (n + 1.0))


def half_space_bound(n: int, v: float) -> float:
    """psi of a half-space obstacle: P(B^(v)) / 2^{1/(n+1)}."""
    return ball_perimeter(n, v) / 2.0 ** (1.0 / (n + 1))


# ---------------------------------------------------------------------------
# n = 1: polylines


@dataclass
class PolylineRegion:
    """Closed positively oriented loop bounding E; free arc plus a path along the obstacle."""

    vertices: np.ndarray
    contact: np.ndarray
    area: float
    energy: float
    mode: str
    diagnostics: dict = field(default_factory=dict)
    estimate: float | None = None
    error: float = 0.0

    def __post_init__(self):
        if self.estimate is None:
            self.estimate = self.energy

    def as_dict(self):
        return {"mode": self.mode, "area": self.area, "energy": self.energy,
                "estimate": self.estimate, "discretization_error": self.error,
                "n_vertices": int(len(self.vertices)), "n_contact": int(self.contact.sum()),
                **self.diagnostics}


class _Boundary:
    """Arc-length parametrization of the obstacle boundary (a segment is a 2-gon)."""

    def __init__(self, W: Obstacle):
        v = np.asarray(W.vertices, dtype=float)
        if W.shape == "polygon" and _signed_area(v) < 0:
            v = v[::-1]
        self.v = v
        self.edges = np.roll(v, -1, axis=0) - v
        self.lengths = np.linalg.norm(self.edges, axis=1)
        self.s = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.L = float(self.s[-1])

    def edge_of(self, s):
        s = s % self.L
        return min(int(np.searchsorted(self.s, s, side="right")) - 1, len(self.v) - 1)

    def point(self, s, k):
        t = self.edges[k] / self.lengths[k]
        return self.v[k] + (s - self.s[k]) * t, t

    def param(self, k, x):
        t = self.edges[k] / self.lengths[k]
        return self.s[k] + float(np.clip((x - self.v[k]) @ t, 0.0, self.lengths[k]))

    def path(self, sb, sa):
        """Obstacle vertices met going backwards from parameter sb to sa."""
        span = (sb - sa) % self.L
        off = (self.s[:-1] - sa) % self.L
        tol = 1e-12 * self.L
        keep = np.nonzero((off > tol) & (off < span - tol))[0]
        return self.v[keep[np.argsort(-off[keep])]]


def _signed_area(p):
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _regular_polygon(center, radius, m, start=0.0):
    ang = start + 2.0 * np.pi * np.arange(m) / m
    return np.asarray(center) + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _polygon_radius_for_area(v, m):
    # area of the regular m-gon with circumradius r is (m/2) r^2 sin(2 pi/m)
    return math.sqrt(2.0 * v / (m * math.sin(2.0 * math.pi / m)))


def _segments_cross(P, closed=True):
    """True when two non-adjacent edges of the polyline intersect."""
    a = P
    b = np.roll(P, -1, axis=0) if closed else P[1:]
    a = a if closed else P[:-1]
    k = len(a)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    A, B = a[:, None], b[:, None]
    C, D = a[None, :], b[None, :]
    d1, d2 = orient(A, B, C), orient(A, B, D)
    d3, d4 = orient(C, D, A), orient(C, D, B)
    hit = (d1 * d2 < 0) & (d3 * d4 < 0)
    i, j = np.indices((k, k))
    near = np.abs(i - j) <= 1
    if closed:
        near |= np.abs(i - j) == k - 1
    return bool(np.any(hit & ~near & (i < j)))


def _contact_start(bd: _Boundary, ka, kb, sa, sb, v, m):
    """Circular arc of area v from boundary point a to b (E on its left)."""
    a, _ = bd.point(sa, ka)
    b, _ = bd.point(sb, kb)
    path = bd.path(sb, sa)
    base = _signed_area(np.vstack([a, b, path])) if len(path) else 0.0
    target = v - base
    chord = np.linalg.norm(b - a)
    # major circular segment over the chord a -> b with area target
    def seg_area(rho):
        al = math.asin(min(1.0, chord / (2 * rho)))
        return math.pi * rho ** 2 - 0.5 * rho ** 2 * (2 * al - math.sin(2 * al))
    lo = 0.5 * chord
    if seg_area(lo) >= target:
        return None
    hi = max(lo * 2, math.sqrt(target / math.pi) + chord)
    while seg_area(hi) < target:
        hi *= 2
    rho = optimize.brentq(lambda x: seg_area(x) - target, lo, hi, xtol=1e-15 * hi, rtol=1e-15)
    al = math.asin(min(1.0, chord / (2 * rho)))
    mid = 0.5 * (a + b)
    u = (b - a) / chord
    nrm = np.array([-u[1], u[0]])
    # center on the right of a -> b; the major arc runs counterclockwise about it
    center = mid - rho * math.cos(al) * nrm
    t0 = math.atan2(*(a - center)[::-1])
    sweep = 2 * math.pi - 2 * al
    ang = t0 + sweep * np.arange(1, m) / m
    arc = center + rho * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return arc


class _ContactProblem:
    def __init__(self, bd: _Boundary, W: Obstacle, ka, kb, v, scale):
        self.bd, self.W, self.ka, self.kb, self.v, self.scale = bd, W, ka, kb, v, scale

    def unpack(self, z):
        m1 = (len(z) - 2) // 2
        X = z[:2 * m1].reshape(m1, 2)
        sa, sb = z[-2], z[-1]
        a, ta = self.bd.point(sa, self.ka)
        b, tb = self.bd.point(sb, self.kb)
        return X, a, b, ta, tb, sa, sb

    def evaluate(self, z, lam, mu):
        X, a, b, ta, tb, sa, sb = self.unpack(z)
        arc = np.vstack([a, X, b])
        length, _, glen, _ = polyline_energy(arc, False)
        path = self.bd.path(sb, sa)
        loop = np.vstack([arc, path]) if len(path) else arc
        _, area, _, garea = polyline_energy(loop, True)
        k = len(arc)
        gap = area - self.v
        mult = -lam + mu * gap
        f = length - lam * gap + 0.5 * mu * gap * gap
        g = glen + mult * garea[:k]
        grad = np.concatenate([g[1:-1].ravel(), [g[0] @ ta, g[-1] @ tb]])
        return f, grad, length, area

    def bounds(self, m1):
        bd = self.bd
        return ([(None, None)] * (2 * m1)
                + [(bd.s[self.ka], bd.s[self.ka + 1]), (bd.s[self.kb], bd.s[self.kb + 1])])


def _solve_contact(W, bd, v, ka, kb, sa, sb, m, tol, max_outer=60, arc=None):
    if arc is None:
        arc = _contact_start(bd, ka, kb, sa, sb, v, m)
    if arc is None:
        return None
    scale = math.sqrt(v / math.pi)
    hops = 0
    while True:
        prob = _ContactProblem(bd, W, ka, kb, v, scale)
        z = np.concatenate([arc.ravel(), [sa, sb]])
        m1 = len(arc)
        bounds = prob.bounds(m1)
        lam, mu = 1.0 / scale, 4.0 / scale ** 3
        prev = math.inf
        ok = False
        for outer in range(max_outer):
            res = optimize.minimize(lambda y: prob.evaluate(y, lam, mu)[:2], z, jac=True,
                                    method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 20000, "maxcor": 30, "ftol": 1e-16,
                                             "gtol": 1e-11 * scale})
            z = res.x
            # obstacle: closest-point projection of free vertices that fell into W
            X = z[:2 * m1].reshape(m1, 2)
            inside = W.contains(X)
            if np.any(inside):
                for i in np.nonzero(inside)[0]:
                    X[i] = _closest_boundary_point(bd, X[i])
                z[:2 * m1] = X.ravel()
            _, grad, length, area = prob.evaluate(z, lam, mu)
            viol = area - v
            lam -= mu * viol
            if abs(viol) > 1e-8 * v and abs(viol) > 0.25 * prev:
                mu *= 2.0
            prev = abs(viol)
            pg = _projected_norm(z, grad, bounds)
            if abs(viol) <= 1e-8 * v and pg <= tol * scale:
                ok = True
                break
        if not ok:
            raise NumericalError(f"polygon solver did not converge: area error {viol:.3e}, "
                                 f"projected gradient {pg:.3e} after {max_outer} outer iterations")
        X, a, b, ta, tb, sa, sb = prob.unpack(z)
        arc = X
        # an endpoint pinned at an edge end with the gradient pushing outward moves to the next edge
        g_a, g_b = grad[-2], grad[-1]
        moved = False
        if abs(sa - bd.s[ka]) < 1e-12 * bd.L and g_a > 0 and hops < 4 * len(bd.v):
            ka = (ka - 1) % len(bd.v)
            sa = bd.s[ka + 1] - 1e-15 * bd.L
            moved = True
        elif abs(sb - bd.s[kb + 1]) < 1e-12 * bd.L and g_b < 0 and hops < 4 * len(bd.v):
            kb = (kb + 1) % len(bd.v)
            sb = bd.s[kb]
            moved = True
        if not moved:
            break
        hops += 1
    sol = _finish_contact(W, bd, a, X, b, sa, sb, lam, outer + 1, pg)
    sol.diagnostics["edges"] = (int(ka), int(kb), float(sa), float(sb))
    return sol


def _projected_norm(z, grad, bounds):
    g = grad.copy()
    for i, (lo, hi) in enumerate(bounds[-2:], start=len(z) - 2):
        if (z[i] <= lo + 1e-14 * max(1.0, abs(lo)) and g[i] > 0) or (
                z[i] >= hi - 1e-14 * max(1.0, abs(hi)) and g[i] < 0):
            g[i] = 0.0
    return float(np.abs(g).max())


def _closest_boundary_point(bd: _Boundary, x):
    best, bd_pt = math.inf, None
    for k in range(len(bd.v)):
        t = np.clip((x - bd.v[k]) @ bd.edges[k] / bd.lengths[k] ** 2, 0, 1)
        p = bd.v[k] + t * bd.edges[k]
        d = np.linalg.norm(p - x)
        if d < best:
            best, bd_pt = d, p
    return bd_pt


def _on_boundary(W, bd, pts, tol):
    d = np.array([np.linalg.norm(_closest_boundary_point(bd, p) - p) for p in pts])
    return d <= tol


def _finish_contact(W, bd, a, X, b, sa, sb, lam, outer, pg):
    tol = 1e-6 * W.diameter
    # snap near-boundary vertices, then count only arcs outside W
    for i in range(len(X)):
        p = _closest_boundary_point(bd, X[i])
        if np.linalg.norm(p - X[i]) <= tol:
            X[i] = p
    arc = np.vstack([a, X, b])
    flags = _on_boundary(W, bd, arc, tol)
    flags[0] = flags[-1] = True
    seg = np.diff(arc, axis=0)
    mids = 0.5 * (arc[1:] + arc[:-1])
    along = flags[:-1] & flags[1:] & (_on_boundary(W, bd, mids, tol) | W.contains(mids))
    energy = float(np.linalg.norm(seg, axis=1)[~along].sum())
    path = bd.path(sb, sa)
    loop = np.vstack([arc, path]) if len(path) else arc
    contact = np.concatenate([flags, np.ones(len(path), dtype=bool)])
    area = _signed_area(loop)
    if _segments_cross(loop):
        raise NumericalError("polygon solver produced a self-intersecting curve")
    return PolylineRegion(loop, contact, area, energy, "contact",
                          {"multiplier": float(lam), "outer_iterations": outer,
                           "projected_gradient": pg})


def solve_polygon(W: Obstacle | None, v: float, m: int = 256, tol: float = 1e-7):
    """Least perimeter outside a planar obstacle at area v, best of several starts.

    Starts: a regular m-gon far away; a circle engulfing W; arcs of area v
    spanning the diameter of W on either side (contact mode), relaxed by
    L-BFGS-B on an augmented Lagrangian at m and 2m vertices. psi is the
    Richardson estimate of the continuum energy (exact circle perimeters for
    the closed candidates). Returns (PolylineRegion, psi).
    """
    if not v > 0:
        raise ValidationError("area must be positive")
    if m < 8:
        raise ValidationError("need at least 8 vertices")
    r = _polygon_radius_for_area(v, m)
    far = _regular_polygon([0.0, 0.0], r, m)
    cands = []
    # closed curves stand for circles, whose perimeter is known exactly
    if W is None:
        best = PolylineRegion(far, np.zeros(m, dtype=bool), v, _closed_length(far), "free",
                              estimate=ball_perimeter(1, v))
        return best, best.estimate
    if W.n != 1 or W.shape not in ("polygon", "segment"):
        raise ValidationError("solve_polygon needs a planar polygon or segment obstacle")
    shift = np.abs(W.vertices).max() + W.diameter + 2.0 * r
    far = far + np.array([shift, 0.0])
    cands.append(PolylineRegion(far, np.zeros(m, dtype=bool), v, _closed_length(far), "free",
                                estimate=ball_perimeter(1, v)))
    # engulfing circle about the circumcenter proxy (midpoint of the diameter)
    area_W = abs(_signed_area(W.vertices)) if W.shape == "polygon" else 0.0
    vv = W.vertices
    d = np.linalg.norm(vv[:, None] - vv[None], axis=-1)
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    c = 0.5 * (vv[i] + vv[j])
    re = _polygon_radius_for_area(v + area_W, m)
    if re * math.cos(math.pi / m) > np.linalg.norm(vv - c, axis=1).max():
        ring = _regular_polygon(c, re, m)
        cands.append(PolylineRegion(ring, np.zeros(m, dtype=bool), v, _closed_length(ring), "engulf",
                                    estimate=ball_perimeter(1, v + area_W)))
    bd = _Boundary(W)
    starts = set()
    # diameter endpoints, E on either side
    for p_idx, q_idx in ((i, j), (j, i)):
        sa = bd.s[p_idx]
        ka = p_idx
        kb = (q_idx - 1) % len(bd.v)
        starts.add((ka, kb, float(sa), float(bd.s[kb + 1])))
    failures = []
    for ka, kb, sa, sb in sorted(starts):
        try:
            sol = _solve_contact(W, bd, v, ka, kb, sa, sb, m, tol)
        except NumericalError as exc:
            failures.append(f"start on edges ({ka}, {kb}): {exc}")
            continue
        if sol is None:
            continue
        # second solve at 2m vertices from the bisected arc; Richardson in 1/m^2
        arc = sol.vertices[:m + 1]
        mid = 0.5 * (arc[1:] + arc[:-1])
        fine = np.empty((2 * m + 1, 2))
        fine[0::2], fine[1::2] = arc, mid
        ka2, kb2, sa2, sb2 = sol.diagnostics["edges"]
        try:
            sol2 = _solve_contact(W, bd, v, ka2, kb2, sa2, sb2, 2 * m, tol, arc=fine[1:-1])
        except NumericalError as exc:
            failures.append(f"refined start on edges ({ka}, {kb}): {exc}")
            continue
        sol2.estimate = (4.0 * sol2.energy - sol.energy) / 3.0
        sol2.error = abs(sol2.energy - sol.energy) / 3.0
        cands.append(sol2)
    if failures and len(failures) == len(starts):
        raise NumericalError("every contact start failed: " + "; ".join(failures))
    best = min(cands, key=lambda c: (c.estimate, c.mode))
    best.diagnostics["failed_starts"] = failures
    best.diagnostics["candidates"] = {c.mode + f"_{k}": c.estimate for k, c in enumerate(cands)}
    return best, best.estimate


def _closed_length(P):
    return float(np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1).sum())


# ---------------------------------------------------------------------------
# n = 2: axisymmetric CMC shooting


@dataclass
class CMCProfile:
    """Generating curve (rho, z, phi) in arc length; H is the sum of principal curvatures."""

    H: float
    latitude: float | None
    s: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    volume: float
    area: float
    young_angle: float
    closure: float
    ode_residual: float
    center: np.ndarray | None = None

    def as_dict(self):
        return {"H": self.H, "latitude": self.latitude, "volume": self.volume, "area": self.area,
                "young_angle_error": self.young_angle, "closure": self.closure,
                "ode_residual": self.ode_residual}


def _cmc_rhs(s, y, H):
    rho, z, phi, A, V = y
    return [math.cos(phi), math.sin(phi), H - math.sin(phi) / rho,
            2.0 * math.pi * rho, math.pi * rho * rho * math.sin(phi)]


def _ev_top(s, y, H):
    return y[2] - math.pi


_ev_top.terminal, _ev_top.direction = True, 1


def _ev_turn(s, y, H):
    # phi falling back through pi/2: the curve turns away from the axis at a neck
    return y[2] - 0.5 * math.pi


_ev_turn.terminal, _ev_turn.direction = True, -1

_ODE = {"method": "DOP853", "rtol": 1e-12, "atol": 1e-13}


def _shoot(H, y0, smax, dense=False):
    return integrate.solve_ivp(_cmc_rhs, (0.0, smax), y0, args=(H,), events=(_ev_top, _ev_turn),
                               dense_output=dense, **_ODE)


def _miss(sol):
    """Signed closure miss: +rho where phi reaches pi, -rho at a neck short of the axis.

    Both vanish at the curvature that closes the curve smoothly on the axis.
    """
    if sol.status == -1 and sol.y[0, -1] < 1e-9 * max(1.0, abs(sol.y[1, -1])) and sol.y[2, -1] < math.pi:
        # step-size collapse at the axis with phi < pi: phi' -> -inf there, so this is a neck
        return -float(sol.y[0, -1])
    if sol.status != 1:
        raise NumericalError("shooting curve neither closed nor turned within its length budget")
    return float(sol.y[0, -1]) if len(sol.t_events[0]) else -float(sol.y[0, -1])


def _attached_start(theta):
    return [math.cos(theta), math.sin(theta), theta, 0.0, 0.0]


def _pole_start(H, s0):
    return [s0, H * s0 * s0 / 4.0, H * s0 / 2.0, math.pi * s0 * s0, math.pi * H * s0 ** 4 / 8.0]


def _solve_H(theta, H0):
    """Curvature closing the curve from latitude theta smoothly on the axis."""
    y0 = _attached_start(theta)

    def miss(H):
        return _miss(_shoot(H, y0, 40.0 / H + 20.0))

    lo, hi = H0 / 2.0, H0 * 2.0
    flo, fhi = miss(lo), miss(hi)
    k = 0
    while flo > 0 and k < 60:
        lo, hi, fhi = lo / 2.0, lo, flo
        flo = miss(lo)
        k += 1
    while fhi < 0 and k < 120:
        lo, hi, flo = hi, hi * 2.0, fhi
        fhi = miss(hi)
        k += 1
    if flo > 0 or fhi < 0:
        raise NumericalError(f"shooting bracket failure at latitude {theta:.6g}")
    return optimize.brentq(miss, lo, hi, xtol=1e-15 * hi, rtol=4e-15, maxiter=200)


def _attached_volume(theta, H):
    sol = _shoot(H, _attached_start(theta), 40.0 / H + 20.0)
    y = sol.y[:, -1]
    st = math.sin(theta)
    # close the loop down the axis and back along the obstacle from its pole
    vol = y[4] - math.pi * (2.0 / 3.0 - st + st ** 3 / 3.0)
    return vol, y[3], sol


def _profile_from(sol, H, theta, scale):
    dense = integrate.solve_ivp(_cmc_rhs, (0.0, sol.t[-1]), sol.y[:, 0], args=(H,),
                                dense_output=True, **_ODE)
    s = np.linspace(0.0, dense.t[-1], 801)
    Y = dense.sol(s)
    # CMC residual on the curve: curvature from finite differences of the dense output
    h = 1e-3 * dense.t[-1]
    inner = s[(s > 2 * h) & (s < dense.t[-1] - 2 * h)]
    ph = [dense.sol(inner + k * h)[2] for k in (-2, -1, 1, 2)]
    dphi = (ph[0] - 8 * ph[1] + 8 * ph[2] - ph[3]) / (12 * h)
    Yi = dense.sol(inner)
    far = Yi[0] > 1e-3 * dense.t[-1]
    res = np.abs(dphi + np.sin(Yi[2]) / Yi[0] - H)[far]
    return s * scale, Y[0] * scale, Y[1] * scale, Y[2], float(res.max()) if len(res) else 0.0


def solve_axisym(W: Obstacle | None, v: float):
    """Axisymmetric volume-v CMC surface outside a ball, meeting it orthogonally.

    The curve starts at latitude theta on the ball along the outward radius
    (Young's law) and must close smoothly on the axis; H is found by bracketed
    shooting for each theta, and theta by a bracketed secant iteration on the
    enclosed volume. Returns (CMCProfile, psi) with psi the area outside W.
    """
    if not v > 0:
        raise ValidationError("volume must be positive")
    if W is None:
        return _solve_free(v)
    if W.shape != "ball" or W.n != 2:
        raise ValidationError("solve_axisym needs a ball obstacle with n = 2")
    R = float(W.radii[0])
    vs = v / R ** 3
    rv = (3.0 * vs / (4.0 * math.pi)) ** (1.0 / 3.0)
    cache = {}

    def state(theta):
        if theta not in cache:
            H0 = cache.get("H", 2.0 / max(rv, 1e-3))
            H = _solve_H(theta, H0)
            cache["H"] = H
            cache[theta] = (H, *_attached_volume(theta, H))
        return cache[theta]

    def g(theta):
        return math.log(state(theta)[1]) - math.log(vs)

    t0 = math.atan(1.0 / rv)
    lo, hi = 0.5 * t0, min(2.0 * t0, 1.5)
    k = 0
    while g(lo) < 0 and k < 40:
        lo *= 0.5
        k += 1
    while g(hi) > 0 and k < 80:
        hi = 0.5 * (hi + 0.5 * math.pi)
        k += 1
    if g(lo) < 0 or g(hi) > 0:
        raise NumericalError("volume iteration could not bracket the attachment latitude")
    try:
        theta = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4e-15, maxiter=200)
    except RuntimeError as exc:
        raise NumericalError(f"volume iteration did not converge: {exc}") from exc
    H, vol, area, sol = state(theta)
    if sol.y[1, -1] <= 1.0:
        raise NumericalError("profile does not clear the obstacle on the axis")
    s, rho, z, phi, res = _profile_from(sol, H, theta, R)
    center = W.centers[0]
    prof = CMCProfile(H / R, theta, s, rho, z, phi, vol * R ** 3, area * R ** 2,
                      0.0, abs(_miss(sol)), res / R, center)
    return prof, prof.area


def _solve_free(v):
    def g(logH):
        H = math.exp(logH)
        sol = _shoot(H, _pole_start(H, 1e-6 / H), 40.0 / H)
        return math.log(sol.y[4, -1]) - math.log(v)

    rv = (3.0 * v / (4.0 * math.pi)) ** (1.0 / 3.0)
    lh = optimize.brentq(g, math.log(0.5 * 2 / rv), math.log(2.0 * 2 / rv), xtol=1e-15, rtol=4e-15)
    H = math.exp(lh)
    sol = _shoot(H, _pole_start(H, 1e-6 / H), 40.0 / H)
    s, rho, z, phi, res = _profile_from(sol, H, None, 1.0)
    y = sol.y[:, -1]
    prof = CMCProfile(H, None, s, rho, z, phi, float(y[4]), float(y[3]), 0.0,
                      abs(_miss(sol)), res)
    return prof, prof.area


def orthogonal_sphere(theta, R=1.0):
    """Sphere meeting the ball of radius R orthogonally at latitude theta: (a, volume, area outside)."""
    a = R / math.tan(theta)
    h = math.hypot(R, a)
    cap_s = a - a * a / h           # height of the sphere's cap inside the ball
    cap_b = R - R * R / h           # height of the ball's cap inside the sphere
    vol = 4.0 / 3.0 * math.pi * a ** 3 - math.pi * cap_s ** 2 * (3 * a - cap_s) / 3.0 \
        - math.pi * cap_b ** 2 * (3 * R - cap_b) / 3.0
    area = 4.0 * math.pi * a * a - 2.0 * math.pi * a * cap_s
    return a, vol, area


# ---------------------------------------------------------------------------
# glued competitors


@dataclass
class Competitor:
    r: float
    v: float
    energy_gap: float
    inside: float
    outside_gap: float
    mismatch: float
    volume_change: float | None
    gap_matched_volume: float | None
    residual: float
    halfspace_height: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _cap_area(n, rho, sin_psi):
    """Area of the cap {angle < psi} of the n-sphere of radius rho, psi <= pi/2."""
    w = unit_ball_volume(n)
    if n == 1:
        return 2.0 * rho * math.asin(sin_psi)
    integral = 0.5 * special.beta(n / 2.0, 0.5) * special.betainc(n / 2.0, 0.5, sin_psi ** 2)
    return n * w * rho ** n * integral


def _halfspace_coefficients(F: ExteriorMinimalGraph):
    if F.c == 0.0:
        return F.f_att, 0.0
    return F.height, -F.c / (F.n - 2)


def build_competitor(F: ExteriorMinimalGraph, W: Obstacle, r: float, v: float) -> Competitor:
    """Glue F inside the cylinder C_r to a volume-v ball outside it.

    G_r is the half-space below a + b r^{2-n} (the radial expansion of F,
    which is axisymmetric so the dipole term vanishes). The ball touches the
    plane of G_r from below on the axis. energy_gap = P(F_{r,v}; Omega) - P(B^(v))
    splits into P(F; C_r - W) - [cap of the ball inside C_r] + mismatch on the
    lateral boundary. v = inf gives the limit of these terms.
    """
    n = F.n
    w = unit_ball_volume(n)
    if r <= F.rho_att:
        raise ValidationError("cylinder radius must exceed the attachment radius")
    from .residue import _containing_radius
    if r <= _containing_radius(W, F.axis):
        raise ValidationError("cylinder must contain the obstacle")
    a, b = _halfspace_coefficients(F)
    top = a + b * r ** (2.0 - n)
    f_r = float(F.profile([r])[0])
    res = F.residual(r)
    inside = w * r ** n - res
    # finite cylinder heights (alpha, beta) containing dF, dG_r and W with unit margins
    zc = W.centers @ F.axis
    lo = min(float((zc - W.radii).min()), top, f_r, F.f_att) - 1.0
    lat = n * w * r ** (n - 1)
    if math.isinf(v):
        drop = 0.0
        outside_gap = -w * r ** n
        vol_change = None
        matched = None
    else:
        rho_b = (v / unit_ball_volume(n + 1)) ** (1.0 / (n + 1))
        if rho_b <= r:
            raise ValidationError("ball too small to span the cylinder")
        drop = r * r / (rho_b + math.sqrt(rho_b * rho_b - r * r))
        if top - drop <= lo or top - 2 * rho_b + drop >= lo:
            raise ValidationError("ball too small for the cylinder height")
        outside_gap = -_cap_area(n, rho_b, r / rho_b)
        vol_change = None
        matched = None
        if F.c == 0.0 and W.shape == "ball":
            # |F cap C| - |B cap C| = int over the disk of (f - ball top) minus the part of W below f
            Rw = float(W.radii[0])
            t = float(F.f_att - zc[0])
            depth = Rw + t
            wv = unit_ball_volume(n + 1) * Rw ** (n + 1) * _cap_fraction(n, depth / Rw)
            gap_col, _ = integrate.quad(
                lambda p: n * w * p ** (n - 1) * (p * p / (rho_b + math.sqrt(rho_b * rho_b - p * p))),
                0.0, r, epsabs=0.0, epsrel=1e-13)
            vol_change = gap_col + (F.f_att - top) * w * r ** n - wv
            if vol_change > -v:
                # P(B^(v)) - P(B^(v + dv)) without cancellation
                ratio = math.log1p(vol_change / v) * n / (n + 1.0)
                matched = -ball_perimeter(n, v) * math.expm1(ratio)
    mismatch = lat * abs(f_r - (top - drop))
    gap = inside + outside_gap + mismatch
    if matched is not None:
        matched = gap + matched
    return Competitor(r, v, gap, inside, outside_gap, mismatch, vol_change, matched, res, top)


def _cap_fraction(n, h):
    """Fraction of the unit (n+1)-ball below height h - 1 (h in [0, 2])."""
    # regularized incomplete beta in the squared half-chord
    if h <= 0:
        return 0.0
    if h >= 2:
        return 1.0
    x = 1.0 - (1.0 - h) ** 2
    half = 0.5 * special.betainc((n + 2) / 2.0, 0.5, x)
    return half if h <= 1 else 1.0 - half


# ---------------------------------------------------------------------------
# expansion study


@dataclass
class ExpansionStudy:
    volumes: np.ndarray
    psi: np.ndarray
    ball: np.ndarray
    gap: np.ndarray
    intercept: float
    slope: float
    fit_residual: float
    intercept_stderr: float
    target: float
    exponent: float
    solver: str
    checks: dict

    def rows(self):
        return [(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(self.volumes, self.psi, self.ball, self.gap)]

    def summary(self):
        return {"intercept": self.intercept, "coefficient": self.slope,
                "fit_residual": self.fit_residual, "intercept_stderr": self.intercept_stderr,
                "target": self.target, "exponent": self.exponent, "solver": self.solver,
                "checks": self.checks}


def _pick_solver(W, n, solver):
    if solver == "auto":
        solver = "polygon" if n == 1 else "axisym"
    if solver == "polygon":
        return solver, lambda v: solve_polygon(W, v)[1]
    if solver == "axisym":
        return solver, lambda v: solve_axisym(W, v)[1]
    raise ValidationError(f"unknown solver {solver!r}")


def expansion_study(W: Obstacle | None, v_list, solver: str = "auto", n: int | None = None) -> ExpansionStudy:
    """psi(v) - P(B^(v)) on a volume grid and a fit -R + c1 v^{-1/(n+1)}."""
    v = np.asarray(v_list, dtype=float)
    if v.ndim != 1 or len(v) < 3 or np.any(v <= 0) or np.any(np.diff(v) <= 0):
        raise ValidationError("need at least three increasing positive volumes")
    if v[-1] / v[0] < 100.0 * (1 - 1e-12):
        raise ValidationError("volume grid must span at least two decades")
    if W is not None:
        n = W.n
    elif n is None:
        raise ValidationError("give n when there is no obstacle")
    name, run = _pick_solver(W, n, solver)

    def one(x):
        try:
            return run(float(x))
        except (NumericalError, ValidationError) as exc:
            raise type(exc)(f"solver failed at v = {x:.17g}: {exc}") from exc

    psi = np.array(pmap(one, v))
    ball = np.array([ball_perimeter(n, x) for x in v])
    gap = psi - ball
    p = -1.0 / (n + 1)
    A = np.stack([np.ones_like(v), v ** p], axis=1)
    coef, *_ = np.linalg.lstsq(A, gap, rcond=None)
    resid = gap - A @ coef
    dof = max(len(v) - 2, 1)
    cov = np.linalg.inv(A.T @ A) * float(resid @ resid) / dof
    if W is None:
        target = 0.0
    else:
        target = -maximize_residue(W).lower
    checks = {"below_ball": bool(np.all(psi <= ball * (1 + 1e-12)))}
    convex = W is None or W.shape in ("ball", "segment") or (
        W.shape == "polygon" and _is_convex(W.vertices))
    if convex:
        checks["above_half_space"] = bool(np.all(psi >= ball / 2.0 ** (1.0 / (n + 1))))
    if W is not None:
        cap = unit_ball_volume(n) * (0.5 * W.diameter) ** n
        checks["gap_above_cap"] = bool(np.all(gap >= -cap * (1 + 1e-12)))
    return ExpansionStudy(v, psi, ball, gap, float(coef[0]), float(coef[1]),
                          float(np.abs(resid).max()), float(math.sqrt(max(cov[0, 0], 0.0))),
                          target, p, name, checks)


def _is_convex(v):
    e = np.roll(v, -1, axis=0) - v
    cr = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cr >= 0) or np.all(cr <= 0))
