"""Obstacles, residual perimeters and isoperimetric residues.

For a set F whose boundary outside the obstacle W is asymptotically a
hyperplane orthogonal to nu, the residual perimeter is the decreasing limit
of omega_n R^n - P(F; C_R \\ W) over cylinders C_R of radius R about nu.
When the boundary is a radial graph f over {rho_att < |x'|}, that quantity
equals

    omega_n rho_att^n - int_{rho_att}^R n omega_n rho^{n-1} (sqrt(1 + f'^2) - 1) d rho.

The search family is the planes orthogonal to nu (residual = section area)
plus, for n >= 3, axisymmetric catenoidal graphs f' = c / sqrt(rho^{2n-2} - c^2)
meeting a ball of W orthogonally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from . import NumericalError, ValidationError
from .geometry import unit_ball_volume
from .parallel import pmap

SHAPES = ("ball", "axis_union", "polygon", "segment")
SPEC_KEYS = {"shape", "n", "center", "radius", "centers", "radii", "axis", "vertices", "endpoints"}


# ---------------------------------------------------------------------------
# obstacles


class Obstacle:
    """Compact obstacle W in R^{n+1}."""

    def __init__(self, shape: str, n: int, **params):
        if shape not in SHAPES:
            raise ValidationError(f"unsupported shape {shape!r}; expected one of {', '.join(SHAPES)}")
        self.shape, self.n = shape, int(n)
        if self.n < 1:
            raise ValidationError("n must be at least 1")
        self.params = params
        if shape == "ball":
            c = np.asarray(params["center"], dtype=float)
            r = float(params["radius"])
            if c.shape != (self.n + 1,):
                raise ValidationError("ball center must have n+1 coordinates")
            if r <= 0:
                raise ValidationError("ball radius must be positive")
            self.centers, self.radii = c[None, :], np.array([r])
            self.axis = np.eye(self.n + 1)[-1]
        elif shape == "axis_union":
            c = np.atleast_2d(np.asarray(params["centers"], dtype=float))
            r = np.asarray(params["radii"], dtype=float).ravel()
            if c.shape[1] != self.n + 1 or len(c) != len(r) or len(r) == 0:
                raise ValidationError("axis_union needs matching centers (k, n+1) and radii (k)")
            if np.any(r <= 0):
                raise ValidationError("radii must be positive")
            axis = params.get("axis")
            if axis is None:
                d = c - c[0]
                k = int(np.argmax(np.linalg.norm(d, axis=1)))
                axis = d[k] if np.linalg.norm(d[k]) > 0 else np.eye(self.n + 1)[-1]
            axis = np.asarray(axis, dtype=float)
            axis = axis / np.linalg.norm(axis)
            off = (c - c[0]) - np.outer((c - c[0]) @ axis, axis)
            scale = max(1.0, float(np.abs(c).max()), float(r.max()))
            if np.abs(off).max() > 1e-12 * scale:
                raise ValidationError("centers are not on a common axis")
            self.centers, self.radii, self.axis = c, r, axis
        elif shape == "polygon":
            if self.n != 1:
                raise ValidationError("polygons are planar obstacles (n = 1)")
            v = np.asarray(params["vertices"], dtype=float)
            if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
                raise ValidationError("polygon needs at least 3 planar vertices")
            if abs(_shoelace(v)) <= 1e-14 * float(np.ptp(v, axis=0).max()) ** 2:
                raise ValidationError("polygon has zero area")
            self.vertices = v
        else:
            if self.n != 1:
                raise ValidationError("segments are planar obstacles (n = 1)")
            p = np.asarray(params["endpoints"], dtype=float)
            if p.shape != (2, 2) or np.allclose(p[0], p[1]):
                raise ValidationError("segment needs two distinct planar endpoints")
            self.vertices = p

    # constructors ---------------------------------------------------------
    @classmethod
    def ball(cls, radius=1.0, n=2, center=None):
        center = np.zeros(n + 1) if center is None else center
        return cls("ball", n, center=center, radius=radius)

    @classmethod
    def union(cls, centers, radii, n=None, axis=None):
        c = np.atleast_2d(np.asarray(centers, dtype=float))
        return cls("axis_union", c.shape[1] - 1 if n is None else n, centers=c, radii=radii, axis=axis)

    @classmethod
    def polygon(cls, vertices):
        return cls("polygon", 1, vertices=vertices)

    @classmethod
    def segment(cls, p, q):
        return cls("segment", 1, endpoints=[p, q])

    def scaled(self, lam: float):
        if lam <= 0:
            raise ValidationError("scale factor must be positive")
        if self.shape == "ball":
            return Obstacle.ball(lam * self.radii[0], self.n, lam * self.centers[0])
        if self.shape == "axis_union":
            return Obstacle.union(lam * self.centers, lam * self.radii, self.n, self.axis)
        if self.shape == "polygon":
            return Obstacle.polygon(lam * self.vertices)
        return Obstacle.segment(lam * self.vertices[0], lam * self.vertices[1])

    # geometry -------------------------------------------------------------
    @property
    def diameter(self) -> float:
        if self.shape in ("polygon", "segment"):
            v = self.vertices
            return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))
        c, r = self.centers, self.radii
        d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1) + r[:, None] + r[None, :]
        return float(d.max())

    @property
    def is_convex_ball(self):
        return self.shape == "ball"

    def axis_options(self):
        if self.shape in ("ball", "axis_union"):
            return [self.axis]
        return []

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.shape in ("ball", "axis_union"):
            d = np.linalg.norm(x[:, None, :] - self.centers[None, :, :], axis=-1)
            return np.any(d <= self.radii * (1.0 + tol), axis=1)
        if self.shape == "polygon":
            return _point_in_polygon(self.vertices, x) | (_polygon_boundary_distance(self.vertices, x)
                                                          <= tol * self.diameter)
        p, q = self.vertices
        t = np.clip(((x - p) @ (q - p)) / ((q - p) @ (q - p)), 0, 1)
        return np.linalg.norm(p + t[:, None] * (q - p) - x, axis=1) <= tol * self.diameter

    def as_dict(self):
        out = {"shape": self.shape, "n": self.n, "diameter": self.diameter}
        if self.shape in ("ball", "axis_union"):
            out.update(centers=self.centers.tolist(), radii=self.radii.tolist(), axis=self.axis.tolist())
        else:
            out["vertices"] = self.vertices.tolist()
        return out


def _shoelace(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _point_in_polygon(v, pts):
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = v[:, 0][None, :], v[:, 1][None, :]
    x1, y1 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (np.sum(cond & (x < xi), axis=1) % 2) == 1


def _polygon_boundary_distance(v, pts):
    p, q = v, np.roll(v, -1, axis=0)
    d = q - p
    t = np.clip(np.einsum("kij,ij->ki", pts[:, None, :] - p[None], d) / np.einsum("ij,ij->i", d, d), 0, 1)
    foot = p[None] + t[..., None] * d[None]
    return np.linalg.norm(foot - pts[:, None, :], axis=-1).min(axis=1)


def _parse_vectors(text):
    rows = [r.strip() for r in text.split(";") if r.strip()]
    return [[float(x) for x in r.replace(",", " ").split()] for r in rows]


def parse_obstacle(text: str) -> Obstacle:
    """Parse `key = value` lines (vectors: comma separated, rows: semicolon separated)."""
    fields = {}
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {k}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        fields[key.lower()] = val
    if "shape" not in fields:
        raise ValidationError("obstacle spec is missing 'shape'")
    unknown = sorted(set(fields) - SPEC_KEYS)
    if unknown:
        raise ValidationError(f"unknown obstacle spec keys: {', '.join(unknown)}")
    shape = fields["shape"].lower()
    try:
        n = int(fields["n"]) if "n" in fields else None
        if shape == "ball":
            center = _parse_vectors(fields["center"])[0] if "center" in fields else None
            n = n if n is not None else (len(center) - 1 if center else 2)
            return Obstacle.ball(float(fields.get("radius", "1")), n, center)
        if shape == "axis_union":
            centers = _parse_vectors(fields["centers"])
            radii = [float(x) for x in fields["radii"].replace(",", " ").split()]
            axis = _parse_vectors(fields["axis"])[0] if "axis" in fields else None
            return Obstacle.union(centers, radii, n, axis)
        if shape == "polygon":
            return Obstacle.polygon(_parse_vectors(fields["vertices"]))
        if shape == "segment":
            p = _parse_vectors(fields["endpoints"])
            if len(p) != 2:
                raise ValidationError("segment needs two endpoints")
            return Obstacle.segment(p[0], p[1])
    except KeyError as exc:
        raise ValidationError(f"obstacle spec is missing {exc.args[0]!r}") from exc
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed obstacle spec: {exc}") from exc
    raise ValidationError(f"unsupported shape {shape!r}; expected one of {', '.join(SHAPES)}")


def load_obstacle(path) -> Obstacle:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{path}: no such obstacle file")
    return parse_obstacle(p.read_text())


# ---------------------------------------------------------------------------
# unions of n-disks with collinear centers


def _cap_integral(n, rho, x0, x1):
    """int_{x0}^{x1} omega_{n-1} (rho^2 - x^2)^{(n-1)/2} dx for |x0|, |x1| <= rho."""
    if n == 1:
        return x1 - x0
    if n == 2:
        def F(x):
            return x * math.sqrt(max(rho * rho - x * x, 0.0)) + rho * rho * math.asin(max(-1.0, min(1.0, x / rho)))
        return F(x1) - F(x0)
    if n == 3:
        return math.pi * (rho * rho * (x1 - x0) - (x1 ** 3 - x0 ** 3) / 3.0)
    w = unit_ball_volume(n - 1)
    val, _ = integrate.quad(lambda x: w * max(rho * rho - x * x, 0.0) ** ((n - 1) / 2.0), x0, x1,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def union_disk_measure(n, s, r):
    """H^n of a union of n-disks whose centers lie on one line at coordinates s, radii r."""
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    keep = r > 0
    s, r = s[keep], r[keep]
    if len(r) == 0:
        return 0.0
    br = set((s - r).tolist()) | set((s + r).tolist())
    for i in range(len(r)):
        for j in range(i + 1, len(r)):
            if s[i] != s[j]:
                x = (r[i] ** 2 - r[j] ** 2 - s[i] ** 2 + s[j] ** 2) / (2.0 * (s[j] - s[i]))
                br.add(float(x))
    br = np.array(sorted(br))
    lo, hi = float((s - r).min()), float((s + r).max())
    br = br[(br >= lo) & (br <= hi)]
    total = 0.0
    for a, b in zip(br[:-1], br[1:]):
        if b <= a:
            continue
        m = 0.5 * (a + b)
        h2 = r * r - (m - s) ** 2
        k = int(np.argmax(h2))
        if h2[k] <= 0:
            continue
        total += _cap_integral(n, r[k], a - s[k], b - s[k])
    return total


# ---------------------------------------------------------------------------
# sections and projections


def _union_coords(W):
    t = (W.centers - W.centers[0]) @ W.axis
    return t, W.radii


def _union_section(W, theta, d):
    t, r = _union_coords(W)
    dist = t * math.cos(theta) - d
    rr2 = r * r - dist * dist
    return union_disk_measure(W.n, t * math.sin(theta), np.sqrt(np.clip(rr2, 0.0, None)) * (rr2 > 0))


def _union_projection(W, theta):
    t, r = _union_coords(W)
    return union_disk_measure(W.n, t * math.sin(theta), r)


def _line_polygon_length(v, p, u):
    """Length of {p + t u} inside the polygon with vertices v."""
    q = np.roll(v, -1, axis=0)
    e = q - v
    den = u[0] * e[:, 1] - u[1] * e[:, 0]
    w = v - p
    ok = np.abs(den) > 1e-300
    t = np.where(ok, (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / np.where(ok, den, 1.0), np.nan)
    sp = np.where(ok, (w[:, 0] * u[1] - w[:, 1] * u[0]) / np.where(ok, den, 1.0), np.nan)
    hit = ok & (sp >= -1e-14) & (sp <= 1 + 1e-14)
    ts = np.unique(np.round(t[hit], 14))
    if len(ts) < 2:
        return 0.0
    mids = 0.5 * (ts[:-1] + ts[1:])
    inside = _point_in_polygon(v, p[None, :] + mids[:, None] * u[None, :])
    return float(np.sum(np.diff(ts)[inside]))


def _polygon_section(v):
    best = 0.0
    k = len(v)
    for i in range(k):
        for j in range(i + 1, k):
            d = v[j] - v[i]
            L = float(np.linalg.norm(d))
            if L == 0:
                continue
            best = max(best, _line_polygon_length(v, v[i], d / L))
    # lines through one vertex at scanned angles, refined
    for i in range(k):
        def neg(a, i=i):
            return -_line_polygon_length(v, v[i], np.array([math.cos(a), math.sin(a)]))
        angles = np.linspace(0, math.pi, 361)
        vals = [-neg(a) for a in angles]
        j = int(np.argmax(vals))
        best = max(best, vals[j])
        res = optimize.minimize_scalar(neg, bounds=(angles[max(j - 1, 0)], angles[min(j + 1, 360)]),
                                       method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def section_sup(W: Obstacle) -> float:
    """Largest H^n measure of a hyperplane section of W."""
    n = W.n
    if W.shape == "ball":
        return unit_ball_volume(n) * W.radii[0] ** n
    if W.shape == "segment":
        return W.diameter
    if W.shape == "polygon":
        return _polygon_section(W.vertices)
    return _union_section_sup(W)[0]


def _union_section_sup(W):
    scale = W.diameter
    t, r = _union_coords(W)
    best = (-1.0, 0.0, 0.0)
    thetas = np.linspace(0.0, 0.5 * math.pi, 91)
    cands = []
    for th in thetas:
        c = t * math.cos(th)
        ds = np.linspace(float((c - r).min()), float((c + r).max()), 201)
        vals = [_union_section(W, th, d) for d in ds]
        j = int(np.argmax(vals))
        cands.append((vals[j], th, ds[j]))
        # section centered on each ball is a natural candidate
        for ck in c:
            cands.append((_union_section(W, th, ck), th, ck))
    cands.sort(key=lambda x: (-x[0], x[1], x[2]))
    for val, th, d in cands[:6]:
        res = optimize.minimize(lambda p: -_union_section(W, float(np.clip(p[0], 0, 0.5 * math.pi)), p[1] * scale),
                                [th, d / scale], method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15 * scale ** W.n, "maxiter": 4000})
        v2 = -float(res.fun)
        if v2 > val:
            val, th, d = v2, float(np.clip(res.x[0], 0, 0.5 * math.pi)), float(res.x[1] * scale)
        if val > best[0]:
            best = (val, th, d)
    return best


def projection_sup(W: Obstacle) -> float:
    """Largest H^n measure of an orthogonal projection of W onto a hyperplane."""
    n = W.n
    if W.shape == "ball":
        return unit_ball_volume(n) * W.radii[0] ** n
    if W.shape in ("segment", "polygon"):
        return W.diameter
    return _union_projection_sup(W)[0]


def _union_projection_sup(W):
    thetas = np.linspace(0.0, 0.5 * math.pi, 181)
    vals = [_union_projection(W, th) for th in thetas]
    j = int(np.argmax(vals))
    best = (vals[j], thetas[j])
    lo, hi = thetas[max(j - 1, 0)], thetas[min(j + 1, len(thetas) - 1)]
    res = optimize.minimize_scalar(lambda th: -_union_projection(W, th), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-13})
    if -res.fun > best[0]:
        best = (-float(res.fun), float(res.x))
    return best


def isodiametric_bound(W: Obstacle) -> float:
    return unit_ball_volume(W.n) * (0.5 * W.diameter) ** W.n


# ---------------------------------------------------------------------------
# exterior minimal graphs


class ExteriorMinimalGraph:
    """Axisymmetric minimal graph over {|x'| > rho_att} in nu-perp.

    f'(rho) = c / sqrt(rho^{2n-2} - c^2) (c = 0 is a plane at height f_att);
    the quantity rho^{n-1} f' / sqrt(1 + f'^2) = c is the first integral.
    """

    def __init__(self, n: int, axis, rho_att: float, f_att: float, c: float = 0.0,
                 attach_angle: float | None = None, ball_index: int | None = None):
        self.n = int(n)
        self.axis = np.asarray(axis, dtype=float)
        self.rho_att, self.f_att, self.c = float(rho_att), float(f_att), float(c)
        self.attach_angle = attach_angle
        self.ball_index = ball_index
        if self.rho_att < 0:
            raise ValidationError("attachment radius must be nonnegative")
        if self.c != 0.0:
            if self.n < 3:
                raise ValidationError("catenoidal graphs are bounded only for n >= 3")
            if self.rho_att ** (self.n - 1) <= abs(self.c):
                raise ValidationError("need rho_att^(n-1) > |c|")

    @classmethod
    def plane(cls, n, axis, height, rho_att=0.0):
        return cls(n, axis, rho_att, height, 0.0)

    def slope(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.c == 0.0:
            return np.zeros_like(rho)
        return self.c / np.sqrt(rho ** (2 * self.n - 2) - self.c ** 2)

    def first_integral(self, rho):
        fp = self.slope(rho)
        return np.asarray(rho) ** (self.n - 1) * fp / np.sqrt(1.0 + fp * fp)

    def excess_density(self, rho):
        """n omega_n rho^{n-1} (sqrt(1 + f'^2) - 1), without cancellation."""
        rho = np.asarray(rho, dtype=float)
        fp2 = self.slope(rho) ** 2
        return self.n * unit_ball_volume(self.n) * rho ** (self.n - 1) * fp2 / (np.sqrt(1.0 + fp2) + 1.0)

    def profile(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if self.c == 0.0:
            out = np.full_like(rho, self.f_att)
        else:
            if np.any(rho < self.rho_att):
                raise ValidationError("profile is defined beyond the attachment radius only")
            # cumulative Gauss-Legendre between sorted sample radii (the slope is smooth there)
            top = float(rho.max())
            grid = self.rho_att * np.geomspace(1.0, max(top / self.rho_att, 1.0 + 1e-15), 65)[1:]
            edges, inv = np.unique(np.concatenate([[self.rho_att], grid, rho]), return_inverse=True)
            x, w = np.polynomial.legendre.leggauss(24)
            half = 0.5 * np.diff(edges)
            nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
            cum = np.concatenate([[0.0], np.cumsum((self.slope(nodes) @ w) * half)])
            out = self.f_att + cum[inv[-len(rho):]]
        return out

    @property
    def height(self):
        """Limit of f at infinity."""
        if self.c == 0.0:
            return self.f_att
        val, _ = integrate.quad(self.slope, self.rho_att, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
        return self.f_att + val

    def tail_excess(self, R):
        """int_R^inf of the excess density (adaptive quadrature on the infinite tail)."""
        if self.c == 0.0:
            return 0.0
        val, _ = integrate.quad(self.excess_density, R, np.inf, epsabs=1e-16, epsrel=1e-13, limit=400)
        return val

    def residual(self, R):
        """omega_n R^n - P(F; C_R - W) for R beyond the attachment radius."""
        w = unit_ball_volume(self.n)
        if R < self.rho_att:
            raise ValidationError("cylinder radius inside the attachment circle")
        if self.c == 0.0 or R == self.rho_att:
            return w * self.rho_att ** self.n
        val, _ = integrate.quad(self.excess_density, self.rho_att, R, epsabs=1e-16, epsrel=1e-13, limit=400)
        return w * self.rho_att ** self.n - val

    def limit(self):
        return unit_ball_volume(self.n) * self.rho_att ** self.n - (self.tail_excess(self.rho_att)
                                                                     if self.c else 0.0)

    def as_dict(self):
        return {"n": self.n, "axis": self.axis.tolist(), "rho_att": self.rho_att, "f_att": self.f_att,
                "catenoid_c": self.c, "height": self.height, "attach_angle": self.attach_angle}


def attached_catenoid(W: Obstacle, k: int, beta: float):
    """Graph meeting ball k of W orthogonally at latitude beta (Young's law)."""
    n = W.n
    t, r = _union_coords(W) if W.shape == "axis_union" else (np.zeros(1), W.radii)
    rho_k, h_k = float(r[k]), float(t[k])
    rho_att = rho_k * math.cos(beta)
    f_att = h_k + rho_k * math.sin(beta)
    c = rho_att ** (n - 1) * math.sin(beta)
    return ExteriorMinimalGraph(n, W.axis, rho_att, f_att, c, attach_angle=beta, ball_index=k)


def young_residual(F: ExteriorMinimalGraph):
    """|nu_F . nu_W| at the attachment circle (zero when Young's law holds)."""
    beta = F.attach_angle
    fp = float(F.slope(F.rho_att))
    return abs(-fp * math.cos(beta) + math.sin(beta)) / math.sqrt(1 + fp * fp)


def _graph_admissible(F: ExteriorMinimalGraph, W: Obstacle, samples=400):
    """The graph part stays outside W (except at its own attachment circle)."""
    t, r = _union_coords(W) if W.shape == "axis_union" else (np.zeros(1), W.radii)
    far = float((np.abs(t) + r).max()) * 1.5 + F.rho_att
    rho = F.rho_att + (far - F.rho_att) * np.linspace(0, 1, samples)[1:] ** 2
    z = F.profile(rho)
    d = np.hypot(rho[:, None], z[:, None] - t[None, :])
    return bool(np.all(d >= r[None, :] * (1 - 1e-12)))


# ---------------------------------------------------------------------------
# residual perimeter and its limit


@dataclass
class ResidualPerimeter:
    radii: np.ndarray
    values: np.ndarray
    limit: float
    limit_direct: float
    monotone: bool

    def as_dict(self):
        return {"radius": self.radii.tolist(), "value": self.values.tolist(),
                "limit": self.limit, "limit_direct": self.limit_direct}


def residual_perimeter(F: ExteriorMinimalGraph, W: Obstacle, R_list) -> ResidualPerimeter:
    """Residual perimeters at the given cylinder radii and their limit.

    The limit is a two-point Richardson extrapolation of the last two values
    in R^{2-n} (the decay order of the excess of a catenoidal tail); the
    direct route integrates the tail to infinity.
    """
    R = np.asarray(R_list, dtype=float)
    if R.ndim != 1 or len(R) < 2 or np.any(np.diff(R) <= 0):
        raise ValidationError("need at least two increasing cylinder radii")
    reach = _containing_radius(W, F.axis)
    if R[0] <= max(reach, F.rho_att):
        raise ValidationError(f"cylinder radii must exceed {max(reach, F.rho_att):.6g}")
    vals = np.array([F.residual(float(x)) for x in R])
    tol = 1e-11 * max(1.0, float(np.abs(vals).max()))
    mono = bool(np.all(np.diff(vals) <= tol))
    if not mono:
        raise NumericalError("residual perimeter increases with R beyond tolerance")
    if F.c == 0.0:
        lim = float(vals[-1])
    else:
        p = F.n - 2
        a, b = R[-2] ** (-p), R[-1] ** (-p)
        lim = float((vals[-1] * a - vals[-2] * b) / (a - b))
    return ResidualPerimeter(R, vals, lim, F.limit(), mono)


def _containing_radius(W, nu):
    """inf{rho : W inside the cylinder of radius rho about nu}."""
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    if W.shape in ("ball", "axis_union"):
        c = W.centers - np.outer(W.centers @ nu, nu)
        return float((np.linalg.norm(c, axis=1) + W.radii).max())
    v = W.vertices
    return float(np.abs(v @ np.array([-nu[1], nu[0]])).max())


# ---------------------------------------------------------------------------
# maximization


@dataclass
class ResidueResult:
    lower: float
    upper: float
    exact: bool
    maximizer: dict
    section: float
    projection: float
    isodiametric: float
    conditions: dict = field(default_factory=dict)
    candidates: int = 0

    @property
    def bracket_width(self):
        return self.upper - self.lower

    def as_dict(self):
        return {"lower": self.lower, "upper": self.upper, "exact": self.exact,
                "bracket_width": self.bracket_width, "section_sup": self.section,
                "projection_sup": self.projection, "isodiametric_bound": self.isodiametric,
                "maximizer": self.maximizer, "equality_conditions": self.conditions,
                "candidates": self.candidates}


def ball_equality_conditions(W: Obstacle, samples: int = 256):
    """Check that the plane through the center realizes the ball value.

    (a) the equatorial (n-1)-sphere of radius diam/2 lies in W;
    (b) the plane minus W splits the exterior into two unbounded components.
    """
    rho = 0.5 * W.diameter
    c = W.centers[0]
    n = W.n
    rng = np.random.default_rng(0)
    g = rng.normal(size=(samples, n + 1))
    g -= np.outer(g @ W.axis, W.axis)
    g /= np.linalg.norm(g, axis=1)[:, None]
    pts = c + rho * g
    on_sphere = bool(np.all(W.contains(pts, tol=1e-12)))
    # W is a ball: each side of the plane minus W contains the ray c + t nu (t > rho), hence is
    # unbounded, and is connected since W is convex
    far = [c + s * 2.0 * rho * W.axis for s in (1.0, -1.0)]
    two_sides = bool(not np.any(W.contains(np.array(far))))
    return {"equatorial_sphere_in_W": on_sphere, "two_unbounded_components": two_sides}


def maximize_residue(W: Obstacle, beta_grid: int = 64) -> ResidueResult:
    """Best residual perimeter over the search family, bracketed by the projection bound."""
    n = W.n
    S, P, iso = section_sup(W), projection_sup(W), isodiametric_bound(W)
    w = unit_ball_volume(n)
    if W.shape == "ball":
        cond = ball_equality_conditions(W)
        rho = W.radii[0]
        F = ExteriorMinimalGraph.plane(n, W.axis, float(W.centers[0] @ W.axis), rho_att=rho)
        val = w * rho ** n
        exact = all(cond.values()) and abs(val - iso) <= 1e-9 * max(1.0, iso)
        return ResidueResult(val, P, exact, {"kind": "plane_through_center", **F.as_dict()},
                             S, P, iso, cond, 1)
    if W.shape in ("polygon", "segment"):
        v = W.vertices
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        i, j = np.unravel_index(int(np.argmax(d)), d.shape)
        p, q = v[i], v[j]
        tau = (q - p) / np.linalg.norm(q - p)
        # two half-lines leaving the diameter endpoints: 2R minus their length in the strip,
        # 2R - (R - q.tau) - (R + p.tau), independent of R
        val = float((q - p) @ tau)
        cond = {"connected": True, "two_half_lines_outside_W": True}
        return ResidueResult(val, P, abs(val - iso) <= 1e-12 * iso, {
            "kind": "two_half_lines", "from": p.tolist(), "to": q.tolist()}, S, P, iso, cond, 1)

    # axis unions: planes in every orientation (section bound) plus attached catenoids
    val_s, th, d = _union_section_sup(W)
    best = (val_s, 0.0, 0.0, {"kind": "plane", "tilt_from_axis_normal": th, "offset": d})
    count = 1
    if n >= 3:
        t, r = _union_coords(W)
        jobs = []
        for k in range(len(r)):
            bmax = math.atan(1.0 / math.sqrt(n - 1))  # c(beta) increases up to here
            for beta in np.linspace(-bmax, bmax, beta_grid + 1)[1:-1]:
                if beta != 0.0:
                    jobs.append((k, float(beta)))

        def evaluate(job):
            k, beta = job
            try:
                F = attached_catenoid(W, k, beta)
            except ValidationError:
                return None
            if not _graph_admissible(F, W):
                return None
            return (F.limit(), F.height, F.c, {"kind": "catenoid", "ball": k, **F.as_dict(),
                                               "young_residual": young_residual(F)})

        for res in pmap(evaluate, jobs):
            count += 1
            if res is not None and (res[0], res[1], res[2]) > (best[0], best[1], best[2]):
                best = res
    return ResidueResult(float(best[0]), P, False, best[3], S, P, iso, {}, count)


# ---------------------------------------------------------------------------
# asymptotic fit


@dataclass(frozen=True)
class AsymptoticFit:
    a: float
    b: float
    c: np.ndarray
    max_residual: float
    scaled_residual: float

    def as_dict(self):
        return {"a": self.a, "b": self.b, "c": self.c.tolist(), "max_residual": self.max_residual,
                "max_residual_times_r_n": self.scaled_residual}


def asymptotic_fit(x, f, n: int) -> AsymptoticFit:
    """Least-squares fit f(x) ~ a + b |x|^{2-n} + (c . x) |x|^{-n}.

    x is either radii (N,) (no directional term) or points (N, n) in nu-perp.
    For n = 2 the b-term is logarithmic and excluded by slab confinement, so
    b is fixed to zero.
    """
    if n < 2:
        raise ValidationError("asymptotic fits need n >= 2")
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    radial = x.ndim == 1
    r = np.abs(x) if radial else np.linalg.norm(x, axis=1)
    if len(r) != len(f) or len(r) < 3:
        raise ValidationError("need at least 3 samples matching the values")
    if not radial and x.shape[1] != n:
        raise ValidationError("points must have n coordinates")
    if r.min() <= 0 or r.max() / r.min() < 10.0 * (1 - 1e-12):
        raise ValidationError("samples must span at least one decade in radius")
    cols = [np.ones_like(r)]
    if n > 2:
        cols.append(r ** (2.0 - n))
    if not radial:
        cols.extend((x * (r ** (-float(n)))[:, None]).T)
    A = np.stack(cols, axis=1)
    # column scaling keeps the conditioning check meaningful
    s = np.linalg.norm(A, axis=0)
    if np.linalg.cond(A / s) > 1e10:
        raise NumericalError("ill-conditioned asymptotic fit (radial span too small)")
    coef, *_ = np.linalg.lstsq(A / s, f, rcond=None)
    coef = coef / s
    resid = f - A @ coef
    a = float(coef[0])
    b = float(coef[1]) if n > 2 else 0.0
    c = np.asarray(coef[2 if n > 2 else 1:], dtype=float) if not radial else np.zeros(n)
    return AsymptoticFit(a, b, c, float(np.abs(resid).max()), float(np.abs(resid * r ** n).max()))
