"""Command-line entry point: `exigeo <command> [flags]`.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import NumericalError, ValidationError, __version__

COMMANDS = ("unduloid", "diagnose", "residue", "solve", "expansion", "convert")


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def as_dict(self):
        return {"command": self.command, "version": __version__, **self.options}


# ---------------------------------------------------------------------------
# parsing helpers


def _float_list(text, name):
    """Comma separated numbers, or lo:hi:count for a geometric grid."""
    try:
        if ":" in text:
            lo, hi, k = text.split(":")
            vals = np.geomspace(float(lo), float(hi), int(k))
        else:
            vals = np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise ValidationError(f"--{name}: cannot parse {text!r}") from exc
    if len(vals) == 0:
        raise ValidationError(f"--{name}: empty list")
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ValidationError(f"--{name}: values must be positive")
    if np.any(np.diff(vals) <= 0):
        raise ValidationError(f"--{name}: values must be strictly increasing")
    return [float(x) for x in vals]


def _positive(name, val):
    if val is not None and not (val > 0 and math.isfinite(val)):
        raise ValidationError(f"--{name} must be positive")
    return val


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _json_text(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(x, ".17g") if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


class _Report:
    """Collects named tables and a summary, then writes them in the chosen format."""

    def __init__(self, cfg: RunConfig, out, fmt):
        self.cfg, self.out, self.fmt = cfg, out, fmt
        self.tables = {}
        self.summary = {}

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    def emit(self, stream):
        doc = {"config": self.cfg.as_dict(), "summary": self.summary}
        if self.out is None:
            if self.fmt == "json":
                doc["tables"] = {k: [dict(zip(h, r)) for r in rows] for k, (h, rows) in self.tables.items()}
            stream.write(_json_text(doc))
            return
        out = Path(self.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.cfg.command
        if self.fmt == "json":
            doc["tables"] = {k: [dict(zip(h, r)) for r in rows] for k, (h, rows) in self.tables.items()}
            (out / f"{stem}.json").write_text(_json_text(doc))
            return
        for name, (h, rows) in self.tables.items():
            (out / f"{name}.csv").write_text(_csv_text(h, rows))
        doc["tables"] = sorted(f"{name}.csv" for name in self.tables)
        (out / f"{stem}_summary.json").write_text(_json_text(doc))


# ---------------------------------------------------------------------------
# commands


def _cmd_unduloid(args, rep):
    from .unduloid import UnduloidProfile, mesoscale_exponents

    eps_list = _float_list(args.eps, "eps") if args.eps else [1e-3]
    n = args.n or 2
    if args.Lambda is not None and args.Lambda != n:
        raise ValidationError(f"unduloids here have mean curvature n = {n}; drop --Lambda or set it to {n}")
    records = []
    for eps in eps_list:
        p = UnduloidProfile(n, eps)
        t = np.linspace(0.0, 1.0, 257)[1:-1]
        r = p.rho_of_t(t)
        rows = []
        for ri in r:
            rows.append([float(ri), float(p.profile(float(ri))), float(p.gradient(float(ri)))])
        rep.table(f"unduloid_profile_n{n}_eps{eps:.6g}", ["r", "f", "abs_gradient"], rows)
        rmin, gmin = p.argmin_gradient()
        records.append({"eps": eps, "outer_radius": p.R, "root_residuals": list(p.root_residuals()),
                        "argmin_radius": rmin, "min_gradient": gmin})
    rep.summary["profiles"] = records
    if len(eps_list) >= 4 and eps_list[-1] / eps_list[0] >= 100.0 * (1 - 1e-12):
        rep.summary["exponents"] = mesoscale_exponents(n, eps_list).as_dict()


def _diagnose_surface(args):
    from . import varifold as vf
    from .meshio import read_mesh

    lam = 0.0 if args.Lambda is None else args.Lambda
    if args.mesh:
        v, f = read_mesh(args.mesh)
        edges, _, _ = vf._boundary_edges(f)
        if len(edges) == 0:
            raise ValidationError(f"{args.mesh}: mesh has no boundary")
        R = args.hole if args.hole else float(vf._segment_distance(v[edges[:, 0]], v[edges[:, 1]]).min())
        return vf.TriangleMesh(v, f, R, Lambda=lam, unbounded=args.unbounded), {"mesh": str(args.mesh), "R": R}
    kind = args.surface or "plane"
    n = args.n or 2
    if kind == "unduloid":
        from .unduloid import UnduloidProfile
        eps = _float_list(args.eps, "eps")[0] if args.eps else 1e-3
        p = UnduloidProfile(n, eps)
        if args.Lambda is not None and args.Lambda != p.Lambda:
            raise ValidationError(f"the unduloid has Lambda = {n}")
        return p.to_surface(), {"surface": kind, "n": n, "eps": eps}
    hole = args.hole or 1.0
    if kind == "plane":
        return vf.plane_with_hole(n, hole, 1e4 * hole, Lambda=lam), {"surface": kind, "n": n, "R": hole}
    if kind == "doubled_plane":
        return vf.doubled_plane(n, hole, hole, 1e4 * hole), {"surface": kind, "n": n, "R": hole}
    raise ValidationError(f"unknown surface {kind!r}")


def _cmd_diagnose(args, rep):
    from . import varifold as vf

    V, meta = _diagnose_surface(args)
    rep.cfg.options["resolved_surface"] = meta
    end = vf._domain_end(V)
    if args.radii:
        radii = _float_list(args.radii, "radii")
    else:
        start = V.R
        if isinstance(V, vf.TriangleMesh):
            # the polygonal hole reaches out to its farthest vertex
            start = float(np.linalg.norm(V.vertices[V._inner[0].ravel()], axis=1).max())
        radii = [float(x) for x in np.geomspace(start * (1 + 1e-6), end * (1 - 1e-9), 64)]
    prof = vf.deficit_profile(V, radii)
    rep.table("theta_profile", ["r", "theta", "deficit", "error"],
              zip(prof.radii, prof.theta, prof.deficit, prof.error))
    rep.summary["max_abs_deficit"] = float(np.abs(prof.deficit).max())
    rep.summary["monotone"] = prof.is_monotone()
    rep.summary["largest_drop"] = float(max(0.0, float(prof.drops().max()) if len(prof.drops()) else 0.0))
    mes = vf.mesoscale_evaluate(V, args.gamma, args.eps0, args.m0, args.sigma)
    rep.summary["mesoscale"] = mes.as_dict()


def _load_obstacle(args, required=True):
    from .residue import load_obstacle

    if not args.obstacle:
        if required:
            raise ValidationError("--obstacle is required")
        return None
    return load_obstacle(args.obstacle)


def _cmd_residue(args, rep):
    from .residue import maximize_residue

    W = _load_obstacle(args)
    res = maximize_residue(W)
    out = res.as_dict()
    out["value"] = res.lower if res.exact else None
    rep.summary.update(out)
    rep.summary["obstacle"] = W.as_dict()


def _volumes(args, default):
    return _float_list(args.volumes, "volumes") if args.volumes else default


def _cmd_solve(args, rep):
    from .solvers import ball_perimeter, solve_axisym, solve_polygon

    W = _load_obstacle(args, required=False)
    n = W.n if W is not None else (args.n or 2)
    rows, details = [], []
    for v in _volumes(args, [100.0]):
        if n == 1:
            reg, psi = solve_polygon(W, v)
            details.append({"v": v, **reg.as_dict()})
            rep.table(f"polyline_v{v:.6g}", ["x", "y", "on_obstacle"],
                      [[float(p[0]), float(p[1]), int(c)] for p, c in zip(reg.vertices, reg.contact)])
        elif n == 2:
            prof, psi = solve_axisym(W, v)
            details.append({"v": v, **prof.as_dict()})
            rep.table(f"profile_v{v:.6g}", ["s", "rho", "z", "phi"],
                      zip(prof.s, prof.rho, prof.z, prof.phi))
        else:
            raise ValidationError("solvers cover n = 1 (polygons) and n = 2 (axisymmetric)")
        pb = ball_perimeter(n, v)
        rows.append([v, psi, pb, psi - pb])
    rep.table("solve", ["v", "psi", "ball_perimeter", "gap"], rows)
    rep.summary["solutions"] = details


def _cmd_expansion(args, rep):
    from .solvers import expansion_study

    W = _load_obstacle(args, required=False)
    n = W.n if W is not None else (args.n or 2)
    default = [10.0, 31.622776601683793, 100.0, 316.22776601683796, 1000.0] if n == 1 else \
        [100.0, 316.22776601683796, 1000.0, 3162.2776601683795, 10000.0]
    study = expansion_study(W, _volumes(args, default), n=n)
    rep.table("expansion", ["v", "psi", "ball_perimeter", "gap"], study.rows())
    rep.summary.update(study.summary())


def _cmd_convert(args, rep):
    from .meshio import read_mesh, write_mesh

    if not args.mesh or not args.out:
        raise ValidationError("convert needs --mesh INPUT and --out OUTPUT")
    v, f = read_mesh(args.mesh)
    write_mesh(args.out, v, f)
    rep.summary.update({"vertices": int(len(v)), "faces": int(len(f)), "written": str(args.out)})
    rep.out = None


HANDLERS = {"unduloid": _cmd_unduloid, "diagnose": _cmd_diagnose, "residue": _cmd_residue,
            "solve": _cmd_solve, "expansion": _cmd_expansion, "convert": _cmd_convert}


def build_parser():
    p = argparse.ArgumentParser(prog="exigeo", description="Exterior isoperimetric geometry toolkit.")
    p.add_argument("--version", action="version", version=f"exigeo {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--n", type=int, help="dimension of the surfaces (ambient n+1)")
    p.add_argument("--eps", help="waist(s): comma list or lo:hi:count")
    p.add_argument("--Lambda", type=float, help="mean-curvature bound")
    p.add_argument("--obstacle", help="obstacle spec file (key = value lines)")
    p.add_argument("--mesh", help="triangle mesh (.off or .obj)")
    p.add_argument("--surface", choices=("plane", "doubled_plane", "unduloid"),
                   help="built-in test surface for diagnose")
    p.add_argument("--hole", type=float, help="hole radius R (inferred from the mesh when omitted)")
    p.add_argument("--unbounded", action="store_true", help="treat the mesh as a truncation of a complete surface")
    p.add_argument("--radii", help="radii: comma list or lo:hi:count")
    p.add_argument("--volumes", help="volumes: comma list or lo:hi:count")
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--m0", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", help="output directory (output file for convert)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stderr(stderr), contextlib.redirect_stdout(stdout):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.n is not None and args.n < 1:
            raise ValidationError("--n must be at least 1")
        for name in ("Lambda",):
            if getattr(args, name) is not None and getattr(args, name) < 0:
                raise ValidationError("--Lambda must be nonnegative")
        for name in ("gamma", "eps0", "m0", "sigma", "hole"):
            _positive(name, getattr(args, name))
        opts = {k: v for k, v in sorted(vars(args).items()) if k != "command" and v is not None}
        cfg = RunConfig(args.command, opts)
        rep = _Report(cfg, args.out, args.format)
        HANDLERS[args.command](args, rep)
        rep.emit(stdout)
    except ValidationError as exc:
        stderr.write(f"exigeo: error: {exc}\n")
        return 2
    except OSError as exc:
        stderr.write(f"exigeo: error: {exc}\n")
        return 2
    except NumericalError as exc:
        stderr.write(f"exigeo: numerical failure: {exc}\n")
        return 3
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
