"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --repeat 5
"""
import argparse
import timeit

import numpy as np

from exigeo import _pykernels
from exigeo.varifold import plane_with_hole_mesh

try:
    from exigeo import _ckernels
except ImportError:
    _ckernels = None


def cases(n_phi, n_rings, n_radii, n_points):
    M = plane_with_hole_mesh(1.0, 100.0, n_phi=n_phi, n_rings=n_rings)
    radii = np.geomspace(1.5, 99.0, n_radii)
    ang = np.linspace(0, 2 * np.pi, n_points, endpoint=False)
    poly = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return {
        f"mesh_ball_areas ({len(M.faces)} faces, {n_radii} radii)":
            lambda k: k.mesh_ball_areas(M.vertices, M.faces, radii),
        f"polyline_energy ({n_points} points)":
            lambda k: k.polyline_energy(poly, True),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n-phi", type=int, default=128)
    ap.add_argument("--n-rings", type=int, default=64)
    ap.add_argument("--n-radii", type=int, default=64)
    ap.add_argument("--n-points", type=int, default=512)
    args = ap.parse_args()
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':48s} " + " ".join(f"{b:>12s}" for b, _ in backends) + "  speedup")
    for name, fn in cases(args.n_phi, args.n_rings, args.n_radii, args.n_points).items():
        times = []
        for _, mod in backends:
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(best)
        speed = f"{times[0] / times[1]:7.1f}x" if len(times) > 1 else "    n/a"
        print(f"{name:48s} " + " ".join(f"{t * 1e3:10.3f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
