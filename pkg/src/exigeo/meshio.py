"""Triangle mesh reading and writing (OFF and OBJ)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import ValidationError


def _tokens(path):
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def read_off(path):
    lines = _tokens(path)
    try:
        head = next(lines)
        if head.upper().startswith("OFF"):
            rest = head[3:].split()
            counts = rest if rest else next(lines).split()
        else:
            raise ValidationError(f"{path}: missing OFF header")
        nv, nf = int(counts[0]), int(counts[1])
        verts = np.array([[float(x) for x in next(lines).split()[:3]] for _ in range(nv)])
        faces = []
        for _ in range(nf):
            parts = next(lines).split()
            k = int(parts[0])
            if k != 3:
                raise ValidationError(f"{path}: only triangles are supported")
            faces.append([int(x) for x in parts[1:4]])
    except (StopIteration, ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed OFF file ({exc})") from exc
    return verts.reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def read_obj(path):
    verts, faces = [], []
    try:
        for line in _tokens(path):
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise ValidationError(f"{path}: only triangles are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed OBJ file ({exc})") from exc
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def read_mesh(path):
    suffix = Path(path).suffix.lower()
    if not Path(path).is_file():
        raise ValidationError(f"{path}: no such mesh file")
    if suffix == ".off":
        v, f = read_off(path)
    elif suffix == ".obj":
        v, f = read_obj(path)
    else:
        raise ValidationError(f"{path}: unknown mesh format (use .off or .obj)")
    if len(f) == 0:
        raise ValidationError(f"{path}: mesh has no triangles")
    if f.min() < 0 or f.max() >= len(v):
        raise ValidationError(f"{path}: face index out of range")
    return v, f


def write_mesh(path, vertices, faces):
    suffix = Path(path).suffix.lower()
    fmt = "{:.17g}"
    out = []
    if suffix == ".off":
        out.append("OFF")
        out.append(f"{len(vertices)} {len(faces)} 0")
        out.extend(" ".join(fmt.format(c) for c in v) for v in vertices)
        out.extend("3 " + " ".join(str(int(i)) for i in f) for f in faces)
    elif suffix == ".obj":
        out.extend("v " + " ".join(fmt.format(c) for c in v) for v in vertices)
        out.extend("f " + " ".join(str(int(i) + 1) for i in f) for f in faces)
    else:
        raise ValidationError(f"{path}: unknown mesh format (use .off or .obj)")
    Path(path).write_text("\n".join(out) + "\n")
