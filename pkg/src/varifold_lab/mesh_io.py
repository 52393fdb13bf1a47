"""Mesh files (OFF / nOFF / OBJ + JSON sidecar) and CSV/JSON report writers.

The sidecar sits next to the mesh as ``<stem>.sidecar.json`` and holds
``{"face_multiplicity": [...], "vertex_tags": {"junction": [...], ...}}``.
Without a sidecar every face has multiplicity 1.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .mesh import TAG_INTERIOR, DiscreteVarifold, build


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".sidecar.json")


def _tokens(path):
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line


def _read_off(path):
    lines = _tokens(path)
    try:
        head = next(lines)
        dim = 3
        if head.startswith("nOFF"):
            rest = head[4:].split()
            dim = int(rest[0]) if rest else int(next(lines))
            counts = next(lines).split()
        elif head.startswith("OFF"):
            rest = head[3:].split()
            counts = rest if rest else next(lines).split()
        else:
            raise InputError(f"{path}: not an OFF file")
        nv, nf = int(counts[0]), int(counts[1])
        V = np.array([[float(t) for t in next(lines).split()[:dim]] for _ in range(nv)])
        F = []
        for _ in range(nf):
            parts = next(lines).split()
            k = int(parts[0])
            if k != 3:
                raise InputError(f"{path}: only triangles are supported, found a {k}-gon")
            F.append([int(t) for t in parts[1:4]])
    except (StopIteration, ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed OFF ({exc})") from None
    return V, np.array(F, dtype=np.int64)


def _read_obj(path):
    V, F = [], []
    for line in _tokens(path):
        parts = line.split()
        if parts[0] == "v":
            V.append([float(t) for t in parts[1:]])
        elif parts[0] == "f":
            idx = [int(t.split("/")[0]) for t in parts[1:]]
            if len(idx) != 3:
                raise InputError(f"{path}: only triangles are supported, found a {len(idx)}-gon")
            F.append([i - 1 if i > 0 else len(V) + i for i in idx])
    if not V or not F:
        raise InputError(f"{path}: no vertices or faces")
    if len({len(r) for r in V}) != 1:
        raise InputError(f"{path}: vertices have inconsistent dimension")
    return np.array(V), np.array(F, dtype=np.int64)


def read_mesh(path) -> DiscreteVarifold:
    """Load an OFF/OBJ mesh and its optional sidecar."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    suf = path.suffix.lower()
    if suf == ".off":
        V, F = _read_off(path)
    elif suf == ".obj":
        V, F = _read_obj(path)
    else:
        raise InputError(f"{path}: unsupported mesh format {suf!r} (use .off or .obj)")
    theta, tags = None, None
    sc = sidecar_path(path)
    if sc.exists():
        try:
            meta = json.loads(sc.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{sc}: invalid JSON ({exc})") from None
        theta = meta.get("face_multiplicity")
        tags = meta.get("vertex_tags")
    return build(V, F, theta, ambient_dim=max(3, V.shape[1]), tags=tags)


def write_mesh(path, v: DiscreteVarifold):
    """Write mesh + sidecar; the format follows the file suffix."""
    path = Path(path)
    suf = path.suffix.lower()
    X, F = v.vertices, v.faces
    fmt = lambda row: " ".join(repr(float(x)) for x in row)  # noqa: E731
    with open(path, "w") as fh:
        if suf == ".off":
            if v.ambient_dim == 3:
                fh.write("OFF\n")
            else:
                fh.write(f"nOFF\n{v.ambient_dim}\n")
            fh.write(f"{v.n_vertices} {v.n_faces} 0\n")
            fh.writelines(fmt(r) + "\n" for r in X)
            fh.writelines(f"3 {a} {b} {c}\n" for a, b, c in F)
        elif suf == ".obj":
            fh.writelines("v " + fmt(r) + "\n" for r in X)
            fh.writelines(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in F)
        else:
            raise InputError(f"{path}: unsupported mesh format {suf!r}")
    tags = {}
    for t in sorted(set(v.tags) - {TAG_INTERIOR}):
        tags[t] = np.flatnonzero(v.tags == t).tolist()
    sidecar_path(path).write_text(json.dumps({"face_multiplicity": v.multiplicity.tolist(), "vertex_tags": tags}))
    return path


def mesh_hash(v: DiscreteVarifold) -> str:
    h = hashlib.sha256()
    for a in (v.vertices, v.faces, v.multiplicity):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def curvature_rows(field):
    H = field.mean_curvature
    n = H.shape[1]
    header = ["vertex"] + [f"H{k}" for k in range(n)] + ["H_norm", "K", "area", "valid"]
    rows = []
    for i in range(H.shape[0]):
        rows.append([i, *H[i].tolist(), float(np.linalg.norm(H[i])), float(field.gauss_curvature[i]),
                     float(field.vertex_area[i]), bool(field.validity_mask[i])])
    return header, rows


def grid_rows(coords, field):
    header = ["x", "y", "value"]
    rows = [(float(x), float(y), float(field[i, j])) for i, x in enumerate(coords) for j, y in enumerate(coords)]
    return header, rows


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else None
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=False)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")
    return path
