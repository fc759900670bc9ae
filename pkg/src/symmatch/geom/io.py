"""Text formats: XYZ / OFF point clouds, index maps, and generated pair directories.

Map files hold ``n_src n_dst`` on the first line followed by one destination
index per line. Coordinates are written with 17 significant digits so that a
save/load round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .types import IndexMap, PointCloud, ShapePairSample


def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else "nan"


def save_cloud(path, p: PointCloud) -> None:
    path = Path(path)
    if path.suffix.lower() == ".off":
        _save_off(path, p)
        return
    with open(path, "w") as f:
        for x, y, z in p.coords:
            f.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")


def _save_off(path, p):
    faces = p.faces if p.faces is not None else np.empty((0, 3), dtype=np.int64)
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{p.n} {len(faces)} 0\n")
        for x, y, z in p.coords:
            f.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
        for a, b, c in faces:
            f.write(f"3 {a} {b} {c}\n")


def _floats(tokens, path, lineno, count):
    if len(tokens) != count:
        raise ParseError(path, lineno, f"expected {count} values, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric token in {' '.join(tokens)!r}") from None


def _ints(tokens, path, lineno, count=None):
    if count is not None and len(tokens) != count:
        raise ParseError(path, lineno, f"expected {count} integers, got {len(tokens)}")
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(path, lineno, f"non-integer token in {' '.join(tokens)!r}") from None


def _content_lines(path):
    """(1-based line number, tokens) for non-empty, non-comment lines."""
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_cloud(path, label: str | None = None) -> PointCloud:
    path = Path(path)
    lines = list(_content_lines(path))
    if lines and lines[0][1][0].upper() == "OFF":
        return _load_off(path, lines, label)
    coords = [_floats(tok, path, ln, 3) for ln, tok in lines]
    try:
        return PointCloud(np.array(coords).reshape(-1, 3), label=label or path.stem)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None


def _load_off(path, lines, label):
    head = lines[0][1]
    rest = lines[1:]
    if len(head) > 1:
        # "OFF nv nf ne" on one line
        rest = [(lines[0][0], head[1:])] + rest
    if not rest:
        raise ParseError(path, lines[0][0], "missing counts line")
    ln, tok = rest[0]
    counts = _ints(tok, path, ln)
    if len(counts) < 2:
        raise ParseError(path, ln, "counts line needs vertex and face counts")
    nv, nf = counts[0], counts[1]
    body = rest[1:]
    if len(body) < nv + nf:
        raise ParseError(path, body[-1][0] if body else ln, f"expected {nv} vertices and {nf} faces")
    coords = np.array([_floats(t, path, l, 3) for l, t in body[:nv]]).reshape(-1, 3)
    faces = []
    for l, t in body[nv : nv + nf]:
        vals = _ints(t, path, l)
        if vals[0] != 3 or len(vals) != 4:
            raise ParseError(path, l, "only triangle faces '3 i j k' are supported")
        if min(vals[1:]) < 0 or max(vals[1:]) >= nv:
            raise ParseError(path, l, "face index out of range")
        faces.append(vals[1:])
    return PointCloud(coords, np.array(faces, dtype=np.int64).reshape(-1, 3), label=label or path.stem)


def save_map(path, m: IndexMap) -> None:
    with open(path, "w") as f:
        f.write(f"{m.src_size} {m.dst_size}\n")
        f.write("".join(f"{t}\n" for t in m.targets.tolist()))


def load_map(path) -> IndexMap:
    path = Path(path)
    lines = list(_content_lines(path))
    if not lines:
        raise ParseError(path, 1, "empty map file")
    ln, tok = lines[0]
    n_src, n_dst = _ints(tok, path, ln, 2)
    if len(lines) - 1 != n_src:
        raise ParseError(path, lines[-1][0], f"expected {n_src} targets, got {len(lines) - 1}")
    targets = []
    for ln, tok in lines[1:]:
        (t,) = _ints(tok, path, ln, 1)
        if not 0 <= t < n_dst:
            raise ParseError(path, ln, f"target {t} out of range [0, {n_dst})")
        targets.append(t)
    return IndexMap(np.array(targets, dtype=np.int64), n_dst)


PAIR_FILES = ("x.xyz", "y.xyz", "map_xy.map", "sym_x.map", "sym_y.map")


def pair_paths(directory, name: str) -> dict[str, Path]:
    d = Path(directory)
    return {k.split(".")[0]: d / f"{name}_{k}" for k in PAIR_FILES}


def save_pair(directory, name: str, s: ShapePairSample) -> list[str]:
    paths = pair_paths(directory, name)
    save_cloud(paths["x"], s.x)
    save_cloud(paths["y"], s.y)
    save_map(paths["map_xy"], s.map_xy)
    save_map(paths["sym_x"], s.sym_x)
    save_map(paths["sym_y"], s.sym_y)
    return [p.name for p in paths.values()]


def load_pair(directory, name: str, meta: dict | None = None) -> ShapePairSample:
    paths = pair_paths(directory, name)
    return ShapePairSample(
        x=load_cloud(paths["x"], label=f"{name}_x"),
        y=load_cloud(paths["y"], label=f"{name}_y"),
        map_xy=load_map(paths["map_xy"]),
        sym_x=load_map(paths["sym_x"]),
        sym_y=load_map(paths["sym_y"]),
        meta=dict(meta or {}),
    )


def load_dataset(directory) -> tuple[dict, list[ShapePairSample]]:
    """Read ``manifest.json`` and every pair it lists."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    pairs = [load_pair(directory, entry["name"], entry.get("meta")) for entry in manifest["pairs"]]
    return manifest, pairs
